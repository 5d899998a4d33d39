"""Synthetic SAR-like oil spill scenes with ground truth.

A scene is open sea of constant mean backscatter, darkened inside one or
more elongated slick ellipses (labelled 1) and, with some probability,
inside low-contrast look-alike patches (labelled 0, the false-positive
stress case). Multiplicative gamma speckle of shape L (an L-look intensity
image) is applied last. Everything is a pure function of (seed, regime)."""
import logging
import math
import os
import numpy
from scipy.ndimage import gaussian_filter

from .errors import InvalidArgumentError
from .scene_io import (SarImage, LabelMap, Click, Box, PromptSpec, empty_prompt,
                       save_pgm, save_mask, save_prompts, write_stream_spec)

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 1000


def _ellipse_mask(rng, height, width, eccentricity, size_range):
    cy = rng.uniform(0.15, 0.85)*height
    cx = rng.uniform(0.15, 0.85)*width
    a = rng.uniform(*size_range)*min(height, width)
    b = max(a/eccentricity, 1.0)
    theta = rng.uniform(0.0, math.pi)
    y, x = numpy.mgrid[0:height, 0:width]
    dx = x + 0.5 - cx
    dy = y + 0.5 - cy
    u = math.cos(theta)*dx + math.sin(theta)*dy
    v = -math.sin(theta)*dx + math.cos(theta)*dy
    return (u/a)**2 + (v/b)**2 <= 1.0


def gamma_speckle(rng, shape, looks, sigma=0.0):
    """Multiplicative speckle ~ Gamma(L, 1/L): mean 1, variance 1/L. With
    sigma > 0 the log-field is Gaussian filtered to correlate neighbouring
    pixels and then renormalized to mean 1."""
    g = rng.gamma(shape=looks, scale=1.0/looks, size=shape)
    if sigma > 0.0:
        logg = gaussian_filter(numpy.log(numpy.maximum(g, 1e-12)), sigma=sigma, mode='reflect')
        g = numpy.exp(logg)
        g /= max(g.mean(), 1e-12)
    return g


def synth_scene(seed, regime):
    """Generate (SarImage, LabelMap) for one scene of the given regime.

    The slick layout is resampled until the oil fraction lies within
    [regime.area_min, regime.area_max] (not enforced for slick_count 0,
    which always yields an all-background map)."""
    rng = numpy.random.default_rng(seed)
    height, width = regime.height, regime.width

    for attempt in range(MAX_ATTEMPTS):
        slick = numpy.zeros((height, width), dtype=bool)
        for i in range(regime.slick_count):
            slick |= _ellipse_mask(rng, height, width, regime.eccentricity, (0.12, 0.3))
        fraction = slick.mean()
        if regime.slick_count == 0 or regime.area_min <= fraction <= regime.area_max:
            break
    else:
        raise InvalidArgumentError("regime {}: no slick layout within area band [{}, {}] after {} attempts".format(
            regime.name, regime.area_min, regime.area_max, MAX_ATTEMPTS))
    if attempt > 0:
        log.debug("regime %s seed %s: slick layout accepted after %d resamples", regime.name, seed, attempt)

    intensity = numpy.full((height, width), regime.sea_mean)
    if rng.random() < regime.lookalike_prob:
        for i in range(rng.integers(1, 3)):
            patch = _ellipse_mask(rng, height, width, 1.5, (0.08, 0.2)) & ~slick
            intensity[patch] *= regime.lookalike_contrast
    intensity[slick] *= regime.slick_contrast

    pixels = numpy.clip(intensity*gamma_speckle(rng, (height, width), regime.looks, regime.speckle_sigma), 0.0, 1.0)
    return SarImage(pixels), LabelMap(slick.astype(numpy.int64), 2)


def synth_prompt(truth, mode='click'):
    """Simulated user prompt derived from a truth mask.

    'click' puts a positive click on the oil pixel nearest to the oil
    centroid, 'box' uses the bounding box of all oil pixels, 'both' does
    both. Scenes without oil get a single negative click in the centre."""
    if mode == 'none':
        return empty_prompt()
    oil = numpy.argwhere(truth.labels == 1)
    if len(oil) == 0:
        return PromptSpec([Click(truth.height//2, truth.width//2, 'neg')], [])
    clicks, boxes = [], []
    if mode in ('click', 'both'):
        centroid = oil.mean(axis=0)
        row, col = oil[numpy.argmin(((oil - centroid)**2).sum(axis=1))]
        clicks.append(Click(int(row), int(col), 'pos'))
    if mode in ('box', 'both'):
        (r0, c0), (r1, c1) = oil.min(axis=0), oil.max(axis=0)
        boxes.append(Box(int(r0), int(c0), int(r1), int(c1)))
    return PromptSpec(clicks, boxes)


def scene_seed(spec, item):
    return [spec.seed, list(spec.regimes).index(item.segment), item.index]


def synth_item(spec, item):
    """Scene, truth and prompt of one item of a synthetic stream."""
    img, truth = synth_scene(scene_seed(spec, item), spec.regimes[item.segment])
    return img, truth, synth_prompt(truth, spec.prompts)


def materialize_stream(spec, directory):
    """Write a synthetic stream to disk: images/<id>.pgm, masks/<id>.pgm,
    prompts.jsonl and stream.ini."""
    if not spec.synthetic:
        raise InvalidArgumentError("only synthetic streams can be materialized")
    for sub in ('images', 'masks'):
        os.makedirs(os.path.join(directory, sub), exist_ok=True)
    prompts = {}
    for item in spec.items:
        img, truth, prompt = synth_item(spec, item)
        save_pgm(os.path.join(directory, 'images', item.image_id + '.pgm'), img)
        save_mask(os.path.join(directory, 'masks', item.image_id + '.pgm'), truth)
        prompts[item.prompt_id] = prompt
    save_prompts(os.path.join(directory, 'prompts.jsonl'), prompts)
    write_stream_spec(spec, os.path.join(directory, 'stream.ini'))
    log.info("wrote %d synthetic scenes to %s", len(spec.items), directory)
