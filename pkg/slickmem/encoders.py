"""Deterministic image and prompt encoders.

encode_image() is a stand-in for a frozen hierarchical image encoder. It
produces three levels of hand-designed statistics, each with 3 channels:

    f_tex  half resolution     intensity, local 3x3 mean, local 3x3 standard deviation
    f_str  quarter resolution  |d/dx|, |d/dy|, gradient magnitude of the image
                               smoothed with a Gaussian of STRUCTURE_SIGMA pixels
    f_sem  eighth resolution   8x8 block mean, block variance, fraction of block
                               pixels darker than the image mean

encode_prompt() maps clicks and boxes to tokens of the shared embedding
dimension d: a sinusoidal encoding of the normalized position followed by a
4-dim one-hot code of the token kind."""
import collections
import math
import numpy
from numpy.lib.stride_tricks import sliding_window_view
from scipy.ndimage import gaussian_filter

from .errors import InvalidArgumentError
from .numerics import grad_field

LEVELS = ('tex', 'str', 'sem')
LEVEL_STRIDES = {'tex': 2, 'str': 4, 'sem': 8}
CHANNELS = {'tex': 3, 'str': 3, 'sem': 3}
# speckle scale is a few pixels, slick outlines are tens of pixels
STRUCTURE_SIGMA = 5.0


class FeaturePyramid(collections.namedtuple('FeaturePyramid', ['f_tex', 'f_str', 'f_sem'])):
    __slots__ = ()

    def level(self, name):
        return getattr(self, 'f_' + name)


PromptEmbedding = collections.namedtuple('PromptEmbedding', ['tokens', 'token_kinds'])

# position in the one-hot kind code
KIND_CODES = {'positive-click': 0, 'negative-click': 1, 'box-top-left': 2, 'box-bottom-right': 3}


def _blocks(x, f):
    h, w = x.shape[0]//f, x.shape[1]//f
    return x[:h*f, :w*f].reshape(h, f, w, f)


def block_mean(x, f):
    return _blocks(x, f).mean(axis=(1, 3))


def encode_image(img):
    """Compute the FeaturePyramid of a SarImage (at least 8x8)."""
    x = img.pixels
    if x.shape[0] < 8 or x.shape[1] < 8:
        raise InvalidArgumentError("encode_image needs at least 8x8 pixels, got {}x{}".format(*x.shape))

    x2 = block_mean(x, 2)
    windows = sliding_window_view(numpy.pad(x2, 1, mode='edge'), (3, 3))
    f_tex = numpy.stack([x2, windows.mean(axis=(-2, -1)), windows.std(axis=(-2, -1))])

    g = grad_field(block_mean(gaussian_filter(x, STRUCTURE_SIGMA, mode='nearest'), 4)[None])
    dx, dy = g[0], g[1]
    f_str = numpy.stack([numpy.abs(dx), numpy.abs(dy), numpy.sqrt(dx*dx + dy*dy)])

    blocks = _blocks(x, 8)
    f_sem = numpy.stack([blocks.mean(axis=(1, 3)),
                         blocks.var(axis=(1, 3)),
                         (blocks < x.mean()).mean(axis=(1, 3))])
    return FeaturePyramid(f_tex, f_str, f_sem)


def positional_encoding(u, v, dims):
    """Sinusoidal encoding of normalized coordinates (u, v) in dims entries:
    dims/2 for u and dims/2 for v, each as sin/cos pairs over octave frequencies."""
    nfreq = dims//4
    freqs = math.pi*2.0**numpy.arange(nfreq)
    return numpy.concatenate([numpy.sin(freqs*u), numpy.cos(freqs*u),
                              numpy.sin(freqs*v), numpy.cos(freqs*v)])


def _token(row, col, height, width, kind, d):
    code = numpy.zeros(4)
    code[KIND_CODES[kind]] = 1.0
    return numpy.concatenate([positional_encoding(row/float(height), col/float(width), d-4), code])


def encode_prompt(prompt, height, width, d):
    """Encode a PromptSpec for a height x width image as k x d tokens, with
    k = clicks + 2*boxes (one token per box corner). An empty prompt gives k = 0."""
    if d <= 4 or (d-4) % 4 != 0:
        raise InvalidArgumentError("embedding dim d={} should be 4 plus a positive multiple of 4".format(d))
    tokens = []
    kinds = []
    for click in prompt.clicks:
        kind = 'positive-click' if click.polarity == 'pos' else 'negative-click'
        tokens.append(_token(click.row, click.col, height, width, kind, d))
        kinds.append(kind)
    for box in prompt.boxes:
        tokens.append(_token(box.row_min, box.col_min, height, width, 'box-top-left', d))
        tokens.append(_token(box.row_max, box.col_max, height, width, 'box-bottom-right', d))
        kinds.extend(['box-corner', 'box-corner'])
    if not tokens:
        return PromptEmbedding(numpy.zeros((0, d)), [])
    return PromptEmbedding(numpy.array(tokens), kinds)
