import os
import unittest
import numpy
from numpy.testing import assert_array_equal

from slickmem.synthesis import synth_scene, synth_prompt, gamma_speckle, materialize_stream, synth_item
from slickmem.scene_io import Regime, LabelMap, standard_drift_spec, load_stream_spec, load_prompts, load_mask
from slickmem.errors import InvalidArgumentError


class TestSynthScene(unittest.TestCase):
    def setUp(self):
        self.regime = Regime('test', sea_mean=0.5, looks=4, slick_count=1, lookalike_prob=0.0,
                             area_min=0.02, area_max=0.3, height=48, width=48)

    def test_deterministic(self):
        img1, truth1 = synth_scene(5, self.regime)
        img2, truth2 = synth_scene(5, self.regime)
        assert_array_equal(img1.pixels, img2.pixels)
        assert_array_equal(truth1.labels, truth2.labels)
        img3, truth3 = synth_scene(6, self.regime)
        self.assertFalse(numpy.array_equal(img1.pixels, img3.pixels))

    def test_area_band(self):
        for seed in range(20):
            img, truth = synth_scene(seed, self.regime)
            fraction = truth.labels.mean()
            self.assertTrue(0.02 <= fraction <= 0.3)
            self.assertTrue(0.0 <= img.pixels.min() and img.pixels.max() <= 1.0)
            self.assertEqual(img.shape, (48, 48))

    def test_slick_darker(self):
        for seed in range(50):
            img, truth = synth_scene(seed, self.regime)
            oil = truth.labels == 1
            self.assertLess(img.pixels[oil].mean(), img.pixels[~oil].mean())

    def test_no_slick(self):
        regime = self.regime._replace(slick_count=0)
        img, truth = synth_scene(1, regime)
        self.assertEqual(truth.labels.sum(), 0)

    def test_unattainable_band(self):
        regime = self.regime._replace(area_min=0.95, area_max=1.0)
        with self.assertRaises(InvalidArgumentError):
            synth_scene(0, regime)


def test_speckle_statistics():
    rng = numpy.random.default_rng(0)
    g = gamma_speckle(rng, (256, 256), 4.0)
    assert abs(g.mean() - 1.0) < 0.02
    assert abs(g.var() - 0.25) < 0.02
    g = gamma_speckle(rng, (128, 128), 2.0, sigma=1.0)
    assert abs(g.mean() - 1.0) < 1e-12


def test_synth_prompt():
    labels = numpy.zeros((10, 10), dtype=int)
    labels[2:5, 3:8] = 1
    truth = LabelMap(labels, 2)
    prompt = synth_prompt(truth, 'both')
    assert len(prompt.clicks) == 1 and prompt.clicks[0].polarity == 'pos'
    assert labels[prompt.clicks[0].row, prompt.clicks[0].col] == 1
    assert tuple(prompt.boxes[0]) == (2, 3, 4, 7)
    assert synth_prompt(truth, 'none').clicks == []
    assert synth_prompt(truth, 'box').clicks == []
    empty = synth_prompt(LabelMap(numpy.zeros((10, 10), dtype=int), 2), 'click')
    assert empty.clicks[0].polarity == 'neg'


def test_materialize(tmp_path):
    spec = standard_drift_spec(seed=3, images=4, height=32, width=32)
    directory = str(tmp_path)
    materialize_stream(spec, directory)
    loaded = load_stream_spec(os.path.join(directory, 'stream.ini'))
    assert [i.image_id for i in loaded.items] == [i.image_id for i in spec.items]
    prompts = load_prompts(os.path.join(directory, 'prompts.jsonl'), bounds=(32, 32))
    assert sorted(prompts) == sorted(i.image_id for i in spec.items)
    item = spec.items[1]
    img, truth, prompt = synth_item(spec, item)
    assert_array_equal(load_mask(os.path.join(directory, 'masks', item.image_id + '.pgm'), 2).labels, truth.labels)
    assert prompts[item.prompt_id] == prompt
