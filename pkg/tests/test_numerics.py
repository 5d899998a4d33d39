import math
import unittest
import numpy
from numpy.testing import assert_allclose, assert_array_equal
import pytest

from slickmem.numerics import (softmax, cosine_similarity, mean_abs, grad_field, gap, bilinear_resize,
                               scaled_dot_attention, ema)
from slickmem.errors import InvalidArgumentError, EmptyMemoryError


class TestSoftmax(unittest.TestCase):
    def test_ln2(self):
        assert_allclose(softmax([math.log(2.0), 0.0]), [2.0/3.0, 1.0/3.0], rtol=1e-12)

    def test_large_entries(self):
        p = softmax([1000.0, 1000.0])
        assert_allclose(p, [0.5, 0.5])
        self.assertTrue(numpy.isfinite(p).all())

    def test_empty(self):
        with self.assertRaises(InvalidArgumentError):
            softmax([])

    def test_simplex(self):
        rng = numpy.random.default_rng(0)
        for i in range(1000):
            v = rng.normal(scale=rng.uniform(0.1, 50.0), size=rng.integers(1, 20))
            p = softmax(v)
            self.assertAlmostEqual(p.sum(), 1.0, delta=1e-9)
            self.assertTrue((p >= 0).all())

    def test_axis(self):
        v = numpy.random.default_rng(1).normal(size=(3, 4, 5))
        assert_allclose(softmax(v, axis=0).sum(axis=0), numpy.ones((4, 5)), atol=1e-12)


class TestCosine(unittest.TestCase):
    def test_45_degrees(self):
        self.assertAlmostEqual(cosine_similarity([1.0, 0.0], [1.0, 1.0]), 1.0/math.sqrt(2.0), places=12)

    def test_identical(self):
        a = numpy.random.default_rng(2).normal(size=17)
        self.assertEqual(cosine_similarity(a, a.copy()), 1.0)

    def test_zero_vector(self):
        self.assertEqual(cosine_similarity([0.0, 0.0], [1.0, 2.0]), 0.0)
        self.assertEqual(cosine_similarity([0.0, 0.0], [1.0, 2.0], with_flag=True), (0.0, True))
        self.assertEqual(cosine_similarity([1.0, 0.0], [0.0, 3.0], with_flag=True), (0.0, False))

    def test_dimension_mismatch(self):
        with self.assertRaises(InvalidArgumentError):
            cosine_similarity([1.0, 2.0], [1.0, 2.0, 3.0])

    def test_range(self):
        rng = numpy.random.default_rng(3)
        for i in range(200):
            s = cosine_similarity(rng.normal(size=5), rng.normal(size=5))
            self.assertTrue(-1.0 <= s <= 1.0)


def test_mean_abs():
    assert mean_abs(numpy.array([-2.0, 2.0, 4.0, 0.0]).reshape(1, 2, 2)) == 2.0
    with pytest.raises(InvalidArgumentError):
        mean_abs(numpy.zeros((1, 0, 3)))


def test_grad_field():
    t = numpy.array([[[0.0, 1.0], [2.0, 4.0]]])
    g = grad_field(t)
    assert g.shape == (2, 2, 2)
    assert_array_equal(g[0], [[1.0, 0.0], [2.0, 0.0]])
    assert_array_equal(g[1], [[2.0, 3.0], [0.0, 0.0]])


def test_grad_field_constant():
    assert_array_equal(grad_field(numpy.full((3, 5, 4), 0.7)), numpy.zeros((6, 5, 4)))


def test_grad_field_too_small():
    with pytest.raises(InvalidArgumentError):
        grad_field(numpy.zeros((1, 1, 4)))


def test_gap():
    t = numpy.array([[[1.0, 2.0], [3.0, 4.0]], [[2.0, 2.0], [2.0, 2.0]]])
    assert_allclose(gap(t), [2.5, 2.0])


class TestBilinearResize(unittest.TestCase):
    def test_upsample_row(self):
        out = bilinear_resize(numpy.array([[[0.0, 2.0]]]), 1, 3)
        assert_allclose(out, [[[0.0, 1.0, 2.0]]], atol=1e-15)

    def test_same_size_is_copy(self):
        t = numpy.random.default_rng(4).normal(size=(2, 5, 7))
        out = bilinear_resize(t, 5, 7)
        assert_array_equal(out, t)
        self.assertFalse(out is t)

    def test_corners_preserved(self):
        t = numpy.random.default_rng(5).normal(size=(3, 4, 6))
        out = bilinear_resize(t, 9, 13)
        assert_allclose(out[:, 0, 0], t[:, 0, 0], atol=1e-14)
        assert_allclose(out[:, -1, -1], t[:, -1, -1], atol=1e-14)
        assert_allclose(out[:, 0, -1], t[:, 0, -1], atol=1e-14)
        assert_allclose(out[:, -1, 0], t[:, -1, 0], atol=1e-14)

    def test_constant(self):
        out = bilinear_resize(numpy.full((1, 3, 3), 0.25), 8, 5)
        assert_allclose(out, 0.25, atol=1e-15)

    def test_invalid_size(self):
        with self.assertRaises(InvalidArgumentError):
            bilinear_resize(numpy.zeros((1, 2, 2)), 0, 3)


def _attention_reference(q, k, v):
    out = numpy.zeros((q.shape[0], v.shape[1]))
    for i in range(q.shape[0]):
        scores = [sum(q[i, a]*k[j, a] for a in range(q.shape[1]))/math.sqrt(q.shape[1]) for j in range(k.shape[0])]
        top = max(scores)
        w = [math.exp(s - top) for s in scores]
        total = sum(w)
        for j in range(k.shape[0]):
            out[i] += w[j]/total*v[j]
    return out


def test_attention_oracle():
    rng = numpy.random.default_rng(6)
    for instance in range(100):
        d = int(rng.integers(1, 17))
        n = int(rng.integers(1, 65))
        m = int(rng.integers(1, 20))
        q = rng.normal(size=(n, d))
        k = rng.normal(size=(m, d))
        v = rng.normal(size=(m, d))
        assert_allclose(scaled_dot_attention(q, k, v), _attention_reference(q, k, v), atol=1e-9, rtol=0)


def test_attention_single_key():
    rng = numpy.random.default_rng(7)
    q = rng.normal(size=(4, 3))
    k = rng.normal(size=(1, 3))
    v = rng.normal(size=(1, 3))
    assert_allclose(scaled_dot_attention(q, k, v), numpy.repeat(v, 4, axis=0), atol=1e-15)


def test_attention_empty():
    with pytest.raises(EmptyMemoryError):
        scaled_dot_attention(numpy.zeros((2, 3)), numpy.zeros((0, 3)), numpy.zeros((0, 3)))


def test_ema():
    assert_allclose(ema(1.0, 2.0, 0.3), 1.3)
    old = numpy.random.default_rng(8).normal(size=4)
    new = numpy.random.default_rng(9).normal(size=4)
    assert_array_equal(ema(old, new, 0.0), old)
    assert_array_equal(ema(old, new, 1.0), new)
