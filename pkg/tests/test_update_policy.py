import math
import unittest
import numpy
from numpy.testing import assert_allclose, assert_array_equal

from slickmem.update_policy import (UpdateThresholds, semantic_discrepancy, structural_discrepancy, decide,
                                    commit, bootstrap_decision, make_decision)
from slickmem.memory_bank import MemoryBank, MemoryEntry
from slickmem.errors import InvalidArgumentError


def _entries(step, fill=1.0, d=2):
    return dict((level, MemoryEntry(numpy.full(d, fill), numpy.full((d, 2, 2), fill), step, level))
                for level in ('tex', 'str', 'sem'))


def _initialized_bank(z=(1.0,), f=None):
    bank = MemoryBank((4, 4, 4))
    f = numpy.zeros((1, 2, 2)) if f is None else f
    commit(bank, bootstrap_decision(), _entries(0), (numpy.array(z), f), 0.3)
    return bank


class TestDiscrepancies(unittest.TestCase):
    def test_semantic(self):
        z = numpy.array([0.3, -1.2, 2.0])
        self.assertEqual(semantic_discrepancy(z, z.copy()), 0.0)
        self.assertAlmostEqual(semantic_discrepancy(z, -z), 2.0, places=12)
        self.assertAlmostEqual(semantic_discrepancy([1.0, 0.0], [1.0, 1.0]), 1.0 - 1.0/math.sqrt(2.0), places=12)

    def test_structural(self):
        f = numpy.random.default_rng(0).normal(size=(3, 4, 5))
        self.assertEqual(structural_discrepancy(f, f.copy()), 0.0)
        self.assertEqual(structural_discrepancy(numpy.full((2, 3, 3), 0.2), numpy.full((2, 3, 3), 0.9)), 0.0)
        ramp = numpy.array([[[0.0, 1.0], [0.0, 1.0]]])
        self.assertEqual(structural_discrepancy(ramp, numpy.zeros((1, 2, 2))), 0.5)

    def test_structural_mismatch(self):
        with self.assertRaises(InvalidArgumentError):
            structural_discrepancy(numpy.zeros((1, 2, 2)), numpy.zeros((1, 3, 3)))


class TestDecide(unittest.TestCase):
    def test_no_update(self):
        d = decide(0.0, 0.0, UpdateThresholds(0.1, 0.1, 0.3))
        self.assertFalse(d.update_sem or d.update_str or d.update_tex)

    def test_strict(self):
        d = decide(0.15, 0.10, UpdateThresholds())
        self.assertFalse(d.update_sem)
        self.assertFalse(d.update_str)

    def test_rule(self):
        d = decide(0.5, 0.0, UpdateThresholds(0.2, 0.1, 0.3))
        self.assertEqual((d.update_sem, d.update_str, d.update_tex), (True, False, True))
        self.assertEqual(d.flagged_levels(), ['tex', 'sem'])

    def test_thresholds(self):
        with self.assertRaises(InvalidArgumentError):
            UpdateThresholds(alpha=1.5)
        with self.assertRaises(InvalidArgumentError):
            UpdateThresholds(tau_sem=-0.1)


class TestCommit(unittest.TestCase):
    def test_bootstrap(self):
        z = numpy.array([0.2, 0.4])
        f = numpy.random.default_rng(1).normal(size=(3, 2, 2))
        bank = MemoryBank()
        commit(bank, bootstrap_decision(), _entries(0), (z, f), 0.3)
        assert_array_equal(bank.proto_sem, z)
        assert_array_equal(bank.proto_str, f)
        self.assertTrue(bank.proto_initialized)
        self.assertEqual(dict(bank.sizes()), {'tex': 1, 'str': 1, 'sem': 1})

    def test_scalar_ema(self):
        bank = _initialized_bank(z=(1.0,))
        commit(bank, make_decision(True, False), _entries(1), (numpy.array([2.0]), numpy.zeros((1, 2, 2))), 0.3)
        assert_allclose(bank.proto_sem, [1.3], atol=1e-15)

    def test_alpha_zero(self):
        rng = numpy.random.default_rng(2)
        bank = _initialized_bank(z=rng.normal(size=3), f=rng.normal(size=(1, 2, 2)))
        proto_sem, proto_str = bank.proto_sem.copy(), bank.proto_str.copy()
        anchor = bank.group('tex').entries[0]
        key, value = anchor.key.copy(), anchor.value.copy()
        commit(bank, make_decision(True, True), _entries(1, fill=5.0), (rng.normal(size=3), rng.normal(size=(1, 2, 2))), 0.0)
        assert_array_equal(bank.proto_sem, proto_sem)
        assert_array_equal(bank.proto_str, proto_str)
        assert_array_equal(anchor.key, key)
        assert_array_equal(anchor.value, value)
        self.assertEqual(dict(bank.sizes()), {'tex': 2, 'str': 2, 'sem': 2})

    def test_alpha_one(self):
        rng = numpy.random.default_rng(3)
        bank = _initialized_bank(z=rng.normal(size=3), f=rng.normal(size=(1, 2, 2)))
        z, f = rng.normal(size=3), rng.normal(size=(1, 2, 2))
        commit(bank, make_decision(True, True), _entries(1, fill=5.0), (z, f), 1.0)
        assert_array_equal(bank.proto_sem, z)
        assert_array_equal(bank.proto_str, f)
        assert_array_equal(bank.group('sem').entries[0].value, 5.0)

    def test_anchor_blend(self):
        bank = _initialized_bank()
        commit(bank, make_decision(False, True), _entries(1, fill=3.0), (numpy.array([1.0]), numpy.ones((1, 2, 2))), 0.5)
        # str and tex anchors move halfway from 1 to 3, sem is untouched
        assert_allclose(bank.group('str').entries[0].value, 2.0)
        assert_allclose(bank.group('tex').entries[0].key, 2.0)
        assert_array_equal(bank.group('sem').entries[0].value, 1.0)
        self.assertEqual(len(bank.group('sem')), 1)

    def test_anchor_blended_before_insert(self):
        bank = MemoryBank((2, 2, 2))
        f = numpy.zeros((1, 2, 2))
        commit(bank, bootstrap_decision(), _entries(0, fill=1.0), (numpy.array([1.0]), f), 0.5)
        bank.group('str').entries.append(_entries(1, fill=1.0)['str'])
        commit(bank, make_decision(False, True), _entries(2, fill=3.0), (numpy.array([1.0]), f), 0.5)
        # the blended step-0 anchor is evicted by the insert that follows it
        group = bank.group('str')
        self.assertEqual([e.source_step for e in group.entries], [1, 2])
        assert_array_equal([e.value[0, 0, 0] for e in group.entries], [1.0, 3.0])
        self.assertEqual([e.source_step for e in bank.group('tex').entries], [0, 2])
        assert_array_equal([e.value[0, 0, 0] for e in bank.group('tex').entries], [2.0, 3.0])

    def test_convergence(self):
        alpha = 0.3
        bank = _initialized_bank(z=(0.0, 1.0), f=numpy.zeros((1, 2, 2)))
        target = numpy.array([4.0, -2.0])
        error = numpy.linalg.norm(bank.proto_sem - target)
        for step in range(1, 31):
            commit(bank, make_decision(True, False), _entries(step), (target, numpy.zeros((1, 2, 2))), alpha)
            new_error = numpy.linalg.norm(bank.proto_sem - target)
            self.assertAlmostEqual(new_error, (1 - alpha)*error, delta=1e-9)
            error = new_error

    def test_missing_entry(self):
        bank = _initialized_bank()
        entries = _entries(1)
        del entries['str']
        with self.assertRaises(InvalidArgumentError):
            commit(bank, make_decision(False, True), entries, (numpy.array([1.0]), numpy.zeros((1, 2, 2))), 0.3)

    def test_no_update_leaves_bank(self):
        bank = _initialized_bank()
        commit(bank, make_decision(False, False), {}, (numpy.array([9.0]), numpy.ones((1, 2, 2))), 0.3)
        assert_array_equal(bank.proto_sem, [1.0])
        self.assertEqual(dict(bank.sizes()), {'tex': 1, 'str': 1, 'sem': 1})
