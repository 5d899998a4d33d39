import itertools
import unittest
import numpy
from numpy.testing import assert_array_equal, assert_allclose
import pytest

from slickmem.memory_bank import (MemoryBank, MemoryEntry, MemoryGroup, make_entry, retrieve, insert,
                                  merged_bank_mode, dump_bank, restore_bank, MERGED)
from slickmem.errors import InvalidArgumentError


def _entry(key, step, level='tex'):
    key = numpy.asarray(key, dtype=float)
    return MemoryEntry(key, numpy.ones((len(key), 2, 2))*key[:, None, None], step, level)


class TestMakeEntry(unittest.TestCase):
    def test_zero(self):
        e = make_entry('tex', numpy.zeros((4, 3, 3)), numpy.zeros((2, 6, 6)))
        assert_array_equal(e.key, 0.0)

    def test_constant_blend(self):
        probs = numpy.zeros((2, 8, 8))
        probs[1] = 1.0
        e = make_entry('sem', numpy.ones((4, 2, 2)), probs, source_step=7)
        assert_array_equal(e.value[0], 1.0)
        self.assertEqual(e.key[0], 1.0)
        self.assertEqual(e.source_step, 7)
        self.assertEqual(e.level, 'sem')

    def test_half_blend(self):
        probs = numpy.zeros((2, 4, 4))
        probs[1] = 1.0
        e = make_entry('str', numpy.zeros((3, 4, 4)), probs)
        assert_allclose(e.value[0], 0.5)
        assert_array_equal(e.value[1:], 0.0)


class TestRetrieve(unittest.TestCase):
    def test_empty(self):
        rs = retrieve(MemoryGroup('tex', 4), numpy.array([1.0, 0.0]), 3)
        self.assertEqual(rs.entries, [])
        self.assertEqual(rs.similarities, [])

    def test_single(self):
        group = MemoryGroup('tex', 4)
        insert(group, _entry([0.0, 1.0], 0))
        rs = retrieve(group, numpy.array([1.0, 0.0]), 2)
        self.assertEqual(len(rs.entries), 1)

    def test_order(self):
        group = MemoryGroup('tex', 4)
        for step, key in enumerate([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]]):
            insert(group, _entry(key, step))
        rs = retrieve(group, numpy.array([1.0, 0.0]), 2)
        assert_array_equal(rs.entries[0].key, [1.0, 0.0])
        assert_array_equal(rs.entries[1].key, [0.6, 0.8])
        assert_allclose(rs.similarities, [1.0, 0.6], atol=1e-12)
        self.assertEqual(len(group), 3)

    def test_tie_goes_to_recent(self):
        group = MemoryGroup('tex', 4)
        insert(group, _entry([1.0, 1.0], 0))
        insert(group, _entry([1.0, 1.0], 5))
        rs = retrieve(group, numpy.array([3.0, 3.0]), 1)
        self.assertEqual(rs.entries[0].source_step, 5)

    def test_bad_k(self):
        with self.assertRaises(InvalidArgumentError):
            retrieve(MemoryGroup('tex', 4), numpy.array([1.0]), 0)


def test_fifo_exhaustive():
    for capacity, extra in itertools.product(range(1, 9), range(0, 9)):
        group = MemoryGroup('str', capacity)
        for step in range(capacity + extra):
            insert(group, _entry([1.0, float(step)], step, 'str'))
        assert len(group) == capacity
        steps = sorted(e.source_step for e in group.entries)
        assert steps == list(range(extra, capacity + extra))


def test_level_mismatch():
    with pytest.raises(InvalidArgumentError):
        insert(MemoryGroup('tex', 2), _entry([1.0], 0, 'sem'))


def test_bank_modes():
    multi = MemoryBank((2, 2, 2))
    merged = merged_bank_mode((2, 2, 2))
    for level in ('tex', 'str', 'sem'):
        insert(multi.group(level), _entry([1.0, 0.0], 0, level))
        insert(merged.group(level), _entry([1.0, 0.0], 0, level))
    assert dict(multi.sizes()) == {'tex': 1, 'str': 1, 'sem': 1}
    assert merged.sizes() == {MERGED: 3}
    assert merged.group('tex').capacity == 6


def test_merged_cross_level_retrieval():
    bank = merged_bank_mode((4, 4, 4))
    insert(bank.group('tex'), _entry([0.0, 1.0], 0, 'tex'))
    insert(bank.group('str'), _entry([1.0, 0.1], 1, 'str'))
    rs = retrieve(bank.group('tex'), numpy.array([1.0, 0.0]), 1)
    assert rs.entries[0].level == 'str'


def test_clear_and_snapshot():
    bank = MemoryBank()
    insert(bank.group('sem'), _entry([1.0, 2.0], 0, 'sem'))
    snap = bank.snapshot()
    bank.clear()
    assert dict(bank.sizes()) == {'tex': 0, 'str': 0, 'sem': 0}
    assert len(snap.group('sem')) == 1


def test_dump_restore():
    rng = numpy.random.default_rng(0)
    bank = MemoryBank((3, 3, 3))
    bank.proto_sem = rng.normal(size=3)
    bank.proto_str = rng.normal(size=(3, 4, 4))
    bank.proto_initialized = True
    for step, level in enumerate(('tex', 'str', 'sem', 'tex')):
        insert(bank.group(level), MemoryEntry(rng.normal(size=4), rng.normal(size=(4, 2, 3)), step, level))
    restored = restore_bank(dump_bank(bank))
    assert dump_bank(restored) == dump_bank(bank)
    assert_array_equal(restored.proto_str, bank.proto_str)
    assert dict(restored.sizes()) == {'tex': 2, 'str': 1, 'sem': 1}
    with pytest.raises(InvalidArgumentError):
        restore_bank("bank merged=0\n")
