"""Hierarchical key-value memory.

A MemoryBank holds one MemoryGroup per feature level (texture, structure,
semantic) and the two prototypes used to gate updates: a semantic
descriptor vector and a structure-level feature map. Each level reads and
writes only its own group. In merged mode (the ablation without a
multi-level bank) a single group of the summed capacity is shared by all
levels.

Entries are kept in insertion order; a full group evicts the entry with
the smallest source_step."""
import collections
import copy
import logging
import numpy

from .errors import InvalidArgumentError
from .encoders import LEVELS
from .numerics import as_tensor, bilinear_resize, cosine_similarity, gap

log = logging.getLogger(__name__)

MERGED = 'all'


class MemoryEntry(object):
    """Key vector (d,) and value tensor (d, h, w) distilled from one image at one level."""
    def __init__(self, key, value, source_step, level):
        self.key = numpy.asarray(key, dtype=numpy.float64)
        self.value = as_tensor(value)
        if self.key.shape != (self.value.shape[0],):
            raise InvalidArgumentError("key dim {} does not match value channels {}".format(
                self.key.shape, self.value.shape[0]))
        if level not in LEVELS:
            raise InvalidArgumentError("unknown level {!r}".format(level))
        self.source_step = source_step
        self.level = level

    def __repr__(self):
        return "MemoryEntry(level={!r}, source_step={}, value shape={})".format(
            self.level, self.source_step, self.value.shape)


RetrievedSet = collections.namedtuple('RetrievedSet', ['level', 'entries', 'similarities'])


class MemoryGroup(object):
    """At most `capacity` entries of one level (or of every level for the merged group)."""
    def __init__(self, level, capacity):
        if capacity < 1:
            raise InvalidArgumentError("group capacity should be positive, got {}".format(capacity))
        self.level = level
        self.capacity = capacity
        self.entries = []

    def __len__(self):
        return len(self.entries)

    def accepts(self, level):
        return self.level == MERGED or self.level == level


def make_entry(level, adapted_feature, mask_probs, source_step=0):
    """Memory entry from an adapted feature (d, h, w) and the class
    probabilities (C, H, W) predicted for the same image: the class-1
    probability, resized to h x w, is blended half-and-half into the first
    channel, and the key is the global average of the value."""
    adapted_feature = as_tensor(adapted_feature)
    mask_probs = as_tensor(mask_probs)
    if mask_probs.shape[0] < 2:
        raise InvalidArgumentError("mask_probs needs a class-1 channel")
    d, h, w = adapted_feature.shape
    value = adapted_feature.copy()
    oil = bilinear_resize(mask_probs[1:2], h, w)[0]
    value[0] = 0.5*adapted_feature[0] + 0.5*oil
    return MemoryEntry(gap(value), value, source_step, level)


def retrieve(group, query_key, k):
    """Top-k entries of group by cosine similarity of their keys to query_key.
    Ties go to the more recent source_step. The group is not modified."""
    if k < 1:
        raise InvalidArgumentError("retrieval k should be >= 1, got {}".format(k))
    scored = [(cosine_similarity(query_key, e.key), e) for e in group.entries]
    scored.sort(key=lambda se: (-se[0], -se[1].source_step))
    scored = scored[:k]
    return RetrievedSet(group.level, [e for s, e in scored], [s for s, e in scored])


def insert(group, entry):
    """Append entry to group, evicting the oldest entry when over capacity."""
    if not group.accepts(entry.level):
        raise InvalidArgumentError("cannot insert a {!r} entry into the {!r} group".format(entry.level, group.level))
    group.entries.append(entry)
    if len(group.entries) > group.capacity:
        oldest = min(range(len(group.entries)), key=lambda i: group.entries[i].source_step)
        evicted = group.entries.pop(oldest)
        log.debug("evicted %s entry from step %d", evicted.level, evicted.source_step)


class MemoryBank(object):
    """Three level groups (or one merged group) plus the gating prototypes.

    proto_sem is the semantic descriptor prototype, proto_str the
    structure-level feature map prototype; both are None until the first
    commit sets them and proto_initialized."""
    def __init__(self, capacities=(8, 8, 8), merged=False):
        if isinstance(capacities, int):
            capacities = (capacities,)*len(LEVELS)
        self.capacities = tuple(int(c) for c in capacities)
        if len(self.capacities) != len(LEVELS):
            raise InvalidArgumentError("need one capacity per level, got {}".format(capacities))
        self.merged = merged
        if merged:
            shared = MemoryGroup(MERGED, sum(self.capacities))
            self.groups = collections.OrderedDict((level, shared) for level in LEVELS)
        else:
            self.groups = collections.OrderedDict(
                (level, MemoryGroup(level, c)) for level, c in zip(LEVELS, self.capacities))
        self.proto_sem = None
        self.proto_str = None
        self.proto_initialized = False

    def group(self, level):
        return self.groups[level]

    def distinct_groups(self):
        return [self.groups[LEVELS[0]]] if self.merged else list(self.groups.values())

    def sizes(self):
        if self.merged:
            return {MERGED: len(self.groups[LEVELS[0]])}
        return collections.OrderedDict((level, len(g)) for level, g in self.groups.items())

    def clear(self):
        self.__init__(self.capacities, self.merged)

    def snapshot(self):
        """Deep copy that can be handed to another thread for read-only use."""
        return copy.deepcopy(self)


def merged_bank_mode(capacities=(8, 8, 8)):
    """Bank for the ablation without level separation: one group of capacity
    sum(capacities) that every level queries and inserts into."""
    return MemoryBank(capacities, merged=True)


# text dump format:
#   bank merged=<0|1> capacities=<n,n,n> proto_initialized=<0|1>
#   proto_sem <n> <values>            (or "proto_sem none")
#   proto_str <c> <h> <w> <values>    (or "proto_str none")
#   entry group=<level> level=<level> source_step=<n>
#   key <d> <values>
#   value <d> <h> <w> <values>
# floats are written with repr() so that restore_bank() is exact.

def _floats(a):
    return " ".join(repr(float(x)) for x in numpy.asarray(a).ravel())


def dump_bank(bank):
    lines = ["bank merged={} capacities={} proto_initialized={}".format(
        int(bank.merged), ",".join(str(c) for c in bank.capacities), int(bank.proto_initialized))]
    if bank.proto_sem is None:
        lines.append("proto_sem none")
    else:
        lines.append("proto_sem {} {}".format(bank.proto_sem.size, _floats(bank.proto_sem)))
    if bank.proto_str is None:
        lines.append("proto_str none")
    else:
        lines.append("proto_str {} {}".format(" ".join(str(n) for n in bank.proto_str.shape), _floats(bank.proto_str)))
    for group in bank.distinct_groups():
        for e in group.entries:
            lines.append("entry group={} level={} source_step={}".format(group.level, e.level, e.source_step))
            lines.append("key {} {}".format(e.key.size, _floats(e.key)))
            lines.append("value {} {}".format(" ".join(str(n) for n in e.value.shape), _floats(e.value)))
    return "\n".join(lines) + "\n"


def _fields(token_list):
    return dict(t.split('=', 1) for t in token_list)


def _array(tokens, rank):
    shape = tuple(int(n) for n in tokens[:rank])
    return numpy.array([float(x) for x in tokens[rank:]], dtype=numpy.float64).reshape(shape)


def restore_bank(text):
    """Inverse of dump_bank()."""
    lines = [line.split() for line in text.splitlines() if line.strip()]
    try:
        header = _fields(lines[0][1:])
        bank = MemoryBank(tuple(int(c) for c in header['capacities'].split(',')), merged=header['merged'] == '1')
        bank.proto_initialized = header['proto_initialized'] == '1'
        if lines[1][1] != 'none':
            bank.proto_sem = _array(lines[1][1:], 1)
        if lines[2][1] != 'none':
            bank.proto_str = _array(lines[2][1:], 3)
        for i in range(3, len(lines), 3):
            fields = _fields(lines[i][1:])
            key = _array(lines[i+1][1:], 1)
            value = _array(lines[i+2][1:], 3)
            entry = MemoryEntry(key, value, int(fields['source_step']), fields['level'])
            group = bank.group(entry.level)
            group.entries.append(entry)
    except (IndexError, KeyError, ValueError) as e:
        raise InvalidArgumentError("malformed memory bank dump: {}".format(e))
    return bank
