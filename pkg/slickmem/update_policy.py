"""Structure-semantic consistent memory update.

After each prediction the current image is compared with the bank's
prototypes: a semantic discrepancy (cosine distance of globally pooled
semantic features) and a structural discrepancy (L1 distance of the
gradient fields of the structure-level features, per spatial position).
Only a discrepancy strictly above its threshold refreshes the
corresponding memory; texture memory is refreshed together with either.
Refreshing blends the prototypes and each level's anchor entry towards
the new content with an exponential moving average of rate alpha, and
inserts the new entry."""
import collections
import logging

from .errors import InvalidArgumentError
from .encoders import LEVELS
from .memory_bank import insert
from .numerics import as_tensor, cosine_similarity, ema, grad_field

log = logging.getLogger(__name__)


class UpdateThresholds(collections.namedtuple('UpdateThresholds', ['tau_sem', 'tau_str', 'alpha'])):
    __slots__ = ()

    def __new__(cls, tau_sem=0.15, tau_str=0.10, alpha=0.3):
        if tau_sem < 0 or tau_str < 0:
            raise InvalidArgumentError("thresholds should be nonnegative, got {}, {}".format(tau_sem, tau_str))
        if not 0.0 <= alpha <= 1.0:
            raise InvalidArgumentError("alpha should be in [0, 1], got {}".format(alpha))
        return super(UpdateThresholds, cls).__new__(cls, float(tau_sem), float(tau_str), float(alpha))


class UpdateDecision(collections.namedtuple('UpdateDecision', ['update_sem', 'update_str', 'update_tex',
                                                               'delta_sem', 'delta_str'])):
    __slots__ = ()

    def flagged_levels(self):
        flags = {'tex': self.update_tex, 'str': self.update_str, 'sem': self.update_sem}
        return [level for level in LEVELS if flags[level]]

    @property
    def any(self):
        return self.update_tex


def make_decision(update_sem, update_str, delta_sem=None, delta_str=None):
    return UpdateDecision(bool(update_sem), bool(update_str), bool(update_sem or update_str), delta_sem, delta_str)


def bootstrap_decision():
    """Full commit for a bank whose prototypes are not initialized yet."""
    return make_decision(True, True)


def semantic_discrepancy(z_t, z_mem):
    return 1.0 - cosine_similarity(z_t, z_mem)


def structural_discrepancy(f_t, f_mem):
    """(1/HW) * || grad f_t - grad f_mem ||_1, summed over channels and both
    gradient directions, H x W being the structure-level resolution."""
    f_t = as_tensor(f_t)
    f_mem = as_tensor(f_mem)
    if f_t.shape != f_mem.shape:
        raise InvalidArgumentError("structure maps of shapes {} and {}".format(f_t.shape, f_mem.shape))
    h, w = f_t.shape[1:]
    return float(abs(grad_field(f_t) - grad_field(f_mem)).sum()/(h*w))


def decide(delta_sem, delta_str, thresholds):
    return make_decision(delta_sem > thresholds.tau_sem, delta_str > thresholds.tau_str, delta_sem, delta_str)


def _anchor(group, level):
    # entries[0] in a per-level group; first same-level entry in a merged one
    for entry in group.entries:
        if entry.level == level:
            return entry
    return None


def commit(bank, decision, new_entries, new_protos, alpha):
    """Apply decision to bank.

    new_entries maps level -> MemoryEntry (needed for every flagged level),
    new_protos is (z_t, f_str_t). On the first commit the prototypes are set
    to the new values exactly. Otherwise, for each flagged level, the
    prototype (semantic: z, structure: f_str) becomes
    (1-alpha)*proto + alpha*new, then the level's anchor (its oldest entry)
    is blended towards the new entry the same way, and only then is the new
    entry inserted with FIFO eviction. When the level is full the blended
    anchor is the entry that gets evicted. Unflagged levels are left
    untouched."""
    levels = decision.flagged_levels()
    missing = [level for level in levels if level not in new_entries]
    if missing:
        raise InvalidArgumentError("no new memory entry for flagged level(s) {}".format(", ".join(missing)))
    z_t, f_str_t = new_protos

    if not bank.proto_initialized:
        bank.proto_sem = as_tensor(z_t, rank=1).copy()
        bank.proto_str = as_tensor(f_str_t).copy()
        bank.proto_initialized = True
    else:
        if decision.update_sem:
            bank.proto_sem = ema(bank.proto_sem, z_t, alpha)
        if decision.update_str:
            bank.proto_str = ema(bank.proto_str, f_str_t, alpha)

    for level in levels:
        entry = new_entries[level]
        group = bank.group(level)
        anchor = _anchor(group, level)
        if anchor is not None and anchor.value.shape == entry.value.shape:
            anchor.key = ema(anchor.key, entry.key, alpha)
            anchor.value = ema(anchor.value, entry.value, alpha)
        insert(group, entry)
    log.debug("committed levels %s", levels)
