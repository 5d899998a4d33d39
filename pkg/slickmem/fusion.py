"""Scale-wise memory attention and scale-adaptive fusion.

For every level the raw feature is mapped to the shared embedding dim d by
an Adapter, attends to the entries retrieved from that level's memory group
together with the prompt tokens, and the three attended maps are resized to
the texture-level resolution and combined with softmax weights of their
response scores."""
import collections
import logging
import numpy

from .errors import InvalidArgumentError
from .encoders import LEVELS
from .numerics import as_tensor, bilinear_resize, mean_abs, scaled_dot_attention, softmax

log = logging.getLogger(__name__)

FusionWeights = collections.namedtuple('FusionWeights', ['gamma', 'scores'])


class Adapter(object):
    """Per-pixel affine map from c_s input channels to the shared dim d."""
    def __init__(self, level, projection, bias):
        self.level = level
        self.projection = numpy.asarray(projection, dtype=numpy.float64)
        self.bias = numpy.asarray(bias, dtype=numpy.float64)
        if self.projection.ndim != 2 or self.bias.shape != (self.projection.shape[0],):
            raise InvalidArgumentError("adapter projection {} and bias {} do not match".format(
                self.projection.shape, self.bias.shape))

    @property
    def out_dim(self):
        return self.projection.shape[0]

    @property
    def in_dim(self):
        return self.projection.shape[1]


def make_adapter(level, c_in, d, seed):
    """Adapter with orthonormal columns (d >= c_in) or rows (d < c_in) taken
    from the QR factorization of a seeded Gaussian matrix, and zero bias."""
    rng = numpy.random.default_rng(seed)
    if d >= c_in:
        q, r = numpy.linalg.qr(rng.standard_normal((d, c_in)))
        projection = q*numpy.sign(numpy.diag(r))
    else:
        q, r = numpy.linalg.qr(rng.standard_normal((c_in, d)))
        projection = (q*numpy.sign(numpy.diag(r))).T
    return Adapter(level, projection, numpy.zeros(d))


def make_adapters(channels, d, seed):
    return collections.OrderedDict(
        (level, make_adapter(level, channels[level], d, [seed, i])) for i, level in enumerate(LEVELS))


def adapt(adapter, f):
    """out[:, y, x] = projection . f[:, y, x] + bias"""
    f = as_tensor(f)
    if f.shape[0] != adapter.in_dim:
        raise InvalidArgumentError("{} adapter expects {} channels, got {}".format(
            adapter.level, adapter.in_dim, f.shape[0]))
    return numpy.einsum('dc,chw->dhw', adapter.projection, f) + adapter.bias[:, None, None]


def attend_level(level, adapted, retrieved, prompt):
    """Residual memory attention for one level.

    Queries are the h*w spatial tokens of `adapted`; keys and values are the
    spatial tokens of all retrieved entry values followed by the prompt
    tokens. With nothing to attend to the input is returned unchanged."""
    adapted = as_tensor(adapted)
    d, h, w = adapted.shape
    memory = [e.value.reshape(d, -1).T for e in retrieved.entries] if retrieved is not None else []
    if prompt is not None and len(prompt.tokens):
        memory.append(prompt.tokens)
    if not memory:
        return adapted.copy()
    kv = numpy.concatenate(memory, axis=0)
    queries = adapted.reshape(d, h*w).T
    attended = scaled_dot_attention(queries, kv, kv)
    return adapted + attended.T.reshape(d, h, w)


def response_score(f_tilde):
    """Level response: mean absolute value of the attended feature."""
    return mean_abs(f_tilde)


def fuse(f_tex, f_str, f_sem, adaptive=True):
    """Resize the three attended maps to the texture-level resolution and
    combine them with weights softmax(response scores), or 1/3 each when
    adaptive is False. Returns (fused tensor, FusionWeights)."""
    f_tex = as_tensor(f_tex)
    h, w = f_tex.shape[1:]
    resized = collections.OrderedDict(
        (level, bilinear_resize(f, h, w)) for level, f in zip(LEVELS, (f_tex, f_str, f_sem)))
    scores = collections.OrderedDict((level, response_score(f)) for level, f in resized.items())
    if adaptive:
        weights = softmax(numpy.array(list(scores.values())))
    else:
        weights = numpy.full(len(LEVELS), 1.0/len(LEVELS))
    gamma = collections.OrderedDict((level, float(g)) for level, g in zip(LEVELS, weights))
    fused = sum(gamma[level]*resized[level] for level in LEVELS)
    return fused, FusionWeights(gamma, scores)
