"""Dense-tensor helpers that every step of the segmentation pipeline reduces to.

Tensors are numpy float64 arrays of shape (channels, height, width), vectors
are 1d float64 arrays. None of the functions here mutate their arguments."""
import logging
import math
import numpy

from .errors import InvalidArgumentError, EmptyMemoryError

log = logging.getLogger(__name__)


def as_tensor(t, rank=3):
    t = numpy.asarray(t, dtype=numpy.float64)
    if t.ndim != rank:
        raise InvalidArgumentError("Expected a rank {} tensor, got shape {}".format(rank, t.shape))
    return t


def softmax(v, axis=None):
    """Softmax of a vector, or along one axis of an array. The maximum is
    subtracted first so large entries do not overflow."""
    v = numpy.asarray(v, dtype=numpy.float64)
    if v.size == 0:
        raise InvalidArgumentError("softmax of an empty vector")
    if axis is None:
        e = numpy.exp(v - v.max())
        return e/e.sum()
    e = numpy.exp(v - v.max(axis=axis, keepdims=True))
    return e/e.sum(axis=axis, keepdims=True)


def cosine_similarity(a, b, with_flag=False):
    """Cosine of the angle between a and b, clipped to [-1, 1].

    A zero vector has no direction: the similarity is then 0.0 and, with
    with_flag=True, the returned (value, degenerate) pair has degenerate set."""
    a = numpy.asarray(a, dtype=numpy.float64).ravel()
    b = numpy.asarray(b, dtype=numpy.float64).ravel()
    if a.shape != b.shape:
        raise InvalidArgumentError("cosine_similarity of vectors with dims {} and {}".format(a.size, b.size))
    na = numpy.linalg.norm(a)
    nb = numpy.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        log.debug("cosine_similarity with a zero-norm vector")
        return (0.0, True) if with_flag else 0.0
    if numpy.array_equal(a, b):
        # exact, so that re-presenting a stored descriptor gives zero discrepancy
        value = 1.0
    else:
        value = float(numpy.clip(numpy.dot(a, b)/(na*nb), -1.0, 1.0))
    return (value, False) if with_flag else value


def mean_abs(t):
    """Normalized L1 norm: sum of absolute values divided by the element count."""
    t = numpy.asarray(t, dtype=numpy.float64)
    if t.size == 0:
        raise InvalidArgumentError("mean_abs of an empty tensor")
    return float(numpy.abs(t).sum()/t.size)


def grad_field(t):
    """Forward-difference gradient of every channel of t.

    Returns a tensor with twice the channels: for input channel i, channel 2*i
    holds d/dx (along width) and channel 2*i+1 holds d/dy (along height). The
    last column of dx and the last row of dy are zero."""
    t = as_tensor(t)
    c, h, w = t.shape
    if h < 2 or w < 2:
        raise InvalidArgumentError("grad_field needs height and width >= 2, got {}x{}".format(h, w))
    g = numpy.zeros((2*c, h, w))
    g[0::2, :, :-1] = t[:, :, 1:] - t[:, :, :-1]
    g[1::2, :-1, :] = t[:, 1:, :] - t[:, :-1, :]
    return g


def gap(t):
    """Global average pooling: per-channel spatial mean."""
    t = as_tensor(t)
    return t.mean(axis=(1, 2))


def _sample_positions(n_in, n_out):
    # align-corners: output index 0 and n_out-1 land exactly on input 0 and n_in-1
    if n_out == 1 or n_in == 1:
        xhat = numpy.zeros(n_out)
    else:
        xhat = numpy.arange(n_out)*((n_in-1.0)/(n_out-1.0))
    i = numpy.minimum(numpy.floor(xhat).astype(int), n_in-1)
    i1 = numpy.minimum(i+1, n_in-1)
    alpha = xhat - i
    return i, i1, alpha


def bilinear_resize(t, out_h, out_w):
    """Bilinear resize of every channel of t to out_h x out_w, using the
    align-corners convention. Equal dimensions return an exact copy."""
    t = as_tensor(t)
    if out_h < 1 or out_w < 1:
        raise InvalidArgumentError("bilinear_resize to {}x{}".format(out_h, out_w))
    c, h, w = t.shape
    if (h, w) == (out_h, out_w):
        return t.copy()

    i, i1, alpha = _sample_positions(h, out_h)
    j, j1, beta = _sample_positions(w, out_w)
    alpha = alpha[None, :, None]
    beta = beta[None, None, :]
    v00 = t[:, i][:, :, j]
    v10 = t[:, i1][:, :, j]
    v01 = t[:, i][:, :, j1]
    v11 = t[:, i1][:, :, j1]
    return ((1.0-alpha)*((1.0-beta)*v00 + beta*v01)
            + alpha*((1.0-beta)*v10 + beta*v11))


def scaled_dot_attention(queries, keys, values):
    """Single-head scaled dot-product attention.

    queries: n x d, keys: m x d, values: m x dv. Row i of the result is
    sum_j softmax_j(q_i . k_j / sqrt(d)) v_j."""
    queries = as_tensor(queries, rank=2)
    keys = as_tensor(keys, rank=2)
    values = as_tensor(values, rank=2)
    if keys.shape[0] == 0:
        raise EmptyMemoryError("scaled_dot_attention over zero keys")
    if queries.shape[1] != keys.shape[1]:
        raise InvalidArgumentError("query dim {} != key dim {}".format(queries.shape[1], keys.shape[1]))
    if keys.shape[0] != values.shape[0]:
        raise InvalidArgumentError("{} keys but {} values".format(keys.shape[0], values.shape[0]))
    scores = numpy.dot(queries, keys.T)/math.sqrt(queries.shape[1])
    weights = softmax(scores, axis=1)
    return numpy.dot(weights, values)


def ema(old, new, alpha):
    """Exponential moving average step: (1-alpha)*old + alpha*new."""
    return (1.0-alpha)*numpy.asarray(old, dtype=numpy.float64) + alpha*numpy.asarray(new, dtype=numpy.float64)
