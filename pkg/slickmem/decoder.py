"""Per-pixel affine mask decoder, weighted binary cross-entropy and its
closed-form gradient, and a gradient-descent trainer that can run on
whitened features.

The decoder maps the fused feature (d, h, w) to C logits per pixel,
resizes the logits to the image resolution and takes a softmax over the
classes. Since align-corners bilinear resizing is linear and maps
constants to constants, resize(W f + b) == W resize(f) + b, so the
gradient is taken with respect to the resized features."""
import collections
import logging
import numpy

from .errors import InvalidArgumentError, UnsupportedConfigurationError
from .numerics import as_tensor, bilinear_resize, softmax
from .scene_io import LabelMap

log = logging.getLogger(__name__)

PROB_CLAMP = 1e-12
WHITENING_EPS = 1e-6

Prediction = collections.namedtuple('Prediction', ['probs', 'hard'])


class DecoderParams(object):
    """weights: C x d, bias: C."""
    def __init__(self, weights, bias):
        self.weights = numpy.array(weights, dtype=numpy.float64)
        self.bias = numpy.array(bias, dtype=numpy.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise InvalidArgumentError("decoder weights {} and bias {} do not match".format(
                self.weights.shape, self.bias.shape))
        if not (numpy.isfinite(self.weights).all() and numpy.isfinite(self.bias).all()):
            raise InvalidArgumentError("decoder parameters should be finite")

    @property
    def num_classes(self):
        return self.weights.shape[0]

    def copy(self):
        return DecoderParams(self.weights, self.bias)

    @classmethod
    def zeros(cls, num_classes, d):
        return cls(numpy.zeros((num_classes, d)), numpy.zeros(num_classes))

    @classmethod
    def random(cls, num_classes, d, seed, scale=0.1):
        rng = numpy.random.default_rng(seed)
        return cls(scale*rng.standard_normal((num_classes, d)), numpy.zeros(num_classes))


def _logits(features, params):
    if features.shape[0] != params.weights.shape[1]:
        raise InvalidArgumentError("decoder expects {} feature channels, got {}".format(
            params.weights.shape[1], features.shape[0]))
    return numpy.einsum('cd,dhw->chw', params.weights, features) + params.bias[:, None, None]


def decode(f, params, height, width):
    """Class probabilities (C, height, width) and argmax label map. Ties in
    the argmax go to the lower class index."""
    f = as_tensor(f)
    logits = bilinear_resize(_logits(f, params), height, width)
    probs = softmax(logits, axis=0)
    return Prediction(probs, LabelMap(numpy.argmax(probs, axis=0), params.num_classes))


def _check_binary(num_classes, class_weights):
    if num_classes != 2:
        raise UnsupportedConfigurationError("weighted BCE needs C == 2, got C == {}".format(num_classes))
    class_weights = numpy.asarray(class_weights, dtype=numpy.float64)
    if class_weights.shape != (2,) or (class_weights <= 0).any():
        raise InvalidArgumentError("class_weights should be two positive numbers")
    return class_weights


def weighted_bce(pred, y, class_weights):
    """-(1/HW) sum_p w[y(p)] log(probs[y(p), p]) with probabilities clamped
    to [1e-12, 1-1e-12]."""
    class_weights = _check_binary(pred.probs.shape[0], class_weights)
    labels = y.labels
    if pred.probs.shape[1:] != labels.shape:
        raise InvalidArgumentError("prediction {} and labels {} differ in size".format(pred.probs.shape[1:], labels.shape))
    rows, cols = numpy.indices(labels.shape)
    p = numpy.clip(pred.probs[labels, rows, cols], PROB_CLAMP, 1.0-PROB_CLAMP)
    return float(-(class_weights[labels]*numpy.log(p)).mean())


def bce_gradient(f, y, params, class_weights):
    """Gradient of weighted_bce(decode(f, params, H, W), y) with respect to
    the decoder weights and bias, H x W being the size of y:
    per pixel w[y] * (probs - onehot(y)) times the pixel feature, averaged."""
    class_weights = _check_binary(params.num_classes, class_weights)
    labels = y.labels
    height, width = labels.shape
    features = bilinear_resize(as_tensor(f), height, width)
    probs = softmax(_logits(features, params), axis=0)
    onehot = numpy.zeros_like(probs)
    rows, cols = numpy.indices(labels.shape)
    onehot[labels, rows, cols] = 1.0
    g = class_weights[labels][None]*(probs - onehot)
    n = float(height*width)
    grad_weights = numpy.einsum('chw,dhw->cd', g, features)/n
    grad_bias = g.sum(axis=(1, 2))/n
    return grad_weights, grad_bias


def accuracy(pred, y):
    return float((pred.hard.labels == y.labels).mean())


def batch_loss(samples, params, class_weights):
    losses = [weighted_bce(decode(f, params, y.height, y.width), y, class_weights) for f, y in samples]
    return float(numpy.mean(losses))


def whitening(features, rel_eps=WHITENING_EPS):
    """Mean and symmetric (ZCA) whitening matrix of features, a d x N array
    of N pixel features. Eigenvalues of the covariance are floored at
    rel_eps times the largest one."""
    features = numpy.asarray(features, dtype=numpy.float64)
    mean = features.mean(axis=1)
    centered = features - mean[:, None]
    cov = numpy.dot(centered, centered.T)/features.shape[1]
    lam, vecs = numpy.linalg.eigh(cov)
    lam = numpy.maximum(lam, 0.0)
    floor = rel_eps*lam.max() if lam.max() > 0 else rel_eps
    scale = 1.0/numpy.sqrt(lam + floor)
    return mean, numpy.dot(vecs*scale, vecs.T)


def _descend(samples, params, learning_rate, steps, class_weights):
    for step in range(steps):
        grad_w = numpy.zeros_like(params.weights)
        grad_b = numpy.zeros_like(params.bias)
        for f, y in samples:
            gw, gb = bce_gradient(f, y, params, class_weights)
            grad_w += gw
            grad_b += gb
        params.weights -= learning_rate*grad_w/len(samples)
        params.bias -= learning_rate*grad_b/len(samples)
        if step % 25 == 0 and log.isEnabledFor(logging.DEBUG):
            log.debug("decoder step %d: loss %.6f", step, batch_loss(samples, params, class_weights))
    return params


def train_decoder(samples, params, learning_rate, steps, class_weights=(1.0, 5.0), precondition=False):
    """Full-batch gradient descent on the mean weighted BCE over samples, a
    list of (fused feature, LabelMap) pairs. Returns new parameters; params
    itself is not modified.

    With precondition, the descent runs on whitened features
    z = P (f - mean) (see whitening(), statistics over every labelled pixel)
    and the result is mapped back to weights W P and bias b - W P mean, which
    give the same logits on the raw features."""
    if learning_rate <= 0:
        raise InvalidArgumentError("learning rate should be positive, got {}".format(learning_rate))
    samples = list(samples)
    params = params.copy()
    if not samples or steps == 0:
        return params
    if not precondition:
        return _descend(samples, params, learning_rate, steps, class_weights)

    resized = [bilinear_resize(as_tensor(f), y.height, y.width) for f, y in samples]
    d = resized[0].shape[0]
    mean, p = whitening(numpy.concatenate([r.reshape(d, -1) for r in resized], axis=1))
    whitened = [(numpy.einsum('de,ehw->dhw', p, r - mean[:, None, None]), y) for r, (f, y) in zip(resized, samples)]
    log.debug("decoder training on %d whitened samples", len(whitened))
    # logits W x + b == (W P^-1) z + (b + W mean)
    start = DecoderParams(numpy.linalg.solve(p, params.weights.T).T, params.bias + numpy.dot(params.weights, mean))
    trained = _descend(whitened, start, learning_rate, steps, class_weights)
    weights = numpy.dot(trained.weights, p)
    return DecoderParams(weights, trained.bias - numpy.dot(weights, mean))


# text dump: "decoder <C> <d>", then C lines of weights, then one line of biases

def dump_params(params):
    lines = ["decoder {} {}".format(*params.weights.shape)]
    lines.extend(" ".join(repr(float(x)) for x in row) for row in params.weights)
    lines.append(" ".join(repr(float(x)) for x in params.bias))
    return "\n".join(lines) + "\n"


def load_params(text):
    lines = [line.split() for line in text.splitlines() if line.strip()]
    try:
        num_classes, d = int(lines[0][1]), int(lines[0][2])
        weights = [[float(x) for x in lines[1+c]] for c in range(num_classes)]
        bias = [float(x) for x in lines[1+num_classes]]
    except (IndexError, ValueError) as e:
        raise InvalidArgumentError("malformed decoder dump: {}".format(e))
    params = DecoderParams(weights, bias)
    if params.weights.shape != (num_classes, d):
        raise InvalidArgumentError("decoder dump declares {}x{} weights".format(num_classes, d))
    return params
