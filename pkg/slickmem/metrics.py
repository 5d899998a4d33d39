"""Segmentation metrics from a confusion matrix: per-class IoU, mIoU,
precision, recall and F1.

A metric whose denominator is zero is undefined and returned as None. By
default undefined classes are left out of the mIoU; with
exclude_undefined=False they count as 0."""
import fractions
import json
import logging
import os
import numpy

from .errors import InvalidArgumentError, EvaluationError, MissingAssetError
from .scene_io import load_mask

log = logging.getLogger(__name__)


class ConfusionCounts(object):
    """matrix[i, j] = number of pixels of true class i predicted as class j."""
    def __init__(self, num_classes, matrix=None):
        self.num_classes = num_classes
        if matrix is None:
            matrix = numpy.zeros((num_classes, num_classes), dtype=numpy.int64)
        self.matrix = numpy.asarray(matrix, dtype=numpy.int64)

    @property
    def total(self):
        return int(self.matrix.sum())

    def __add__(self, other):
        if other.num_classes != self.num_classes:
            raise InvalidArgumentError("cannot add counts of {} and {} classes".format(self.num_classes, other.num_classes))
        return ConfusionCounts(self.num_classes, self.matrix + other.matrix)

    def __eq__(self, other):
        return isinstance(other, ConfusionCounts) and numpy.array_equal(self.matrix, other.matrix)

    def __ne__(self, other):
        return not self == other


def accumulate(cc, pred, truth):
    """Counts of cc plus those of one (pred, truth) pair of LabelMaps."""
    if pred.shape != truth.shape:
        raise InvalidArgumentError("prediction {} and truth {} differ in size".format(pred.shape, truth.shape))
    if pred.num_classes != cc.num_classes or truth.num_classes != cc.num_classes:
        raise InvalidArgumentError("class counts differ: counts {}, prediction {}, truth {}".format(
            cc.num_classes, pred.num_classes, truth.num_classes))
    n = cc.num_classes
    index = n*truth.labels.ravel() + pred.labels.ravel()
    counts = numpy.bincount(index, minlength=n*n).reshape(n, n)
    return ConfusionCounts(n, cc.matrix + counts)


def _ratio(num, den):
    return None if den == 0 else num/float(den)


def iou(cc, c):
    tp = cc.matrix[c, c]
    fp = cc.matrix[:, c].sum() - tp
    fn = cc.matrix[c, :].sum() - tp
    return _ratio(tp, tp + fp + fn)


def miou(cc, exclude_undefined=True):
    """Mean IoU over classes, rounded once from the exact rational value.
    Raises EvaluationError if no class is defined."""
    if cc.total == 0:
        raise EvaluationError("no pixels have been accumulated")
    values = []
    defined = 0
    for c in range(cc.num_classes):
        tp = int(cc.matrix[c, c])
        den = int(cc.matrix[:, c].sum() + cc.matrix[c, :].sum()) - tp
        if den:
            values.append(fractions.Fraction(tp, den))
            defined += 1
        elif not exclude_undefined:
            values.append(fractions.Fraction(0))
    if not defined:
        raise EvaluationError("IoU is undefined for every class")
    return float(sum(values)/len(values))


def precision_recall_f1(cc, c):
    tp = cc.matrix[c, c]
    p = _ratio(tp, cc.matrix[:, c].sum())
    r = _ratio(tp, cc.matrix[c, :].sum())
    if p is None or r is None or p + r == 0:
        f1 = None
    else:
        f1 = 2*p*r/(p + r)
    return p, r, f1


def evaluation_report(cc, exclude_undefined=True):
    """Dict with per-class and aggregate metrics; undefined values are None."""
    classes = []
    for c in range(cc.num_classes):
        p, r, f1 = precision_recall_f1(cc, c)
        classes.append({'class': c, 'iou': iou(cc, c), 'precision': p, 'recall': r, 'f1': f1})
    try:
        mean = miou(cc, exclude_undefined)
    except EvaluationError:
        mean = None
    return {'classes': classes,
            'miou': mean,
            'pixel_accuracy': _ratio(numpy.trace(cc.matrix), cc.total),
            'pixels': cc.total,
            'exclude_undefined': exclude_undefined}


def _fmt(x):
    return "   n/a" if x is None else "{:6.2f}".format(100.0*x)


def format_report(report):
    lines = ["class    IoU%  Prec%   Rec%    F1%"]
    for row in report['classes']:
        lines.append("{:5d} {} {} {} {}".format(row['class'], _fmt(row['iou']), _fmt(row['precision']),
                                                 _fmt(row['recall']), _fmt(row['f1'])))
    lines.append("mIoU% {}   pixel accuracy% {}".format(_fmt(report['miou']), _fmt(report['pixel_accuracy'])))
    return "\n".join(lines)


def report_json(report):
    return json.dumps(report, sort_keys=True)


def evaluate_directories(pred_dir, truth_dir, num_classes):
    """Confusion counts over all masks in pred_dir that have a mask of the
    same file name in truth_dir."""
    missing = [d for d in (pred_dir, truth_dir) if not os.path.isdir(d)]
    if missing:
        raise MissingAssetError(missing)
    cc = ConfusionCounts(num_classes)
    names = sorted(n for n in os.listdir(pred_dir) if n.endswith('.pgm'))
    matched = 0
    for name in names:
        truth_path = os.path.join(truth_dir, name)
        if not os.path.exists(truth_path):
            log.warning("no truth mask for %s", name)
            continue
        cc = accumulate(cc, load_mask(os.path.join(pred_dir, name), num_classes), load_mask(truth_path, num_classes))
        matched += 1
    log.info("evaluated %d masks", matched)
    return cc
