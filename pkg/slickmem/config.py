"""Pipeline configuration.

A PipelineConfig can be read from an INI file with a [pipeline] section:

    [pipeline]
    d = 32
    capacities = 8, 8, 8
    fusion = uniform
    gating = always

Fields not set in the file keep their defaults; command line values given
to with_overrides() take precedence over both."""
import collections
import configparser
import logging

from .errors import ConfigError
from .update_policy import UpdateThresholds

log = logging.getLogger(__name__)

FUSION_MODES = ('adaptive', 'uniform')
GATING_MODES = ('gated', 'always', 'never')
BANK_MODES = ('multi', 'merged')
DECODER_SOURCES = ('trained', 'random', 'file')


def _bool(text):
    if isinstance(text, bool):
        return text
    lowered = str(text).strip().lower()
    if lowered in ('1', 'true', 'yes', 'on'):
        return True
    if lowered in ('0', 'false', 'no', 'off'):
        return False
    raise ValueError("not a boolean: {!r}".format(text))


def _int_tuple(text):
    if isinstance(text, (tuple, list)):
        return tuple(int(x) for x in text)
    return tuple(int(x) for x in str(text).split(',') if x.strip())


def _float_tuple(text):
    if isinstance(text, (tuple, list)):
        return tuple(float(x) for x in text)
    return tuple(float(x) for x in str(text).split(',') if x.strip())


def _optional_str(text):
    if text is None or str(text).strip().lower() in ('', 'none'):
        return None
    return str(text)


# name -> (converter, default)
FIELDS = collections.OrderedDict([
    ('d', (int, 32)),
    ('capacities', (_int_tuple, (8, 8, 8))),
    ('k', (int, 4)),
    ('tau_sem', (float, 0.15)),
    ('tau_str', (float, 0.10)),
    ('alpha', (float, 0.3)),
    ('class_weights', (_float_tuple, (1.0, 5.0))),
    ('decoder', (str, 'trained')),
    ('decoder_file', (_optional_str, None)),
    ('train_images', (int, 16)),
    ('train_steps', (int, 200)),
    ('learning_rate', (float, 0.5)),
    ('fusion', (str, 'adaptive')),
    ('gating', (str, 'gated')),
    ('bank', (str, 'multi')),
    ('reset_per_image', (_bool, False)),
    ('num_classes', (int, 2)),
    ('seed', (int, 17)),
])


class PipelineConfig(object):
    """All settings of a run. Attributes are the keys of FIELDS."""
    def __init__(self, **kwargs):
        unknown = set(kwargs) - set(FIELDS)
        if unknown:
            raise ConfigError("unknown configuration field(s): {}".format(", ".join(sorted(unknown))))
        for name, (convert, default) in FIELDS.items():
            value = kwargs.get(name, default)
            if value is not None and name in kwargs:
                try:
                    value = convert(value)
                except (TypeError, ValueError):
                    raise ConfigError("{} = {!r} is not valid".format(name, value))
            setattr(self, name, value)

    @property
    def thresholds(self):
        return UpdateThresholds(self.tau_sem, self.tau_str, self.alpha)

    def validate(self):
        """Raise a ConfigError naming the first invalid field."""
        if self.d <= 4 or (self.d - 4) % 4 != 0:
            raise ConfigError("d should be 4 plus a positive multiple of 4, got {}".format(self.d))
        if len(self.capacities) != 3 or min(self.capacities) < 1:
            raise ConfigError("capacities should be three positive integers, got {}".format(self.capacities))
        if self.k < 1:
            raise ConfigError("k should be >= 1, got {}".format(self.k))
        if self.tau_sem < 0 or self.tau_str < 0:
            raise ConfigError("tau_sem and tau_str should be nonnegative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha should be in [0, 1], got {}".format(self.alpha))
        if len(self.class_weights) != 2 or min(self.class_weights) <= 0:
            raise ConfigError("class_weights should be two positive numbers, got {}".format(self.class_weights))
        if self.decoder not in DECODER_SOURCES:
            raise ConfigError("decoder should be one of {}, got {!r}".format(", ".join(DECODER_SOURCES), self.decoder))
        if self.decoder == 'file' and self.decoder_file is None:
            raise ConfigError("decoder = file needs decoder_file")
        if self.train_images < 1 or self.train_steps < 0:
            raise ConfigError("train_images should be >= 1 and train_steps >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate should be positive, got {}".format(self.learning_rate))
        for name, modes in (('fusion', FUSION_MODES), ('gating', GATING_MODES), ('bank', BANK_MODES)):
            if getattr(self, name) not in modes:
                raise ConfigError("{} should be one of {}, got {!r}".format(name, ", ".join(modes), getattr(self, name)))
        if self.num_classes != 2:
            raise ConfigError("num_classes should be 2 (oil/background), got {}".format(self.num_classes))
        return self

    def with_overrides(self, **overrides):
        """Copy with the given fields replaced; None values are ignored."""
        values = self.to_dict()
        values.update((name, value) for name, value in overrides.items() if value is not None)
        return PipelineConfig(**values)

    def to_dict(self):
        return collections.OrderedDict(
            (name, list(v) if isinstance(v, tuple) else v)
            for name, v in ((name, getattr(self, name)) for name in FIELDS))

    def __eq__(self, other):
        return isinstance(other, PipelineConfig) and self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self == other

    def __repr__(self):
        return "PipelineConfig({})".format(", ".join("{}={!r}".format(n, v) for n, v in self.to_dict().items()))

    @classmethod
    def from_ini(cls, path, base=None):
        """Read the [pipeline] section of an INI file on top of base (default: the defaults)."""
        parser = configparser.ConfigParser(interpolation=None)
        if not parser.read(path):
            raise ConfigError("cannot read configuration file {}".format(path))
        if 'pipeline' not in parser:
            raise ConfigError("{} has no [pipeline] section".format(path))
        base = base or cls()
        log.debug("read configuration from %s", path)
        return base.with_overrides(**dict(parser['pipeline']))


def write_config(cfg, path):
    parser = configparser.ConfigParser(interpolation=None)
    section = collections.OrderedDict()
    for name, value in cfg.to_dict().items():
        if isinstance(value, list):
            value = ", ".join(str(x) for x in value)
        section[name] = 'none' if value is None else str(value)
    parser['pipeline'] = section
    with open(path, 'w') as f:
        parser.write(f)
