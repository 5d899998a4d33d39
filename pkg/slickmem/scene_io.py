"""Reading and writing of scenes, masks, prompts and stream specifications.

Rasters are binary PGM (P5, maxval 255) files. Images store intensities in
[0, 1] as round(255*p); masks store raw class indices. Prompts are JSON-lines
records, one per image:

    {"image_id": "calm-0001", "clicks": [[12, 30, "pos"]], "boxes": [[4, 20, 22, 41]]}

A stream specification is an INI file:

    [stream]
    seed = 17
    segments = calm, rough
    order = interleaved
    prompts = click
    height = 64
    width = 64

    [segment calm]
    count = 100
    sea_mean = 0.6
    looks = 4
    ...

in which case image ids are generated as <segment>-<index>, or it lists
already existing images explicitly:

    [items]
    scene_a = scene_a
    scene_b = prompt_for_b

where each line maps an image id to its prompt id."""
import collections
import configparser
import json
import logging
import numpy

from .errors import ParseError, ValidationError, InvalidArgumentError, ConfigError

log = logging.getLogger(__name__)


class SarImage(object):
    """Grayscale SAR intensity raster with values in [0, 1]."""
    def __init__(self, pixels):
        pixels = numpy.asarray(pixels, dtype=numpy.float64)
        if pixels.ndim != 2:
            raise InvalidArgumentError("SarImage pixels should be 2d, got shape {}".format(pixels.shape))
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise InvalidArgumentError("SarImage pixels should lie in [0, 1]")
        self.pixels = pixels

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def shape(self):
        return self.pixels.shape


class LabelMap(object):
    """Per-pixel class indices in {0, ..., num_classes-1}."""
    def __init__(self, labels, num_classes):
        labels = numpy.asarray(labels)
        if labels.ndim != 2:
            raise InvalidArgumentError("LabelMap labels should be 2d, got shape {}".format(labels.shape))
        if num_classes < 2:
            raise InvalidArgumentError("LabelMap needs at least 2 classes, got {}".format(num_classes))
        labels = labels.astype(numpy.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise InvalidArgumentError("LabelMap labels should lie in [0, {})".format(num_classes))
        self.labels = labels
        self.num_classes = num_classes

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def shape(self):
        return self.labels.shape


Click = collections.namedtuple('Click', ['row', 'col', 'polarity'])
Box = collections.namedtuple('Box', ['row_min', 'col_min', 'row_max', 'col_max'])
PromptSpec = collections.namedtuple('PromptSpec', ['clicks', 'boxes'])

POLARITIES = ('pos', 'neg')


def empty_prompt():
    return PromptSpec([], [])


def validate_prompt(prompt, height, width):
    """Check that all clicks and boxes of prompt lie inside a height x width image."""
    for click in prompt.clicks:
        if click.polarity not in POLARITIES:
            raise InvalidArgumentError("unknown click polarity {!r}".format(click.polarity))
        if not (0 <= click.row < height and 0 <= click.col < width):
            raise InvalidArgumentError("click ({}, {}) outside {}x{} image".format(click.row, click.col, height, width))
    for box in prompt.boxes:
        if not (0 <= box.row_min <= box.row_max < height and 0 <= box.col_min <= box.col_max < width):
            raise InvalidArgumentError("box {} invalid for {}x{} image".format(tuple(box), height, width))


def prompt_summary(prompt):
    return {
        'positive_clicks': sum(1 for c in prompt.clicks if c.polarity == 'pos'),
        'negative_clicks': sum(1 for c in prompt.clicks if c.polarity == 'neg'),
        'boxes': len(prompt.boxes)}


# PGM

def _next_header_token(data, pos):
    n = len(data)
    while pos < n:
        c = data[pos:pos+1]
        if c == b'#':
            while pos < n and data[pos:pos+1] not in (b'\n', b'\r'):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos+1].isspace() and data[pos:pos+1] != b'#':
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of header", start)
    return data[start:pos], start, pos


def _header_int(data, pos, what):
    token, start, pos = _next_header_token(data, pos)
    if not token.isdigit():
        raise ParseError("expected {} but found {!r}".format(what, token), start)
    value = int(token)
    if value <= 0:
        raise ParseError("{} should be positive".format(what), start)
    return value, start, pos


def parse_pgm(data):
    """Parse the bytes of a binary PGM file. Returns a height x width uint8 array."""
    if data[0:2] != b'P5':
        raise ParseError("not a binary PGM file (magic number P5 expected)", 0)
    width, _, pos = _header_int(data, 2, "width")
    height, _, pos = _header_int(data, pos, "height")
    maxval, start, pos = _header_int(data, pos, "maxval")
    if maxval != 255:
        raise ParseError("only maxval 255 is supported, got {}".format(maxval), start)
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(data) or not data[pos:pos+1].isspace():
        raise ParseError("missing whitespace after maxval", pos)
    pos += 1
    size = width*height
    payload = data[pos:pos+size]
    if len(payload) < size:
        raise ParseError("truncated payload: expected {} bytes, found {}".format(size, len(payload)), len(data))
    if len(data) > pos+size:
        log.warning("ignoring %d trailing bytes after PGM payload", len(data)-pos-size)
    return numpy.frombuffer(payload, dtype=numpy.uint8).reshape(height, width)


def format_pgm(values):
    values = numpy.asarray(values)
    height, width = values.shape
    header = "P5\n{} {}\n255\n".format(width, height).encode('ascii')
    return header + values.astype(numpy.uint8).tobytes()


def read_pgm_bytes(path):
    with open(path, 'rb') as f:
        return parse_pgm(f.read())


def load_pgm(path):
    """Load a P5 PGM file as a SarImage with pixels byte/255."""
    return SarImage(read_pgm_bytes(path)/255.0)


def save_pgm(path, img):
    pixels = img.pixels if isinstance(img, SarImage) else numpy.asarray(img, dtype=numpy.float64)
    values = numpy.rint(numpy.clip(pixels, 0.0, 1.0)*255.0)
    with open(path, 'wb') as f:
        f.write(format_pgm(values))


def load_mask(path, num_classes):
    """Load a P5 PGM whose bytes are class indices. Bytes >= num_classes are rejected."""
    values = read_pgm_bytes(path)
    bad = numpy.argwhere(values >= num_classes)
    if len(bad):
        row, col = (int(x) for x in bad[0])
        raise ValidationError("class byte {} not below num_classes={}".format(values[row, col], num_classes),
                              position=(row, col))
    return LabelMap(values, num_classes)


def save_mask(path, labels):
    values = labels.labels if isinstance(labels, LabelMap) else numpy.asarray(labels)
    if values.size and values.max() > 255:
        raise InvalidArgumentError("class indices above 255 cannot be stored in a PGM mask")
    with open(path, 'wb') as f:
        f.write(format_pgm(values))


# prompts

def _is_coordinate(x):
    # JSON true/false load as bool, a subclass of int
    return isinstance(x, int) and not isinstance(x, bool)


def _parse_prompt_record(record):
    if not isinstance(record, dict):
        raise InvalidArgumentError("prompt record should be a JSON object")
    image_id = record.get('image_id')
    if not isinstance(image_id, str):
        raise InvalidArgumentError("prompt record without a string image_id")
    clicks = []
    for click in record.get('clicks', []):
        if len(click) != 3 or not all(_is_coordinate(x) for x in click[:2]):
            raise InvalidArgumentError("click should be [row, col, polarity], got {!r}".format(click))
        if click[2] not in POLARITIES:
            raise InvalidArgumentError("unknown click polarity {!r}".format(click[2]))
        clicks.append(Click(*click))
    boxes = []
    for box in record.get('boxes', []):
        if len(box) != 4 or not all(_is_coordinate(x) for x in box):
            raise InvalidArgumentError("box should be [row_min, col_min, row_max, col_max], got {!r}".format(box))
        boxes.append(Box(*box))
    return image_id, PromptSpec(clicks, boxes)


def load_prompts(path, bounds=None):
    """Load a JSON-lines prompt file into a dict image_id -> PromptSpec.

    bounds, if given, is either a single (height, width) applying to every
    record or a dict image_id -> (height, width); coordinates are checked
    against it. Any problem raises a ValidationError with the line number."""
    prompts = {}
    first_line = {}
    with open(path, 'r') as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                image_id, prompt = _parse_prompt_record(json.loads(line))
                if image_id in prompts:
                    raise ValidationError("duplicate image_id {!r}".format(image_id),
                                          lines=[first_line[image_id], lineno])
                if bounds is not None:
                    shape = bounds.get(image_id) if isinstance(bounds, dict) else bounds
                    if shape is not None:
                        validate_prompt(prompt, *shape)
                else:
                    # at least the ordering and sign rules
                    validate_prompt(prompt, numpy.inf, numpy.inf)
            except json.JSONDecodeError as e:
                raise ValidationError("invalid JSON: {}".format(e.msg), line=lineno)
            except InvalidArgumentError as e:
                raise ValidationError(str(e), line=lineno)
            prompts[image_id] = prompt
            first_line[image_id] = lineno
    return prompts


def save_prompts(path, prompts):
    with open(path, 'w') as f:
        for image_id, prompt in prompts.items():
            record = {'image_id': image_id,
                      'clicks': [[c.row, c.col, c.polarity] for c in prompt.clicks],
                      'boxes': [list(b) for b in prompt.boxes]}
            f.write(json.dumps(record, sort_keys=True) + "\n")


# stream specifications

_Regime = collections.namedtuple('Regime', [
    'name', 'sea_mean', 'looks', 'slick_count', 'eccentricity', 'lookalike_prob',
    'area_min', 'area_max', 'slick_contrast', 'lookalike_contrast', 'speckle_sigma',
    'height', 'width'])


class Regime(_Regime):
    """Sea-state parameters of a segment of synthetic scenes.

    sea_mean: mean backscatter of open sea, looks: speckle shape L (>= 1),
    slick_count: number of slick ellipses, eccentricity: major/minor axis ratio,
    lookalike_prob: probability of look-alike patches, [area_min, area_max]:
    admissible oil pixel fraction, slick_contrast and lookalike_contrast:
    intensity factors of slick and look-alike pixels, speckle_sigma: Gaussian
    correlation length of the speckle (0 for uncorrelated)."""
    __slots__ = ()

    def __new__(cls, name, sea_mean=0.5, looks=4.0, slick_count=1, eccentricity=3.0,
                lookalike_prob=0.2, area_min=0.02, area_max=0.3, slick_contrast=0.25,
                lookalike_contrast=0.6, speckle_sigma=0.0, height=64, width=64):
        self = super(Regime, cls).__new__(cls, name, float(sea_mean), float(looks), int(slick_count),
                                          float(eccentricity), float(lookalike_prob), float(area_min),
                                          float(area_max), float(slick_contrast), float(lookalike_contrast),
                                          float(speckle_sigma), int(height), int(width))
        self.validate()
        return self

    def validate(self):
        if not 0.0 < self.sea_mean <= 1.0:
            raise ConfigError("regime {}: sea_mean should be in (0, 1]".format(self.name))
        if self.looks < 1.0:
            raise ConfigError("regime {}: looks should be >= 1".format(self.name))
        if self.slick_count < 0:
            raise ConfigError("regime {}: slick_count should be >= 0".format(self.name))
        if self.eccentricity < 1.0:
            raise ConfigError("regime {}: eccentricity should be >= 1".format(self.name))
        if not 0.0 <= self.lookalike_prob <= 1.0:
            raise ConfigError("regime {}: lookalike_prob should be in [0, 1]".format(self.name))
        if not 0.0 <= self.area_min <= self.area_max <= 1.0:
            raise ConfigError("regime {}: need 0 <= area_min <= area_max <= 1".format(self.name))
        if self.height < 8 or self.width < 8:
            raise ConfigError("regime {}: scenes should be at least 8x8".format(self.name))


REGIME_FIELDS = _Regime._fields[1:]

StreamItem = collections.namedtuple('StreamItem', ['image_id', 'prompt_id', 'segment', 'index'])

ORDERS = ('interleaved', 'blocked', 'shuffled')
PROMPT_MODES = ('none', 'click', 'box', 'both')


class StreamSpec(object):
    """An ordered list of (image_id, prompt_id) items plus, for synthetic
    streams, the regimes the images are generated from. The position of an
    item is its processing order only; nothing assumes consecutive images
    are related."""
    def __init__(self, items, seed=0, regimes=None, counts=None, order='interleaved', prompts='click'):
        if order not in ORDERS:
            raise ConfigError("unknown stream order {!r}".format(order))
        if prompts not in PROMPT_MODES:
            raise ConfigError("unknown prompt mode {!r}".format(prompts))
        self.items = list(items)
        self.seed = seed
        self.regimes = collections.OrderedDict(regimes or {})
        self.counts = dict(counts or {})
        self.order = order
        self.prompts = prompts
        ids = [item.image_id for item in self.items]
        if len(set(ids)) != len(ids):
            raise ConfigError("stream lists an image_id more than once")

    @classmethod
    def from_segments(cls, seed, regimes, counts, order='interleaved', prompts='click'):
        """Build the item list of a synthetic stream from its segments."""
        per_segment = []
        for name in regimes:
            per_segment.append([StreamItem("{}-{:04d}".format(name, i), "{}-{:04d}".format(name, i), name, i)
                                for i in range(counts[name])])
        if order == 'interleaved':
            items = []
            for i in range(max([len(s) for s in per_segment] or [0])):
                items.extend(s[i] for s in per_segment if i < len(s))
        else:
            items = [item for s in per_segment for item in s]
            if order == 'shuffled':
                perm = numpy.random.default_rng(seed).permutation(len(items))
                items = [items[i] for i in perm]
        return cls(items, seed, regimes, counts, order, prompts)

    @property
    def synthetic(self):
        return len(self.regimes) > 0

    def permuted(self, permutation_seed):
        """Same stream, same scenes, different processing order."""
        perm = numpy.random.default_rng(permutation_seed).permutation(len(self.items))
        return StreamSpec([self.items[i] for i in perm], self.seed, self.regimes, self.counts,
                          self.order, self.prompts)

    def __len__(self):
        return len(self.items)


def standard_drift_spec(seed=17, images=200, height=64, width=64):
    """The standard drift fixture: two sea-state regimes interleaved."""
    regimes = collections.OrderedDict([
        ('calm', Regime('calm', sea_mean=0.6, looks=4, slick_count=1, eccentricity=3.0,
                        lookalike_prob=0.15, area_min=0.02, area_max=0.25, height=height, width=width)),
        ('rough', Regime('rough', sea_mean=0.4, looks=2, slick_count=2, eccentricity=4.0,
                         lookalike_prob=0.5, area_min=0.02, area_max=0.3, slick_contrast=0.35,
                         speckle_sigma=0.7, height=height, width=width))])
    counts = {'calm': images - images//2, 'rough': images//2}
    return StreamSpec.from_segments(seed, regimes, counts, order='interleaved', prompts='click')


def _get(section, key, convert, default=None):
    if key not in section:
        if default is None:
            raise ConfigError("[{}] is missing {!r}".format(section.name, key))
        return default
    try:
        return convert(section[key])
    except ValueError:
        raise ConfigError("[{}] {} = {!r} is not valid".format(section.name, key, section[key]))


def load_stream_spec(path):
    """Read an INI stream specification (see the module docstring)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if not parser.read(path):
        raise ConfigError("cannot read stream specification {}".format(path))
    if 'stream' not in parser:
        raise ConfigError("{} has no [stream] section".format(path))
    stream = parser['stream']
    seed = _get(stream, 'seed', int, 0)
    order = stream.get('order', 'interleaved')
    prompts = stream.get('prompts', 'click')

    if 'items' in parser:
        items = [StreamItem(image_id, prompt_id or image_id, None, i)
                 for i, (image_id, prompt_id) in enumerate(parser['items'].items())]
        return StreamSpec(items, seed, order=order, prompts=prompts)

    names = [s.strip() for s in stream.get('segments', '').split(',') if s.strip()]
    height = _get(stream, 'height', int, 64)
    width = _get(stream, 'width', int, 64)
    regimes = collections.OrderedDict()
    counts = {}
    for name in names:
        section_name = 'segment ' + name
        if section_name not in parser:
            raise ConfigError("segment {!r} listed but [{}] is missing".format(name, section_name))
        section = parser[section_name]
        counts[name] = _get(section, 'count', int)
        fields = {'height': height, 'width': width}
        for key in REGIME_FIELDS:
            if key in section:
                fields[key] = _get(section, key, float)
        regimes[name] = Regime(name, **fields)
    return StreamSpec.from_segments(seed, regimes, counts, order, prompts)


def write_stream_spec(spec, path):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser['stream'] = {'seed': str(spec.seed), 'order': spec.order, 'prompts': spec.prompts}
    if spec.synthetic:
        first = next(iter(spec.regimes.values()))
        parser['stream']['segments'] = ", ".join(spec.regimes)
        parser['stream']['height'] = str(first.height)
        parser['stream']['width'] = str(first.width)
        for name, regime in spec.regimes.items():
            section = {'count': str(spec.counts[name])}
            for key in REGIME_FIELDS:
                section[key] = repr(getattr(regime, key))
            parser['segment ' + name] = section
    else:
        parser['items'] = collections.OrderedDict((item.image_id, item.prompt_id) for item in spec.items)
    with open(path, 'w') as f:
        parser.write(f)
