"""Memory-augmented segmentation of an image stream.

Every image goes through the same loop:

    encode -> adapt -> retrieve -> attend -> fuse -> decode -> gate -> commit

MemoryPipeline holds the state that survives between images (the memory
bank and the step counter). run_stream() drives a MemoryPipeline over a
StreamSpec, writes one mask per image and a JSON-lines run log, and
ablate() repeats that for each combination of the fusion, gating and bank
switches."""
import collections
import json
import logging
import os
import numpy
import scipy

import slickmem
from .errors import SlickMemError, MissingAssetError, StreamError, InvalidArgumentError
from .config import PipelineConfig
from .encoders import LEVELS, CHANNELS, encode_image, encode_prompt
from .memory_bank import MemoryBank, make_entry, retrieve
from .fusion import make_adapters, adapt, attend_level, fuse
from .update_policy import (bootstrap_decision, make_decision, decide, commit,
                            semantic_discrepancy, structural_discrepancy)
from .decoder import DecoderParams, decode, train_decoder, load_params
from .metrics import ConfusionCounts, accumulate, evaluation_report
from .numerics import gap, bilinear_resize
from .scene_io import (validate_prompt, prompt_summary, empty_prompt, load_pgm, load_mask, load_prompts,
                       save_mask, standard_drift_spec)
from .synthesis import synth_item, synth_scene, synth_prompt

log = logging.getLogger(__name__)

ForwardPass = collections.namedtuple('ForwardPass', ['pyramid', 'adapted', 'retrieved', 'fused', 'weights',
                                                     'prediction'])


class MemoryPipeline(object):
    """Adapters, decoder parameters and the memory bank of one run.

    Only one MemoryPipeline should mutate a given bank at a time; use
    bank.snapshot() to hand the memory to readers."""
    def __init__(self, cfg=None, decoder_params=None):
        self.cfg = (cfg or PipelineConfig()).validate()
        self.adapters = make_adapters(CHANNELS, self.cfg.d, self.cfg.seed)
        if decoder_params is None:
            decoder_params = DecoderParams.random(self.cfg.num_classes, self.cfg.d, self.cfg.seed)
        if decoder_params.weights.shape != (self.cfg.num_classes, self.cfg.d):
            raise InvalidArgumentError("decoder parameters of shape {} do not fit C={}, d={}".format(
                decoder_params.weights.shape, self.cfg.num_classes, self.cfg.d))
        self.decoder_params = decoder_params
        self.bank = MemoryBank(self.cfg.capacities, merged=self.cfg.bank == 'merged')
        self.step = 0

    def forward(self, img, prompt):
        """Prediction for img given the current bank, without touching the bank."""
        validate_prompt(prompt, img.height, img.width)
        pyramid = encode_image(img)
        tokens = encode_prompt(prompt, img.height, img.width, self.cfg.d)
        adapted = collections.OrderedDict()
        retrieved = collections.OrderedDict()
        attended = []
        for level in LEVELS:
            adapted[level] = adapt(self.adapters[level], pyramid.level(level))
            retrieved[level] = retrieve(self.bank.group(level), gap(adapted[level]), self.cfg.k)
            attended.append(attend_level(level, adapted[level], retrieved[level], tokens))
        fused, weights = fuse(*attended, adaptive=self.cfg.fusion == 'adaptive')
        prediction = decode(fused, self.decoder_params, img.height, img.width)
        return ForwardPass(pyramid, adapted, retrieved, fused, weights, prediction)

    def _decision(self, z_t, f_str_t):
        if not self.bank.proto_initialized:
            return bootstrap_decision()
        delta_sem = semantic_discrepancy(z_t, self.bank.proto_sem)
        delta_str = structural_discrepancy(f_str_t, self.bank.proto_str)
        if self.cfg.gating == 'always':
            return make_decision(True, True, delta_sem, delta_str)
        if self.cfg.gating == 'never':
            return make_decision(False, False, delta_sem, delta_str)
        return decide(delta_sem, delta_str, self.cfg.thresholds)

    def process_image(self, img, prompt=None, image_id=None, truth=None):
        """Segment one image and update the memory. Returns (Prediction,
        UpdateDecision, log record)."""
        if self.cfg.reset_per_image:
            self.bank.clear()
        prompt = prompt if prompt is not None else empty_prompt()
        fp = self.forward(img, prompt)
        step = self.step
        decision = self.update(fp, fp.prediction.probs)
        record = self._record(step, image_id, prompt, fp, decision, truth)
        log.info("step %d image %s: committed %s, bank %s", step, image_id,
                 ",".join(decision.flagged_levels()) or "nothing", dict(self.bank.sizes()))
        return fp.prediction, decision, record

    def update(self, fp, mask_probs):
        """Gate and commit the forward pass fp, storing mask_probs (C, H, W)
        in the new entries, and advance the step counter. Returns the
        UpdateDecision."""
        z_t = gap(fp.pyramid.f_sem)
        f_str_t = fp.pyramid.f_str
        if self.bank.proto_initialized and f_str_t.shape != self.bank.proto_str.shape:
            f_str_t = bilinear_resize(f_str_t, *self.bank.proto_str.shape[1:])
        decision = self._decision(z_t, f_str_t)

        new_entries = collections.OrderedDict(
            (level, make_entry(level, fp.adapted[level], mask_probs, self.step))
            for level in decision.flagged_levels())
        commit(self.bank, decision, new_entries, (z_t, f_str_t), self.cfg.alpha)
        self.step += 1
        return decision

    def _record(self, step, image_id, prompt, fp, decision, truth):
        retrieval = collections.OrderedDict()
        for level, rs in fp.retrieved.items():
            retrieval[level] = {'size': len(rs.entries),
                                'top_similarity': rs.similarities[0] if rs.similarities else None}
        record = collections.OrderedDict([
            ('record', 'image'),
            ('step', step),
            ('image_id', image_id),
            ('prompt', prompt_summary(prompt)),
            ('retrieval', retrieval),
            ('scores', dict(fp.weights.scores)),
            ('gamma', dict(fp.weights.gamma)),
            ('delta_sem', decision.delta_sem),
            ('delta_str', decision.delta_str),
            ('decision', {'update_sem': decision.update_sem, 'update_str': decision.update_str,
                          'update_tex': decision.update_tex}),
            ('bank_sizes', dict(self.bank.sizes())),
        ])
        if truth is not None:
            cc = accumulate(ConfusionCounts(self.cfg.num_classes), fp.prediction.hard, truth)
            record['metrics'] = image_metrics(cc)
        return record


def image_metrics(cc):
    report = evaluation_report(cc)
    oil = report['classes'][1]
    return {'miou': report['miou'], 'pixel_accuracy': report['pixel_accuracy'],
            'oil_iou': oil['iou'], 'oil_precision': oil['precision'],
            'oil_recall': oil['recall'], 'oil_f1': oil['f1']}


# where the images come from

class SyntheticSource(object):
    """Scenes, truth and prompts generated on the fly from a synthetic StreamSpec."""
    def __init__(self, spec):
        if not spec.synthetic:
            raise InvalidArgumentError("SyntheticSource needs a stream with regimes")
        self.spec = spec

    def missing(self, items):
        return [item.image_id for item in items if item.segment not in self.spec.regimes]

    def load(self, item):
        return synth_item(self.spec, item)


class DirectorySource(object):
    """A materialized stream: images/<id>.pgm, optional masks/<id>.pgm with
    the truth, and prompts.jsonl."""
    def __init__(self, directory, num_classes=2, prompt_mode='click'):
        self.directory = directory
        self.num_classes = num_classes
        self.prompt_mode = prompt_mode
        self._prompts = None

    def image_path(self, image_id):
        return os.path.join(self.directory, 'images', image_id + '.pgm')

    def mask_path(self, image_id):
        return os.path.join(self.directory, 'masks', image_id + '.pgm')

    @property
    def prompts_path(self):
        return os.path.join(self.directory, 'prompts.jsonl')

    @property
    def prompts(self):
        if self._prompts is None:
            if os.path.exists(self.prompts_path):
                self._prompts = load_prompts(self.prompts_path)
            else:
                self._prompts = {}
        return self._prompts

    def missing(self, items):
        missing = [self.image_path(item.image_id) for item in items
                   if not os.path.exists(self.image_path(item.image_id))]
        if self.prompt_mode != 'none':
            if not os.path.exists(self.prompts_path):
                missing.append(self.prompts_path)
            else:
                missing.extend("prompt {}".format(item.prompt_id) for item in items
                               if item.prompt_id not in self.prompts)
        return missing

    def load(self, item):
        img = load_pgm(self.image_path(item.image_id))
        truth = None
        if os.path.exists(self.mask_path(item.image_id)):
            truth = load_mask(self.mask_path(item.image_id), self.num_classes)
        prompt = self.prompts.get(item.prompt_id, empty_prompt())
        return img, truth, prompt


def default_source(spec, directory=None, num_classes=2):
    if directory is not None:
        return DirectorySource(directory, num_classes, spec.prompts)
    return SyntheticSource(spec)


# decoder

def prepare_decoder(cfg, spec=None):
    """Decoder parameters for a run: loaded from cfg.decoder_file, drawn at
    random from cfg.seed, or trained on cfg.train_images scenes synthesized
    from the stream's regimes with seed cfg.seed+1.

    Training features come from a warm pipeline (multi-level bank, every
    scene committed) whose entries carry the true masks, so the decoder sees
    the memory-attended features it meets in a stream. The descent runs on
    whitened features."""
    if cfg.decoder == 'file':
        if not os.path.exists(cfg.decoder_file):
            raise MissingAssetError([cfg.decoder_file])
        with open(cfg.decoder_file, 'r') as f:
            return load_params(f.read())
    params = DecoderParams.random(cfg.num_classes, cfg.d, cfg.seed)
    if cfg.decoder == 'random':
        return params

    if spec is None or not spec.synthetic:
        spec = standard_drift_spec(cfg.seed)
    regimes = list(spec.regimes.values())
    prompt_mode = spec.prompts
    pipeline = MemoryPipeline(cfg.with_overrides(gating='always', bank='multi', reset_per_image=False), params)
    samples = []
    for i in range(cfg.train_images):
        img, truth = synth_scene([cfg.seed + 1, i], regimes[i % len(regimes)])
        fp = pipeline.forward(img, synth_prompt(truth, prompt_mode))
        samples.append((fp.fused, truth))
        pipeline.update(fp, one_hot(truth))
    log.info("training decoder on %d scenes for %d steps", len(samples), cfg.train_steps)
    return train_decoder(samples, params, cfg.learning_rate, cfg.train_steps, cfg.class_weights, precondition=True)


def one_hot(truth):
    """(C, H, W) class indicator of a LabelMap."""
    return numpy.stack([truth.labels == c for c in range(truth.num_classes)]).astype(numpy.float64)


# runs

class RunLog(object):
    """Header record, one record per processed image and, for a non-empty
    stream, a footer with the aggregate metrics."""
    def __init__(self, header):
        self.header = header
        self.records = []
        self.footer = None
        self.counts = None

    def lines(self):
        records = [self.header] + self.records + ([self.footer] if self.footer is not None else [])
        return [json.dumps(r, sort_keys=True) for r in records]

    def dumps(self):
        return "".join(line + "\n" for line in self.lines())

    @property
    def miou(self):
        if self.footer is None or 'metrics' not in self.footer:
            return None
        return self.footer['metrics']['miou']


def run_header(spec, cfg):
    return collections.OrderedDict([
        ('record', 'header'),
        ('config', cfg.to_dict()),
        ('stream', {'images': len(spec), 'seed': spec.seed, 'order': spec.order, 'prompts': spec.prompts}),
        ('versions', {'slickmem': slickmem.__version__, 'numpy': numpy.__version__, 'scipy': scipy.__version__}),
    ])


def run_stream(spec, cfg, source=None, out_dir=None, decoder_params=None):
    """Process every item of spec in order and return the RunLog.

    With out_dir, masks/<id>.pgm is written as soon as an image is done and
    the log goes to runlog.jsonl, one line per record. All assets are
    checked before the first image is processed."""
    cfg.validate()
    source = source or default_source(spec, num_classes=cfg.num_classes)
    missing = source.missing(spec.items)
    if missing:
        raise MissingAssetError(missing)
    if decoder_params is None:
        decoder_params = prepare_decoder(cfg, spec)
    pipeline = MemoryPipeline(cfg, decoder_params)

    runlog = RunLog(run_header(spec, cfg))
    out = None
    if out_dir is not None:
        os.makedirs(os.path.join(out_dir, 'masks'), exist_ok=True)
        out = open(os.path.join(out_dir, 'runlog.jsonl'), 'w')
        out.write(runlog.lines()[0] + "\n")
    try:
        counts = ConfusionCounts(cfg.num_classes)
        segments = collections.OrderedDict()
        with_truth = 0
        for item in spec.items:
            try:
                img, truth, prompt = source.load(item)
                prediction, decision, record = pipeline.process_image(img, prompt, item.image_id, truth)
                if out_dir is not None:
                    save_mask(os.path.join(out_dir, 'masks', item.image_id + '.pgm'), prediction.hard)
                if truth is not None:
                    counts = accumulate(counts, prediction.hard, truth)
                    with_truth += 1
                    if item.segment is not None:
                        seg = segments.get(item.segment, ConfusionCounts(cfg.num_classes))
                        segments[item.segment] = accumulate(seg, prediction.hard, truth)
            except (SlickMemError, ValueError, OSError) as e:
                log.error("stream aborted at image %s", item.image_id)
                raise StreamError(item.image_id, e)
            runlog.records.append(record)
            if out is not None:
                out.write(json.dumps(record, sort_keys=True) + "\n")
                out.flush()

        if runlog.records:
            runlog.footer = collections.OrderedDict([('record', 'footer'), ('images', len(runlog.records))])
            if with_truth:
                runlog.footer['images_with_truth'] = with_truth
                runlog.footer['metrics'] = evaluation_report(counts)
                runlog.counts = counts
            if segments:
                runlog.footer['segments'] = collections.OrderedDict(
                    (name, image_metrics(cc)) for name, cc in segments.items())
            if out is not None:
                out.write(runlog.lines()[-1] + "\n")
    finally:
        if out is not None:
            out.close()
    return runlog


# ablation grid: name, fusion, gating, bank
ABLATION_ROWS = [
    ('Baseline', 'uniform', 'always', 'merged'),
    ('+Fusion', 'adaptive', 'always', 'merged'),
    ('+Update', 'uniform', 'gated', 'merged'),
    ('+Memory Bank', 'uniform', 'always', 'multi'),
    ('+Fusion+Update', 'adaptive', 'gated', 'merged'),
    ('+Fusion+Memory Bank', 'adaptive', 'always', 'multi'),
    ('+Update+Memory Bank', 'uniform', 'gated', 'multi'),
    ('Full', 'adaptive', 'gated', 'multi'),
]


def ablation_config(base_cfg, row):
    name, fusion, gating, bank = row
    return base_cfg.with_overrides(fusion=fusion, gating=gating, bank=bank)


def ablate(spec, base_cfg, source=None):
    """Run every ABLATION_ROWS configuration on the same stream. Returns a
    list of dicts, one per row in ABLATION_ROWS order."""
    base_cfg.validate()
    source = source or default_source(spec, num_classes=base_cfg.num_classes)
    decoders = {}
    rows = []
    for row in ABLATION_ROWS:
        cfg = ablation_config(base_cfg, row)
        # decoder training fixes gating and bank, so only the fusion switch changes it
        if cfg.fusion not in decoders:
            decoders[cfg.fusion] = prepare_decoder(cfg, spec)
        runlog = run_stream(spec, cfg, source, decoder_params=decoders[cfg.fusion])
        metrics = runlog.footer['metrics'] if runlog.footer and 'metrics' in runlog.footer else None
        oil = metrics['classes'][1] if metrics else {}
        segments = runlog.footer.get('segments', {}) if runlog.footer else {}
        rows.append(collections.OrderedDict([
            ('name', row[0]), ('fusion', cfg.fusion), ('gating', cfg.gating), ('bank', cfg.bank),
            ('miou', runlog.miou), ('oil_precision', oil.get('precision')),
            ('oil_recall', oil.get('recall')), ('oil_f1', oil.get('f1')),
            ('segments', collections.OrderedDict((name, m['miou']) for name, m in segments.items()))]))
        log.info("ablation %s: mIoU %s", row[0], runlog.miou)
    return rows


def _pct(x):
    return "   n/a" if x is None else "{:6.2f}".format(100.0*x)


def format_ablation(rows):
    """Table of the ablation rows, with one mIoU column per stream segment."""
    names = []
    for r in rows:
        names.extend(name for name in r.get('segments', {}) if name not in names)
    header = "{:<22s} {:<8s} {:<6s} {:<6s}  mIoU%  Prec%   Rec%    F1%".format('configuration', 'fusion',
                                                                           'gating', 'bank')
    lines = [header + "".join(" {:>6s}".format(name[:6]) for name in names)]
    for r in rows:
        line = "{:<22s} {:<8s} {:<6s} {:<6s} {} {} {} {}".format(
            r['name'], r['fusion'], r['gating'], r['bank'],
            _pct(r['miou']), _pct(r['oil_precision']), _pct(r['oil_recall']), _pct(r['oil_f1']))
        segments = r.get('segments', {})
        lines.append(line + "".join(" " + _pct(segments.get(name)) for name in names))
    return "\n".join(lines)

def shuffle_spread(spec, cfg, permutations=5, source=None):
    """Final mIoU of the gated configuration over `permutations` random
    orders of the stream, compared to the gap between gated and always-update
    on the original order."""
    gated_cfg = cfg.with_overrides(gating='gated')
    always_cfg = cfg.with_overrides(gating='always')
    source = source or default_source(spec, num_classes=cfg.num_classes)
    params = prepare_decoder(gated_cfg, spec)
    gated = run_stream(spec, gated_cfg, source, decoder_params=params).miou
    always = run_stream(spec, always_cfg, source, decoder_params=params).miou
    shuffled = [run_stream(spec.permuted([spec.seed, i]), gated_cfg, source, decoder_params=params).miou
                for i in range(permutations)]
    return collections.OrderedDict([
        ('gated', gated), ('always', always), ('gap', gated - always),
        ('shuffled', shuffled), ('spread', max(shuffled) - min(shuffled))])
