"""Command line interface: slickmem {synth,run,eval,ablate}.

Every PipelineConfig field has a flag of the same name (with dashes); a
value on the command line overrides the --config file, which overrides the
defaults. Failures, including unreadable or unwritable files, are
reported as a single JSON line on stderr and exit code 1."""
import argparse
import json
import logging
import os
import sys

from .errors import SlickMemError, StreamError, ConfigError
from .config import FIELDS, PipelineConfig, write_config
from .scene_io import standard_drift_spec, load_stream_spec
from .synthesis import materialize_stream
from .metrics import evaluate_directories, evaluation_report, format_report, report_json
from .pipeline import run_stream, ablate, format_ablation, DirectorySource, SyntheticSource

log = logging.getLogger(__name__)


def _add_config_flags(parser):
    group = parser.add_argument_group('pipeline configuration')
    group.add_argument('--config', metavar='FILE', help="INI file with a [pipeline] section")
    for name, (convert, default) in FIELDS.items():
        flag = '--' + name.replace('_', '-')
        if name == 'reset_per_image':
            group.add_argument(flag, dest=name, action='store_const', const=True, default=None,
                               help="start every image with an empty memory bank")
            group.add_argument('--no-' + flag[2:], dest=name, action='store_const', const=False,
                               help="keep the memory bank across images (default)")
        else:
            group.add_argument(flag, dest=name, default=None, metavar=name.upper(),
                               help="default: {}".format(default))


def _add_stream_flags(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument('--stream', metavar='FILE', help="stream specification (INI)")
    group.add_argument('--standard', action='store_true', help="the standard two-regime drift stream")
    parser.add_argument('--data', metavar='DIR',
                        help="directory with images/, masks/ and prompts.jsonl "
                             "(default: next to --stream if it has images/, else synthesize)")
    parser.add_argument('--images', type=int, default=200, help="size of the --standard stream")


def build_parser():
    parser = argparse.ArgumentParser(prog='slickmem', description="Memory-augmented oil spill segmentation of SAR image streams.")
    parser.add_argument('-v', '--verbose', action='store_true', help="debug output")
    parser.add_argument('-q', '--quiet', action='store_true', help="warnings and errors only")
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    p = sub.add_parser('synth', help="write a synthetic stream to disk")
    _add_stream_flags(p)
    p.add_argument('--seed', type=int, default=None, help="override the stream seed")
    p.add_argument('--out', required=True, metavar='DIR')

    p = sub.add_parser('run', help="segment a stream")
    _add_stream_flags(p)
    _add_config_flags(p)
    p.add_argument('--out', required=True, metavar='DIR', help="masks/, runlog.jsonl and pipeline.ini go here")

    p = sub.add_parser('eval', help="metrics of stored masks")
    p.add_argument('--pred', required=True, metavar='DIR')
    p.add_argument('--truth', required=True, metavar='DIR')
    p.add_argument('--num-classes', type=int, default=2)
    p.add_argument('--include-undefined', action='store_true',
                   help="count classes with undefined IoU as 0 in the mIoU")
    p.add_argument('--json', action='store_true', help="print the report as JSON")

    p = sub.add_parser('ablate', help="run the fusion/gating/bank ablation grid")
    _add_stream_flags(p)
    _add_config_flags(p)
    p.add_argument('--json', metavar='FILE', help="also write the report as JSON")
    return parser


def resolve_config(args):
    cfg = PipelineConfig()
    if args.config:
        cfg = PipelineConfig.from_ini(args.config, cfg)
    cfg = cfg.with_overrides(**dict((name, getattr(args, name, None)) for name in FIELDS))
    return cfg.validate()


def resolve_stream(args, seed=None):
    if args.standard:
        return standard_drift_spec(seed if seed is not None else 17, images=args.images)
    return load_stream_spec(args.stream)


def resolve_source(args, spec, num_classes):
    data = args.data
    if data is None and args.stream:
        candidate = os.path.dirname(os.path.abspath(args.stream))
        if os.path.isdir(os.path.join(candidate, 'images')):
            data = candidate
    if data is not None:
        return DirectorySource(data, num_classes, spec.prompts)
    if not spec.synthetic:
        raise ConfigError("stream {} lists existing images; pass --data".format(args.stream))
    return SyntheticSource(spec)


def cmd_synth(args):
    spec = resolve_stream(args, args.seed)
    if args.seed is not None and not args.standard:
        spec = type(spec).from_segments(args.seed, spec.regimes, spec.counts, spec.order, spec.prompts)
    materialize_stream(spec, args.out)


def cmd_run(args):
    cfg = resolve_config(args)
    spec = resolve_stream(args)
    runlog = run_stream(spec, cfg, resolve_source(args, spec, cfg.num_classes), out_dir=args.out)
    write_config(cfg, os.path.join(args.out, 'pipeline.ini'))
    if runlog.miou is not None:
        print("mIoU {:.2f}%  ({} images)".format(100*runlog.miou, len(runlog.records)))


def cmd_eval(args):
    cc = evaluate_directories(args.pred, args.truth, args.num_classes)
    report = evaluation_report(cc, exclude_undefined=not args.include_undefined)
    if args.json:
        print(report_json(report))
    else:
        print(format_report(report))


def cmd_ablate(args):
    cfg = resolve_config(args)
    spec = resolve_stream(args)
    rows = ablate(spec, cfg, resolve_source(args, spec, cfg.num_classes))
    print(format_ablation(rows))
    if args.json:
        with open(args.json, 'w') as f:
            json.dump(rows, f, sort_keys=True, indent=1)


COMMANDS = {'synth': cmd_synth, 'run': cmd_run, 'eval': cmd_eval, 'ablate': cmd_ablate}


def error_record(e):
    record = {'error': type(e).__name__, 'message': str(e)}
    if isinstance(e, StreamError):
        record['image_id'] = e.image_id
        record['cause'] = type(e.cause).__name__
    return record


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (SlickMemError, OSError) as e:
        sys.stderr.write(json.dumps(error_record(e), sort_keys=True) + "\n")
        return 1
    return 0
