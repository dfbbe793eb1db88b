"""Command line entry point.

    python cli.py synth --out data/synth --seed 0
    python cli.py pipeline --data data/synth --out runs/desk --seed 0

Exit codes: 0 success, 1 bad input or usage, 2 internal error.
"""
import argparse
import os
import sys
import traceback

from pydantic import ValidationError

import logs
from data import (ModelKind, SynthConfig, load_checkpoint, load_scores, read_interval_doc, save_checkpoint,
                  synth_generate, write_synth)
from data.dataset_io import FEATURE_SUFFIX
from etp.Actionness import ScoreTrack, generate_proposals
from etp.Localization import Detection
from etp.Utils.config import PROFILES, load_run_config
from etp.Utils.errors import InputError
from etp.pipeline import (load_videos, localization_stage, read_stage_docs, refinement_stage,
                          run_pipeline, split_subsets, train_localization, train_refinement, write_stage_docs)
from evaluate import map_at
from experiment_results import format_table, load_report, report_frame, write_comparison, write_report
from logs import logger


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors print the usage on stderr and surface as exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise UsageError(message)


def float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def path_list(text):
    return [p for p in text.split(",") if p]


def _select(videos, subset):
    if subset is None:
        return videos
    train, test = split_subsets(videos)
    return train if subset == "validation" else test


def cmd_synth(args, config):
    cfg = SynthConfig.model_validate({**config.synth, "seed": args.seed})
    write_synth(synth_generate(cfg), args.out)


def cmd_actionness(args, config):
    if not os.path.isdir(args.scores):
        raise InputError(f"score directory not found: {args.scores}")
    names = sorted(f[:-len(FEATURE_SUFFIX)] for f in os.listdir(args.scores) if f.endswith(FEATURE_SUFFIX))
    if not names:
        raise InputError(f"no score files in {args.scores}")
    proposals = {}
    for video_id in names:
        track = ScoreTrack(load_scores(args.scores, video_id))
        proposals[video_id] = [p for p, _ in generate_proposals(track, config.actionness)]
    write_stage_docs(args.out, proposals)
    logger.info(f"wrote proposals for {len(names)} videos to {args.out}")


def cmd_train_rn(args, config):
    train, _ = split_subsets(load_videos(args.annotations, args.features))
    model = train_refinement(train, read_stage_docs(args.proposals, train), config, config.basic.seed)
    save_checkpoint(args.out, model)


def cmd_refine(args, config):
    videos = _select(load_videos(args.annotations, args.features), args.subset)
    model = load_checkpoint(args.checkpoint, ModelKind.RN)
    refined = refinement_stage(model, videos, read_stage_docs(args.proposals, videos), config, config.basic.threads)
    write_stage_docs(args.out, refined)


def cmd_train_ln(args, config):
    train, _ = split_subsets(load_videos(args.annotations, args.features))
    model = train_localization(train, read_stage_docs(args.proposals, train), config, config.basic.seed,
                               len(train[0].meta.classes))
    save_checkpoint(args.out, model)


def cmd_localize(args, config):
    videos = _select(load_videos(args.annotations, args.features), args.subset)
    model = load_checkpoint(args.checkpoint, ModelKind.LN)
    detections = localization_stage(model, videos, read_stage_docs(args.proposals, videos), config,
                                    config.basic.threads)
    write_stage_docs(args.out, detections, list(videos[0].meta.classes))


def _detection_docs(path):
    if os.path.isdir(path):
        return [os.path.join(path, f) for f in sorted(os.listdir(path)) if f.endswith(".json")]
    return [path]


def cmd_evaluate(args, config):
    videos = _select(load_videos(args.annotations, []), args.subset)
    classes = list(videos[0].meta.classes)
    known = {v.video_id for v in videos}
    detections = {}
    for doc in _detection_docs(args.detections):
        video_id, items = read_interval_doc(doc)
        if video_id not in known:
            raise InputError(f"{doc}: video {video_id!r} is not in {args.annotations}")
        for item in items:
            if item.label not in classes:
                raise InputError(f"{doc}: detection label {item.label!r} is not one of {classes}")
        detections[video_id] = [Detection(i.interval, classes.index(i.label), i.score) for i in items]
    if args.subset is None:
        videos = [v for v in videos if v.video_id in detections]
    report = map_at(detections, {v.video_id: v.gts for v in videos}, config.evaluation.iou_thresholds, classes)
    table = write_report(report, args.out) if args.out else format_table(report_frame(report))
    sys.stdout.write(table)


def cmd_pipeline(args, config):
    annotations = args.annotations or os.path.join(args.data, "annotations.json")
    features = args.features or [os.path.join(args.data, "features")]
    scores = args.scores or os.path.join(args.data, "scores")
    videos = load_videos(annotations, features, scores)
    earlier = load_report(args.compare) if args.compare else None
    result = run_pipeline(videos, config, args.out, skip_refinement=args.skip_refinement,
                          threads=config.basic.threads)
    sys.stdout.write(format_table(report_frame(result.report)))
    if earlier is not None:
        name = "no refinement" if args.skip_refinement else "this run"
        reports = {name: result.report, os.path.basename(os.path.dirname(os.path.abspath(args.compare))): earlier}
        sys.stdout.write(write_comparison(reports, os.path.join(args.out, "compare.txt")))


def _common(seed_required=False):
    parent = ArgumentParser(add_help=False)
    parent.add_argument("--config", type=str, default=None, help="TOML file layered on top of the profile")
    parent.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    parent.add_argument("--seed", type=int, required=seed_required, default=None)
    parent.add_argument("--threads", type=int, default=None, help="worker threads for per-video stages")
    parent.add_argument("--log-file", type=str, default=None)
    parent.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], default="INFO")
    return parent


# Config keys reachable from the command line: flag, type, section, key.
TUNABLE_FLAGS = {
    "actionness": [
        ("--threshold", float, "actionness", "threshold"),
        ("--min-len", int, "actionness", "min_len"),
        ("--max-len", int, "actionness", "max_len"),
        ("--smooth-sigma", float, "actionness", "smooth_sigma"),
        ("--nms-threshold", float, "actionness", "nms_threshold"),
    ],
    "units": [
        ("--unit-len", int, "units", "unit_len"),
        ("--stride", int, "units", "stride"),
    ],
    "refinement": [
        ("--rn-hidden", int, "refinement", "hidden"),
        ("--rn-depth", int, "refinement", "depth"),
        ("--rn-batch-size", int, "refinement", "batch_size"),
        ("--rn-iterations", int, "refinement", "iterations"),
        ("--rn-learning-rate", float, "refinement", "learning_rate"),
        ("--rn-momentum", float, "refinement", "momentum"),
        ("--rn-decay-factor", float, "refinement", "decay_factor"),
        ("--rn-decay-every", int, "refinement", "decay_every"),
    ],
    "localization": [
        ("--ln-batch-size", int, "localization", "batch_size"),
        ("--ln-iterations", int, "localization", "iterations"),
        ("--ln-learning-rate", float, "localization", "learning_rate"),
        ("--ln-momentum", float, "localization", "momentum"),
        ("--ln-decay-factor", float, "localization", "decay_factor"),
        ("--ln-decay-every", int, "localization", "decay_every"),
        ("--alpha", float, "localization", "alpha"),
        ("--beta", float, "localization", "beta"),
        ("--random-windows", int, "localization", "random_windows"),
        ("--ln-nms-threshold", float, "localization", "nms_threshold"),
    ],
}

COMMAND_FLAGS = {
    "actionness": ("actionness",),
    "train-rn": ("units", "refinement"),
    "refine": ("units",),
    "train-ln": ("units", "localization"),
    "localize": ("units", "localization"),
    "pipeline": ("actionness", "units", "refinement", "localization"),
}


def _dest(flag: str) -> str:
    return flag[2:].replace("-", "_")


def _flag_parent(group: str):
    parent = ArgumentParser(add_help=False)
    options = parent.add_argument_group(f"{group} settings (override the profile)")
    for flag, kind, _, _ in TUNABLE_FLAGS[group]:
        options.add_argument(flag, type=kind, default=None)
    if group == "localization":
        options.add_argument("--no-non-local", dest="non_local", action="store_const", const=False,
                             default=None, help="plain pyramid features")
    return parent


def build_parser():
    parser = ArgumentParser(prog="etp", description="Evolving temporal proposals for action localization.")
    sub = parser.add_subparsers(dest="command", required=True)
    common, seeded = _common(), _common(seed_required=True)
    groups = {group: _flag_parent(group) for group in TUNABLE_FLAGS}

    def parents(name, base):
        return [base] + [groups[group] for group in COMMAND_FLAGS.get(name, ())]

    p = sub.add_parser("synth", parents=[seeded], help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("actionness", parents=parents("actionness", common), help="initial proposals from score tracks")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_actionness)

    for name, handler, seed_parent, checkpoint, help_text in (
            ("train-rn", cmd_train_rn, seeded, False, "train the refinement network"),
            ("refine", cmd_refine, common, True, "refine proposal boundaries"),
            ("train-ln", cmd_train_ln, seeded, False, "train the localization network"),
            ("localize", cmd_localize, common, True, "rank and localize proposals")):
        p = sub.add_parser(name, parents=parents(name, seed_parent), help=help_text)
        p.add_argument("--annotations", required=True)
        p.add_argument("--features", type=path_list, required=True, help="feature directories, comma-separated")
        p.add_argument("--proposals", required=True)
        p.add_argument("--out", required=True)
        if checkpoint:
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--subset", choices=["validation", "test"], default=None)
        p.set_defaults(handler=handler)

    p = sub.add_parser("evaluate", parents=[common], help="mAP of detections against annotations")
    p.add_argument("--detections", required=True, help="detection document or directory of them")
    p.add_argument("--annotations", required=True)
    p.add_argument("--iou", type=float_list, default=None, help="IoU thresholds, comma-separated")
    p.add_argument("--subset", choices=["validation", "test"], default=None)
    p.add_argument("--out", default=None, help="report prefix; writes <out>.json and <out>.txt")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("pipeline", parents=parents("pipeline", seeded), help="all stages end to end")
    p.add_argument("--data", default=None, help="dataset directory laid out as written by synth")
    p.add_argument("--annotations", default=None)
    p.add_argument("--features", type=path_list, default=None)
    p.add_argument("--scores", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--skip-refinement", action="store_true", help="feed actionness proposals to localization")
    p.add_argument("--compare", default=None, help="report.json of an earlier run to set beside this one")
    p.set_defaults(handler=cmd_pipeline)
    return parser


def config_overrides(args) -> dict:
    """Nested config overrides from parsed flags; unset flags stay None and are skipped."""
    overrides = {"basic": {"seed": args.seed, "threads": args.threads, "profile": args.profile}}
    for group in COMMAND_FLAGS.get(args.command, ()):
        for flag, _, section, key in TUNABLE_FLAGS[group]:
            overrides.setdefault(section, {})[key] = getattr(args, _dest(flag))
    if "localization" in COMMAND_FLAGS.get(args.command, ()):
        overrides["localization"]["non_local"] = args.non_local
    if args.command == "evaluate":
        overrides["evaluation"] = {"iou_thresholds": args.iou}
    return overrides


def _check_sources(args):
    if args.command == "pipeline" and args.data is None and not (args.annotations and args.features and args.scores):
        raise InputError("pipeline needs --data or all of --annotations, --features and --scores")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError:
        return 1
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0

    logs.set_level(args.log_level)
    file_handler = logs.attach_log_file(args.log_file) if args.log_file else None
    try:
        _check_sources(args)
        config = load_run_config(args.profile, args.config, config_overrides(args))
        args.handler(args, config)
    except (InputError, ValidationError) as e:
        logger.error(str(e))
        return 1
    except Exception:
        logger.error(traceback.format_exc())
        return 2
    finally:
        if file_handler is not None:
            logger.removeHandler(file_handler)
            file_handler.close()
    return 0


if __name__ == "__main__":
    sys.exit(run())
