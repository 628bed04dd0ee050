"""Command-line entry point: ``splmotion synth | train | predict | eval | report``.

Exit codes: 0 on success, 1 for usage and configuration errors, 2 for runtime
failures. Every failure also prints one JSON line prefixed with ``error:`` on
stderr so scripts can parse it.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, parse_overrides
from .data import write_motn, read_motn
from .pipeline import (
    CONFIG_FILE,
    load_model,
    predict_sequence,
    run_evaluation,
    run_training,
    synthesize,
    write_run_metadata,
)
from .report import merge_reports, write_table_csv

log = logging.getLogger("splmotion")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; this tool reserves 2 for runtime failures."""

    def error(self, message):
        raise UsageError(message)


def _report_error(code, kind, message):
    print("error: " + json.dumps({"exit": code, "kind": kind, "message": message}), file=sys.stderr)
    return code


def _parse_set(pairs):
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value
    return out


def _resolve_config(args, fallback=None):
    """Config file (or ``fallback``) plus ``--set`` and ``--seed`` overrides."""
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    path = args.config or fallback
    if path is not None and Path(path).is_file():
        return load_config(path, overrides)
    if args.config:
        raise FileNotFoundError(f"config file {args.config} does not exist")
    return parse_overrides(ExperimentConfig(), overrides)


def _data_config(data_dir):
    path = Path(data_dir) / CONFIG_FILE
    return path if path.is_file() else None


# ---------------------------------------------------------------- commands


def cmd_synth(args):
    cfg = _resolve_config(args)
    paths = synthesize(cfg, args.out)
    print(f"wrote {len(paths)} sequences to {args.out}")


def cmd_train(args):
    cfg = _resolve_config(args, _data_config(args.data))
    if cfg.model == "zero_velocity":
        raise ConfigError("model = zero_velocity has nothing to train; evaluate it with --baseline")
    _, history = run_training(cfg, args.data, args.out)
    vals = [e["val_joint_angle"] for e in history if "val_joint_angle" in e]
    best = f", best validation joint angle {min(vals):.5f}" if vals else ""
    print(f"trained {cfg.label} for {len(history)} steps{best}; checkpoint in {args.out}")


def cmd_predict(args):
    model, cfg, _ = load_model(args.checkpoint)
    if args.horizon < 1:
        raise UsageError("--horizon must be >= 1")
    seed = read_motn(args.seed_file)
    frames = seed.flat()
    if args.seed_frames:
        frames = frames[-args.seed_frames :]
        seed = type(seed)(frames.reshape(len(frames), seed.num_joints, -1), seed.fps, seed.rep)
    out = predict_sequence(model, seed, args.horizon)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_motn(out_path, out)
    write_run_metadata(out_path.parent, cfg)
    print(f"wrote {args.horizon} predicted frames to {out_path}")


def cmd_eval(args):
    if args.checkpoint:
        model, cfg, _ = load_model(args.checkpoint)
        overrides = _parse_set(args.set)
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        if overrides:
            cfg = parse_overrides(cfg, overrides)
        label = cfg.label
    else:
        cfg = _resolve_config(args, _data_config(args.data))
        model, label = None, "zero_velocity"
    reports = run_evaluation(cfg, args.data, args.out, model=model, label=label)
    until = reports[1]
    cells = ", ".join(f"{m} {until.values[m][-1]:.4f}" for m in until.values)
    print(f"{label} until {until.horizons_ms[-1]} ms: {cells}")


def cmd_report(args):
    header, rows = merge_reports(args.eval_dirs, args.mode)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_table_csv(out, header, rows, args.mode)
    print(f"wrote {len(rows)} rows x {len(header) - 1} metric cells to {out}")


# ---------------------------------------------------------------- parser


def build_parser():
    parser = _Parser(prog="splmotion", description="Structured-prediction motion models on desk-scale data.")
    parser.add_argument("--version", action="version", version=f"splmotion {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_help):
        p.add_argument("--config", help="experiment config file (key = value lines)")
        p.add_argument("--seed", type=int, help="override the config's seed")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key; repeatable")
        p.add_argument("--out", required=True, help=out_help)

    p = sub.add_parser("synth", help="generate the synthetic motion set")
    common(p, "output data directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a data directory")
    p.add_argument("--data", required=True, help="data directory with manifest.txt")
    common(p, "output run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="roll a trained model forward from a seed file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed-file", required=True, help="MOTN file whose frames warm up the model")
    p.add_argument("--seed-frames", type=int, default=0, help="use only the last N seed frames (0 = all)")
    p.add_argument("--horizon", type=int, default=24, help="frames to predict")
    p.add_argument("--out", required=True, help="output MOTN file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="evaluate a checkpoint or the zero-velocity baseline")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--checkpoint")
    which.add_argument("--baseline", choices=["zero_velocity"])
    p.add_argument("--data", required=True, help="data directory with manifest.txt")
    common(p, "output evaluation directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="merge evaluations into one comparison table")
    p.add_argument("eval_dirs", nargs="+", help="evaluation directories containing report.csv")
    p.add_argument("--mode", choices=["at", "until"], default="until")
    p.add_argument("--out", required=True, help="output CSV file")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        return _report_error(EXIT_USAGE, "UsageError", str(e))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as e:
        return _report_error(EXIT_USAGE, type(e).__name__, str(e))
    except (OSError, ValueError, RuntimeError, ArithmeticError, KeyError) as e:
        log.debug("command failed", exc_info=True)
        return _report_error(EXIT_RUNTIME, type(e).__name__, str(e))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
