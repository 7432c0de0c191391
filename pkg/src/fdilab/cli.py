"""Command-line entry point: ``fdilab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .attack import AttackSpec, RandomGaussian, ReplayEvent, Stealthy
from .detector import DetectorModel, calibrate_tau, train
from .errors import FdiLabError, StageError
from .netfeatures import default_profile, synthesize
from .scenario import inject
from .trace import read_trace, write_trace


def _parse_k_sweep(text: str, m: int = 85) -> list[int]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if "." in tok:
            out.append(int(np.ceil(float(tok) * m - 1e-9)))
        else:
            out.append(int(tok))
    return out


def _config(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(args.config) if args.config else harness.ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = args.out
    if getattr(args, "k_sweep", None):
        cfg.attack.k_sweep = _parse_k_sweep(args.k_sweep)
    if getattr(args, "variant", None):
        cfg.detector.variant = args.variant
    if getattr(args, "with_static", False):
        cfg.with_static = True
    return cfg


def cmd_simulate(args):
    cfg = _config(args)
    setup = harness.Setup.case39(cfg.scenario.noise_sigma)
    trace = harness.make_benign(cfg, setup)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out / "benign.trace.csv")
    print(f"wrote {len(trace)} samples to {out / 'benign.trace.csv'}")


def cmd_attack(args):
    cfg = _config(args)
    setup = harness.Setup.case39(cfg.scenario.noise_sigma)
    trace = read_trace(args.trace)
    rng = np.random.default_rng([cfg.seed, 5])
    window = tuple(args.window)
    recordings = None
    if args.kind == "random":
        kind = RandomGaussian(args.k, args.sigma)
    elif args.kind == "stealthy":
        kind = Stealthy(rng.normal(0.0, args.c_scale, setup.h.n))
    else:
        recordings = {"recorded": read_trace(args.recorded)}
        kind = ReplayEvent("recorded", args.offset)
    attacked = inject(trace, AttackSpec(kind, window), setup.h, rng, recordings)
    features, wids = synthesize(len(attacked), attacked.sample_rate, [window], default_profile(), rng)
    attacked = attacked.with_features(features, wids)
    write_trace(attacked, args.output)
    print(f"wrote attacked trace ({int(attacked.labels.sum())} attacked samples) to {args.output}")


def cmd_train(args):
    cfg = _config(args)
    trace = read_trace(args.trace)
    if args.train_only:
        a, b = harness.split_bounds(len(trace), cfg.split)[0]
        trace = trace.slice(a, b)
    arch = cfg.detector.architecture(trace.m)
    model = train(
        arch, [trace], epochs=cfg.detector.epochs, rng=np.random.default_rng([cfg.seed, 2]),
        lr=cfg.detector.lr, batch_size=cfg.detector.batch_size,
    )
    model.save(args.model)
    print(f"trained {arch.variant} model, final loss {model.loss_curve[-1]:.6f}; saved to {args.model}")


def cmd_calibrate(args):
    model = DetectorModel.load(args.model)
    cal = calibrate_tau(model, read_trace(args.trace))
    payload = {"tau": cal.tau, "f1": cal.f1, "degenerate": cal.degenerate}
    if args.output:
        Path(args.output).write_text(json.dumps(payload, indent=2) + "\n")
    print(json.dumps(payload))


def cmd_detect(args):
    cfg = _config(args)
    model = DetectorModel.load(args.model)
    tau = args.tau if args.tau is not None else json.loads(Path(args.calibration).read_text())["tau"]
    setup = harness.Setup.case39(cfg.scenario.noise_sigma)
    verdicts = harness.score_trace(model, read_trace(args.trace), tau, setup, cfg)
    verdicts.to_csv(args.output)
    met = harness.evaluate(verdicts.is_attack, verdicts.label)
    print(f"{len(verdicts)} verdicts, {int(verdicts.is_attack.sum())} alarms, accuracy {met.accuracy:.4f}")


def cmd_bench(args):
    cfg = _config(args)
    result = harness.run_experiment(cfg)
    _print_rows(result.rows)


def cmd_report(args):
    path = Path(args.out or "runs/default") / "metrics.csv" if not args.metrics else Path(args.metrics)
    _print_rows(harness.read_metrics(path))


def _print_rows(rows):
    print(f"{'k':>4} {'k/n':>6} {'tau':>9} {'acc':>7} {'prec':>7} {'rec':>7} {'f1':>7}")
    for r in rows:
        print(
            f"{r['k']:>4} {r['k_over_n']:>6.3f} {r['tau']:>9.4f} {r['accuracy']:>7.4f} "
            f"{r['precision']:>7.4f} {r['recall']:>7.4f} {r['f1']:>7.4f}"
        )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--k-sweep", help="comma-separated k values (integers) or fractions of m (e.g. 0.1,0.5)")
    common.add_argument("--variant", choices=("dynamic", "combined"))
    common.add_argument("--with-static", action="store_true", help="OR the chi-square detector into the verdicts")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="fdilab", description="FDI attack simulation and detection on the IEEE 39-bus system")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate a benign trace (+ network features)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("attack", parents=[common], help="inject an attack into a trace file")
    s.add_argument("trace")
    s.add_argument("output")
    s.add_argument("--kind", choices=("random", "stealthy", "replay"), default="random")
    s.add_argument("--window", type=int, nargs=2, required=True, metavar=("START", "END"))
    s.add_argument("--k", type=int, default=85)
    s.add_argument("--sigma", type=float, default=0.5)
    s.add_argument("--c-scale", type=float, default=1e-3, help="std of the stealthy state shift c (rad)")
    s.add_argument("--recorded", help="trace file replayed by --kind replay")
    s.add_argument("--offset", type=int, default=0)
    s.set_defaults(func=cmd_attack)

    s = sub.add_parser("train", parents=[common], help="train a detector on a benign trace")
    s.add_argument("trace")
    s.add_argument("model")
    s.add_argument("--train-only", action="store_true", help="use only the training split of the trace")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("calibrate", parents=[common], help="grid-search tau on a labelled trace")
    s.add_argument("model")
    s.add_argument("trace")
    s.add_argument("--output", help="write the calibration as JSON")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("detect", parents=[common], help="score a trace and export verdicts CSV")
    s.add_argument("model")
    s.add_argument("trace")
    s.add_argument("output")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--tau", type=float)
    g.add_argument("--calibration", help="JSON written by 'calibrate --output'")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("bench", parents=[common], help="run the full k/n sweep experiment")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("report", parents=[common], help="print a metrics.csv table")
    s.add_argument("--metrics", help="path to metrics.csv (default: <out>/metrics.csv)")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        args.func(args)
    except StageError as exc:
        print(f"fdilab {args.command}: stage {exc.stage} failed: {exc.cause}", file=sys.stderr)
        return 2
    except (FdiLabError, OSError, KeyError) as exc:
        print(f"fdilab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
