"""Seeded experiment pipeline: simulate, split, train, attack, calibrate, evaluate.

Config file (JSON); every key is optional::

    {
      "seed": 7,
      "scenario": {"duration": 350, "sample_rate": 10, "load_walk_sigma": 0.001,
                   "reversion": 0.5, "noise_sigma": 0.01},
      "attack":   {"k_sweep": [9, 17, ...], "sigma": 0.5, "window": 40, "gap": 40},
      "split":    [0.6, 0.2, 0.2],
      "detector": {"variant": "dynamic", "num_recurrent_layers": 3, "hidden_size": 64,
                   "window_len": 20, "conv_channels": 32, "conv_kernel": 3,
                   "epochs": 10, "lr": 0.003, "batch_size": 32},
      "alpha": 0.05,
      "with_static": false,
      "out_dir": "runs/default"
    }

``metrics.csv`` columns: k, k_over_n, tau, tp, fp, tn, fn, accuracy,
precision, recall, f1 (undefined precision or recall is written as nan).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import AttackSpec, RandomGaussian, attacking_capability
from .detector import DetectorArchitecture, DetectorModel, VerdictSequence, calibrate_threshold, stream_scores, train
from .errors import ContractError, FdiLabError, StageError
from .estimation import WlsSolver, chi_square_threshold
from .grid import MeasurementConfig, NoiseModel, build_h_matrix, load_case39
from .netfeatures import default_profile, synthesize
from .scenario import ScenarioConfig, inject, simulate
from .trace import Trace, split_bounds, write_trace

log = logging.getLogger(__name__)

DEFAULT_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(1, 10))
METRIC_COLUMNS = ("k", "k_over_n", "tau", "tp", "fp", "tn", "fn", "accuracy", "precision", "recall", "f1")


def default_k_sweep(m: int = 85) -> list[int]:
    return [math.ceil(f * m - 1e-9) for f in DEFAULT_FRACTIONS]


@dataclass
class ScenarioSettings:
    duration: float = 350.0
    sample_rate: float = 10.0
    load_walk_sigma: float = 1e-3
    reversion: float = 0.5
    noise_sigma: float = 0.01


@dataclass
class AttackSettings:
    k_sweep: list[int] = field(default_factory=default_k_sweep)
    sigma: float = 0.5
    window: int = 40
    gap: int = 40


@dataclass
class DetectorSettings:
    variant: str = "dynamic"
    num_recurrent_layers: int = 3
    hidden_size: int = 64
    window_len: int = 20
    conv_channels: int = 32
    conv_kernel: int = 3
    epochs: int = 10
    lr: float = 3e-3
    batch_size: int | None = 32

    def architecture(self, m: int) -> DetectorArchitecture:
        return DetectorArchitecture(
            variant=self.variant,
            num_recurrent_layers=self.num_recurrent_layers,
            hidden_size=self.hidden_size,
            window_len=self.window_len,
            conv_channels=self.conv_channels,
            conv_kernel=self.conv_kernel,
            n_measurements=m,
        )


@dataclass
class ExperimentConfig:
    seed: int = 7
    scenario: ScenarioSettings = field(default_factory=ScenarioSettings)
    attack: AttackSettings = field(default_factory=AttackSettings)
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    alpha: float = 0.05
    with_static: bool = False
    out_dir: str = "runs/default"

    def validate(self, m: int) -> None:
        if len(self.split) != 3 or any(f < 0 for f in self.split) or not math.isclose(sum(self.split), 1.0):
            raise ContractError(f"split fractions must be three non-negative numbers summing to 1, got {self.split}")
        bad = [k for k in self.attack.k_sweep if not 0 <= k <= m]
        if bad:
            raise ContractError(f"k values {bad} outside [0, {m}]")

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        for name, typ in (("scenario", ScenarioSettings), ("attack", AttackSettings), ("detector", DetectorSettings)):
            if name in kw:
                try:
                    kw[name] = typ(**kw[name])
                except TypeError as exc:
                    raise ContractError(f"bad [{name}] section: {exc}") from None
        if "split" in kw:
            kw["split"] = tuple(kw["split"])
        return cls(**kw)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path}: invalid JSON ({exc})") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else float("nan")

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else float("nan")

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else float("nan")


def evaluate(verdicts, labels) -> Metrics:
    """Confusion counts with 'attack' as the positive class."""
    pred = np.asarray(verdicts, dtype=bool)
    lab = np.asarray(labels, dtype=bool)
    if pred.shape != lab.shape:
        raise ContractError(f"{pred.shape[0]} verdicts but {lab.shape[0]} labels")
    return Metrics(
        tp=int(np.count_nonzero(pred & lab)),
        fp=int(np.count_nonzero(pred & ~lab)),
        tn=int(np.count_nonzero(~pred & ~lab)),
        fn=int(np.count_nonzero(~pred & lab)),
    )


def attack_windows(length: int, start: int, window: int, gap: int) -> list[tuple[int, int]]:
    """Alternating attacked/benign blocks beginning at ``start``."""
    out = []
    s = start
    while s + window <= length:
        out.append((s, s + window))
        s += window + gap
    return out


@dataclass
class Setup:
    """Grid objects shared by every stage."""

    topology: object
    h: object
    noise: NoiseModel

    @classmethod
    def case39(cls, noise_sigma: float = 0.01) -> Setup:
        topology = load_case39()
        h = build_h_matrix(topology, MeasurementConfig.default(topology))
        return cls(topology, h, NoiseModel.uniform(h.m, noise_sigma))


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except (FdiLabError, ValueError, OSError) as exc:
                raise StageError(name, exc) from exc

        return inner

    return wrap


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def make_benign(config: ExperimentConfig, setup: Setup) -> Trace:
    sc = config.scenario
    scenario = ScenarioConfig(
        duration=sc.duration, sample_rate=sc.sample_rate, load_walk_sigma=sc.load_walk_sigma, reversion=sc.reversion
    )
    trace = simulate(scenario, setup.topology, setup.h, setup.noise, _rng(config.seed, 0))
    features, wids = synthesize(len(trace), trace.sample_rate, [], default_profile(), _rng(config.seed, 1))
    return trace.with_features(features, wids)


def attack_span(
    span: Trace, k: int, config: ExperimentConfig, setup: Setup, rng: np.random.Generator
) -> Trace:
    """Random attacks of size k in alternating blocks, with MITM traffic in the blocks."""
    a = config.attack
    windows = attack_windows(len(span), config.detector.window_len, a.window, a.gap)
    out = span
    for w in windows:
        out = inject(out, AttackSpec(RandomGaussian(k, a.sigma), w), setup.h, rng)
    features, wids = synthesize(len(out), out.sample_rate, windows, default_profile(), rng)
    return out.with_features(features, wids)


def static_alarms(trace: Trace, t: np.ndarray, setup: Setup, alpha: float) -> np.ndarray:
    solver = WlsSolver(setup.h, setup.noise)
    return solver.estimate(trace.z[t]).j_value > chi_square_threshold(solver.dof, alpha)


def score_trace(model: DetectorModel, trace: Trace, tau: float, setup: Setup, config: ExperimentConfig) -> VerdictSequence:
    idx, s = stream_scores(model, trace)
    alarm = s > tau
    if config.with_static:
        alarm |= static_alarms(trace, idx, setup, config.alpha)
    return VerdictSequence(t=trace.timestamps[idx], score=s, tau=tau, is_attack=alarm, label=trace.labels[idx])


@dataclass
class ExperimentResult:
    rows: list[dict]
    model: DetectorModel
    out_dir: Path


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics(rows: list[dict], path: Path) -> None:
    lines = [",".join(METRIC_COLUMNS)]
    for r in rows:
        lines.append(",".join(_fmt(r[c]) for c in METRIC_COLUMNS))
    path.write_text("\n".join(lines) + "\n")


def run_experiment(config: ExperimentConfig, setup: Setup | None = None, model: DetectorModel | None = None) -> ExperimentResult:
    """Full pipeline; writes trace, checkpoint, per-k verdicts and ``metrics.csv``."""
    setup = setup or _stage("setup")(Setup.case39)(config.scenario.noise_sigma)
    _stage("config")(config.validate)(setup.h.m)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")

    benign = _stage("simulate")(make_benign)(config, setup)
    _stage("simulate")(write_trace)(benign, out / "benign.trace.csv")
    bounds = _stage("split")(split_bounds)(len(benign), config.split)
    train_span, val_span, test_span = (benign.slice(a, b) for a, b in bounds)

    if model is None:
        arch = _stage("train")(config.detector.architecture)(setup.h.m)
        model = _stage("train")(train)(
            arch,
            [train_span],
            epochs=config.detector.epochs,
            rng=_rng(config.seed, 2),
            lr=config.detector.lr,
            batch_size=config.detector.batch_size,
        )
    model.save(out / "model.npz")

    rows = []
    for k in config.attack.k_sweep:
        if k == 0:
            # nothing to inject: validation holds one class and calibration must refuse it
            val = val_span
        else:
            val = _stage("attack")(attack_span)(val_span, k, config, setup, _rng(config.seed, 3, k))
        test = _stage("attack")(attack_span)(test_span, k, config, setup, _rng(config.seed, 4, k)) if k else test_span

        idx, s = _stage("calibrate")(stream_scores)(model, val)
        cal = _stage("calibrate")(calibrate_threshold)(s, val.labels[idx])
        verdicts = _stage("evaluate")(score_trace)(model, test, cal.tau, setup, config)
        verdicts.to_csv(out / f"verdicts_k{k}.csv")
        met = evaluate(verdicts.is_attack, verdicts.label)
        rows.append(
            {
                "k": k,
                "k_over_n": attacking_capability(k, setup.h.m),
                "tau": cal.tau,
                "tp": met.tp,
                "fp": met.fp,
                "tn": met.tn,
                "fn": met.fn,
                "accuracy": met.accuracy,
                "precision": met.precision,
                "recall": met.recall,
                "f1": met.f1,
            }
        )
        log.info("k=%d k/n=%.3f tau=%.4f accuracy=%.4f", k, rows[-1]["k_over_n"], cal.tau, met.accuracy)
    write_metrics(rows, out / "metrics.csv")
    return ExperimentResult(rows, model, out)


def read_metrics(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        vals = ln.split(",")
        row = {}
        for key, v in zip(header, vals):
            row[key] = int(v) if key in ("k", "tp", "fp", "tn", "fn") else float(v)
        rows.append(row)
    return rows
