"""Prediction-residual attack detector built on stacked bidirectional LSTMs.

The model sees the last ``window_len`` measurement vectors and predicts the
next one; the L2 distance between the actual and predicted vector is the
anomaly score. The combined variant also receives the aligned network
feature rows, which are passed through their own convolutional branch so
both sources reach the recurrent stack with the same per-step width.

Measurement windows cover samples ``t-n .. t-1``. Feature windows cover
``t-n+1 .. t`` since the traffic observed alongside the scored sample is
already available when it is scored.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CalibrationError, ContractError, TrainingError
from .neural import Adam, BiLSTM, Conv1d, Dense, Tanh, load_checkpoint, mse_loss, save_checkpoint
from .netfeatures import N_FEATURES
from .trace import Trace

log = logging.getLogger(__name__)

DYNAMIC = "dynamic"
COMBINED = "combined"
GRID_POINTS = 64


@dataclass(frozen=True)
class DetectorArchitecture:
    variant: str = DYNAMIC
    num_recurrent_layers: int = 3
    hidden_size: int = 64
    window_len: int = 20
    conv_channels: int = 32
    conv_kernel: int = 3
    n_measurements: int = 85
    n_features: int = N_FEATURES

    def __post_init__(self):
        if self.variant not in (DYNAMIC, COMBINED):
            raise ContractError(f"variant must be {DYNAMIC!r} or {COMBINED!r}, got {self.variant!r}")
        if self.num_recurrent_layers < 1 or self.window_len < 1 or self.hidden_size < 1:
            raise ContractError("layers, window length and hidden size must be positive")
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise ContractError("conv kernel width must be a positive odd number")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class DetectorModel:
    def __init__(self, arch: DetectorArchitecture, rng: np.random.Generator):
        self.arch = arch
        self.trained = False
        self.loss_curve: list[float] = []
        self.z_mean = np.zeros(arch.n_measurements)
        self.z_scale = np.ones(arch.n_measurements)
        pad = arch.conv_kernel // 2
        self.layers: dict[str, object] = {}
        if arch.variant == COMBINED:
            c = arch.conv_channels
            self.layers["conv_z"] = Conv1d(arch.n_measurements, c, arch.conv_kernel, rng, padding=pad)
            self.layers["conv_f"] = Conv1d(arch.n_features, c, arch.conv_kernel, rng, padding=pad)
            width = 2 * c
        else:
            width = arch.n_measurements
        for k in range(arch.num_recurrent_layers):
            self.layers[f"lstm{k}"] = BiLSTM(width, arch.hidden_size, rng)
            width = 2 * arch.hidden_size
        self.layers["head"] = Dense(width, arch.n_measurements, rng)
        self._act_z = Tanh()
        self._act_f = Tanh()

    # -- parameter plumbing

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": arr for ln, layer in self.layers.items() for pn, arr in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": arr for ln, layer in self.layers.items() for pn, arr in layer.grads.items()}

    # -- forward / backward on normalised data

    def forward(self, zw: np.ndarray, fw: np.ndarray | None = None) -> np.ndarray:
        """(B, n, m) normalised measurements [+ (B, n, 41) features] -> (B, m)."""
        if self.arch.variant == COMBINED:
            if fw is None:
                raise ContractError("combined model needs a feature window")
            ez = self._act_z.forward(self.layers["conv_z"].forward(zw.transpose(0, 2, 1)))
            ef = self._act_f.forward(self.layers["conv_f"].forward(fw.transpose(0, 2, 1)))
            if ez.shape != ef.shape:
                raise ContractError(f"equaliser branches disagree: {ez.shape} vs {ef.shape}")
            x = np.concatenate([ez, ef], axis=1).transpose(0, 2, 1)
        else:
            x = zw
        for k in range(self.arch.num_recurrent_layers):
            x = self.layers[f"lstm{k}"].forward(x)
        self._seq_shape = x.shape
        return self.layers["head"].forward(x[:, -1])

    def backward(self, dpred: np.ndarray) -> None:
        dlast = self.layers["head"].backward(dpred)
        dx = np.zeros(self._seq_shape)
        dx[:, -1] = dlast
        for k in reversed(range(self.arch.num_recurrent_layers)):
            dx = self.layers[f"lstm{k}"].backward(dx)
        if self.arch.variant == COMBINED:
            c = self.arch.conv_channels
            dcat = dx.transpose(0, 2, 1)
            self.layers["conv_z"].backward(self._act_z.backward(dcat[:, :c]))
            self.layers["conv_f"].backward(self._act_f.backward(dcat[:, c:]))

    # -- raw-unit helpers

    def normalise(self, z):
        return (z - self.z_mean) / self.z_scale

    def denormalise(self, zn):
        return zn * self.z_scale + self.z_mean

    # -- persistence

    def save(self, path: str | Path) -> None:
        params = dict(self.parameters())
        params["__z_mean"] = self.z_mean
        params["__z_scale"] = self.z_scale
        meta = {"architecture": self.arch.to_dict(), "trained": self.trained, "loss_curve": self.loss_curve}
        save_checkpoint(path, params, meta)

    @classmethod
    def load(cls, path: str | Path) -> DetectorModel:
        params, meta = load_checkpoint(path)
        model = cls(DetectorArchitecture(**meta["architecture"]), np.random.default_rng(0))
        model.z_mean = params.pop("__z_mean")
        model.z_scale = params.pop("__z_scale")
        own = model.parameters()
        if set(own) != set(params):
            raise ContractError(f"{path}: checkpoint parameters do not match the architecture")
        for name, arr in params.items():
            own[name][...] = arr
        model.trained = bool(meta["trained"])
        model.loss_curve = list(meta["loss_curve"])
        return model


# ---------------------------------------------------------------- windows


def _windows(trace: Trace, n: int, combined: bool):
    """All (measurement window, feature window, target) triples of a trace."""
    T = len(trace)
    if T <= n:
        return None
    zw = sliding_window_view(trace.z, (n, trace.m))[: T - n, 0]
    target = trace.z[n:]
    fw = None
    if combined:
        if trace.features is None:
            raise ContractError("combined detector needs traces with network features")
        fw = sliding_window_view(trace.features, (n, trace.features.shape[1]))[1 : T - n + 1, 0]
    return zw, fw, target


def predict_next(model: DetectorModel, z_window, f_window=None) -> np.ndarray:
    """Predicted measurement vector(s) in raw units for (n, m) or (B, n, m) windows."""
    if not model.trained:
        raise ContractError("model has not been trained")
    zw = np.asarray(z_window, dtype=float)
    single = zw.ndim == 2
    if single:
        zw = zw[None]
    n = model.arch.window_len
    if zw.ndim != 3 or zw.shape[1] != n or zw.shape[2] != model.arch.n_measurements:
        raise ContractError(f"expected window of shape ({n}, {model.arch.n_measurements}), got {zw.shape[-2:]}")
    fw = None
    if model.arch.variant == COMBINED:
        if f_window is None:
            raise ContractError("combined model needs a feature window")
        fw = np.asarray(f_window, dtype=float)
        fw = fw[None] if single else fw
        if fw.shape[1:] != (n, model.arch.n_features):
            raise ContractError(f"expected feature window of shape ({n}, {model.arch.n_features})")
    pred = model.denormalise(model.forward(model.normalise(zw), fw))
    return pred[0] if single else pred


def score(actual, predicted):
    """L2 distance between actual and predicted measurement vectors."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.shape != predicted.shape:
        raise ContractError(f"shapes differ: {actual.shape} vs {predicted.shape}")
    d = np.linalg.norm(actual - predicted, axis=-1)
    return float(d) if d.ndim == 0 else d


# ---------------------------------------------------------------- training


def train(
    arch: DetectorArchitecture,
    traces: list[Trace],
    epochs: int = 10,
    rng: np.random.Generator | None = None,
    lr: float = 1e-3,
    batch_size: int | None = 32,
) -> DetectorModel:
    """Fit the next-sample predictor on benign traces by minimising MSE with Adam.

    ``batch_size=None`` trains full-batch (one step per epoch).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if any(tr.labels.any() for tr in traces):
        raise ContractError("training traces must be benign (no attacked samples)")
    combined = arch.variant == COMBINED
    parts = [w for w in (_windows(tr, arch.window_len, combined) for tr in traces) if w is not None]
    if not parts:
        raise ContractError(f"no trace is longer than the window length {arch.window_len}")

    model = DetectorModel(arch, rng)
    all_z = np.concatenate([tr.z for tr in traces])
    model.z_mean = all_z.mean(axis=0)
    model.z_scale = np.maximum(all_z.std(axis=0), 1e-6)

    zw = model.normalise(np.concatenate([p[0] for p in parts]))
    target = model.normalise(np.concatenate([p[2] for p in parts]))
    fw = np.concatenate([p[1] for p in parts]) if combined else None
    N = len(target)
    bs = N if batch_size is None else min(batch_size, N)
    opt = Adam(lr=lr)
    params = model.parameters()

    for epoch in range(epochs):
        order = np.arange(N) if batch_size is None else rng.permutation(N)
        total = 0.0
        for step, start in enumerate(range(0, N, bs)):
            idx = order[start : start + bs]
            pred = model.forward(zw[idx], fw[idx] if combined else None)
            loss, dpred = mse_loss(pred, target[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            model.backward(dpred)
            try:
                opt.step(params, model.gradients())
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, step {step}: {exc}") from None
            total += loss * len(idx)
        model.loss_curve.append(total / N)
        log.info("epoch %d loss %.6f", epoch + 1, model.loss_curve[-1])
    model.trained = True
    return model


# ---------------------------------------------------------------- scoring and thresholds


@dataclass(frozen=True)
class Verdict:
    t: int
    score: float
    tau: float
    is_attack: bool


@dataclass(frozen=True, eq=False)
class VerdictSequence:
    t: np.ndarray
    score: np.ndarray
    tau: float
    is_attack: np.ndarray
    label: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for t, s, a in zip(self.t, self.score, self.is_attack):
            yield Verdict(int(t), float(s), self.tau, bool(a))

    def to_csv(self, path: str | Path) -> None:
        rows = ["t,score,tau,is_attack,label"]
        labels = self.label if self.label is not None else np.zeros(len(self.t), dtype=bool)
        for t, s, a, lab in zip(self.t, self.score, self.is_attack, labels):
            rows.append(f"{int(t)},{float(s)!r},{self.tau!r},{int(a)},{int(lab)}")
        Path(path).write_text("\n".join(rows) + "\n")


def stream_scores(model: DetectorModel, trace: Trace, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Scores for samples n..T-1 of ``trace``; each uses only samples at or before it."""
    n = model.arch.window_len
    if len(trace) <= n:
        raise ContractError(f"trace of length {len(trace)} needs more than {n} samples")
    zw, fw, target = _windows(trace, n, model.arch.variant == COMBINED)
    preds = []
    for start in range(0, len(target), chunk):
        sl = slice(start, start + chunk)
        preds.append(predict_next(model, zw[sl], fw[sl] if fw is not None else None))
    return np.arange(n, len(trace)), score(target, np.concatenate(preds))


def detect_stream(model: DetectorModel, tau: float, trace: Trace) -> VerdictSequence:
    t, s = stream_scores(model, trace)
    return VerdictSequence(t=trace.timestamps[t], score=s, tau=float(tau), is_attack=s > tau, label=trace.labels[t])


def f1_score(pred: np.ndarray, labels: np.ndarray) -> float:
    tp = np.count_nonzero(pred & labels)
    fp = np.count_nonzero(pred & ~labels)
    fn = np.count_nonzero(~pred & labels)
    return 2 * tp / (2 * tp + fp + fn) if tp else 0.0


@dataclass(frozen=True)
class Calibration:
    tau: float
    f1: float
    degenerate: bool = False


def threshold_grid(scores: np.ndarray, points: int = GRID_POINTS) -> np.ndarray:
    lo, hi = float(np.min(scores)), float(np.max(scores))
    if lo == hi:
        return np.array([hi])
    if lo <= 0:
        # a geometric grid cannot start at zero; begin at the smallest positive score
        lo = float(scores[scores > 0].min())
    return np.geomspace(lo, hi, points)


def calibrate_threshold(scores: np.ndarray, labels: np.ndarray, points: int = GRID_POINTS) -> Calibration:
    """F1-maximising threshold over a geometric grid; ties go to the larger tau."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ContractError("scores and labels must have equal length")
    if labels.all() or not labels.any():
        raise CalibrationError("validation labels contain a single class; cannot calibrate tau")
    grid = threshold_grid(scores, points)
    if grid.size == 1:
        warnings.warn("all validation scores are identical; calibration is degenerate", RuntimeWarning, stacklevel=2)
        tau = float(grid[0])
        return Calibration(tau, f1_score(scores > tau, labels), degenerate=True)
    best_tau, best_f1 = grid[0], -1.0
    for tau in grid:
        f1 = f1_score(scores > tau, labels)
        if f1 >= best_f1:
            best_tau, best_f1 = tau, f1
    return Calibration(float(best_tau), best_f1)


def calibrate_tau(model: DetectorModel, trace: Trace) -> Calibration:
    t, s = stream_scores(model, trace)
    return calibrate_threshold(s, trace.labels[t])
