"""Synthetic NSL-KDD style traffic features aligned with measurement samples.

The 41 slots follow the NSL-KDD column order: 9 basic, 13 content and 19
traffic-based features. Traffic-based features summarise a fixed 2 s
window and are therefore drawn once per window; the rest are drawn per
sample. Categorical slots carry ordinal codes before normalisation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

WINDOW_SECONDS = 2.0

# name, category, categories (0 = numeric), lo, hi
FEATURES: tuple[tuple[str, str, int, float, float], ...] = (
    ("duration", "basic", 0, 0.0, 60.0),
    ("protocol_type", "basic", 3, 0, 2),
    ("service", "basic", 8, 0, 7),
    ("flag", "basic", 11, 0, 10),
    ("src_bytes", "basic", 0, 0.0, 4096.0),
    ("dst_bytes", "basic", 0, 0.0, 4096.0),
    ("land", "basic", 2, 0, 1),
    ("wrong_fragment", "basic", 0, 0.0, 3.0),
    ("urgent", "basic", 0, 0.0, 3.0),
    ("hot", "content", 0, 0.0, 30.0),
    ("num_failed_logins", "content", 0, 0.0, 5.0),
    ("logged_in", "content", 2, 0, 1),
    ("num_compromised", "content", 0, 0.0, 10.0),
    ("root_shell", "content", 0, 0.0, 1.0),
    ("su_attempted", "content", 0, 0.0, 2.0),
    ("num_root", "content", 0, 0.0, 10.0),
    ("num_file_creations", "content", 0, 0.0, 10.0),
    ("num_shells", "content", 0, 0.0, 2.0),
    ("num_access_files", "content", 0, 0.0, 10.0),
    ("num_outbound_cmds", "content", 0, 0.0, 1.0),
    ("is_host_login", "content", 2, 0, 1),
    ("is_guest_login", "content", 2, 0, 1),
    ("count", "traffic", 0, 0.0, 511.0),
    ("srv_count", "traffic", 0, 0.0, 511.0),
    ("serror_rate", "traffic", 0, 0.0, 1.0),
    ("srv_serror_rate", "traffic", 0, 0.0, 1.0),
    ("rerror_rate", "traffic", 0, 0.0, 1.0),
    ("srv_rerror_rate", "traffic", 0, 0.0, 1.0),
    ("same_srv_rate", "traffic", 0, 0.0, 1.0),
    ("diff_srv_rate", "traffic", 0, 0.0, 1.0),
    ("srv_diff_host_rate", "traffic", 0, 0.0, 1.0),
    ("dst_host_count", "traffic", 0, 0.0, 255.0),
    ("dst_host_srv_count", "traffic", 0, 0.0, 255.0),
    ("dst_host_same_srv_rate", "traffic", 0, 0.0, 1.0),
    ("dst_host_diff_srv_rate", "traffic", 0, 0.0, 1.0),
    ("dst_host_same_src_port_rate", "traffic", 0, 0.0, 1.0),
    ("dst_host_srv_diff_host_rate", "traffic", 0, 0.0, 1.0),
    ("dst_host_serror_rate", "traffic", 0, 0.0, 1.0),
    ("dst_host_srv_serror_rate", "traffic", 0, 0.0, 1.0),
    ("dst_host_rerror_rate", "traffic", 0, 0.0, 1.0),
    ("dst_host_srv_rerror_rate", "traffic", 0, 0.0, 1.0),
)
N_FEATURES = len(FEATURES)
NAMES = tuple(f[0] for f in FEATURES)
LO = np.array([f[3] for f in FEATURES], dtype=float)
HI = np.array([f[4] for f in FEATURES], dtype=float)
CATEGORICAL = np.array([f[2] > 0 for f in FEATURES])
TRAFFIC = np.array([f[1] == "traffic" for f in FEATURES])

# connection counts and SYN-error rates: what a man-in-the-middle relay disturbs
SHIFTED = tuple(NAMES.index(n) for n in (
    "count", "srv_count", "serror_rate", "srv_serror_rate", "dst_host_count", "dst_host_serror_rate",
))


@dataclass(frozen=True, eq=False)
class ModeParams:
    """Raw-unit distribution of every slot; ``weights`` only for categorical slots."""

    mean: np.ndarray
    std: np.ndarray
    weights: dict[int, np.ndarray]

    def __post_init__(self):
        if np.any(self.std < 0):
            raise ContractError("feature std must be non-negative")
        for idx, w in self.weights.items():
            if not CATEGORICAL[idx] or len(w) != FEATURES[idx][2]:
                raise ContractError(f"bad categorical weights for feature {idx}")
            if np.any(w < 0) or not np.isclose(w.sum(), 1.0):
                raise ContractError(f"weights of feature {idx} are not a distribution")
        if set(self.weights) != set(np.flatnonzero(CATEGORICAL)):
            raise ContractError("every categorical feature needs weights")


@dataclass(frozen=True, eq=False)
class TrafficProfile:
    benign: ModeParams
    attack: ModeParams


def default_profile(shift: float = 2.0, spread: float = 0.03) -> TrafficProfile:
    """Benign traffic sits in the lower half of every range; the attack mode
    moves the six :data:`SHIFTED` features up by ``shift`` benign std."""
    width = HI - LO
    rel = 0.2 + 0.02 * (np.arange(N_FEATURES) * 7 % 10)
    mean = LO + rel * width
    std = spread * width
    weights = {}
    for idx in np.flatnonzero(CATEGORICAL):
        k = FEATURES[idx][2]
        w = np.full(k, 0.1 / (k - 1)) if k > 1 else np.ones(1)
        w[0] = 0.9
        weights[int(idx)] = w
    benign = ModeParams(mean, std, weights)
    attack_mean = mean.copy()
    attack_mean[list(SHIFTED)] += shift * std[list(SHIFTED)]
    return TrafficProfile(benign, ModeParams(attack_mean, std.copy(), dict(weights)))


def encode_normalize(raw: np.ndarray) -> np.ndarray:
    """Min-max scale raw values (categorical slots as ordinal codes) into [0, 1]."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != N_FEATURES:
        raise ContractError(f"expected {N_FEATURES} raw features, got {raw.shape[-1]}")
    flat = raw.reshape(-1, N_FEATURES)
    bad = (flat < LO) | (flat > HI) | ~np.isfinite(flat)
    bad |= CATEGORICAL & (flat != np.round(flat))
    if bad.any():
        idx = int(np.flatnonzero(bad.any(axis=0))[0])
        raise ContractError(f"feature {idx} ({NAMES[idx]}) outside its declared range [{LO[idx]}, {HI[idx]}]")
    return (raw - LO) / (HI - LO)


def _draw(mode: ModeParams, cols: np.ndarray, rows: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((rows, cols.size))
    eps = rng.standard_normal((rows, cols.size))
    u = rng.random((rows, cols.size))
    for j, idx in enumerate(cols):
        if CATEGORICAL[idx]:
            cdf = np.cumsum(mode.weights[int(idx)])
            out[:, j] = np.minimum(np.searchsorted(cdf, u[:, j], side="right"), cdf.size - 1)
        else:
            out[:, j] = np.clip(mode.mean[idx] + mode.std[idx] * eps[:, j], LO[idx], HI[idx])
    return out


def window_length(sample_rate: float) -> int:
    return max(1, int(round(WINDOW_SECONDS * sample_rate)))


def synthesize(
    trace_len: int,
    sample_rate: float,
    attack_windows: list[tuple[int, int]],
    profile: TrafficProfile,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Normalised feature rows (trace_len x 41) and their 2 s window ids."""
    attacked = np.zeros(trace_len, dtype=bool)
    for t0, t1 in attack_windows:
        if not 0 <= t0 <= t1 <= trace_len:
            raise ContractError(f"attack window {(t0, t1)} outside trace of length {trace_len}")
        attacked[t0:t1] = True
    wlen = window_length(sample_rate)
    window_ids = np.arange(trace_len, dtype=np.int64) // wlen
    n_windows = int(window_ids[-1]) + 1 if trace_len else 0
    window_attacked = np.zeros(n_windows, dtype=bool)
    np.logical_or.at(window_attacked, window_ids, attacked)

    traffic_cols = np.flatnonzero(TRAFFIC)
    sample_cols = np.flatnonzero(~TRAFFIC)
    raw = np.empty((trace_len, N_FEATURES))

    per_window = {m: _draw(getattr(profile, m), traffic_cols, n_windows, rng) for m in ("benign", "attack")}
    per_sample = {m: _draw(getattr(profile, m), sample_cols, trace_len, rng) for m in ("benign", "attack")}
    traffic = np.where(window_attacked[:, None], per_window["attack"], per_window["benign"])
    raw[:, traffic_cols] = traffic[window_ids]
    raw[:, sample_cols] = np.where(attacked[:, None], per_sample["attack"], per_sample["benign"])
    return encode_normalize(raw), window_ids
