"""False-data-injection attack vectors: random, stealthy (a = Hc) and replayed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError
from .grid import MeasurementMatrix
from .trace import Trace


@dataclass(frozen=True)
class RandomGaussian:
    k: int
    sigma: float = 0.5

    def __post_init__(self):
        if self.k < 0:
            raise ContractError("k must be non-negative")
        if not self.sigma > 0:
            raise ContractError("sigma must be positive")


@dataclass(frozen=True, eq=False)
class Stealthy:
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))


@dataclass(frozen=True)
class ReplayEvent:
    trace_id: str
    offset: int = 0


@dataclass(frozen=True, eq=False)
class AttackSpec:
    kind: RandomGaussian | Stealthy | ReplayEvent
    window: tuple[int, int]

    def __post_init__(self):
        t0, t1 = self.window
        if t0 < 0 or t1 < t0:
            raise ContractError(f"invalid attack window {self.window}")

    def to_dict(self) -> dict:
        kind = self.kind
        if isinstance(kind, RandomGaussian):
            body = {"type": "random", "k": kind.k, "sigma": kind.sigma}
        elif isinstance(kind, Stealthy):
            body = {"type": "stealthy", "c": [float(v) for v in kind.c]}
        else:
            body = {"type": "replay", "trace_id": kind.trace_id, "offset": kind.offset}
        return {"kind": body, "window": list(self.window)}

    @classmethod
    def from_dict(cls, d: dict) -> AttackSpec:
        body = d["kind"]
        if body["type"] == "random":
            kind = RandomGaussian(int(body["k"]), float(body["sigma"]))
        elif body["type"] == "stealthy":
            kind = Stealthy(np.array(body["c"], dtype=float))
        elif body["type"] == "replay":
            kind = ReplayEvent(body["trace_id"], int(body.get("offset", 0)))
        else:
            raise ContractError(f"unknown attack type {body['type']!r}")
        return cls(kind, tuple(d["window"]))


def random_attack(k: int, sigma: float, m: int, rng: np.random.Generator) -> np.ndarray:
    """k meters chosen uniformly without replacement, each offset by N(0, sigma^2)."""
    if not 0 <= k <= m:
        raise ContractError(f"k={k} must lie in [0, {m}]")
    if not sigma > 0:
        raise ContractError("sigma must be positive")
    a = np.zeros(m)
    idx = rng.choice(m, size=k, replace=False)
    a[idx] = rng.normal(0.0, sigma, size=k)
    return a


def random_attack_sequence(k: int, sigma: float, m: int, length: int, rng: np.random.Generator) -> np.ndarray:
    """``length`` attack vectors on one fixed set of k compromised meters.

    The compromised meters stay the same for the whole window; the injected
    values are redrawn at every sample.
    """
    if not 0 <= k <= m:
        raise ContractError(f"k={k} must lie in [0, {m}]")
    if not sigma > 0:
        raise ContractError("sigma must be positive")
    a = np.zeros((length, m))
    idx = np.sort(rng.choice(m, size=k, replace=False))
    a[:, idx] = rng.normal(0.0, sigma, size=(length, k))
    return a


def stealthy_attack(h: MeasurementMatrix, c: np.ndarray) -> np.ndarray:
    """a = H c: shifts the estimate by c and leaves the residual untouched."""
    c = np.asarray(c, dtype=float)
    if c.shape != (h.n,):
        raise ContractError(f"c must have length {h.n}, got shape {c.shape}")
    return h.h @ c


def replay_attack(recorded: Trace, offset: int, window: tuple[int, int], victim: Trace) -> np.ndarray:
    """Per-step attack that substitutes ``recorded`` for the victim inside ``window``."""
    t0, t1 = window
    if t0 < 0 or t1 < t0 or t1 > len(victim):
        raise ContractError(f"window {window} outside victim trace of length {len(victim)}")
    if offset < 0 or offset + (t1 - t0) > len(recorded):
        raise ContractError(
            f"recorded trace of length {len(recorded)} cannot cover {t1 - t0} samples from offset {offset}"
        )
    if recorded.m != victim.m:
        raise ContractError("recorded and victim traces have different meter counts")
    a = np.zeros_like(victim.z)
    a[t0:t1] = recorded.z[offset : offset + t1 - t0] - victim.z[t0:t1]
    return a


def attacking_capability(k: int, n_meters: int) -> float:
    if not 0 <= k <= n_meters:
        raise ContractError(f"k={k} must lie in [0, {n_meters}]")
    return k / n_meters
