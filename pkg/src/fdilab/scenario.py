"""Time-series operation of the grid and attack injection into traces.

The process model is deliberately simple: bus angles perform a
mean-reverting random walk around the operating point, and generator trips
shift the operating point by re-solving the DC power flow with the unit's
output removed (the reference bus picks up the imbalance).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .attack import AttackSpec, RandomGaussian, ReplayEvent, Stealthy, random_attack_sequence, replay_attack, stealthy_attack
from .errors import ContractError
from .grid import GridTopology, MeasurementMatrix, NoiseModel, dc_power_flow, measure, susceptance_matrix
from .trace import Trace


@dataclass(frozen=True)
class GeneratorTrip:
    bus: int
    time: float


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    duration: float
    sample_rate: float = 10.0
    base_state: np.ndarray | None = None
    load_walk_sigma: float = 1e-3
    # fraction of the deviation from the operating point removed each step
    reversion: float = 0.02
    events: tuple[GeneratorTrip, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.duration > 0:
            raise ContractError("duration must be positive")
        if not self.sample_rate > 0:
            raise ContractError("sample_rate must be positive")
        if self.load_walk_sigma < 0:
            raise ContractError("load_walk_sigma must be non-negative")
        if not 0.0 <= self.reversion <= 1.0:
            raise ContractError("reversion must lie in [0, 1]")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


def operating_point(topology: GridTopology, tripped: frozenset[int] = frozenset()) -> np.ndarray:
    """DC angles of the scheduled dispatch with ``tripped`` units out of service."""
    return dc_power_flow(topology, topology.injections_pu(tripped))


def trip_shift(topology: GridTopology, bus: int) -> np.ndarray:
    """Angle change caused by removing the generation at ``bus``."""
    if bus not in topology.generator_buses:
        raise ContractError(f"bus {bus} has no generator to trip")
    if bus == topology.reference_bus:
        raise ContractError(f"bus {bus} is the reference (slack) bus and cannot trip")
    dp = np.zeros(topology.n_free)
    dp[topology.state_index(bus)] = -topology.gen_mw[bus] / topology.base_mva
    return np.linalg.solve(susceptance_matrix(topology), dp)


def simulate(
    config: ScenarioConfig,
    topology: GridTopology,
    h: MeasurementMatrix,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> Trace:
    n = config.n_samples
    base = operating_point(topology) if config.base_state is None else np.asarray(config.base_state, dtype=float)
    if base.shape != (topology.n_free,):
        raise ContractError(f"base_state must have {topology.n_free} angles")

    op = np.tile(base, (n, 1))
    for ev in config.events:
        step = int(round(ev.time * config.sample_rate))
        if not 0 <= step < n:
            raise ContractError(f"trip at t={ev.time}s lies outside the scenario")
        op[step:] += trip_shift(topology, ev.bus)

    shocks = rng.standard_normal((n, topology.n_free)) * config.load_walk_sigma
    dev = np.zeros(topology.n_free)
    states = np.empty_like(op)
    keep = 1.0 - config.reversion
    for t in range(n):
        if t:
            dev = keep * dev + shocks[t]
        states[t] = op[t] + dev
    z = measure(states, h, noise, rng)
    return Trace(
        timestamps=np.arange(n, dtype=np.int64),
        states=states,
        z=z,
        labels=np.zeros(n, dtype=bool),
        sample_rate=config.sample_rate,
    )


def inject(
    trace: Trace,
    spec: AttackSpec,
    h: MeasurementMatrix,
    rng: np.random.Generator,
    recordings: dict[str, Trace] | None = None,
) -> Trace:
    """Apply ``spec`` to a copy of ``trace``; ground-truth states are untouched."""
    t0, t1 = spec.window
    if t1 > len(trace):
        raise ContractError(f"attack window {spec.window} exceeds trace length {len(trace)}")
    if t1 == t0:
        return trace
    kind = spec.kind
    a = np.zeros_like(trace.z)
    if isinstance(kind, RandomGaussian):
        a[t0:t1] = random_attack_sequence(kind.k, kind.sigma, trace.m, t1 - t0, rng)
    elif isinstance(kind, Stealthy):
        a[t0:t1] = stealthy_attack(h, kind.c)
    elif isinstance(kind, ReplayEvent):
        if not recordings or kind.trace_id not in recordings:
            raise ContractError(f"no recorded trace named {kind.trace_id!r}")
        a = replay_attack(recordings[kind.trace_id], kind.offset, spec.window, trace)
    else:
        raise ContractError(f"unknown attack kind {kind!r}")
    labels = trace.labels.copy()
    labels[t0:t1] = True
    return replace(trace, z=trace.z + a, labels=labels, attack_meta=spec)
