"""DC network model: topology, measurement matrix and noisy metering.

States are the voltage angles (radians) of every non-reference bus, in the
order of :attr:`GridTopology.free_buses`. Measurements are active-power
line flows and bus injections in per-unit on the case MVA base.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import CaseDataError, ContractError, ObservabilityError

CASE_SCHEMA = "fdilab-case/1"


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    susceptance: float


@dataclass(frozen=True)
class GridTopology:
    buses: tuple[int, ...]
    lines: tuple[Line, ...]
    reference_bus: int
    generator_buses: frozenset[int]
    load_mw: dict[int, float] = field(default_factory=dict, compare=False)
    gen_mw: dict[int, float] = field(default_factory=dict, compare=False)
    base_mva: float = 100.0

    def __post_init__(self):
        bus_set = set(self.buses)
        if len(bus_set) != len(self.buses):
            raise ContractError("duplicate bus ids")
        if self.reference_bus not in bus_set:
            raise ContractError(f"reference bus {self.reference_bus} not in bus list")
        if not self.generator_buses <= bus_set:
            raise ContractError("generator bus not in bus list")
        for line in self.lines:
            if line.from_bus == line.to_bus:
                raise ContractError(f"line {line.id} is a self-loop")
            if line.from_bus not in bus_set or line.to_bus not in bus_set:
                raise ContractError(f"line {line.id} references an unknown bus")
            if not line.susceptance > 0:
                raise ContractError(f"line {line.id} susceptance must be positive")
        if not self.is_connected():
            raise ContractError("topology is not connected")

    @property
    def free_buses(self) -> tuple[int, ...]:
        return tuple(b for b in self.buses if b != self.reference_bus)

    @property
    def n_free(self) -> int:
        return len(self.buses) - 1

    def state_index(self, bus: int) -> int | None:
        """Column of ``bus`` in the state vector (None for the reference)."""
        if bus == self.reference_bus:
            return None
        return self.free_buses.index(bus)

    def line(self, line_id: int) -> Line:
        for line in self.lines:
            if line.id == line_id:
                return line
        raise ContractError(f"unknown line id {line_id}")

    def neighbours(self) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {b: [] for b in self.buses}
        for line in self.lines:
            adj[line.from_bus].append(line.to_bus)
            adj[line.to_bus].append(line.from_bus)
        return adj

    def is_connected(self) -> bool:
        if not self.buses:
            return False
        adj = self.neighbours()
        seen = {self.buses[0]}
        queue = deque([self.buses[0]])
        while queue:
            for nxt in adj[queue.popleft()]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return len(seen) == len(self.buses)

    def injections_pu(self, tripped: frozenset[int] | set[int] = frozenset()) -> np.ndarray:
        """Net scheduled injection (generation minus load) per bus, in bus order."""
        p = []
        for b in self.buses:
            gen = 0.0 if b in tripped else self.gen_mw.get(b, 0.0)
            p.append((gen - self.load_mw.get(b, 0.0)) / self.base_mva)
        return np.array(p)


def parse_case(text: str, source: str = "<string>") -> GridTopology:
    """Parse the plain-text case format documented in ``data/case39.txt``."""
    section = None
    meta: dict[str, str] = {}
    buses: list[int] = []
    load: dict[int, float] = {}
    gen: dict[int, float] = {}
    lines: list[Line] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        row = raw.split("#", 1)[0].strip()
        if not row:
            continue
        if row.startswith("[") and row.endswith("]"):
            section = row[1:-1]
            if section not in ("meta", "buses", "lines"):
                raise CaseDataError(f"{source}:{lineno}: unknown section {row!r}")
            continue
        cols = row.split()
        try:
            if section == "meta" and len(cols) == 2:
                meta[cols[0]] = cols[1]
            elif section == "buses" and len(cols) == 3:
                bus = int(cols[0])
                buses.append(bus)
                load[bus] = float(cols[1])
                gen[bus] = float(cols[2])
            elif section == "lines" and len(cols) == 4:
                lines.append(Line(int(cols[0]), int(cols[1]), int(cols[2]), float(cols[3])))
            else:
                raise ValueError(f"unexpected {len(cols)} columns in section {section!r}")
        except ValueError as exc:
            raise CaseDataError(f"{source}:{lineno}: {exc}: {raw.strip()!r}") from None
    try:
        ref = int(meta["reference_bus"])
        base = float(meta.get("base_mva", 100.0))
    except (KeyError, ValueError) as exc:
        raise CaseDataError(f"{source}: bad or missing [meta] entry ({exc})") from None
    try:
        return GridTopology(
            buses=tuple(buses),
            lines=tuple(lines),
            reference_bus=ref,
            generator_buses=frozenset(b for b, g in gen.items() if g > 0),
            load_mw=load,
            gen_mw=gen,
            base_mva=base,
        )
    except ContractError as exc:
        raise CaseDataError(f"{source}: {exc}") from None


def load_case(path: str | Path) -> GridTopology:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CaseDataError(f"cannot read case file {path}: {exc}") from None
    return parse_case(text, str(path))


def load_case39() -> GridTopology:
    """The bundled IEEE 39-bus, 46-line, 10-generator case (reference bus 31)."""
    try:
        text = resources.files("fdilab.data").joinpath("case39.txt").read_text()
    except OSError as exc:
        raise CaseDataError(f"bundled case39 data missing: {exc}") from None
    return parse_case(text, "case39.txt")


@dataclass(frozen=True)
class LineFlow:
    line: int
    direction: str = "from"

    def __post_init__(self):
        if self.direction not in ("from", "to"):
            raise ContractError(f"direction must be 'from' or 'to', got {self.direction!r}")


@dataclass(frozen=True)
class BusInjection:
    bus: int


@dataclass(frozen=True)
class MeasurementConfig:
    entries: tuple[LineFlow | BusInjection, ...]

    def __post_init__(self):
        if len(set(self.entries)) != len(self.entries):
            raise ContractError("duplicate measurement descriptors")

    def __len__(self):
        return len(self.entries)

    @classmethod
    def default(cls, topology: GridTopology) -> MeasurementConfig:
        """All from-end line flows followed by all bus injections."""
        flows = [LineFlow(line.id) for line in topology.lines]
        injections = [BusInjection(b) for b in topology.buses]
        return cls(tuple(flows + injections))


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    h: np.ndarray
    config: MeasurementConfig

    @property
    def m(self) -> int:
        return self.h.shape[0]

    @property
    def n(self) -> int:
        return self.h.shape[1]


def _flow_row(topology: GridTopology, line: Line, sign: float) -> np.ndarray:
    row = np.zeros(topology.n_free)
    i = topology.state_index(line.from_bus)
    j = topology.state_index(line.to_bus)
    if i is not None:
        row[i] += sign * line.susceptance
    if j is not None:
        row[j] -= sign * line.susceptance
    return row


def build_h_matrix(topology: GridTopology, config: MeasurementConfig) -> MeasurementMatrix:
    """Assemble the m x n_free DC measurement matrix and check observability."""
    rows = []
    for entry in config.entries:
        if isinstance(entry, LineFlow):
            line = topology.line(entry.line)
            rows.append(_flow_row(topology, line, 1.0 if entry.direction == "from" else -1.0))
        elif isinstance(entry, BusInjection):
            if entry.bus not in topology.buses:
                raise ContractError(f"injection at unknown bus {entry.bus}")
            row = np.zeros(topology.n_free)
            for line in topology.lines:
                if line.from_bus == entry.bus:
                    row += _flow_row(topology, line, 1.0)
                elif line.to_bus == entry.bus:
                    row += _flow_row(topology, line, -1.0)
            rows.append(row)
        else:
            raise ContractError(f"unknown measurement descriptor {entry!r}")
    h = np.array(rows, dtype=float).reshape(len(rows), topology.n_free)
    rank = np.linalg.matrix_rank(h) if h.size else 0
    if rank < topology.n_free:
        deficiency = topology.n_free - rank
        raise ObservabilityError(
            f"measurement set leaves a {deficiency}-dimensional angle subspace unobservable "
            f"(rank {rank} < {topology.n_free})",
            deficiency,
        )
    h.setflags(write=False)
    return MeasurementMatrix(h, config)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim != 1 or not np.all(sigma > 0):
            raise ContractError("noise sigma must be a positive vector")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def uniform(cls, m: int, sigma: float = 0.01) -> NoiseModel:
        return cls(np.full(m, sigma))

    @property
    def covariance(self) -> np.ndarray:
        return np.diag(self.sigma**2)


def check_state(x: np.ndarray, n_free: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n_free:
        raise ContractError(f"state has {x.shape[-1]} angles, expected {n_free}")
    if not np.all(np.isfinite(x)) or np.any(np.abs(x) >= np.pi):
        raise ContractError("state angles must be finite and inside (-pi, pi)")
    return x


def measure(x: np.ndarray, h: MeasurementMatrix, noise: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Noisy readings ``z = H x + e``; ``x`` may carry leading batch axes."""
    x = check_state(x, h.n)
    if noise.sigma.shape[0] != h.m:
        raise ContractError(f"noise has {noise.sigma.shape[0]} entries, expected {h.m}")
    clean = x @ h.h.T
    return clean + rng.standard_normal(clean.shape) * noise.sigma


def susceptance_matrix(topology: GridTopology) -> np.ndarray:
    """Reduced nodal susceptance matrix over the free buses."""
    n = topology.n_free
    b = np.zeros((n, n))
    for line in topology.lines:
        i = topology.state_index(line.from_bus)
        j = topology.state_index(line.to_bus)
        for p, q in ((i, j), (j, i)):
            if p is not None:
                b[p, p] += line.susceptance
                if q is not None:
                    b[p, q] -= line.susceptance
    return b


def dc_power_flow(topology: GridTopology, injections: np.ndarray) -> np.ndarray:
    """Free-bus angles for per-bus injections (reference bus absorbs the mismatch)."""
    injections = np.asarray(injections, dtype=float)
    if injections.shape != (len(topology.buses),):
        raise ContractError("one injection per bus expected")
    keep = [k for k, b in enumerate(topology.buses) if b != topology.reference_bus]
    return np.linalg.solve(susceptance_matrix(topology), injections[keep])
