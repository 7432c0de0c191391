"""Labelled measurement time series and their on-disk format.

Trace file (``*.trace.csv``)::

    # schema=fdilab-trace/1
    # m=85
    # n_free=38
    # sample_rate=10.0
    # attack={...}                 (optional, JSON)
    t,x1,...,x38,z1,...,z85,label
    0,<floats>,...,0

Feature file (``*.features.csv``), same row indexing::

    # schema=fdilab-features/1
    t,window_id,f1,...,f41

Floats are written with ``repr`` so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ContractError

TRACE_SCHEMA = "fdilab-trace/1"
FEATURE_SCHEMA = "fdilab-features/1"


@dataclass(frozen=True, eq=False)
class Trace:
    timestamps: np.ndarray
    states: np.ndarray
    z: np.ndarray
    labels: np.ndarray
    sample_rate: float = 10.0
    attack_meta: object | None = None
    features: np.ndarray | None = None
    window_ids: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.timestamps)
        lengths = {len(self.states), len(self.z), len(self.labels)}
        if self.features is not None:
            lengths |= {len(self.features), len(self.window_ids)}
        if lengths != {n}:
            raise ContractError("trace sequences must all have the same length")
        if self.sample_rate <= 0:
            raise ContractError("sample_rate must be positive")

    def __len__(self):
        return len(self.timestamps)

    @property
    def m(self) -> int:
        return self.z.shape[1]

    @property
    def n_free(self) -> int:
        return self.states.shape[1]

    def slice(self, start: int, stop: int) -> Trace:
        f = self.features[start:stop] if self.features is not None else None
        w = self.window_ids[start:stop] if self.window_ids is not None else None
        return replace(
            self,
            timestamps=self.timestamps[start:stop],
            states=self.states[start:stop],
            z=self.z[start:stop],
            labels=self.labels[start:stop],
            features=f,
            window_ids=w,
        )

    def with_features(self, features: np.ndarray, window_ids: np.ndarray) -> Trace:
        return replace(self, features=np.asarray(features), window_ids=np.asarray(window_ids))


def concatenate(parts: list[Trace]) -> Trace:
    has_f = all(p.features is not None for p in parts)
    return Trace(
        timestamps=np.concatenate([p.timestamps for p in parts]),
        states=np.concatenate([p.states for p in parts]),
        z=np.concatenate([p.z for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        sample_rate=parts[0].sample_rate,
        attack_meta=parts[0].attack_meta,
        features=np.concatenate([p.features for p in parts]) if has_f else None,
        window_ids=np.concatenate([p.window_ids for p in parts]) if has_f else None,
    )


def split_bounds(n: int, fractions=(0.6, 0.2, 0.2)) -> list[tuple[int, int]]:
    if any(f < 0 for f in fractions) or not np.isclose(sum(fractions), 1.0):
        raise ContractError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    edges = [0]
    acc = 0.0
    for f in fractions[:-1]:
        acc += f
        edges.append(int(round(acc * n)))
    edges.append(n)
    return list(zip(edges[:-1], edges[1:]))


def split_chronological(trace: Trace, fractions=(0.6, 0.2, 0.2)) -> list[Trace]:
    """Contiguous, ordered, non-overlapping pieces (no shuffling)."""
    return [trace.slice(a, b) for a, b in split_bounds(len(trace), fractions)]


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trace(trace: Trace, path: str | Path) -> None:
    path = Path(path)
    header = [
        f"# schema={TRACE_SCHEMA}",
        f"# m={trace.m}",
        f"# n_free={trace.n_free}",
        f"# sample_rate={trace.sample_rate!r}",
    ]
    if trace.attack_meta is not None:
        header.append("# attack=" + json.dumps(trace.attack_meta.to_dict(), sort_keys=True))
    cols = ["t"] + [f"x{i + 1}" for i in range(trace.n_free)] + [f"z{i + 1}" for i in range(trace.m)] + ["label"]
    out = header + [",".join(cols)]
    for t, x, z, lab in zip(trace.timestamps, trace.states, trace.z, trace.labels):
        out.append(",".join([str(int(t)), *map(_fmt, x), *map(_fmt, z), "1" if lab else "0"]))
    path.write_text("\n".join(out) + "\n")
    if trace.features is not None:
        write_features(trace.features, trace.window_ids, trace.timestamps, feature_path(path))


def feature_path(trace_path: str | Path) -> Path:
    p = Path(trace_path)
    name = p.name[: -len(".trace.csv")] if p.name.endswith(".trace.csv") else p.stem
    return p.with_name(name + ".features.csv")


def _read_header(lines: list[str], schema: str, path) -> tuple[dict[str, str], int]:
    meta = {}
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, value = lines[i][1:].strip().partition("=")
        meta[key] = value
        i += 1
    if meta.get("schema") != schema:
        raise ContractError(f"{path}: expected schema {schema}, found {meta.get('schema')!r}")
    return meta, i + 1


def read_trace(path: str | Path) -> Trace:
    from .attack import AttackSpec

    path = Path(path)
    lines = path.read_text().splitlines()
    meta, start = _read_header(lines, TRACE_SCHEMA, path)
    m, n_free = int(meta["m"]), int(meta["n_free"])
    rows = [ln.split(",") for ln in lines[start:] if ln]
    for k, r in enumerate(rows):
        if len(r) != 2 + m + n_free:
            raise ContractError(f"{path}: row {k} has {len(r)} columns, expected {2 + m + n_free}")
    data = np.array([[float(v) for v in r[1:-1]] for r in rows]).reshape(len(rows), m + n_free)
    trace = Trace(
        timestamps=np.array([int(r[0]) for r in rows], dtype=np.int64),
        states=data[:, :n_free],
        z=data[:, n_free:],
        labels=np.array([r[-1] == "1" for r in rows], dtype=bool),
        sample_rate=float(meta["sample_rate"]),
        attack_meta=AttackSpec.from_dict(json.loads(meta["attack"])) if "attack" in meta else None,
    )
    fp = feature_path(path)
    if fp.exists():
        features, window_ids = read_features(fp)
        trace = trace.with_features(features, window_ids)
    return trace


def write_features(features: np.ndarray, window_ids: np.ndarray, timestamps, path: str | Path) -> None:
    cols = ["t", "window_id"] + [f"f{i + 1}" for i in range(features.shape[1])]
    out = [f"# schema={FEATURE_SCHEMA}", ",".join(cols)]
    for t, w, f in zip(timestamps, window_ids, features):
        out.append(",".join([str(int(t)), str(int(w)), *map(_fmt, f)]))
    Path(path).write_text("\n".join(out) + "\n")


def read_features(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    _, start = _read_header(lines, FEATURE_SCHEMA, path)
    rows = [ln.split(",") for ln in lines[start:] if ln]
    window_ids = np.array([int(r[1]) for r in rows], dtype=np.int64)
    features = np.array([[float(v) for v in r[2:]] for r in rows])
    return features, window_ids
