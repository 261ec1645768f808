"""YCSB-style trace generation.

The generator reproduces the statistical profiles of YCSB workloads A, B
and D without embedding YCSB itself. A trace is a list of ``TraceOp``; it
can be saved as JSON lines and replayed.
"""

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

PROFILES = {
    "A": {"read_fraction": 0.5, "distribution": "zipfian"},
    "B": {"read_fraction": 0.95, "distribution": "zipfian"},
    "D": {"read_fraction": 0.95, "distribution": "latest"},
}


@dataclass(frozen=True)
class WorkloadSpec:
    kind: str = "A"  # A | B | D | custom
    read_fraction: Optional[float] = None
    distribution: Optional[str] = None  # zipfian | latest | uniform
    theta: float = 0.99
    latest_exponent: float = 2.0
    key_space: Optional[int] = None
    ops_per_epoch: int = 140
    epochs: int = 81
    load_epochs: int = 10
    clients: int = 4
    inactive_fraction: float = 0.0

    def __post_init__(self):
        rf = self.resolved_read_fraction
        if not 0.0 <= rf <= 1.0:
            raise ValueError("read_fraction must be in [0, 1]")
        if self.resolved_distribution not in ("zipfian", "latest", "uniform"):
            raise ValueError(f"unknown distribution {self.resolved_distribution}")
        if self.kind not in PROFILES and self.kind != "custom":
            raise ValueError(f"unknown workload kind {self.kind}")
        if self.clients < 1 or self.ops_per_epoch < 1 or self.epochs < 1:
            raise ValueError("clients, ops_per_epoch and epochs must be positive")
        if not 0.0 <= self.inactive_fraction < 1.0:
            raise ValueError("inactive_fraction must be in [0, 1)")

    @property
    def resolved_read_fraction(self) -> float:
        if self.read_fraction is not None:
            return self.read_fraction
        return PROFILES.get(self.kind, {"read_fraction": 0.5})["read_fraction"]

    @property
    def resolved_distribution(self) -> str:
        if self.distribution is not None:
            return self.distribution
        return PROFILES.get(self.kind, {"distribution": "zipfian"})["distribution"]

    @property
    def resolved_key_space(self) -> int:
        if self.key_space is not None:
            return self.key_space
        return max(1, min(self.load_epochs, self.epochs) * self.ops_per_epoch)


@dataclass(frozen=True)
class TraceOp:
    epoch: int
    client: int
    kind: str  # "r" | "w"
    key: str
    value: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class Zipfian:
    """Zipf over ranks 0..n-1 with P(rank i) proportional to 1/(i+1)^theta."""

    def __init__(self, n: int, theta: float):
        w = 1.0 / np.power(np.arange(1, n + 1, dtype=float), theta)
        self.cdf = np.cumsum(w / w.sum())
        self.cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator, size=None):
        return np.searchsorted(self.cdf, rng.random(size), side="right")


def key_name(i: int) -> str:
    return f"user{i:08d}"


def generate(spec: WorkloadSpec, seed: int = 0) -> list:
    """Deterministic trace for (spec, seed).

    Load epochs insert every key once. Afterwards each op is a read with
    probability read_fraction, otherwise an update (A, B) or an insert of a
    fresh key (D). "latest" picks among written keys by recency rank.
    """
    rng = np.random.default_rng(seed)
    n_keys = spec.resolved_key_space
    rf = spec.resolved_read_fraction
    dist = spec.resolved_distribution
    load = min(spec.load_epochs, spec.epochs)
    perm = rng.permutation(n_keys)  # scatter hot ranks across the key space
    zipf = Zipfian(n_keys, spec.theta) if dist == "zipfian" else None
    recency: Optional[Zipfian] = None

    written: list = []  # keys in write order, most recent last, unique
    pos: dict = {}
    next_key = 0
    trace = []
    counter = 0

    def touch(k: str):
        if k in pos:
            written.remove(k)
        written.append(k)
        pos[k] = True

    def pick_existing() -> str:
        nonlocal recency
        if dist == "uniform":
            return key_name(int(rng.integers(n_keys)))
        if dist == "zipfian":
            return key_name(int(perm[zipf.sample(rng)]))
        if not written:
            return key_name(int(rng.integers(n_keys)))
        if recency is None or len(recency.cdf) != len(written):
            recency = Zipfian(len(written), spec.latest_exponent)
        r = int(recency.sample(rng))
        return written[-1 - r]

    for epoch in range(spec.epochs):
        active = _active_clients(spec, rng)
        if epoch < load:
            lo = n_keys * epoch // load
            hi = n_keys * (epoch + 1) // load
            for i in range(lo, hi):
                k = key_name(i)
                trace.append(TraceOp(epoch, int(active[counter % len(active)]), "w", k, f"v{counter}"))
                touch(k)
                counter += 1
            next_key = n_keys
            continue
        for _ in range(spec.ops_per_epoch):
            client = int(active[int(rng.integers(len(active)))])
            if rng.random() < rf:
                trace.append(TraceOp(epoch, client, "r", pick_existing()))
            else:
                if dist == "latest":
                    k = key_name(next_key)
                    next_key += 1
                else:
                    k = pick_existing()
                trace.append(TraceOp(epoch, client, "w", k, f"v{counter}"))
                touch(k)
            counter += 1
    return trace


def _active_clients(spec: WorkloadSpec, rng) -> np.ndarray:
    n = spec.clients
    idle = int(round(spec.inactive_fraction * n))
    if idle == 0:
        return np.arange(n)
    return np.sort(rng.permutation(n)[: n - idle])


def save_trace(path, trace) -> None:
    with open(path, "w") as fh:
        for op in trace:
            fh.write(op.to_json() + "\n")


def load_trace(path) -> list:
    with open(path) as fh:
        return [TraceOp(**json.loads(line)) for line in fh if line.strip()]


def recent_write_hits(trace, window: int = 10) -> float:
    """Share of reads whose key is among the `window` most recently written keys."""
    recent: list = []
    hits = reads = 0
    for op in trace:
        if op.kind == "w":
            if op.key in recent:
                recent.remove(op.key)
            recent.append(op.key)
            del recent[:-window]
        elif recent:
            reads += 1
            hits += op.key in recent
    return hits / reads if reads else 0.0
