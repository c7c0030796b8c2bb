"""Request streams over a loaded key population.

Each operation is ``(kind, key)`` where kind is ``get``, ``put``,
``delete`` or ``scan`` and key is an integer from the population. Writes
are upserts of existing keys, drawn from the same distribution as reads.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ..errors import InvalidInputError

DISTRIBUTIONS = ("sequential", "uniform", "zipfian", "hotspot", "exponential", "latest")
GET, PUT, DELETE, SCAN = "get", "put", "delete", "scan"
VALUE_SIZE = 64


@dataclass(frozen=True)
class WorkloadSpec:
    ops: int
    write_fraction: float = 0.0
    distribution: str = "uniform"
    zipf_theta: float = 0.99
    load_order: str = "seq"
    seed: int = 0
    delete_fraction: float = 0.0
    scan_fraction: float = 0.0
    scan_length: int = 10
    hotspot_ops: float = 0.8
    hotspot_keys: float = 0.2
    exponential_fraction: float = 0.1  # 95% of requests land in this share of ranks
    value_size: int = VALUE_SIZE

    def __post_init__(self) -> None:
        if self.ops < 0:
            raise InvalidInputError("ops must be >= 0")
        if self.distribution not in DISTRIBUTIONS:
            raise InvalidInputError(f"distribution must be one of {DISTRIBUTIONS}")
        for name in ("write_fraction", "delete_fraction", "scan_fraction", "hotspot_ops", "hotspot_keys"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name} must be in [0, 1]")
        if self.write_fraction + self.delete_fraction + self.scan_fraction > 1.0:
            raise InvalidInputError("write, delete and scan fractions sum above 1")
        if not 0.0 < self.zipf_theta < 1.0:
            raise InvalidInputError("zipf theta must be in (0, 1)")


def value_for(key: int, version: int, size: int = VALUE_SIZE) -> bytes:
    """Deterministic value bytes for the ``version``-th write of ``key``."""
    seed = key.to_bytes(16, "big") + version.to_bytes(8, "big")
    out = b""
    counter = 0
    while len(out) < size:
        out += hashlib.blake2b(seed + bytes([counter]), digest_size=64).digest()
        counter += 1
    return out[:size]


class Zipfian:
    """YCSB-style zipfian ranks in ``[0, n)``; rank 0 is the most popular."""

    def __init__(self, n: int, theta: float, rng: random.Random):
        self.n = n
        self.theta = theta
        self.rng = rng
        self.zetan = float(np.sum(1.0 / np.arange(1, n + 1, dtype=np.float64) ** theta))
        zeta2 = 1.0 + 0.5**theta
        self.alpha = 1.0 / (1.0 - theta)
        self.eta = (1.0 - (2.0 / n) ** (1.0 - theta)) / (1.0 - zeta2 / self.zetan)

    def next(self) -> int:
        u = self.rng.random()
        uz = u * self.zetan
        if uz < 1.0:
            return 0
        if uz < 1.0 + 0.5**self.theta:
            return 1 if self.n > 1 else 0
        r = int(self.n * (self.eta * u - self.eta + 1.0) ** self.alpha)
        return min(r, self.n - 1)


def _chooser(spec: WorkloadSpec, n: int, rng: random.Random):
    d = spec.distribution
    if d == "sequential":
        state = [0]

        def nxt() -> int:
            i = state[0] % n
            state[0] += 1
            return i

        return nxt
    if d == "uniform":
        return lambda: rng.randrange(n)
    if d == "hotspot":
        hot = max(1, int(n * spec.hotspot_keys))

        def nxt() -> int:
            if rng.random() < spec.hotspot_ops or hot == n:
                return rng.randrange(hot)
            return hot + rng.randrange(n - hot)

        return nxt
    perm = list(range(n))
    rng.shuffle(perm)
    if d == "zipfian":
        z = Zipfian(n, spec.zipf_theta, rng)
        return lambda: perm[z.next()]
    if d == "exponential":
        mean = max(spec.exponential_fraction * n / math.log(20.0), 1e-9)
        return lambda: perm[min(int(rng.expovariate(1.0 / mean)), n - 1)]
    # latest: zipfian over recency, rank 0 is the newest key
    z = Zipfian(n, spec.zipf_theta, rng)
    return lambda: n - 1 - z.next()


def gen_workload(spec: WorkloadSpec, keyspace: Sequence[int]) -> Iterator[tuple[str, int]]:
    """Deterministic stream of ``spec.ops`` operations over ``keyspace``.

    ``keyspace`` is the population in insertion order; ``latest`` favours its
    tail, the other distributions index the sorted population.
    """
    if spec.ops and not keyspace:
        raise InvalidInputError("workload needs a non-empty keyspace")
    rng = random.Random(spec.seed)
    population = list(keyspace) if spec.distribution == "latest" else sorted(keyspace)
    pick = _chooser(spec, len(population), rng) if population else None
    w = spec.write_fraction
    wd = w + spec.delete_fraction
    wds = wd + spec.scan_fraction
    for _ in range(spec.ops):
        r = rng.random()
        key = population[pick()]
        if r < w:
            yield PUT, key
        elif r < wd:
            yield DELETE, key
        elif r < wds:
            yield SCAN, key
        else:
            yield GET, key
