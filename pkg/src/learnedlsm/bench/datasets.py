"""Synthetic key sets.

* ``linear``: 0, 1, ..., n-1.
* ``seg1pct`` / ``seg10pct``: runs of 100 (resp. 10) consecutive keys, each
  followed by a gap; the gap width defaults to the run width.
* ``normal``: n unique N(0, 1) samples mapped to ``floor((x + 10) * 2**59)``.
* ``from_file``: one unsigned integer per line.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidInputError

DATASET_KINDS = ("linear", "seg1pct", "seg10pct", "normal", "from_file")
NORMAL_SHIFT = 10.0
NORMAL_SCALE = 2**59
_RUNS = {"seg1pct": 100, "seg10pct": 10}


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    n: int
    seed: int = 0
    gap: Optional[int] = None
    path: Optional[str] = None
    key_size: int = 16

    def __post_init__(self) -> None:
        if self.kind not in DATASET_KINDS:
            raise InvalidInputError(f"dataset kind must be one of {DATASET_KINDS}")
        if self.kind != "from_file" and self.n < 1:
            raise InvalidInputError("n must be >= 1")


def gen_dataset(spec: DatasetSpec) -> list[int]:
    """Sorted, unique keys for ``spec``."""
    cap = 1 << (8 * spec.key_size)
    if spec.kind == "linear":
        keys = list(range(spec.n))
    elif spec.kind in _RUNS:
        run = _RUNS[spec.kind]
        gap = run if spec.gap is None else spec.gap
        keys = [i + (i // run) * gap for i in range(spec.n)]
    elif spec.kind == "normal":
        keys = _normal_keys(spec.n, spec.seed)
    else:
        if spec.path is None:
            raise InvalidInputError("from_file needs a path")
        with open(spec.path) as fh:
            keys = sorted({int(line) for line in fh if line.strip()})
        if spec.n and len(keys) > spec.n:
            keys = keys[: spec.n]
    if keys and (keys[-1] >= cap or keys[0] < 0):
        raise InvalidInputError(f"dataset does not fit in {spec.key_size}-byte keys")
    return keys


def _normal_keys(n: int, seed: int) -> list[int]:
    if n > NORMAL_SCALE * 2 * NORMAL_SHIFT:
        raise InvalidInputError("n exceeds the normal dataset's key space")
    rng = np.random.default_rng(seed)
    keys: set[int] = set()
    while len(keys) < n:
        x = rng.standard_normal(n - len(keys))
        x = np.clip(x, -NORMAL_SHIFT + 1e-9, NORMAL_SHIFT - 1e-9)
        keys.update(int(v) for v in np.floor((x + NORMAL_SHIFT) * NORMAL_SCALE).tolist())
    return sorted(keys)


def normal_key_to_sample(key: int) -> float:
    return key / NORMAL_SCALE - NORMAL_SHIFT


def load_order(keys: list[int], order: str, seed: int = 0) -> list[int]:
    """Keys in the order they are inserted: ``seq`` ascending or ``random`` shuffled."""
    if order in ("seq", "sequential"):
        return list(keys)
    if order == "random":
        out = list(keys)
        random.Random(seed).shuffle(out)
        return out
    raise InvalidInputError("order must be seq or random")


def expected_segment_runs(kind: str) -> Optional[int]:
    run = _RUNS.get(kind)
    return None if run is None else run


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Asymptotic one-sample Kolmogorov-Smirnov critical value."""
    return math.sqrt(-0.5 * math.log(alpha / 2)) / math.sqrt(n)
