"""Rent-or-buy analysis of waiting before learning a file.

Costs are in units of time. An unlearned file pays the baseline-path
penalty at rate 1 for as long as it lives; learning it costs ``build``
once and removes the penalty. The wait policy learns after ``t_wait`` if
the file is still alive. The offline policy knows the lifetime and picks
the cheapest learning time, found here by enumerating candidate times.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional, Sequence


@dataclass(frozen=True)
class LifetimeTrace:
    lifetime: float
    build: float


def wait_policy_cost(trace: LifetimeTrace, t_wait: Optional[float] = None) -> float:
    """Cost of waiting ``t_wait`` (default: the build time) and then learning."""
    wait = trace.build if t_wait is None else t_wait
    if trace.lifetime <= wait:
        return trace.lifetime
    return wait + trace.build


def offline_optimal_cost(trace: LifetimeTrace, grid: int = 64) -> float:
    """Cheapest cost over learning at any of ``grid + 1`` times in [0, lifetime], or never."""
    life = trace.lifetime
    best = life  # never learn
    for i in range(grid + 1):
        t = life * i / grid
        if t < life:
            best = min(best, t + trace.build)
    return best


def gen_lifetime_traces(n: int, seed: int = 0, kind: str = "mixed") -> list[LifetimeTrace]:
    """Synthetic traces: exponential lifetimes, bimodal lifetimes, or half of each.

    Build times are uniform in 5-40 ms; bimodal lifetimes mix very short
    files with ones living hundreds of build times.
    """
    rng = random.Random(seed)
    out = []
    for i in range(n):
        build = rng.uniform(0.005, 0.040)
        k = kind if kind != "mixed" else ("exponential" if i % 2 == 0 else "bimodal")
        if k == "exponential":
            life = rng.expovariate(1.0 / (build * rng.choice((0.25, 1.0, 4.0, 32.0))))
        elif k == "bimodal":
            if rng.random() < 0.5:
                life = rng.uniform(0.0, 0.5 * build)
            else:
                life = rng.uniform(5.0 * build, 500.0 * build)
        else:
            raise ValueError(f"unknown trace kind {kind!r}")
        out.append(LifetimeTrace(life, build))
    return out


def competitive_ratios(traces: Sequence[LifetimeTrace], t_wait: Optional[float] = None, grid: int = 64) -> list[float]:
    ratios = []
    for tr in traces:
        opt = offline_optimal_cost(tr, grid)
        cost = wait_policy_cost(tr, t_wait)
        ratios.append(cost / opt if opt > 0 else 1.0)
    return ratios
