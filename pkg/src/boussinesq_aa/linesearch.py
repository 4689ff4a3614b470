"""Step-size rules for the unaccelerated Newton iteration.

Both searches pick a ratio ``r`` for the trial state ``base + r * step`` using
a scalar objective, normally the B-norm of the discrete nonlinear residual.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

NONE, LS1, LS2 = "none", "ls1", "ls2"
_PENALTY = 1e100


@dataclass(frozen=True)
class LineSearchSpec:
    kind: str = NONE
    floor: float = 1.0 / 64.0
    bracket: tuple = (0.01, 1.0)
    tol: float = 1e-3
    max_evals: int = 50

    def __post_init__(self):
        if self.kind not in (NONE, LS1, LS2):
            raise ValueError(f"unknown line search {self.kind!r}")
        if not 0.0 < self.floor <= 1.0:
            raise ValueError("floor must lie in (0, 1]")
        lo, hi = self.bracket
        if not 0.0 < lo < hi <= 1.0:
            raise ValueError("bracket must lie in (0, 1]")


@dataclass
class LineSearchResult:
    ratio: float
    trial: np.ndarray
    value: float
    evaluations: int
    fallback: bool = False


def ls1(base, step, objective: Callable, f0: Optional[float] = None,
        spec: LineSearchSpec = LineSearchSpec(LS1)) -> LineSearchResult:
    """Halve the ratio from 1 down to ``spec.floor`` until the objective decreases.

    ``f0`` is the objective at ``base``; it is evaluated if not given. When no
    ratio decreases the objective the floor ratio is returned with
    ``fallback=True``.
    """
    evals = 0
    if f0 is None:
        f0 = objective(base)
        evals += 1
    r = 1.0
    while True:
        trial = base + r * step
        val = objective(trial)
        evals += 1
        if val < f0:
            return LineSearchResult(r, trial, val, evals)
        if r <= spec.floor * (1.0 + 1e-12):
            return LineSearchResult(r, trial, val, evals, fallback=True)
        r *= 0.5


def ls2(base, step, objective: Callable, spec: LineSearchSpec = LineSearchSpec(LS2)) -> LineSearchResult:
    """Bounded golden-section / parabolic minimization of the objective over ``spec.bracket``.

    Both bracket ends are also evaluated, and the best of all sampled ratios
    is returned.
    """
    lo, hi = spec.bracket
    cache = {}

    def f(r):
        r = float(r)
        if r not in cache:
            val = objective(base + r * step)
            # a large finite penalty keeps the parabolic fit well defined
            cache[r] = min(val, _PENALTY) if np.isfinite(val) else _PENALTY
        return cache[r]

    f(hi)
    f(lo)
    # bounded Brent: the two endpoint evaluations count against the budget
    res = minimize_scalar(
        f, bounds=(lo, hi), method="bounded",
        options={"xatol": spec.tol, "maxiter": max(spec.max_evals - 2, 1)},
    )
    f(res.x)
    r_best = min(cache, key=lambda r: (cache[r], -r))
    return LineSearchResult(r_best, base + r_best * step, cache[r_best], len(cache))


def make_line_search(spec: LineSearchSpec, objective: Callable):
    """Adapter ``(base, step) -> ratio`` for :func:`boussinesq_aa.anderson.drive`."""
    if spec.kind == NONE:
        return None
    if spec.kind == LS1:
        last = {}

        def search(base, step):
            # the previous accepted trial is usually the next base; reuse its value
            f0 = last["value"] if "x" in last and np.array_equal(last["x"], base) else None
            res = ls1(base, step, objective, f0=f0, spec=spec)
            last.update(x=res.trial, value=res.value)
            return res.ratio

        return search
    return lambda base, step: ls2(base, step, objective, spec=spec).ratio
