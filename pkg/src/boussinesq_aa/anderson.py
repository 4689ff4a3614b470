"""Anderson acceleration for fixed-point maps on flat vectors.

The engine never looks inside an iterate: it needs vector arithmetic and an
inner product ``inner(x, y) -> float``. With difference matrices

    E = [x_{k-1} - x_{k-2}, ..., x_{k-m} - x_{k-m-1}]
    F = [w_k - w_{k-1},     ..., w_{k-m+1} - w_{k-m}]

each step solves ``gamma = argmin ||w_k - F gamma||`` and sets

    x_k = x_{k-1} + beta w_k - (E + beta F) gamma.
"""
from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

logger = logging.getLogger(__name__)

CONVERGED = "converged"
FAILED = "F"
BLOWUP = "B"
STATUSES = (CONVERGED, FAILED, BLOWUP)


class BlowupError(FloatingPointError):
    """The fixed-point map produced non-finite values."""


class OperatorError(RuntimeError):
    """The fixed-point map raised; carries the iteration index."""

    def __init__(self, k: int, cause: BaseException):
        super().__init__(f"fixed-point map failed at iteration {k}: {cause}")
        self.k = k
        self.cause = cause


def euclidean(x, y) -> float:
    return float(np.dot(x, y))


@dataclass(frozen=True)
class TwoStage:
    """Shallow depth while the residual exceeds ``threshold``, deep depth below it."""

    m_small: int = 1
    m_large: int = 20
    threshold: float = 1e-3
    beta_small: Optional[float] = None
    beta_large: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.m_small < self.m_large:
            raise ValueError("two-stage depth needs 0 <= m_small < m_large")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class AndersonConfig:
    depth: int = 0
    beta: float = 1.0
    two_stage: Optional[TwoStage] = None
    drop_tol: float = 1e-10
    max_iters: int = 200
    tol: float = 1e-8
    blowup: float = 1e4
    flush_on_switch: bool = False
    beta_grid: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        betas = [self.beta]
        if self.two_stage is not None:
            betas += [b for b in (self.two_stage.beta_small, self.two_stage.beta_large) if b is not None]
        if self.beta_grid is not None:
            betas += list(self.beta_grid)
        if any(not 0.0 < b <= 1.0 for b in betas):
            raise ValueError("damping factors must lie in (0, 1]")
        if not (self.tol > 0 and self.blowup > 0 and self.drop_tol >= 0):
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")

    @property
    def max_depth(self) -> int:
        return self.two_stage.m_large if self.two_stage is not None else self.depth


def depth_schedule(residual_norm: float, config: AndersonConfig) -> int:
    """Depth for a step whose unaccelerated residual has norm ``residual_norm``."""
    ts = config.two_stage
    if ts is None:
        return config.depth
    return ts.m_small if residual_norm > ts.threshold else ts.m_large


def beta_schedule(residual_norm: float, config: AndersonConfig) -> float:
    ts = config.two_stage
    if ts is None:
        return config.beta
    b = ts.beta_small if residual_norm > ts.threshold else ts.beta_large
    return config.beta if b is None else b


@dataclass
class LeastSquaresResult:
    gamma: np.ndarray
    rank: int
    dropped: list
    objective: float


def solve_ls(w: np.ndarray, columns: Sequence[np.ndarray], inner: Callable = euclidean,
             drop_tol: float = 1e-10) -> LeastSquaresResult:
    """Minimize ``||w - sum_j gamma_j columns[j]||`` in the norm induced by ``inner``.

    Modified Gram-Schmidt with one re-orthogonalization pass. A column whose
    component orthogonal to the earlier kept columns has norm below
    ``drop_tol`` times its own norm is dropped and gets coefficient zero.
    """
    def norm(v):
        return np.sqrt(max(inner(v, v), 0.0))

    w_norm = norm(w)
    n = len(columns)
    gamma = np.zeros(n)
    if n == 0:
        return LeastSquaresResult(gamma, 0, [], w_norm)

    q: list = []
    r_cols: list = []
    kept: list = []
    dropped: list = []
    for j, col in enumerate(columns):
        c_norm = norm(col)
        if c_norm == 0.0 or not np.isfinite(c_norm):
            dropped.append(j)
            continue
        v = np.array(col, dtype=float, copy=True)
        r = np.zeros(len(q))
        for _ in range(2):
            for i, qi in enumerate(q):
                c = inner(qi, v)
                v -= c * qi
                r[i] += c
        v_norm = norm(v)
        if v_norm < drop_tol * c_norm:
            dropped.append(j)
            continue
        q.append(v / v_norm)
        r_cols.append(np.append(r, v_norm))
        kept.append(j)

    if kept:
        k = len(kept)
        rmat = np.zeros((k, k))
        for jj, rc in enumerate(r_cols):
            rmat[: len(rc), jj] = rc
        rhs = np.zeros(k)
        res = np.array(w, dtype=float, copy=True)
        for i, qi in enumerate(q):
            c = inner(qi, res)
            res -= c * qi
            rhs[i] = c
        gamma[kept] = solve_triangular(rmat, rhs)

    objective = norm(w - sum(g * c for g, c in zip(gamma, columns)))
    if objective > w_norm:
        # rounding made the minimizer worse than gamma = 0
        gamma[:] = 0.0
        objective = w_norm
    return LeastSquaresResult(gamma, len(kept), dropped, objective)


class AndersonHistory:
    """Sliding windows of iterates ``x_j`` and residuals ``w_j``.

    ``xs[-1]`` is the latest iterate; ``ws[-1]`` is the residual evaluated
    at ``xs[-2]`` once a step has begun.
    """

    def __init__(self, x0: np.ndarray, capacity: int):
        self.capacity = capacity
        self.xs: deque = deque([np.asarray(x0, dtype=float)], maxlen=capacity + 2)
        self.ws: deque = deque(maxlen=capacity + 1)
        self.gains: list = []
        self.residual_norms: list = []

    @property
    def available(self) -> int:
        """Number of residual difference columns that can be formed."""
        return max(len(self.ws) - 1, 0)

    def flush(self) -> None:
        """Drop all but the latest iterate and residual."""
        x, w = self.xs[-1], (self.ws[-1] if self.ws else None)
        self.xs.clear()
        self.xs.append(x)
        self.ws.clear()
        if w is not None:
            self.ws.append(w)

    def columns(self, m: int):
        """E and F column lists for depth ``m``, newest difference first."""
        xs, ws = list(self.xs), list(self.ws)
        e = [xs[-1 - i] - xs[-2 - i] for i in range(m)]
        f = [ws[-1 - i] - ws[-2 - i] for i in range(m)]
        return e, f


@dataclass
class StepReport:
    k: int
    residual_norm: float
    xi: float
    gamma: np.ndarray
    dropped: list
    m: int
    beta: float
    x_alpha: np.ndarray = field(repr=False, default=None)
    w_alpha: np.ndarray = field(repr=False, default=None)


def optimize(history: AndersonHistory, g_eval: np.ndarray, m: int, inner: Callable = euclidean,
             drop_tol: float = 1e-10) -> StepReport:
    """Record ``w_k = g_eval - x_{k-1}`` and solve the depth-``m`` least-squares problem.

    Returns the averaged iterate and residual; the caller picks the damping.
    """
    x_prev = history.xs[-1]
    w = np.asarray(g_eval, dtype=float) - x_prev
    if not np.all(np.isfinite(w)):
        raise BlowupError("non-finite fixed-point output")
    history.ws.append(w)
    w_norm = np.sqrt(max(inner(w, w), 0.0))
    m_k = min(m, history.available)
    e, f = history.columns(m_k)
    ls = solve_ls(w, f, inner, drop_tol)
    x_alpha = x_prev - sum((g * c for g, c in zip(ls.gamma, e)), np.zeros_like(w))
    w_alpha = w - sum((g * c for g, c in zip(ls.gamma, f)), np.zeros_like(w))
    xi = ls.objective / w_norm if w_norm > 0 else 0.0
    k = len(history.residual_norms) + 1
    history.residual_norms.append(w_norm)
    history.gains.append(xi)
    return StepReport(k, w_norm, xi, ls.gamma, ls.dropped, m_k, float("nan"), x_alpha, w_alpha)


def aa_step(history: AndersonHistory, g_eval: np.ndarray, config: AndersonConfig,
            inner: Callable = euclidean, m: Optional[int] = None, beta: Optional[float] = None):
    """One accelerated step; returns ``(x_k, report)`` and appends ``x_k`` to ``history``."""
    x_prev = history.xs[-1]
    if m is None or beta is None:
        w = np.asarray(g_eval, dtype=float) - x_prev
        wn = np.sqrt(max(inner(w, w), 0.0))
        m = depth_schedule(wn, config) if m is None else m
        beta = beta_schedule(wn, config) if beta is None else beta
    rep = optimize(history, g_eval, m, inner, config.drop_tol)
    x_next = rep.x_alpha + beta * rep.w_alpha
    rep.beta = beta
    history.xs.append(x_next)
    return x_next, rep


@dataclass
class IterationLog:
    k: int
    residual: float
    xi: float
    sigma: float
    m: int
    beta: float
    seconds: float


@dataclass
class ConvergenceRecord:
    status: str
    iterations: int
    history: list = field(default_factory=list)
    seconds: float = 0.0
    label: str = ""
    message: str = ""
    solution: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def residuals(self) -> list:
        return [h.residual for h in self.history]

    @property
    def min_sigma(self) -> float:
        vals = [h.sigma for h in self.history if np.isfinite(h.sigma)]
        return min(vals) if vals else float("nan")


def _log(entry: IterationLog, status: str) -> None:
    logger.debug(
        "k=%d residual=%.6e xi=%.6e sigma=%.6e m=%d beta=%.4g status=%s",
        entry.k, entry.residual, entry.xi, entry.sigma, entry.m, entry.beta, status,
    )


def drive(g: Callable, x0: np.ndarray, config: AndersonConfig, inner: Callable = euclidean,
          line_search: Optional[Callable] = None, label: str = "") -> ConvergenceRecord:
    """Run Anderson-accelerated fixed-point iteration until a stopping rule fires.

    Parameters
    ----------
    g : callable
        Fixed-point map on flat vectors.
    x0 : ndarray
        Initial iterate.
    config : AndersonConfig
    inner : callable
        Inner product defining the optimization and stopping norm.
    line_search : callable, optional
        ``line_search(base, direction) -> beta`` replaces the damping factor
        (used for the unaccelerated Newton baselines).

    Notes
    -----
    Iteration ``k`` evaluates ``w_k = g(x_{k-1}) - x_{k-1}``. Its log entry
    carries ``sigma = ||w_k - w_{k-1}|| / ||x_{k-1} - x_{k-2}||`` (NaN when
    not available) and ``xi``, the gain of the step taken from ``x_{k-1}``.
    With ``config.beta_grid`` every candidate damping is evaluated through
    ``g`` and the one with the smallest residual kept; its map value is
    reused by the next iteration.
    """
    t0 = time.perf_counter()
    hist = AndersonHistory(np.asarray(x0, dtype=float), config.max_depth)
    record = ConvergenceRecord(status=FAILED, iterations=0, label=label)
    cached = None
    stage_large = False
    prev_w = None

    def norm(v):
        return float(np.sqrt(max(inner(v, v), 0.0)))

    def call(x, k):
        try:
            return np.asarray(g(x), dtype=float)
        except (BlowupError, FloatingPointError):
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with the iteration index
            raise OperatorError(k, exc) from exc

    for k in range(1, config.max_iters + 1):
        x_prev = hist.xs[-1]
        gx = cached if cached is not None else call(x_prev, k)
        cached = None
        w = gx - x_prev
        finite = bool(np.all(np.isfinite(w)))
        wn = norm(w) if finite else float("inf")
        sigma = float("nan")
        if prev_w is not None and finite and len(hist.xs) >= 2:
            den = norm(hist.xs[-1] - hist.xs[-2])
            if den > 0:
                sigma = norm(w - prev_w) / den
        prev_w = w if finite else None
        record.iterations = k

        if not finite or wn > config.blowup:
            entry = IterationLog(k, wn, float("nan"), sigma, 0, float("nan"), time.perf_counter() - t0)
            record.history.append(entry)
            record.status = BLOWUP
            record.message = "residual not finite" if not finite else f"residual {wn:.3e} above {config.blowup:g}"
            _log(entry, BLOWUP)
            break
        if wn < config.tol:
            entry = IterationLog(k, wn, float("nan"), sigma, 0, float("nan"), time.perf_counter() - t0)
            record.history.append(entry)
            record.status = CONVERGED
            record.solution = gx
            _log(entry, CONVERGED)
            break

        m = depth_schedule(wn, config)
        beta = beta_schedule(wn, config)
        if config.two_stage is not None:
            large = m == config.two_stage.m_large
            if large and not stage_large and config.flush_on_switch:
                hist.flush()
            stage_large = large

        rep = optimize(hist, gx, m, inner, config.drop_tol)
        if config.beta_grid is not None:
            best = None
            for b in config.beta_grid:
                cand = rep.x_alpha + b * rep.w_alpha
                g_c = call(cand, k)
                r = g_c - cand
                r_n = norm(r) if np.all(np.isfinite(r)) else float("inf")
                if best is None or r_n < best[0]:
                    best = (r_n, b, cand, g_c)
            _, beta, x_next, cached = best
        elif line_search is not None:
            beta = float(line_search(rep.x_alpha, rep.w_alpha))
            x_next = rep.x_alpha + beta * rep.w_alpha
        else:
            x_next = rep.x_alpha + beta * rep.w_alpha
        hist.xs.append(x_next)
        entry = IterationLog(k, wn, rep.xi, sigma, rep.m, beta, time.perf_counter() - t0)
        record.history.append(entry)
        _log(entry, "running")
        if k == config.max_iters:
            record.status = FAILED
            record.message = f"no convergence in {config.max_iters} iterations"
            record.solution = x_next

    record.seconds = time.perf_counter() - t0
    return record
