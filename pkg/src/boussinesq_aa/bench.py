"""Differentially heated cavity benchmark: single runs, sweeps and CSV output.

A :class:`BenchmarkCase` is flat so it can be read from a plain ``key = value``
file whose keys are exactly its field names.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .anderson import BLOWUP, CONVERGED, FAILED, AndersonConfig, ConvergenceRecord, IterationLog, TwoStage, drive
from .assembly import ProblemConfig
from .fespace import ElementFamily, PressureKind
from .fixedpoint import BoussinesqProblem
from .linesearch import LineSearchSpec, make_line_search
from .meshgen import benchmark_mesh

logger = logging.getLogger(__name__)

BETA_GRID = (0.0625, 0.125, 0.25, 0.5, 1.0)
DEFAULT_MAX_ITERS = {"picard": 500, "newton": 200}
# best damping found for unaccelerated Picard at each Rayleigh number
PICARD_BETA = {1e5: 0.3, 5e5: 0.05, 1e6: 0.05, 2e6: 0.05}

HISTORY_COLUMNS = ("k", "residual_Bnorm", "xi", "sigma", "m_k", "beta_k")
SUMMARY_COLUMNS = ("Ri", "Ra", "method", "m", "beta_mode", "status", "iterations", "seconds")


def default_beta(Ra: float, method: str) -> float:
    if method == "picard":
        for ra, beta in PICARD_BETA.items():
            if math.isclose(Ra, ra, rel_tol=1e-9):
                return beta
    return 1.0


@dataclass(frozen=True)
class BenchmarkCase:
    """One benchmark run.

    ``two_stage`` is ``None`` or ``(m_small, m_large, threshold)``; when set it
    overrides ``m``. ``beta = None`` picks the per-Rayleigh default.
    """

    mesh_n: int = 16
    boundary_layers: int = 1
    alfeld: bool = False
    family: str = "taylor-hood"
    nu: float = 0.01
    kappa: float = 0.01
    Ri: float = 1.0
    method: str = "picard"
    m: int = 0
    beta: Optional[float] = None
    two_stage: Optional[tuple] = None
    flush_on_switch: bool = False
    linesearch: str = "none"
    beta_grid: bool = False
    tol: float = 1e-8
    blowup: float = 1e4
    max_iters: Optional[int] = None
    label: str = ""

    def __post_init__(self):
        if self.method not in DEFAULT_MAX_ITERS:
            raise ValueError(f"method must be picard or newton, got {self.method!r}")
        PressureKind(self.family)
        LineSearchSpec(self.linesearch)

    @classmethod
    def from_rayleigh(cls, Ra: float, **kw) -> "BenchmarkCase":
        nu, kappa = kw.get("nu", 0.01), kw.get("kappa", 0.01)
        return cls(Ri=Ra * nu * kappa, **kw)

    @property
    def problem_config(self) -> ProblemConfig:
        return ProblemConfig(nu=self.nu, kappa=self.kappa, Ri=self.Ri)

    @property
    def Ra(self) -> float:
        return self.problem_config.Ra

    @property
    def element_family(self) -> ElementFamily:
        return ElementFamily(PressureKind(self.family))

    @property
    def uses_alfeld(self) -> bool:
        return self.alfeld or self.element_family.discontinuous_pressure

    @property
    def effective_beta(self) -> float:
        return default_beta(self.Ra, self.method) if self.beta is None else self.beta

    @property
    def anderson_config(self) -> AndersonConfig:
        ts = None if self.two_stage is None else TwoStage(int(self.two_stage[0]), int(self.two_stage[1]),
                                                          float(self.two_stage[2]))
        return AndersonConfig(
            depth=self.m,
            beta=self.effective_beta,
            two_stage=ts,
            max_iters=self.max_iters or DEFAULT_MAX_ITERS[self.method],
            tol=self.tol,
            blowup=self.blowup,
            flush_on_switch=self.flush_on_switch,
            beta_grid=BETA_GRID if self.beta_grid else None,
        )

    @property
    def depth_label(self) -> str:
        if self.two_stage is not None:
            return f"{int(self.two_stage[0])}-{int(self.two_stage[1])}"
        return str(self.m)

    @property
    def beta_mode(self) -> str:
        if self.beta_grid:
            return "grid"
        if self.linesearch != "none":
            return self.linesearch
        return f"{self.effective_beta:g}"

    def key(self) -> tuple:
        return (self.Ri, self.Ra, self.method, self.depth_label, self.beta_mode)

    def name(self) -> str:
        if self.label:
            return self.label
        return f"{self.method}_Ra{self.Ra:.3g}_m{self.depth_label}_beta{self.beta_mode}".replace("+", "")


# -- config files --------------------------------------------------------------

def _parse_value(name: str, text: str):
    text = text.strip()
    if name in ("beta", "max_iters", "two_stage") and text.lower() in ("", "none", "default"):
        return None
    if name in ("alfeld", "beta_grid", "flush_on_switch"):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if name in ("mesh_n", "boundary_layers", "m", "max_iters"):
        return int(text)
    if name in ("nu", "kappa", "Ri", "beta", "tol", "blowup"):
        return float(text)
    if name == "two_stage":
        parts = [p for p in text.replace(",", " ").split() if p]
        if len(parts) != 3:
            raise ValueError("two_stage needs m_small, m_large, threshold")
        return (int(parts[0]), int(parts[1]), float(parts[2]))
    return text


def parse_case(text: str) -> BenchmarkCase:
    """Read ``key = value`` lines (``#`` comments allowed) into a case."""
    names = {f.name for f in fields(BenchmarkCase)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in names:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, val)
    return BenchmarkCase(**values)


def load_case(path) -> BenchmarkCase:
    return parse_case(Path(path).read_text(encoding="utf-8"))


def format_case(case: BenchmarkCase) -> str:
    lines = []
    for k, v in asdict(case).items():
        if v is None:
            v = "none"
        elif isinstance(v, tuple):
            v = ", ".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


# -- running -------------------------------------------------------------------

_PROBLEMS: dict = {}


def build_problem(case: BenchmarkCase) -> BoussinesqProblem:
    key = (case.mesh_n, case.boundary_layers, case.uses_alfeld, case.family, case.nu, case.kappa, case.Ri)
    if key not in _PROBLEMS:
        if len(_PROBLEMS) > 8:
            _PROBLEMS.clear()
        mesh = benchmark_mesh(case.mesh_n, case.boundary_layers, case.uses_alfeld)
        _PROBLEMS[key] = BoussinesqProblem(mesh, case.problem_config, case.element_family)
    return _PROBLEMS[key]


def run_case(case: BenchmarkCase, keep_solution: bool = False) -> ConvergenceRecord:
    """Build the mesh and spaces, iterate, and return the convergence record.

    Failures inside the iteration never propagate: a numerical breakdown is
    reported as blowup ("B") with the diagnostic in ``message``.
    """
    label = case.name()
    try:
        problem = build_problem(case)
        g = problem.picard_map if case.method == "picard" else problem.newton_map
        spec = LineSearchSpec(case.linesearch)
        line_search = make_line_search(spec, lambda x: problem.fe_residual_norm(problem.unpack(x)))
        x0 = problem.pack(problem.initial_state())
        record = drive(g, x0, case.anderson_config, problem.inner, line_search=line_search, label=label)
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        logger.warning("case %s failed: %s", label, exc)
        record = ConvergenceRecord(status=BLOWUP, iterations=getattr(exc, "k", 0), label=label, message=str(exc))
    except Exception as exc:  # noqa: BLE001 - a sweep must survive any single case
        logger.exception("case %s crashed", label)
        record = ConvergenceRecord(status=FAILED, iterations=0, label=label, message=f"{type(exc).__name__}: {exc}")
    if not keep_solution:
        record.solution = None
    return record


def run_sweep(cases: Iterable[BenchmarkCase], workers: int = 1) -> list:
    """Run independent cases; returns ``[(case, record), ...]`` in input order."""
    cases = list(cases)
    if workers > 1 and len(cases) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run_case, cases))
    else:
        records = [run_case(c) for c in cases]
    return list(zip(cases, records))


def sweep_table(results) -> dict:
    """Records keyed by ``(Ri, Ra, method, m, beta_mode)``."""
    return {case.key(): rec for case, rec in results}


def grid(Ras: Iterable[float], depths: Iterable, betas: Iterable, method: str = "newton", **kw) -> list:
    """Cartesian product of cases; a depth may be an int or ``(m_small, m_large, threshold)``."""
    out = []
    for Ra in Ras:
        for m in depths:
            for b in betas:
                extra = dict(kw)
                if isinstance(m, tuple):
                    extra["two_stage"] = m
                else:
                    extra["m"] = int(m)
                if b == "grid":
                    extra["beta_grid"] = True
                elif b in ("ls1", "ls2"):
                    extra["linesearch"] = b
                    extra["beta"] = 1.0
                else:
                    extra["beta"] = None if b is None else float(b)
                out.append(BenchmarkCase.from_rayleigh(Ra, method=method, **extra))
    return out


# -- CSV -------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_history_csv(record: ConvergenceRecord, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_COLUMNS)
            for h in record.history:
                w.writerow([h.k, _fmt(float(h.residual)), _fmt(float(h.xi)), _fmt(float(h.sigma)), h.m,
                            _fmt(float(h.beta))])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_history_csv(path) -> list:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        IterationLog(int(r["k"]), float(r["residual_Bnorm"]), float(r["xi"]), float(r["sigma"]), int(r["m_k"]),
                     float(r["beta_k"]), float("nan"))
        for r in rows
    ]


def write_summary_csv(results, path) -> Path:
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for case, rec in results:
                w.writerow([_fmt(float(case.Ri)), _fmt(float(case.Ra)), case.method, case.depth_label,
                            case.beta_mode, rec.status, rec.iterations, _fmt(float(rec.seconds))])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_summary_csv(path) -> list:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["Ri"], r["Ra"], r["seconds"] = float(r["Ri"]), float(r["Ra"]), float(r["seconds"])
        r["iterations"] = int(r["iterations"])
    return rows


def emit_csv(results, out_dir, summary_name: str = "summary.csv") -> list:
    """One history CSV per case plus a sweep summary; returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc
    paths = []
    for case, rec in results:
        paths.append(write_history_csv(rec, out / f"{case.name()}.csv"))
    paths.append(write_summary_csv(results, out / summary_name))
    return paths


__all__ = [
    "BenchmarkCase",
    "CONVERGED",
    "BLOWUP",
    "FAILED",
    "emit_csv",
    "grid",
    "load_case",
    "parse_case",
    "read_history_csv",
    "read_summary_csv",
    "run_case",
    "run_sweep",
    "sweep_table",
    "write_history_csv",
    "write_summary_csv",
]
