"""Benchmark experiment runner for the solver laboratory.

Defines a registry of named cross-method comparison studies (grid, step,
and mode refinement ladders; profile overlays; closed-form benchmarks),
runs them reproducibly, fits convergence slopes, and writes delimited
tables plus rendered figures.

Experiment ids follow the ``fig2a`` .. ``fig7b`` naming of the study
set they reproduce; ``list_experiments`` enumerates the mapping.  Each
experiment fixes a problem (vanilla call, double-no-touch, quadrant or
rectangle survival), a method list, a refinement ladder along one axis,
and a reference policy:

* ``finest``      -- same method at a strictly finer resolution,
* ``closed-form`` -- the problem's analytic benchmark,
* ``method:<m>``  -- cross-method difference against method ``<m>``.

Errors are max-norm differences along a fixed probe line (the variance
level 2.628 for pricing problems, the second-coordinate level 1.0 for
the Brownian survival problems); tables carry the value at a single
probe point per row.  The written CSV is deterministic (byte-identical
across reruns with the same config and seed); measured solve-phase
timings go to a separate ``*_timings.csv`` sidecar because wall clock
is inherently non-reproducible.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from qlsvlab import galerkin
from qlsvlab.analytic import heston_covered_call_fourier, rho0_dnt_series
from qlsvlab.brownian2d import (
    QuadrantProblem,
    RectangleProblem,
    quadrant_survival_adi,
    quadrant_survival_analytic,
    rectangle_adi,
    rectangle_expansion,
)
from qlsvlab.discretize import Grid1D, Grid2D, assemble_qlsv_split
from qlsvlab.model import (
    MarketParams,
    QlsvModel,
    TransformedProblem,
    dnt_problem_from_coords,
    normalize,
    transformed_call_problem,
)
from qlsvlab.montecarlo import McConfig, price_dnt_mc
from qlsvlab.rho_expansion import price_expansion
from qlsvlab.steppers import run_adi, initial_surface

__all__ = [
    "SlopeFit",
    "fit_slope",
    "Experiment",
    "ResultRow",
    "ResultTable",
    "CheckResult",
    "list_experiments",
    "get_experiment",
    "load_config",
    "run_experiment",
    "evaluate_checks",
    "render_figure",
    "EXPERIMENT_IDS",
]

# --------------------------------------------------------------------------- #
# Probe conventions
# --------------------------------------------------------------------------- #

#: Variance level of the probe line for pricing problems.
PROBE_X2 = 2.628

_ADI_SCHEMES = ("do", "cs", "hw", "hv")

_CALL_LINE = np.linspace(-4.5, 4.5, 101)
_CALL_PROBE_INDEX = 50          # x1 = 0 (at-the-money)
_DNT_LINE = np.linspace(0.0, 1.0, 101)
_DNT_PROBE_INDEX = 50           # x1 = 0.5 (barrier midpoint)
_BOX_PROBE = (2.0, 1.0)         # probe point for the survival problems
_BOX_LINE_X2 = 1.0              # probe row for the survival problems

#: Normalized model parameters of the calibrated desk setup used by the
#: registry experiments (strongly mean-reverting, vol-of-vol far past the
#: square-root boundary, one-year horizon on the rescaled clock).
CALIBRATED_MODEL = {
    "alpha": 0.0,
    "beta": 1.0,
    "kappa": 59.758,
    "epsilon": 23.162,
    "rho": -0.36,
    "v0": 2.628,
    "time_scale": 2.580 / 59.758,
}

_NOISE_RESIDUAL_THRESHOLD = 0.5


# --------------------------------------------------------------------------- #
# Slope fitting
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SlopeFit:
    """Least-squares log-log convergence rate.

    ``slope`` is d(log error)/d(log h) with h = 1/resolution, so second
    order reports ~2.  ``stderr`` is the standard error of the slope,
    ``residual`` the RMS of the log-error fit residuals.  ``converged``
    marks ladders that hit an exact match (non-positive error) where no
    rate is defined; ``noisy`` flags fits whose residual exceeds
    ``_NOISE_RESIDUAL_THRESHOLD`` (scatter, not a clean power law).
    """

    slope: float
    stderr: float
    residual: float
    converged: bool = False

    @property
    def noisy(self) -> bool:
        return (not self.converged
                and self.residual > _NOISE_RESIDUAL_THRESHOLD)

    def label(self) -> str:
        if self.converged:
            return "converged"
        text = f"{self.slope:.3f}+-{self.stderr:.3f}"
        if self.noisy:
            text += " (noisy)"
        return text


def fit_slope(errors: Sequence[float],
              resolutions: Sequence[float]) -> SlopeFit:
    """Fit error ~ C * h^slope with h = 1/resolution.

    Needs at least four ladder points.  A non-positive error means the
    ladder member matched the reference exactly; the fit is then
    reported as converged instead of a rate.
    """
    errors = np.asarray(errors, dtype=float)
    resolutions = np.asarray(resolutions, dtype=float)
    if errors.shape != resolutions.shape or errors.ndim != 1:
        raise ValueError("errors and resolutions must be 1-D and matched")
    if errors.size < 4:
        raise ValueError("slope fit needs at least four ladder points")
    if np.any(resolutions <= 0.0):
        raise ValueError("resolutions must be positive")
    if np.any(errors <= 0.0):
        return SlopeFit(math.nan, math.nan, math.nan, converged=True)

    log_h = -np.log(resolutions)
    log_e = np.log(errors)
    design = np.stack([log_h, np.ones_like(log_h)], axis=1)
    coef, *_ = np.linalg.lstsq(design, log_e, rcond=None)
    fitted = design @ coef
    resid = log_e - fitted
    dof = errors.size - 2
    rms = float(np.sqrt(np.mean(resid**2)))
    var = float(resid @ resid) / dof if dof > 0 else math.nan
    centered = log_h - log_h.mean()
    stderr = math.sqrt(var / float(centered @ centered))
    return SlopeFit(float(coef[0]), stderr, rms)


# --------------------------------------------------------------------------- #
# Checks
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SlopeCheck:
    """Fitted slope of ``method`` must land inside [lo, hi]."""

    method: str
    lo: float
    hi: float

    def evaluate(self, table: "ResultTable") -> "CheckResult":
        fit = table.slopes.get(self.method)
        name = f"slope[{self.method}] in [{self.lo:g}, {self.hi:g}]"
        if fit is None or fit.converged:
            return CheckResult(name, False, "no slope fitted")
        ok = self.lo <= fit.slope <= self.hi
        return CheckResult(name, ok, f"measured {fit.slope:.3f}")


@dataclass(frozen=True)
class PairSlopeCheck:
    """Two-point rate from the last two ladder members must be >= lo."""

    method: str
    lo: float

    def evaluate(self, table: "ResultTable") -> "CheckResult":
        rows = table.method_rows(self.method)
        name = f"tail slope[{self.method}] >= {self.lo:g}"
        if len(rows) < 2:
            return CheckResult(name, False, "fewer than two ladder rows")
        coarse, fine = rows[-2], rows[-1]
        if not (coarse.error and fine.error) or min(coarse.error,
                                                    fine.error) <= 0.0:
            return CheckResult(name, True, "exact match")
        ratio = math.log(coarse.error / fine.error)
        step = math.log(fine.resolution_scalar / coarse.resolution_scalar)
        slope = ratio / step
        return CheckResult(name, slope >= self.lo, f"measured {slope:.3f}")


@dataclass(frozen=True)
class ErrorCheck:
    """Error of ``method`` at ladder position ``position`` must be <= bound."""

    method: str
    bound: float
    position: int = -1

    def evaluate(self, table: "ResultTable") -> "CheckResult":
        rows = table.method_rows(self.method)
        name = f"error[{self.method}][{self.position}] <= {self.bound:g}"
        if not rows:
            return CheckResult(name, False, "method missing from table")
        err = rows[self.position].error
        if err is None:
            return CheckResult(name, False, "row carries no error")
        return CheckResult(name, err <= self.bound, f"measured {err:.3e}")


@dataclass(frozen=True)
class RatioCheck:
    """Last refinement must shrink the error: err[-1]/err[-2] <= bound."""

    method: str
    bound: float

    def evaluate(self, table: "ResultTable") -> "CheckResult":
        rows = table.method_rows(self.method)
        name = f"refinement ratio[{self.method}] <= {self.bound:g}"
        if len(rows) < 2:
            return CheckResult(name, False, "fewer than two ladder rows")
        coarse, fine = rows[-2].error, rows[-1].error
        if not coarse:
            return CheckResult(name, False, "coarse error missing or zero")
        ratio = fine / coarse
        return CheckResult(name, ratio <= self.bound,
                           f"measured {ratio:.3f}")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict}  {self.name}  ({self.detail})"


Check = Union[SlopeCheck, PairSlopeCheck, ErrorCheck, RatioCheck]


# --------------------------------------------------------------------------- #
# Experiment definition
# --------------------------------------------------------------------------- #

_KNOWN_PROBLEMS = ("call", "dnt", "quadrant", "rectangle")
_METHODS_BY_PROBLEM = {
    "call": _ADI_SCHEMES + ("fourier",),
    "dnt": _ADI_SCHEMES + ("galerkin", "mc", "eigen",
                           "series0", "series1", "series2", "series3"),
    "quadrant": _ADI_SCHEMES,
    "rectangle": _ADI_SCHEMES + ("series0", "series1", "series2", "series3"),
}
_AXES = ("I1", "I2", "N", "M", "LEVEL")

Level = Tuple[int, int, int]


@dataclass(frozen=True)
class Experiment:
    """One named comparison study.

    ``base`` holds the default resolutions (I1, I2, N and -- where a mode
    method participates -- M); ``ladder`` varies ``ladder_axis`` while the
    rest stay at base.  ``LEVEL`` ladders refine (I1, I2, N) together.  A
    ``None`` axis marks a profile experiment: one row per method at base
    resolution.  ``reference`` picks the error baseline per the module
    docstring; ``extras`` carries problem parameters (strike, barriers,
    box, correlation, horizon, seed, path counts).
    """

    id: str
    description: str
    problem: str
    methods: Tuple[str, ...]
    base: Mapping[str, int]
    ladder_axis: Optional[str] = None
    ladder: Tuple = ()
    reference: str = "finest"
    reference_resolution: Optional[Union[int, Level]] = None
    model: Optional[Mapping[str, float]] = None
    extras: Mapping[str, float] = field(default_factory=dict)
    checks: Tuple[Check, ...] = ()

    def __post_init__(self) -> None:
        if self.problem not in _KNOWN_PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if not self.methods:
            raise ValueError("experiment needs at least one method")
        allowed = _METHODS_BY_PROBLEM[self.problem]
        for method in self.methods:
            if method not in allowed:
                raise ValueError(
                    f"method {method!r} does not apply to problem "
                    f"{self.problem!r} (allowed: {', '.join(allowed)})")
        if self.ladder_axis is not None:
            if self.ladder_axis not in _AXES:
                raise ValueError(f"unknown ladder axis {self.ladder_axis!r}")
            if len(self.ladder) < 2:
                raise ValueError("refinement ladder needs at least two rungs")
            keys = [self._scalar(entry) for entry in self.ladder]
            if any(b <= a for a, b in zip(keys, keys[1:])):
                raise ValueError("refinement ladder must increase strictly")
            if self.reference == "finest":
                if self.reference_resolution is None:
                    raise ValueError("finest-as-exact needs a reference "
                                     "resolution")
                ref_key = self._scalar(self.reference_resolution)
                if any(self._matches(entry) for entry in self.ladder):
                    raise ValueError("reference resolution must not be a "
                                     "ladder member")
                if ref_key <= keys[-1]:
                    raise ValueError("reference resolution must be finer "
                                     "than every ladder member")
        if (self.reference not in ("finest", "closed-form", "none")
                and not self.reference.startswith("method:")):
            raise ValueError(f"unknown reference policy {self.reference!r}")
        if self.reference.startswith("method:"):
            ref_method = self.reference.split(":", 1)[1]
            if ref_method not in _METHODS_BY_PROBLEM[self.problem]:
                raise ValueError(f"reference method {ref_method!r} does not "
                                 f"apply to problem {self.problem!r}")

    @staticmethod
    def _scalar(entry) -> float:
        """Sortable size of a ladder entry (I1 component for LEVEL)."""
        if isinstance(entry, tuple):
            return float(entry[0])
        return float(entry)

    def _matches(self, entry) -> bool:
        return entry == self.reference_resolution

    def resolution_for(self, entry) -> Dict[str, int]:
        """Base resolutions with the ladder axis replaced by ``entry``."""
        res = dict(self.base)
        if self.ladder_axis == "LEVEL":
            res["I1"], res["I2"], res["N"] = entry
        elif self.ladder_axis is not None:
            res[self.ladder_axis] = int(entry)
        return res


# --------------------------------------------------------------------------- #
# Result table
# --------------------------------------------------------------------------- #

_CSV_HEADER = "method,I1,I2,N,M,value,error,seconds"


@dataclass
class ResultRow:
    method: str
    i1: Optional[int]
    i2: Optional[int]
    n: Optional[int]
    m: Optional[int]
    value: float
    error: Optional[float]
    seconds: float
    stderr: Optional[float] = None      # Monte Carlo rows only

    @property
    def resolution_scalar(self) -> float:
        for candidate in (self.i1, self.i2, self.n, self.m):
            if candidate is not None:
                return float(candidate)
        raise ValueError("row carries no resolution")

    def csv_fields(self, timing: bool) -> List[str]:
        def fmt_int(v: Optional[int]) -> str:
            return "" if v is None else str(v)

        err = "" if self.error is None else f"{self.error:.6e}"
        sec = f"{self.seconds:.3f}" if timing else ""
        return [self.method, fmt_int(self.i1), fmt_int(self.i2),
                fmt_int(self.n), fmt_int(self.m), f"{self.value:.12e}",
                err, sec]


@dataclass
class ResultTable:
    """Rows plus fitted slopes for one experiment run.

    ``profiles`` maps method name (and ``"reference"``) to the probe-line
    values at base resolution, with the shared abscissa under ``"x"``;
    rendering uses it, the CSV does not.
    """

    experiment: Experiment
    rows: List[ResultRow]
    slopes: Dict[str, SlopeFit]
    profiles: Dict[str, np.ndarray] = field(default_factory=dict)

    def method_rows(self, method: str) -> List[ResultRow]:
        return [row for row in self.rows if row.method == method]

    def to_csv(self, timings: bool = False) -> str:
        lines = [_CSV_HEADER]
        for row in self.rows:
            lines.append(",".join(row.csv_fields(timings)))
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        lines = [f"experiment {self.experiment.id}: "
                 f"{self.experiment.description}"]
        for method, fit in sorted(self.slopes.items()):
            lines.append(f"  slope[{method}] = {fit.label()}")
        for res in evaluate_checks(self):
            lines.append("  " + res.line())
        return "\n".join(lines)


def evaluate_checks(table: ResultTable) -> List[CheckResult]:
    return [check.evaluate(table) for check in table.experiment.checks]


# --------------------------------------------------------------------------- #
# Model / problem construction
# --------------------------------------------------------------------------- #

def _build_model(params: Mapping[str, float]) -> QlsvModel:
    return QlsvModel.from_normalized(
        float(params.get("alpha", 0.0)), float(params.get("beta", 1.0)),
        kappa=float(params["kappa"]), epsilon=float(params["epsilon"]),
        rho=float(params["rho"]), v0=float(params["v0"]),
        time_scale=float(params.get("time_scale", 1.0)))


def _pricing_setup(exp: Experiment) -> Tuple[QlsvModel, TransformedProblem,
                                             float]:
    model = _build_model(exp.model)
    years = float(exp.extras.get("years", 1.0))
    tau = model.tau_from_years(years)
    if exp.problem == "call":
        problem = transformed_call_problem(
            model, float(exp.extras.get("strike", 1.0)))
    else:
        problem = dnt_problem_from_coords(
            model, float(exp.extras.get("x_lower", 0.0)),
            float(exp.extras.get("x_upper", 1.0)))
    return model, problem, tau


def _pricing_grid(exp: Experiment, res: Mapping[str, int]) -> Grid2D:
    x1_min = float(exp.extras.get("x1_min",
                                  0.0 if exp.problem == "dnt" else -5.0))
    x1_max = float(exp.extras.get("x1_max",
                                  1.0 if exp.problem == "dnt" else 5.0))
    x2_max = float(exp.extras.get("x2_max", 10.0))
    return Grid2D(Grid1D.uniform(x1_min, x1_max, res["I1"] - 1),
                  Grid1D.sqrt_spaced(x2_max, res["I2"] - 1))


def _box_problem(exp: Experiment):
    rho = float(exp.extras["rho"])
    tau = float(exp.extras.get("tau", 1.0))
    box = (float(exp.extras.get("box1", 5.0)),
           float(exp.extras.get("box2", 4.0)))
    if exp.problem == "quadrant":
        return QuadrantProblem(rho=rho, tau=tau, box=box), tau
    modes = int(exp.extras.get("modes", 10))
    return RectangleProblem(box[0], box[1], rho=rho, tau=tau,
                            n_modes=modes), tau


def _box_grid(exp: Experiment, res: Mapping[str, int]) -> Grid2D:
    box = (float(exp.extras.get("box1", 5.0)),
           float(exp.extras.get("box2", 4.0)))
    return Grid2D(Grid1D.uniform(0.0, box[0], res["I1"] - 1),
                  Grid1D.uniform(0.0, box[1], res["I2"] - 1))


def _box_row_index(grid: Grid2D) -> int:
    j = int(np.argmin(np.abs(grid.g2.nodes - _BOX_LINE_X2)))
    if abs(grid.g2.nodes[j] - _BOX_LINE_X2) > 1e-9:
        raise ValueError("probe row x2=1 must be a grid node; pick I2 with "
                         "(I2-1) divisible by the box height")
    return j


# --------------------------------------------------------------------------- #
# Method execution
# --------------------------------------------------------------------------- #

@dataclass
class _MethodOutput:
    x: np.ndarray               # probe-line abscissa
    line: Optional[np.ndarray]  # values on the probe line (None: point only)
    value: float                # value at the probe point
    seconds: float
    stderr: Optional[float] = None


def _run_pricing_method(exp: Experiment, method: str,
                        res: Mapping[str, int]) -> _MethodOutput:
    model, problem, tau = _pricing_setup(exp)
    probe_line = _CALL_LINE if exp.problem == "call" else _DNT_LINE
    probe_idx = (_CALL_PROBE_INDEX if exp.problem == "call"
                 else _DNT_PROBE_INDEX)

    if method in _ADI_SCHEMES:
        grid = _pricing_grid(exp, res)
        split = assemble_qlsv_split(problem, grid)
        surf = run_adi(split, initial_surface(problem, grid), tau,
                       res["N"], scheme=method)
        line = surf.interpolate(probe_line, PROBE_X2)
        return _MethodOutput(probe_line, line, float(line[probe_idx]),
                             float(surf.meta["solve_seconds"]))

    if method == "fourier":
        started = time.perf_counter()
        line = heston_covered_call_fourier(
            model, float(exp.extras.get("strike", 1.0)), tau, PROBE_X2,
            probe_line)
        elapsed = time.perf_counter() - started
        return _MethodOutput(probe_line, line, float(line[probe_idx]),
                             elapsed)

    if method == "galerkin":
        basis = galerkin.SineBasis(problem.x1_lower, problem.x1_upper,
                                   res["M"])
        grid = _pricing_grid(exp, res)
        system = galerkin.build_system(problem, basis, grid.g2)
        solution = galerkin.evolve(system, system.nu, tau, res["N"])
        surf = galerkin.reconstruct(solution, basis, Grid1D(probe_line))
        line = surf.line_at_x2(PROBE_X2)
        return _MethodOutput(probe_line, line, float(line[probe_idx]),
                             float(solution.meta["solve_seconds"]))

    if method == "eigen":
        if model.rho != 0.0:
            raise ValueError("the eigenseries runs at zero correlation only")
        started = time.perf_counter()
        lower = float(model.map.from_coord(problem.x1_lower))
        upper = float(model.map.from_coord(problem.x1_upper))
        line = rho0_dnt_series(model, lower, upper, tau, PROBE_X2,
                               probe_line)
        elapsed = time.perf_counter() - started
        return _MethodOutput(probe_line, line, float(line[probe_idx]),
                             elapsed)

    if method.startswith("series"):
        order = int(method[len("series"):])
        basis = galerkin.SineBasis(problem.x1_lower, problem.x1_upper,
                                   res["M"])
        grid = Grid2D(Grid1D(probe_line),
                      _pricing_grid(exp, res).g2)
        started = time.perf_counter()
        surf = price_expansion(problem, basis, tau, grid, order=order)
        elapsed = time.perf_counter() - started
        line = surf.line_at_x2(PROBE_X2)
        return _MethodOutput(probe_line, line, float(line[probe_idx]),
                             elapsed)

    if method == "mc":
        config = McConfig(
            n_paths=int(exp.extras.get("paths", 200_000)),
            steps_per_day=int(exp.extras.get("steps_per_day", 3)),
            seed=int(exp.extras.get("seed", 0)))
        x_start = float(probe_line[probe_idx])
        started = time.perf_counter()
        estimate = price_dnt_mc(problem, float(exp.extras.get("years", 1.0)),
                                config, x_start=x_start)
        elapsed = time.perf_counter() - started
        # paths deliver plain prices; rescale to the transformed surface
        root_sigma = math.sqrt(model.sigma(float(
            model.map.from_coord(x_start))))
        return _MethodOutput(probe_line, None, estimate.mean / root_sigma,
                             elapsed, stderr=estimate.stderr / root_sigma)

    raise ValueError(f"unknown method {method!r}")


def _run_box_method(exp: Experiment, method: str,
                    res: Mapping[str, int]) -> _MethodOutput:
    problem, tau = _box_problem(exp)
    if method in _ADI_SCHEMES:
        grid = _box_grid(exp, res)
        if exp.problem == "quadrant":
            surf = quadrant_survival_adi(problem, grid, res["N"],
                                         scheme=method)
        else:
            surf = rectangle_adi(problem, grid, res["N"], scheme=method)
        j = _box_row_index(grid)
        x = grid.g1.nodes[1:-1]
        line = surf.values[1:-1, j]
        value = float(surf.interpolate(np.array([_BOX_PROBE[0]]),
                                       _BOX_PROBE[1])[0])
        return _MethodOutput(x, line, value,
                             float(surf.meta["solve_seconds"]))

    if method.startswith("series") and exp.problem == "rectangle":
        order = int(method[len("series"):])
        grid = _box_grid(exp, res)
        x = grid.g1.nodes[1:-1]
        started = time.perf_counter()
        expansion = rectangle_expansion(problem, order=order)
        line = expansion.evaluate(x, _BOX_LINE_X2)
        value = float(expansion.evaluate(_BOX_PROBE[0], _BOX_PROBE[1]))
        elapsed = time.perf_counter() - started
        return _MethodOutput(x, line, value, elapsed)

    raise ValueError(f"method {method!r} does not apply to "
                     f"problem {exp.problem!r}")


def _run_method(exp: Experiment, method: str,
                res: Mapping[str, int]) -> _MethodOutput:
    if exp.problem in ("call", "dnt"):
        return _run_pricing_method(exp, method, res)
    return _run_box_method(exp, method, res)


def _closed_form_line(exp: Experiment, x: np.ndarray) -> np.ndarray:
    """Analytic benchmark on the probe line, where one exists."""
    if exp.problem == "call":
        model, _, tau = _pricing_setup(exp)
        return heston_covered_call_fourier(
            model, float(exp.extras.get("strike", 1.0)), tau, PROBE_X2, x)
    if exp.problem == "quadrant":
        rho = float(exp.extras["rho"])
        tau = float(exp.extras.get("tau", 1.0))
        return quadrant_survival_analytic(rho, tau, x, _BOX_LINE_X2)
    raise ValueError(f"no closed-form benchmark for {exp.problem!r}")


# --------------------------------------------------------------------------- #
# Experiment runner
# --------------------------------------------------------------------------- #

def _ladder_entries(exp: Experiment) -> List:
    if exp.ladder_axis is None:
        return [None]
    return list(exp.ladder)


def _row_from_output(method: str, res: Mapping[str, int],
                     out: _MethodOutput, error: Optional[float],
                     needs_m: bool) -> ResultRow:
    return ResultRow(
        method=method,
        i1=res.get("I1"), i2=res.get("I2"), n=res.get("N"),
        m=res.get("M") if (needs_m or method == "galerkin"
                           or method.startswith("series")) else None,
        value=out.value, error=error, seconds=out.seconds,
        stderr=out.stderr)


def run_experiment(spec: Union[str, Path, Experiment],
                   out_dir: Optional[Union[str, Path]] = None,
                   render: bool = True) -> ResultTable:
    """Run one experiment and optionally write its artifacts.

    ``spec`` is a registry id, a path to a config file (key=value lines
    or a JSON object), or an :class:`Experiment`.  With ``out_dir`` the
    run writes ``<id>.csv`` (deterministic), ``<id>_timings.csv``
    (measured solve seconds), and -- unless ``render`` is off -- a
    rendered ``<id>.png``.
    """
    exp = _resolve_spec(spec)
    memo: Dict[Tuple[str, Tuple[Tuple[str, int], ...]], _MethodOutput] = {}

    def run(method: str, res: Mapping[str, int]) -> _MethodOutput:
        key = (method, tuple(sorted((k, int(v)) for k, v in res.items())))
        if key not in memo:
            memo[key] = _run_method(exp, method, res)
        return memo[key]

    # reference lines -------------------------------------------------------
    ref_by_method: Dict[str, Optional[np.ndarray]] = {}
    closed_form_cache: Dict[Tuple[float, ...], np.ndarray] = {}

    def reference_line(method: str, x: np.ndarray) -> Optional[np.ndarray]:
        if exp.reference == "none":
            return None
        if exp.reference == "closed-form":
            key = (float(x[0]), float(x[-1]), len(x))
            if key not in closed_form_cache:
                closed_form_cache[key] = _closed_form_line(exp, x)
            return closed_form_cache[key]
        if exp.reference == "finest":
            if method not in ref_by_method:
                res = exp.resolution_for(exp.reference_resolution)
                ref_by_method[method] = run(method, res).line
            return ref_by_method[method]
        ref_method = exp.reference.split(":", 1)[1]
        if "shared" not in ref_by_method:
            ref_by_method["shared"] = run(ref_method, dict(exp.base)).line
        return ref_by_method["shared"]

    needs_m = any(m == "galerkin" or m.startswith("series")
                  for m in exp.methods) or exp.ladder_axis == "M"
    rows: List[ResultRow] = []
    errors: Dict[str, List[float]] = {m: [] for m in exp.methods}
    profiles: Dict[str, np.ndarray] = {}

    for method in exp.methods:
        for entry in _ladder_entries(exp):
            res = exp.resolution_for(entry) if entry is not None \
                else dict(exp.base)
            out = run(method, res)
            ref = reference_line(method, out.x)
            if out.line is None:          # point methods (Monte Carlo)
                if ref is not None:
                    error = abs(out.value - float(ref[len(out.x) // 2]))
                else:
                    error = None
            elif ref is None:
                error = None
            else:
                error = float(np.max(np.abs(out.line - ref)))
            if error is not None:
                errors[method].append(error)
            rows.append(_row_from_output(method, res, out, error, needs_m))
            is_base = (entry is None
                       or (exp.ladder_axis is not None
                           and entry == exp.ladder[-1]))
            if out.line is not None and is_base:
                profiles[method] = out.line
                profiles.setdefault("x", out.x)
                if ref is not None:
                    profiles.setdefault("reference", np.asarray(ref))

    slopes: Dict[str, SlopeFit] = {}
    if exp.ladder_axis is not None and len(exp.ladder) >= 4:
        axis_values = [Experiment._scalar(v) for v in exp.ladder]
        for method in exp.methods:
            errs = errors[method]
            if len(errs) == len(axis_values) and all(
                    e is not None for e in errs):
                slopes[method] = fit_slope(errs, axis_values)

    table = ResultTable(experiment=exp, rows=rows, slopes=slopes,
                        profiles=profiles)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{exp.id}.csv").write_text(table.to_csv(timings=False))
        (out / f"{exp.id}_timings.csv").write_text(
            table.to_csv(timings=True))
        if render:
            render_figure(table, out / f"{exp.id}.png")
    return table


def _resolve_spec(spec: Union[str, Path, Experiment]) -> Experiment:
    if isinstance(spec, Experiment):
        return spec
    text = str(spec)
    if text in _REGISTRY:
        return _REGISTRY[text]
    path = Path(text)
    if path.exists():
        return load_config(path)
    known = ", ".join(sorted(_REGISTRY))
    raise ValueError(f"unknown experiment id or missing config file "
                     f"{text!r}; known ids: {known}")


# --------------------------------------------------------------------------- #
# Rendering
# --------------------------------------------------------------------------- #

def render_figure(table: ResultTable, path: Union[str, Path]) -> None:
    """Render the experiment's figure (log-log ladder or probe-line plot)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    exp = table.experiment
    fig, ax = plt.subplots(figsize=(6.4, 4.4), dpi=130)
    if exp.ladder_axis is not None:
        for method in exp.methods:
            rows = table.method_rows(method)
            xs = [_axis_value(row, exp.ladder_axis) for row in rows]
            errs = [row.error for row in rows]
            if any(e is None or e <= 0 for e in errs):
                continue
            label = method
            if method in table.slopes:
                label += f" (slope {table.slopes[method].slope:.2f})"
            ax.loglog(xs, errs, marker="o", label=label)
        ax.set_xlabel(exp.ladder_axis if exp.ladder_axis != "LEVEL"
                      else "I1 (simultaneous refinement)")
        ax.set_ylabel("max probe-line error")
        ax.grid(True, which="both", alpha=0.3)
    else:
        x = table.profiles.get("x")
        ref = table.profiles.get("reference")
        diff_mode = exp.reference.startswith("method:")
        for method in exp.methods:
            line = table.profiles.get(method)
            if line is None or x is None:
                continue
            if diff_mode and ref is not None and method != \
                    exp.reference.split(":", 1)[1]:
                ax.plot(x, line - ref, label=f"{method} - reference")
            else:
                ax.plot(x, line, label=method)
        for row in table.rows:
            if row.method == "mc":
                ax.errorbar([x[len(x) // 2]] if x is not None else [0.5],
                            [row.value], yerr=[3 * (row.stderr or 0.0)],
                            fmt="k*", markersize=9, label="mc (3 s.e.)")
        ax.set_xlabel("x1")
        ax.set_ylabel("difference" if diff_mode else "value")
        ax.grid(True, alpha=0.3)
    ax.set_title(f"{exp.id}: {exp.description}", fontsize=9)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _axis_value(row: ResultRow, axis: str) -> float:
    if axis == "I1" or axis == "LEVEL":
        return float(row.i1)
    if axis == "I2":
        return float(row.i2)
    if axis == "N":
        return float(row.n)
    return float(row.m)


# --------------------------------------------------------------------------- #
# Config files
# --------------------------------------------------------------------------- #

def _parse_config_text(text: str) -> Dict[str, object]:
    stripped = text.strip()
    if stripped.startswith("{"):
        return dict(json.loads(stripped))
    values: Dict[str, object] = {}
    for raw in stripped.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {raw!r} is not key=value")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key] = val
    return values


def _as_float(values: Mapping[str, object], key: str) -> Optional[float]:
    if key not in values:
        return None
    return float(values[key])  # type: ignore[arg-type]


def _as_list(value) -> List[str]:
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [part.strip() for part in str(value).split(",") if part.strip()]


_MODEL_KEYS = ("alpha", "beta", "kappa", "epsilon", "rho", "v0",
               "time_scale")
_DIMENSIONAL_KEYS = ("gamma", "theta", "spot")


def _model_from_config(values: Mapping[str, object]) -> Dict[str, float]:
    """Normalized model block from a config mapping.

    A block that carries any of gamma/theta/spot is read as dimensional
    market parameters and normalized; otherwise the keys are taken as
    already normalized.
    """
    if any(k in values for k in _DIMENSIONAL_KEYS):
        params = MarketParams(
            alpha=float(values.get("alpha", 0.0)),
            beta=float(values.get("beta", 1.0)),
            gamma=float(values.get("gamma", 0.0)),
            kappa=float(values["kappa"]),
            theta=float(values["theta"]),
            epsilon=float(values["epsilon"]),
            rho=float(values["rho"]),
            v0=float(values["v0"]),
            spot=float(values.get("spot", 1.0)))
        model = normalize(params)
        return {"alpha": model.alpha, "beta": model.beta,
                "kappa": model.kappa, "epsilon": model.epsilon,
                "rho": model.rho, "v0": model.v0,
                "time_scale": model.time_scale}
    return {k: float(values[k]) for k in _MODEL_KEYS if k in values}


def load_config(path: Union[str, Path]) -> Experiment:
    """Build a custom experiment from a config file.

    The file is either JSON or plain key=value lines.  The model block
    uses the keys {alpha, beta, gamma, kappa, theta, epsilon, rho, v0,
    spot} (dimensional; normalized on load) or the normalized
    equivalents; the grid block uses {x1_min, x1_max, I1, x2_max, I2};
    experiment keys are problem, methods, ladder_axis, ladder,
    reference, reference_resolution, N, M, years, strike,
    x_lower/x_upper, rho/tau/box1/box2/modes, seed, paths,
    steps_per_day.
    """
    path = Path(path)
    values = _parse_config_text(path.read_text())
    problem = str(values.get("problem", "call"))
    methods = tuple(_as_list(values.get("methods", "cs")))

    base = {}
    for key, default in (("I1", 201), ("I2", 101), ("N", 1024), ("M", 30)):
        base[key] = int(float(values.get(key, default)))  # type: ignore

    ladder_axis = values.get("ladder_axis")
    ladder: Tuple = ()
    reference = str(values.get("reference", "finest"
                               if ladder_axis else "method:" + methods[0]))
    reference_resolution = None
    if ladder_axis is not None:
        ladder_axis = str(ladder_axis)
        if ladder_axis == "LEVEL":
            raise ValueError("config files support scalar ladder axes only "
                             "(I1, I2, N, M)")
        ladder = tuple(int(float(v)) for v in _as_list(values["ladder"]))
        if "reference_resolution" in values:
            reference_resolution = int(float(
                values["reference_resolution"]))  # type: ignore

    model = None
    if problem in ("call", "dnt"):
        block = _model_from_config(values)
        if not block:
            block = dict(CALIBRATED_MODEL)
        model = block

    extras: Dict[str, float] = {}
    for key in ("strike", "x_lower", "x_upper", "years", "rho", "tau",
                "box1", "box2", "modes", "seed", "paths", "steps_per_day",
                "x1_min", "x1_max", "x2_max"):
        val = _as_float(values, key)
        if val is not None:
            extras[key] = val
    if problem in ("quadrant", "rectangle") and "rho" not in extras:
        raise ValueError("box survival problems need a correlation: "
                         "set rho in the config")

    return Experiment(
        id=str(values.get("id", path.stem)),
        description=str(values.get("description",
                                   f"custom {problem} experiment")),
        problem=problem, methods=methods, base=base,
        ladder_axis=ladder_axis, ladder=ladder, reference=reference,
        reference_resolution=reference_resolution, model=model,
        extras=extras)


# --------------------------------------------------------------------------- #
# Registry
# --------------------------------------------------------------------------- #

def _call_experiment(**kw) -> Experiment:
    return Experiment(problem="call", model=dict(CALIBRATED_MODEL),
                      extras={"strike": 1.0, "years": 1.0}, **kw)


def _dnt_experiment(extras=None, **kw) -> Experiment:
    merged = {"x_lower": 0.0, "x_upper": 1.0, "years": 1.0}
    merged.update(extras or {})
    return Experiment(problem="dnt", model=dict(CALIBRATED_MODEL),
                      extras=merged, **kw)


def _build_registry() -> Dict[str, Experiment]:
    second = tuple(SlopeCheck(m, 1.7, 2.3) for m in _ADI_SCHEMES)
    experiments = [
        _call_experiment(
            id="fig2a",
            description="call: x1-grid ladder, four splitting schemes, "
                        "finest grid as reference",
            methods=_ADI_SCHEMES,
            base={"I1": 201, "I2": 101, "N": 1024},
            ladder_axis="I1", ladder=(51, 71, 101, 141, 201),
            reference="finest", reference_resolution=601,
            checks=second),
        _call_experiment(
            id="fig2b",
            description="call: variance-grid ladder, four splitting "
                        "schemes, finest grid as reference",
            methods=_ADI_SCHEMES,
            base={"I1": 201, "I2": 101, "N": 1024},
            ladder_axis="I2", ladder=(21, 31, 41, 61, 81),
            reference="finest", reference_resolution=401,
            checks=second),
        _call_experiment(
            id="fig2c",
            description="call: time-step ladder, four splitting schemes, "
                        "finest step count as reference",
            methods=_ADI_SCHEMES,
            base={"I1": 201, "I2": 101, "N": 1024},
            ladder_axis="N", ladder=(32, 45, 64, 91, 128, 181),
            reference="finest", reference_resolution=1024,
            checks=(SlopeCheck("do", 0.7, 1.3),
                    SlopeCheck("cs", 1.7, 2.3),
                    SlopeCheck("hw", 1.7, 2.3),
                    SlopeCheck("hv", 1.7, 2.3))),
        _call_experiment(
            id="fig3a",
            description="call: probe-line profiles, splitting scheme vs "
                        "Fourier benchmark",
            methods=("cs", "fourier"),
            base={"I1": 201, "I2": 101, "N": 1024},
            reference="method:fourier"),
        _call_experiment(
            id="fig3b",
            description="call: splitting scheme vs Fourier benchmark "
                        "under simultaneous refinement",
            methods=("cs",),
            base={"I1": 201, "I2": 101, "N": 1024},
            ladder_axis="LEVEL",
            ladder=((51, 26, 64), (101, 51, 256), (201, 101, 1024),
                    (401, 201, 2048)),
            reference="closed-form",
            checks=(PairSlopeCheck("cs", 1.7),
                    ErrorCheck("cs", 1e-3, position=-1))),
        _dnt_experiment(
            id="fig4a",
            description="double-no-touch: x1-grid ladder, four splitting "
                        "schemes, finest grid as reference",
            methods=_ADI_SCHEMES,
            base={"I1": 201, "I2": 101, "N": 1024},
            ladder_axis="I1", ladder=(51, 71, 101, 141, 201),
            reference="finest", reference_resolution=601,
            checks=second),
        _dnt_experiment(
            id="fig4b",
            description="double-no-touch: variance-grid ladder, four "
                        "splitting schemes, finest grid as reference",
            methods=_ADI_SCHEMES,
            base={"I1": 201, "I2": 101, "N": 1024},
            ladder_axis="I2", ladder=(21, 31, 41, 61, 81),
            reference="finest", reference_resolution=401,
            checks=second),
        _dnt_experiment(
            id="fig4c",
            description="double-no-touch: time-step ladder past the "
                        "barrier-kink transient, four splitting schemes",
            methods=_ADI_SCHEMES,
            base={"I1": 201, "I2": 101, "N": 1024},
            ladder_axis="N", ladder=(128, 181, 256, 362, 512),
            reference="finest", reference_resolution=2048,
            checks=tuple(SlopeCheck(m, 0.7, 1.3) for m in _ADI_SCHEMES)),
        _dnt_experiment(
            id="fig4d",
            description="double-no-touch: sine-mode ladder for the mode "
                        "reduction, finest mode count as reference",
            methods=("galerkin",),
            base={"I1": 201, "I2": 101, "N": 1024, "M": 30},
            ladder_axis="M", ladder=(10, 12, 14, 17, 20, 24),
            reference="finest", reference_resolution=40,
            checks=(SlopeCheck("galerkin", 1.6, 2.4),)),
        _dnt_experiment(
            id="fig5a",
            description="double-no-touch: probe-line profiles, mode "
                        "reduction vs splitting scheme vs Monte Carlo",
            methods=("galerkin", "cs", "mc"),
            base={"I1": 201, "I2": 101, "N": 1024, "M": 30},
            reference="method:galerkin",
            extras={"seed": 1234, "paths": 200_000, "steps_per_day": 3}),
        _dnt_experiment(
            id="fig5b",
            description="double-no-touch: splitting schemes minus mode "
                        "reduction along the probe line",
            methods=_ADI_SCHEMES,
            base={"I1": 201, "I2": 101, "N": 1024, "M": 30},
            reference="method:galerkin",
            checks=tuple(ErrorCheck(m, 5e-3) for m in _ADI_SCHEMES)),
        _dnt_experiment(
            id="fig5c",
            description="double-no-touch: correlation-series orders minus "
                        "mode reduction along the probe line",
            methods=("series1", "series2", "series3"),
            base={"I1": 201, "I2": 101, "N": 1024, "M": 30},
            reference="method:galerkin",
            checks=(ErrorCheck("series3", 2.5e-2),)),
        Experiment(
            id="fig6a",
            description="quadrant survival: splitting scheme vs wedge "
                        "eigenseries under simultaneous refinement",
            problem="quadrant", methods=("cs",),
            base={"I1": 201, "I2": 161, "N": 1000},
            ladder_axis="LEVEL",
            ladder=((26, 21, 16), (51, 41, 63), (101, 81, 250),
                    (201, 161, 1000)),
            reference="closed-form",
            extras={"rho": -0.90, "tau": 1.0, "box1": 5.0, "box2": 4.0},
            checks=(SlopeCheck("cs", 1.5, 2.5),)),
        Experiment(
            id="fig6b",
            description="quadrant survival: wedge-eigenseries gap at the "
                        "working resolution and after doubling",
            problem="quadrant", methods=("cs",),
            base={"I1": 201, "I2": 101, "N": 1000},
            ladder_axis="LEVEL",
            ladder=((201, 101, 1000), (401, 201, 2000)),
            reference="closed-form",
            extras={"rho": -0.90, "tau": 1.0, "box1": 5.0, "box2": 4.0},
            checks=(ErrorCheck("cs", 2e-3, position=0),
                    RatioCheck("cs", 0.35))),
        Experiment(
            id="fig7a",
            description="rectangle survival: probe-line profiles, "
                        "splitting scheme vs correlation series",
            problem="rectangle", methods=("cs", "series3"),
            base={"I1": 201, "I2": 101, "N": 1000},
            reference="method:cs",
            extras={"rho": -0.900, "tau": 1.0, "box1": 5.0, "box2": 4.0,
                    "modes": 10}),
        Experiment(
            id="fig7b",
            description="rectangle survival: correlation-series orders "
                        "minus splitting scheme along the probe line",
            problem="rectangle",
            methods=("series0", "series1", "series2", "series3"),
            base={"I1": 201, "I2": 101, "N": 1000},
            reference="method:cs",
            extras={"rho": -0.900, "tau": 1.0, "box1": 5.0, "box2": 4.0,
                    "modes": 10},
            checks=(ErrorCheck("series3", 5e-3),)),
    ]
    return {exp.id: exp for exp in experiments}


_REGISTRY = _build_registry()
EXPERIMENT_IDS = tuple(sorted(_REGISTRY))


def get_experiment(exp_id: str) -> Experiment:
    if exp_id not in _REGISTRY:
        known = ", ".join(sorted(_REGISTRY))
        raise ValueError(f"unknown experiment id {exp_id!r}; "
                         f"known ids: {known}")
    return _REGISTRY[exp_id]


def list_experiments() -> List[Tuple[str, str]]:
    """(id, description) pairs for every registry experiment."""
    return [(exp_id, _REGISTRY[exp_id].description)
            for exp_id in sorted(_REGISTRY)]
