"""Mode-reduction solver for barrier problems.

The two-factor pricing PDE on a bounded spatial interval is expanded over a
sine basis ``e_k(x1) = sin(zeta_k * (x1 - X_L))``.  Projecting the generator
turns the problem into M coupled one-factor equations in the variance
coordinate

    dU_k/dtau = 0.5*eps^2*x2*U_k'' + kappa*(1 - x2)*U_k' - 0.5*Lam_k*x2*U_k
                + rho*eps*x2*d/dx2 (sum_l coupling[l, k] * U_l),

where ``Lam_k = zeta_k^2 + omega`` collects the mode frequency and the
zero-order weight of the volatility family, and the coupling matrix projects
the spatial derivative (plus the drift-shape weight) of one mode onto
another.  Each step treats a mode's own operator implicitly and the
correlation source explicitly, lagged one step.  With zero correlation the
modes decouple and evolve by a closed-form exponential-affine amplitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from time import perf_counter
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy.integrate import quad

from qlsvlab.discretize import (
    BandedLU,
    BandedOperator,
    Grid1D,
    Grid2D,
    assemble_1d,
    first_derivative_stencils,
)
from qlsvlab.model import QlsvModel, TransformedProblem
from qlsvlab.rho_expansion import affine_AB
from qlsvlab.steppers import PriceSurface

__all__ = [
    "SineBasis",
    "GalerkinSystem",
    "ModeSolution",
    "project_payoff",
    "dnt_projection",
    "coupling_matrix",
    "build_system",
    "evolve",
    "exact_mode_solution",
    "reconstruct",
]


# --------------------------------------------------------------------------- #
# Basis
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SineBasis:
    """Sine functions vanishing at both ends of [x_lower, x_upper]."""

    x_lower: float
    x_upper: float
    mode_count: int

    def __post_init__(self) -> None:
        if self.mode_count < 1:
            raise ValueError("mode count must be at least one")
        if not self.x_upper > self.x_lower:
            raise ValueError("basis interval is empty")

    @property
    def width(self) -> float:
        return self.x_upper - self.x_lower

    @property
    def frequencies(self) -> np.ndarray:
        """zeta_k = pi*k / width for k = 1..M."""
        return np.pi * np.arange(1, self.mode_count + 1) / self.width

    def eigenvalues(self, omega: float) -> np.ndarray:
        """Per-mode zero-order weights Lam_k = zeta_k^2 + omega."""
        return self.frequencies**2 + omega

    def evaluate(self, x1) -> np.ndarray:
        """Basis values, shape (M, len(x1)).  Values at the interval ends
        are exactly zero (floating sin(pi*k) is not)."""
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        vals = np.sin(np.outer(self.frequencies, x1 - self.x_lower))
        vals[:, (x1 == self.x_lower) | (x1 == self.x_upper)] = 0.0
        return vals


# --------------------------------------------------------------------------- #
# Projections
# --------------------------------------------------------------------------- #

def project_payoff(basis: SineBasis, payoff: Callable[[np.ndarray], np.ndarray],
                   breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Sine-series coefficients (2/width) * integral of payoff * e_k.

    Adaptive quadrature per mode; ``breakpoints`` flags known kinks (for
    example a strike) so the subdivision starts there.
    """
    width = basis.width
    pts = [p for p in breakpoints if basis.x_lower < p < basis.x_upper]
    nu = np.empty(basis.mode_count)
    for i, zeta in enumerate(basis.frequencies):
        val, err = quad(
            lambda x: float(payoff(x)) * math.sin(zeta * (x - basis.x_lower)),
            basis.x_lower, basis.x_upper,
            points=pts or None, limit=max(200, 20 * (i + 1)),
            epsabs=1e-13, epsrel=1e-12)
        if err > 1e-7 * max(1.0, abs(val)):
            raise RuntimeError(
                f"payoff projection did not converge for mode {i + 1}")
        nu[i] = 2.0 * val / width
    return nu


def dnt_projection(basis: SineBasis, problem: TransformedProblem) -> np.ndarray:
    """Closed-form coefficients of the no-touch terminal data.

    The transformed payoff phi = 1/sqrt(sigma) satisfies phi'' = omega*phi,
    so integrating against e_k by parts twice leaves only endpoint terms:

        nu_k = (2/width) * zeta_k * (phi(X_L) + (-1)^(k+1) * phi(X_U)) / Lam_k.
    """
    if problem.kind != "double-no-touch":
        raise ValueError("closed-form projection applies to no-touch payoffs")
    if not (math.isclose(basis.x_lower, problem.x1_lower)
            and math.isclose(basis.x_upper, problem.x1_upper)):
        raise ValueError("basis interval must coincide with the barriers")
    phi_lo = float(problem.payoff(problem.x1_lower))
    phi_hi = float(problem.payoff(problem.x1_upper))
    k = np.arange(1, basis.mode_count + 1)
    sign = np.where(k % 2 == 1, 1.0, -1.0)
    lam = basis.eigenvalues(problem.omega)
    return 2.0 * basis.frequencies * (phi_lo + sign * phi_hi) / (basis.width * lam)


def coupling_matrix(model: QlsvModel, basis: SineBasis) -> np.ndarray:
    """Projection of the correlation source's spatial factor.

    Entry [k, l] weighs how source mode k feeds receiving equation l:
    (2/width) * integral of (e_k' + drift_shape * e_k) * e_l.  The
    derivative part has the closed form 2*k*l*((-1)^(k-l) - 1) /
    ((k^2 - l^2) * width); the drift-shape part is diagonal for the constant
    shapes (1/2, or beta/2) and is integrated numerically for the
    trigonometric shapes, whose divergence at the domain end is tamed by the
    vanishing basis functions.
    """
    m_count = basis.mode_count
    width = basis.width
    k = np.arange(1, m_count + 1)
    kk, ll = np.meshgrid(k, k, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        mu_hat = 2.0 * kk * ll * ((-1.0) ** (kk - ll) - 1.0) / (
            (kk**2 - ll**2) * width)
    np.fill_diagonal(mu_hat, 0.0)

    label = model.vol_class
    if label == "proportional":
        mu_bar = 0.5 * np.eye(m_count)
    elif label == "affine":
        mu_bar = 0.5 * model.beta * np.eye(m_count)
    else:
        shape = model.map.drift_shape
        zeta = basis.frequencies
        x_lo = basis.x_lower
        singular_end = math.isclose(basis.x_upper, model.map.x_upper)
        cut = basis.x_upper - (0.05 * width if singular_end else 0.0)
        mu_bar = np.empty((m_count, m_count))
        for i in range(m_count):
            for j in range(i, m_count):
                def integrand(x, zi=zeta[i], zj=zeta[j]):
                    return (float(shape(x)) * math.sin(zi * (x - x_lo))
                            * math.sin(zj * (x - x_lo)))
                val, err = quad(integrand, x_lo, cut, limit=300,
                                epsabs=1e-11, epsrel=1e-10)
                if singular_end:
                    tail, terr = quad(integrand, cut, basis.x_upper,
                                      limit=300, epsabs=1e-11, epsrel=1e-10)
                    val, err = val + tail, err + terr
                if err > 1e-6 * max(1.0, abs(val)):
                    raise RuntimeError(
                        f"shape projection failed for modes {i+1},{j+1}")
                mu_bar[i, j] = mu_bar[j, i] = 2.0 * val / width
    return mu_hat + mu_bar


# --------------------------------------------------------------------------- #
# System assembly and evolution
# --------------------------------------------------------------------------- #

@dataclass
class GalerkinSystem:
    """Projected mode system: eigen-weights, couplings, payoff coefficients,
    and one banded variance-direction operator per mode."""

    basis: SineBasis
    model: QlsvModel
    lam: np.ndarray
    coupling: np.ndarray
    nu: np.ndarray
    grid: Grid1D
    operators: List[BandedOperator]


@dataclass
class ModeSolution:
    """Per-mode amplitudes U_k(tau, x2) on the variance grid."""

    amplitudes: np.ndarray   # (M, n2)
    grid: Grid1D
    tau: float
    meta: dict = field(default_factory=dict)


def build_system(problem: TransformedProblem, basis: SineBasis,
                 variance_grid: Grid1D,
                 projection: str = "auto") -> GalerkinSystem:
    """Assemble the mode system for a barrier problem.

    ``projection`` picks the payoff coefficients: "auto" uses the no-touch
    closed form when available and quadrature otherwise; "quadrature"
    forces the numerical path.
    """
    if problem.lower_bc != "dirichlet" or problem.upper_bc != "dirichlet":
        raise ValueError("mode reduction needs value-pinned barriers at "
                         "both interval ends")
    model = problem.model
    lam = basis.eigenvalues(model.omega)
    if projection == "auto" and problem.kind == "double-no-touch":
        nu = dnt_projection(basis, problem)
    elif projection in ("auto", "quadrature"):
        breaks = ()
        if problem.strike is not None:
            breaks = (float(model.map.to_coord(problem.strike)),)
        nu = project_payoff(basis, problem.payoff, breakpoints=breaks)
    else:
        raise ValueError(f"unknown projection mode {projection!r}")
    eps2 = model.epsilon**2
    kappa = model.kappa
    operators = [
        assemble_1d(variance_grid,
                    a=lambda x: eps2 * x,
                    b=lambda x: kappa * (1.0 - x),
                    c=lambda x, lk=lam_k: 0.5 * lk * x,
                    lower_bc="endogenous", upper_bc="endogenous")
        for lam_k in lam
    ]
    return GalerkinSystem(basis=basis, model=model, lam=lam,
                          coupling=coupling_matrix(model, basis),
                          nu=nu, grid=variance_grid, operators=operators)


def _derivative_matrix(grid: Grid1D) -> np.ndarray:
    """Dense first-derivative matrix: centered interior, 3-point ends."""
    stencils = first_derivative_stencils(grid)
    n = grid.size
    mat = np.zeros((n, n))
    rows = np.arange(1, n - 1)
    for col in range(3):
        mat[rows, rows - 1 + col] = stencils["center"][:, col]
    mat[0, :3] = stencils["forward"]
    mat[-1, -3:] = stencils["backward"]
    return mat


def evolve(system: GalerkinSystem, nu: np.ndarray, tau: float,
           n_steps: int, theta: float = 0.5) -> ModeSolution:
    """March the coupled mode equations to tau.

    Each step solves M independent banded systems (I - theta*dtau*L_k);
    the correlation source rho*eps*x2*d/dx2 of the coupling-mixed previous
    iterate enters explicitly.
    """
    if n_steps < 1:
        raise ValueError("need at least one step")
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (system.basis.mode_count,):
        raise ValueError("initial coefficients do not match the mode count")
    dtau = tau / n_steps
    x2 = system.grid.nodes
    n2 = system.grid.size
    amplitudes = np.repeat(nu[:, None], n2, axis=1)

    lus = [BandedLU(op.scaled(-theta * dtau).plus_identity())
           for op in system.operators]
    source_gain = system.model.rho * system.model.epsilon
    deriv = _derivative_matrix(system.grid) if source_gain != 0.0 else None
    mix_weights = system.coupling.T if source_gain != 0.0 else None

    started = perf_counter()
    for _ in range(n_steps):
        if source_gain != 0.0:
            mixed = mix_weights @ amplitudes
            source = source_gain * x2[None, :] * (mixed @ deriv.T)
        new = np.empty_like(amplitudes)
        for k, (op, lu) in enumerate(zip(system.operators, lus)):
            rhs = amplitudes[k] + (1.0 - theta) * dtau * op.apply(amplitudes[k])
            if source_gain != 0.0:
                rhs = rhs + dtau * source[k]
            new[k] = lu.solve(rhs)
        amplitudes = new
    elapsed = perf_counter() - started

    return ModeSolution(amplitudes=amplitudes, grid=system.grid, tau=tau,
                        meta={"method": "galerkin", "steps": n_steps,
                              "theta": theta,
                              "modes": system.basis.mode_count,
                              "solve_seconds": elapsed})


def exact_mode_solution(lam, x2, tau: float, kappa: float,
                        epsilon: float) -> np.ndarray:
    """Uncorrelated mode amplitude exp(A + B*x2) from unit initial data."""
    x2 = np.asarray(x2, dtype=float)
    a_val, b_val = affine_AB(tau, lam, 0.0, kappa, kappa, epsilon)
    return np.exp(a_val + b_val * x2)


def reconstruct(solution: ModeSolution, basis: SineBasis,
                x1_grid: Union[Grid1D, np.ndarray]) -> PriceSurface:
    """Sum the mode amplitudes against the basis on an x1 grid."""
    g1 = x1_grid if isinstance(x1_grid, Grid1D) else Grid1D(
        np.asarray(x1_grid, dtype=float))
    values = basis.evaluate(g1.nodes).T @ solution.amplitudes
    grid = Grid2D(g1, solution.grid)
    meta = dict(solution.meta)
    meta.setdefault("method", "galerkin")
    return PriceSurface(grid=grid, values=values, tau=solution.tau, meta=meta)
