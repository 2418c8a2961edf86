"""Time propagation of the split spatial operator.

Three propagation families share the split-operator assembly:

  * explicit stepping  U <- U + dtau*L*U,
  * fast exponentiation  U_N = P^N U_0 with P = I + dtau*L computed by
    log2(N) dense matrix squarings (small problems only),
  * alternating-direction implicit (ADI) predictor-corrector schemes
    "do", "cs", "hw", "hv", treating each direction implicitly in turn and
    the cross term explicitly.

Scheme notes.  "do" is the single-sweep predictor (first order in time);
"cs" re-centers only the cross term and is second order at theta = 1/2;
"hw" adds the (1/2 - theta) re-centering of both directional operators and
is second order for any theta; "hv" re-centers with the full operator and
solves its corrector sweeps against the predictor output (second order for
any theta; centering them on U_n instead would drop it to first order).
Implicit sweeps are banded solves in direction-fastest orderings, factored
once per run since the time step is constant.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from qlsvlab.discretize import BandedLU, BandedOperator, Grid2D, OperatorSplit
from qlsvlab.model import TransformedProblem

SCHEME_DEFAULT_THETA = {
    "do": 0.5,
    "cs": 0.5,
    "hw": 1.0 / 3.0,
    "hv": 0.5 * (1.0 + math.sqrt(1.0 / 3.0)),
}

__all__ = [
    "SCHEME_DEFAULT_THETA",
    "PriceSurface",
    "initial_surface",
    "run_explicit",
    "run_fast_exponentiation",
    "run_adi",
]


@dataclass
class PriceSurface:
    """Nodal solution values on a tensor grid after propagation to tau."""

    grid: Grid2D
    values: np.ndarray
    tau: float
    meta: dict = field(default_factory=dict)

    def interpolate(self, x1, x2) -> np.ndarray:
        """Cubic tensor-spline evaluation at points (broadcast pairs)."""
        from scipy.interpolate import RegularGridInterpolator
        itp = RegularGridInterpolator(
            (self.grid.g1.nodes, self.grid.g2.nodes), self.values,
            method="cubic", bounds_error=True)
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        pts = np.stack(np.broadcast_arrays(x1, x2), axis=-1)
        return itp(pts)

    def line_at_x2(self, x2: float) -> np.ndarray:
        """Values along direction 1 at a fixed variance level."""
        return self.interpolate(self.grid.g1.nodes, x2)


def initial_surface(problem: TransformedProblem, grid: Grid2D) -> np.ndarray:
    """Terminal data on the grid: payoff in x1, flat in x2, Dirichlet edges
    set to the (zero) boundary data."""
    u0 = problem.payoff(grid.g1.nodes)
    values = np.repeat(u0[:, None], grid.g2.size, axis=1)
    if problem.lower_bc == "dirichlet":
        values[0, :] = 0.0
    if problem.upper_bc == "dirichlet":
        values[-1, :] = 0.0
    return values


# --------------------------------------------------------------------------- #
# Explicit family
# --------------------------------------------------------------------------- #

def run_explicit(split: OperatorSplit, values: np.ndarray, tau: float,
                 steps: int) -> PriceSurface:
    """Forward-Euler propagation (conditionally stable; small problems)."""
    grid = split.grid
    dtau = tau / steps
    mat = split.evolution_matrix_full()
    u = grid.flatten(values)
    t0 = time.perf_counter()
    for _ in range(steps):
        u = u + dtau * (mat @ u)
    seconds = time.perf_counter() - t0
    return PriceSurface(grid, grid.unflatten(u), tau,
                        meta={"scheme": "explicit", "steps": steps,
                              "solve_seconds": seconds})


def run_fast_exponentiation(split: OperatorSplit, values: np.ndarray,
                            tau: float, steps: int,
                            dense_cutoff: int = 4096) -> PriceSurface:
    """Propagate by squaring the one-step map: P^N with N = 2^m.

    Equivalent to ``run_explicit`` up to float roundoff, but costs m dense
    matrix squarings instead of N matrix-vector products.  Squaring fills
    the sparsity in, so the map is held dense; problems larger than
    ``dense_cutoff`` unknowns are rejected.
    """
    grid = split.grid
    n = grid.flat_size
    if n > dense_cutoff:
        raise ValueError(
            f"fast exponentiation holds a dense {n}x{n} map; "
            f"limit is {dense_cutoff} unknowns")
    m = int(round(math.log2(steps)))
    if 2 ** m != steps:
        raise ValueError("step count must be a power of two")
    dtau = tau / steps
    t0 = time.perf_counter()
    power = sp.identity(n, format="csr") + dtau * split.evolution_matrix_full()
    power = power.toarray()
    for _ in range(m):
        power = power @ power
    u = power @ grid.flatten(values)
    seconds = time.perf_counter() - t0
    return PriceSurface(grid, grid.unflatten(u), tau,
                        meta={"scheme": "fastexp", "steps": steps,
                              "squarings": m, "solve_seconds": seconds})


# --------------------------------------------------------------------------- #
# ADI family
# --------------------------------------------------------------------------- #

class _Direction2Solver:
    """Banded solve of the direction-2 step matrix via transposed layout."""

    def __init__(self, split: OperatorSplit, scale: float) -> None:
        bands = scale * split.evolution_bands_2()
        bands[bands.shape[0] // 2] += 1.0
        self._lu = BandedLU(BandedOperator(bands.shape[1], bands))
        self._shape = split.grid.shape

    def solve(self, rhs_flat: np.ndarray) -> np.ndarray:
        n1, n2 = self._shape
        rhs_t = rhs_flat.reshape((n1, n2), order="F").ravel(order="C")
        sol_t = self._lu.solve(rhs_t)
        return sol_t.reshape((n1, n2), order="C").ravel(order="F")


def run_adi(split: OperatorSplit, values: np.ndarray, tau: float, steps: int,
            scheme: str = "cs", theta: Optional[float] = None) -> PriceSurface:
    """Predictor-corrector ADI propagation to tau in ``steps`` equal steps."""
    scheme = scheme.lower()
    if scheme not in SCHEME_DEFAULT_THETA:
        raise ValueError(f"unknown scheme {scheme!r}")
    th = SCHEME_DEFAULT_THETA[scheme] if theta is None else float(theta)
    grid = split.grid
    dtau = tau / steps

    mat1 = split.evolution_matrix_1()
    mat2 = split.evolution_matrix_2()
    matx = split.matrix_cross()

    bands1 = -th * dtau * split.evolution_bands_1()
    bands1[bands1.shape[0] // 2] += 1.0
    lu1 = BandedLU(BandedOperator(bands1.shape[1], bands1))
    lu2 = _Direction2Solver(split, -th * dtau)

    u = grid.flatten(values)
    t0 = time.perf_counter()
    for _ in range(steps):
        mv1 = mat1 @ u
        mv2 = mat2 @ u
        mvx = matx @ u
        y0 = u + dtau * (mv1 + mv2 + mvx)
        y1 = lu1.solve(y0 - th * dtau * mv1)
        y2 = lu2.solve(y1 - th * dtau * mv2)
        if scheme == "do":
            u = y2
            continue
        diff = y2 - u
        if scheme == "cs":
            yt0 = y0 + 0.5 * dtau * (matx @ diff)
            c1, c2 = mv1, mv2
        elif scheme == "hw":
            yt0 = y0 + dtau * ((0.5 - th) * (mat1 @ diff + mat2 @ diff)
                               + 0.5 * (matx @ diff))
            c1, c2 = mv1, mv2
        else:  # hv: full-operator re-centering, corrector sweeps against y2
            yt0 = y0 + 0.5 * dtau * (mat1 @ diff + mat2 @ diff + matx @ diff)
            c1, c2 = mat1 @ y2, mat2 @ y2
        yt1 = lu1.solve(yt0 - th * dtau * c1)
        u = lu2.solve(yt1 - th * dtau * c2)
    seconds = time.perf_counter() - t0
    return PriceSurface(grid, grid.unflatten(u), tau,
                        meta={"scheme": scheme, "steps": steps, "theta": th,
                              "solve_seconds": seconds})
