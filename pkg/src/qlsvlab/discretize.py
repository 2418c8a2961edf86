"""Non-uniform grids, second-order stencils, banded operators, split assembly.

Spatial operators act on tensor-product grids.  One-dimensional operators of
the form L = 0.5*a(x)*d2/dx2 + b(x)*d/dx - c(x) are stored banded with three
bands on each side of the diagonal: interior rows are tridiagonal (centered
stencils) while endogenous boundary rows use one-sided stencils reaching
three neighbors inward, so the widest row has four entries.

Two boundary closures are supported per end:

    "endogenous"  the operator row itself, built from one-sided stencils,
                  closes the system (no exogenous data needed);
    "dirichlet"   the row is a unit row; with zero boundary data every
                  stepper then preserves the boundary values exactly.

Two-dimensional operators are kept split into a family of direction-1
operators (one per x2 node), a family of direction-2 operators (one per x1
node) and a nine-point cross operator whose rows vanish at every boundary
node.  Flattened sparse/banded views use direction-1-fastest ordering,
flat = i1 + i2*(I1+1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack as _lapack

from qlsvlab.model import TransformedProblem

_HALF_BANDWIDTH = 3
_OFFSETS = tuple(range(-_HALF_BANDWIDTH, _HALF_BANDWIDTH + 1))

__all__ = [
    "Grid1D",
    "Grid2D",
    "BandedOperator",
    "BandedLU",
    "CrossOperator",
    "OperatorSplit",
    "first_derivative_stencils",
    "second_derivative_stencils",
    "assemble_1d",
    "assemble_split",
    "assemble_qlsv_split",
]


# --------------------------------------------------------------------------- #
# Grids
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Grid1D:
    """Strictly increasing nodes x_0 .. x_I, at least five of them."""

    nodes: np.ndarray

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 5:
            raise ValueError("grid needs at least five nodes")
        if not np.all(np.diff(nodes) > 0.0):
            raise ValueError("grid nodes must increase strictly")

    @classmethod
    def uniform(cls, lo: float, hi: float, cells: int) -> "Grid1D":
        return cls(np.linspace(lo, hi, cells + 1))

    @classmethod
    def sqrt_spaced(cls, hi: float, cells: int) -> "Grid1D":
        """Nodes uniform in sqrt(x): x_j = hi*(j/cells)^2, starting at 0."""
        j = np.arange(cells + 1, dtype=float)
        return cls(hi * (j / cells) ** 2)

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def lo(self) -> float:
        return float(self.nodes[0])

    @property
    def hi(self) -> float:
        return float(self.nodes[-1])


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid: g1 along direction 1, g2 along direction 2 (g2 >= 0)."""

    g1: Grid1D
    g2: Grid1D

    def __post_init__(self) -> None:
        if self.g2.lo < 0.0:
            raise ValueError("direction-2 grid must be non-negative")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.g1.size, self.g2.size)

    @property
    def flat_size(self) -> int:
        return self.g1.size * self.g2.size

    def meshes(self) -> Tuple[np.ndarray, np.ndarray]:
        """(x1, x2) arrays of shape ``shape`` (direction 1 on axis 0)."""
        return np.meshgrid(self.g1.nodes, self.g2.nodes, indexing="ij")

    def flatten(self, values: np.ndarray) -> np.ndarray:
        """Flatten a (size1, size2) array with direction 1 fastest."""
        return np.asarray(values, dtype=float).reshape(self.shape).ravel(order="F")

    def unflatten(self, flat: np.ndarray) -> np.ndarray:
        return np.asarray(flat, dtype=float).reshape(self.shape, order="F")


# --------------------------------------------------------------------------- #
# Stencil weights
# --------------------------------------------------------------------------- #

def first_derivative_stencils(grid: Grid1D) -> dict:
    """Second-order first-derivative weights on a non-uniform grid.

    Returns ``center`` of shape (size-2, 3) for interior nodes (neighbors
    i-1, i, i+1), plus 3-point one-sided rows ``forward`` (nodes 0,1,2) and
    ``backward`` (nodes I-2, I-1, I).  Every row sums to zero.
    """
    x = grid.nodes
    d = np.diff(x)
    dm, dp = d[:-1], d[1:]
    center = np.stack([
        -dp / (dm * (dm + dp)),
        (dp - dm) / (dm * dp),
        dm / (dp * (dm + dp)),
    ], axis=1)
    d10, d21 = x[1] - x[0], x[2] - x[1]
    d20 = x[2] - x[0]
    forward = np.array([
        -(d10 + d20) / (d10 * d20),
        d20 / (d10 * d21),
        -d10 / (d21 * d20),
    ])
    e1, e2 = x[-1] - x[-2], x[-2] - x[-3]
    e20 = x[-1] - x[-3]
    backward = np.array([
        e1 / (e2 * e20),
        -e20 / (e2 * e1),
        (e1 + e20) / (e1 * e20),
    ])
    return {"center": center, "forward": forward, "backward": backward}


def second_derivative_stencils(grid: Grid1D) -> dict:
    """Second-derivative weights on a non-uniform grid.

    ``center`` (shape (size-2, 3)) encodes HALF the second derivative, so
    that multiplying by the diffusion coefficient a(x) of
    L = 0.5*a*f'' + ... gives the operator row directly.  ``forward`` and
    ``backward`` are 4-point one-sided rows encoding the FULL second
    derivative (exact through cubics); assembly halves them.  Every row sums
    to zero.
    """
    x = grid.nodes
    d = np.diff(x)
    dm, dp = d[:-1], d[1:]
    ds = dm + dp
    center = np.stack([
        1.0 / (dm * ds),
        -1.0 / (dm * dp),
        1.0 / (dp * ds),
    ], axis=1)

    def onesided(x0, x1, x2, x3):
        g1, g2, g3 = x1 - x0, x2 - x0, x3 - x0
        k1 = (g2 + g3) / (g1 * (g2 - g1) * (g3 - g1))
        k2 = -(g1 + g3) / (g2 * (g2 - g1) * (g3 - g2))
        k3 = (g1 + g2) / (g3 * (g3 - g1) * (g3 - g2))
        return 2.0 * np.array([k1 + k2 + k3, -k1, -k2, -k3])

    forward = onesided(x[0], x[1], x[2], x[3])
    backward = onesided(x[-1], x[-2], x[-3], x[-4])[::-1].copy()
    return {"center": center, "forward": forward, "backward": backward}


# --------------------------------------------------------------------------- #
# Banded operators
# --------------------------------------------------------------------------- #

class BandedOperator:
    """Square operator with up to three bands on each side of the diagonal.

    Storage is row-aligned: ``diags[k, i]`` is the matrix entry in row i,
    column i + (k - 3), for k = 0..6.  Entries whose column falls outside
    the matrix are kept at zero.
    """

    def __init__(self, size: int, diags: Optional[np.ndarray] = None) -> None:
        self.size = size
        if diags is None:
            diags = np.zeros((len(_OFFSETS), size))
        self.diags = diags
        # which ends hold fixed (Dirichlet) data; set by the assembler
        self.dirichlet_ends = (False, False)

    # -- construction helpers ------------------------------------------------

    def set_row(self, i: int, offsets: Sequence[int], weights: Sequence[float]) -> None:
        self.diags[:, i] = 0.0
        for o, w in zip(offsets, weights):
            if abs(o) > _HALF_BANDWIDTH:
                raise ValueError("offset outside band")
            self.diags[o + _HALF_BANDWIDTH, i] = w

    def copy(self) -> "BandedOperator":
        out = BandedOperator(self.size, self.diags.copy())
        out.dirichlet_ends = self.dirichlet_ends
        return out

    def scaled(self, factor: float) -> "BandedOperator":
        return BandedOperator(self.size, self.diags * factor)

    def plus_identity(self, shift: float = 1.0) -> "BandedOperator":
        out = self.copy()
        out.diags[_HALF_BANDWIDTH] += shift
        return out

    def add(self, other: "BandedOperator") -> "BandedOperator":
        return BandedOperator(self.size, self.diags + other.diags)

    # -- actions --------------------------------------------------------------

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Matrix-vector product; also works column-wise on 2-D input."""
        f = np.asarray(f, dtype=float)
        y = np.zeros_like(f)
        n = self.size
        for k, o in enumerate(_OFFSETS):
            lo, hi = max(0, -o), n - max(0, o)
            if hi > lo:
                w = self.diags[k, lo:hi]
                if f.ndim == 2:
                    y[lo:hi] += w[:, None] * f[lo + o:hi + o]
                else:
                    y[lo:hi] += w * f[lo + o:hi + o]
        return y

    def solver_bands(self) -> np.ndarray:
        """Bands in the diagonal-ordered layout used by banded solvers."""
        n = self.size
        ab = np.zeros((len(_OFFSETS), n))
        for k, o in enumerate(_OFFSETS):
            lo, hi = max(0, -o), n - max(0, o)
            if hi > lo:
                ab[_HALF_BANDWIDTH - o, lo + o:hi + o] = self.diags[k, lo:hi]
        return ab

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return sla.solve_banded((_HALF_BANDWIDTH, _HALF_BANDWIDTH),
                                self.solver_bands(), rhs)

    def matrix(self) -> sp.csr_matrix:
        n = self.size
        rows, cols, vals = [], [], []
        for k, o in enumerate(_OFFSETS):
            lo, hi = max(0, -o), n - max(0, o)
            i = np.arange(lo, hi)
            rows.append(i)
            cols.append(i + o)
            vals.append(self.diags[k, lo:hi])
        return sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n))


class BandedLU:
    """LU factorization of a banded matrix, factored once, solved many times."""

    def __init__(self, op_or_bands: Union[BandedOperator, np.ndarray],
                 size: Optional[int] = None) -> None:
        if isinstance(op_or_bands, BandedOperator):
            ab = op_or_bands.solver_bands()
            n = op_or_bands.size
        else:
            ab = np.asarray(op_or_bands, dtype=float)
            n = size if size is not None else ab.shape[1]
        kl = ku = _HALF_BANDWIDTH
        work = np.zeros((2 * kl + ku + 1, n))
        work[kl:, :] = ab
        lu, piv, info = _lapack.dgbtrf(work, kl, ku)
        if info != 0:
            raise np.linalg.LinAlgError(f"banded LU failed (info={info})")
        self._lu, self._piv, self._kl, self._ku = lu, piv, kl, ku

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x, info = _lapack.dgbtrs(self._lu, self._kl, self._ku, rhs, self._piv)
        if info != 0:
            raise np.linalg.LinAlgError(f"banded solve failed (info={info})")
        return x


def stack_block_bands(ops: Sequence[BandedOperator]) -> np.ndarray:
    """Row-aligned bands of the block-diagonal matrix diag(ops).

    Valid because each operator's rows never reach outside its own block;
    the result feeds ``BandedLU`` or a banded matvec over the concatenated
    unknowns.
    """
    return np.concatenate([op.diags for op in ops], axis=1)


def banded_apply(diags: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Matvec for row-aligned bands of any size (vector input)."""
    n = diags.shape[1]
    y = np.zeros_like(f)
    for k, o in enumerate(_OFFSETS):
        lo, hi = max(0, -o), n - max(0, o)
        if hi > lo:
            y[lo:hi] += diags[k, lo:hi] * f[lo + o:hi + o]
    return y


# --------------------------------------------------------------------------- #
# One-dimensional assembly
# --------------------------------------------------------------------------- #

def _coef_values(coef, nodes: np.ndarray) -> np.ndarray:
    if callable(coef):
        return np.broadcast_to(np.asarray(coef(nodes), dtype=float), nodes.shape).copy()
    arr = np.asarray(coef, dtype=float)
    if arr.ndim == 0:
        return np.full(nodes.shape, float(arr))
    if arr.shape != nodes.shape:
        raise ValueError("coefficient array does not match the grid")
    return arr


def assemble_1d(grid: Grid1D, a, b, c, lower_bc: str = "endogenous",
                upper_bc: str = "endogenous") -> BandedOperator:
    """Discretize L = 0.5*a(x)*f'' + b(x)*f' - c(x)*f on the grid.

    ``a, b, c`` may be scalars, node arrays, or callables of the nodes.
    Interior rows are centered; "endogenous" ends use one-sided rows of the
    same operator (the full one-sided curvature weights are halved here so
    the boundary rows carry the same 0.5*a factor as the interior ones);
    "dirichlet" ends get unit rows.
    """
    x = grid.nodes
    n = grid.size
    av, bv, cv = (_coef_values(v, x) for v in (a, b, c))
    xi = first_derivative_stencils(grid)
    eta = second_derivative_stencils(grid)

    op = BandedOperator(n)
    interior = np.arange(1, n - 1)
    for col, o in enumerate((-1, 0, 1)):
        op.diags[o + _HALF_BANDWIDTH, interior] = (
            av[interior] * eta["center"][:, col]
            + bv[interior] * xi["center"][:, col])
    op.diags[_HALF_BANDWIDTH, interior] -= cv[interior]

    if lower_bc == "endogenous":
        row = 0.5 * av[0] * eta["forward"]
        row[:3] += bv[0] * xi["forward"]
        row[0] -= cv[0]
        op.set_row(0, (0, 1, 2, 3), row)
    elif lower_bc == "dirichlet":
        op.set_row(0, (0,), (1.0,))
    else:
        raise ValueError(f"unknown boundary mode {lower_bc!r}")

    if upper_bc == "endogenous":
        row = 0.5 * av[-1] * eta["backward"]
        row[1:] += bv[-1] * xi["backward"]
        row[-1] -= cv[-1]
        op.set_row(n - 1, (-3, -2, -1, 0), row)
    elif upper_bc == "dirichlet":
        op.set_row(n - 1, (0,), (1.0,))
    else:
        raise ValueError(f"unknown boundary mode {upper_bc!r}")
    op.dirichlet_ends = (lower_bc == "dirichlet", upper_bc == "dirichlet")
    return op


# --------------------------------------------------------------------------- #
# Cross operator
# --------------------------------------------------------------------------- #

class CrossOperator:
    """Mixed-derivative operator coeff(x1,x2) * d2/dx1 dx2.

    Weights factor as the tensor product of per-node first-derivative
    stencils: centered at interior nodes, and one-sided along any boundary
    side flagged in ``onesided_sides`` (a ((low1, high1), (low2, high2))
    quadruple) so the row stays a consistent discretization of the same
    operator at endogenously closed edges.  Rows at unflagged boundary
    nodes are identically zero, which keeps Dirichlet nodes untouched.
    """

    def __init__(self, grid: Grid2D, coeff,
                 onesided_sides: Tuple[Tuple[bool, bool], Tuple[bool, bool]]
                 = ((False, False), (False, False))) -> None:
        self.grid = grid
        n1, n2 = grid.shape
        x1m, x2m = grid.meshes()
        cv = np.asarray(coeff(x1m, x2m) if callable(coeff) else coeff, dtype=float)
        cv = np.broadcast_to(cv, (n1, n2))
        s1 = self._node_stencils(grid.g1, onesided_sides[0])
        s2 = self._node_stencils(grid.g2, onesided_sides[1])
        # (n1, n2, 5, 5) over offsets -2..2 in each direction
        self.weights = (cv[:, :, None, None]
                        * s1[:, None, :, None] * s2[None, :, None, :])
        self._mat: Optional[sp.csr_matrix] = None

    @staticmethod
    def _node_stencils(grid: Grid1D, flags: Tuple[bool, bool]) -> np.ndarray:
        """Per-node first-derivative rows over offsets -2..2 (zero = no row)."""
        xi = first_derivative_stencils(grid)
        rows = np.zeros((grid.size, 5))
        rows[1:-1, 1:4] = xi["center"]
        if flags[0]:
            rows[0, 2:5] = xi["forward"]
        if flags[1]:
            rows[-1, 0:3] = xi["backward"]
        return rows

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Apply to a (size1, size2) array of nodal values."""
        v = np.asarray(values, dtype=float)
        flat = self.matrix() @ v.ravel(order="F")
        return flat.reshape(self.grid.shape, order="F")

    def matrix(self) -> sp.csr_matrix:
        """Flattened sparse view (direction 1 fastest)."""
        if self._mat is None:
            n1, _ = self.grid.shape
            i1, i2, a1, a2 = np.nonzero(self.weights)
            rows = i1 + i2 * n1
            cols = (i1 + a1 - 2) + (i2 + a2 - 2) * n1
            mat = sp.csr_matrix(
                (self.weights[i1, i2, a1, a2], (rows, cols)),
                shape=(self.grid.flat_size, self.grid.flat_size))
            mat.eliminate_zeros()
            self._mat = mat
        return self._mat


# --------------------------------------------------------------------------- #
# Split two-dimensional assembly
# --------------------------------------------------------------------------- #

@dataclass
class OperatorSplit:
    """Split spatial operator L = L1 + L2 + Lx on a tensor grid.

    ``l1_levels[j]`` acts along direction 1 at x2 node j; ``l2_lines[i]``
    acts along direction 2 at x1 node i; ``cross`` couples the directions.
    Flat sparse/banded views use direction-1-fastest ordering.
    """

    grid: Grid2D
    l1_levels: List[BandedOperator]
    l2_lines: List[BandedOperator]
    cross: CrossOperator
    _cache: dict = field(default_factory=dict, repr=False)

    # banded views: direction 1 solves batch into one block-banded system in
    # flat order; direction 2 solves do the same in transposed flat order.

    def bands_1(self) -> np.ndarray:
        if "b1" not in self._cache:
            self._cache["b1"] = stack_block_bands(self.l1_levels)
        return self._cache["b1"]

    def bands_2(self) -> np.ndarray:
        if "b2" not in self._cache:
            self._cache["b2"] = stack_block_bands(self.l2_lines)
        return self._cache["b2"]

    def apply_1(self, values: np.ndarray) -> np.ndarray:
        """Apply the direction-1 family to (size1, size2) nodal values."""
        out = np.empty_like(values)
        for j, op in enumerate(self.l1_levels):
            out[:, j] = op.apply(values[:, j])
        return out

    def apply_2(self, values: np.ndarray) -> np.ndarray:
        out = np.empty_like(values)
        for i, op in enumerate(self.l2_lines):
            out[i, :] = op.apply(values[i, :])
        return out

    def apply_cross(self, values: np.ndarray) -> np.ndarray:
        return self.cross.apply(values)

    def apply_full(self, values: np.ndarray) -> np.ndarray:
        return self.apply_1(values) + self.apply_2(values) + self.apply_cross(values)

    def matrix_1(self) -> sp.csr_matrix:
        if "m1" not in self._cache:
            self._cache["m1"] = sp.block_diag(
                [op.matrix() for op in self.l1_levels], format="csr")
        return self._cache["m1"]

    def matrix_2(self) -> sp.csr_matrix:
        if "m2" not in self._cache:
            n1, n2 = self.grid.shape
            perm = _transpose_permutation(n1, n2)
            block = sp.block_diag([op.matrix() for op in self.l2_lines],
                                  format="csr")
            self._cache["m2"] = block[perm][:, perm].tocsr()
        return self._cache["m2"]

    def matrix_cross(self) -> sp.csr_matrix:
        if "mx" not in self._cache:
            self._cache["mx"] = self.cross.matrix()
        return self._cache["mx"]

    # -- propagation views ----------------------------------------------------
    #
    # Time stepping treats Dirichlet nodes as frozen unknowns: their operator
    # rows are removed so every one-step map (explicit or implicit) has an
    # exact unit row there, and their couplings are removed from the banded
    # solve matrices so LU pivoting cannot smear roundoff into them.  Valid
    # because the Dirichlet data is zero (held constant); the raw views above
    # keep the unit rows.

    def dirichlet_mask(self) -> np.ndarray:
        """Boolean (size1, size2) marker of nodes holding fixed data."""
        if "dmask" not in self._cache:
            n1, n2 = self.grid.shape
            mask = np.zeros((n1, n2), dtype=bool)
            for j, op in enumerate(self.l1_levels):
                mask[0, j] |= op.dirichlet_ends[0]
                mask[n1 - 1, j] |= op.dirichlet_ends[1]
            for i, op in enumerate(self.l2_lines):
                mask[i, 0] |= op.dirichlet_ends[0]
                mask[i, n2 - 1] |= op.dirichlet_ends[1]
            self._cache["dmask"] = mask
        return self._cache["dmask"]

    def evolution_bands_1(self) -> np.ndarray:
        if "eb1" not in self._cache:
            idx = np.flatnonzero(self.dirichlet_mask().ravel(order="F"))
            self._cache["eb1"] = _freeze_nodes_in_bands(self.bands_1(), idx)
        return self._cache["eb1"]

    def evolution_bands_2(self) -> np.ndarray:
        if "eb2" not in self._cache:
            idx = np.flatnonzero(self.dirichlet_mask().ravel(order="C"))
            self._cache["eb2"] = _freeze_nodes_in_bands(self.bands_2(), idx)
        return self._cache["eb2"]

    def _keep_diagonal(self) -> sp.dia_matrix:
        keep = np.where(self.dirichlet_mask().ravel(order="F"), 0.0, 1.0)
        return sp.diags(keep)

    def evolution_matrix_1(self) -> sp.csr_matrix:
        if "em1" not in self._cache:
            self._cache["em1"] = (self._keep_diagonal()
                                  @ self.matrix_1()).tocsr()
        return self._cache["em1"]

    def evolution_matrix_2(self) -> sp.csr_matrix:
        if "em2" not in self._cache:
            self._cache["em2"] = (self._keep_diagonal()
                                  @ self.matrix_2()).tocsr()
        return self._cache["em2"]

    def evolution_matrix_full(self) -> sp.csr_matrix:
        if "emf" not in self._cache:
            self._cache["emf"] = (self.evolution_matrix_1()
                                  + self.evolution_matrix_2()
                                  + self.matrix_cross()).tocsr()
        return self._cache["emf"]

    def matrix_full(self) -> sp.csr_matrix:
        if "mf" not in self._cache:
            self._cache["mf"] = (self.matrix_1() + self.matrix_2()
                                 + self.matrix_cross()).tocsr()
        return self._cache["mf"]


def _freeze_nodes_in_bands(bands: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Zero the rows and columns of the listed unknowns in row-aligned bands."""
    out = bands.copy()
    out[:, idx] = 0.0
    n = out.shape[1]
    for k, o in enumerate(_OFFSETS):
        if o == 0:
            continue
        rows = idx - o
        ok = (rows >= 0) & (rows < n)
        out[k, rows[ok]] = 0.0
    return out


def _transpose_permutation(n1: int, n2: int) -> np.ndarray:
    """Flat indices (dir-2-fastest) listed in dir-1-fastest order."""
    i1, i2 = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    return (i2 + i1 * n2).ravel(order="F")


def assemble_split(grid: Grid2D,
                   a1, b1, c1,
                   a2, b2, c2,
                   cross_coeff,
                   bc1: Tuple[str, str] = ("endogenous", "endogenous"),
                   bc2: Tuple[str, str] = ("endogenous", "endogenous"),
                   cross_onesided: bool = False,
                   ) -> OperatorSplit:
    """Assemble L = [0.5*a1*d11 + b1*d1 - c1] + [0.5*a2*d22 + b2*d2 - c2]
    + cross_coeff*d12 with per-direction boundary modes.

    Coefficients are callables of (x1, x2) (or scalars); each direction-1
    operator is assembled per x2 level and vice versa.  With
    ``cross_onesided`` the mixed term keeps one-sided rows along every
    endogenously closed side instead of dropping to zero there, matching
    the directional operators' closure.
    """
    x1, x2 = grid.g1.nodes, grid.g2.nodes

    def along_1(coef, x2j):
        if callable(coef):
            return np.broadcast_to(np.asarray(coef(x1, x2j), dtype=float),
                                   x1.shape).copy()
        return np.full_like(x1, float(coef))

    def along_2(coef, x1i):
        if callable(coef):
            return np.broadcast_to(np.asarray(coef(x1i, x2), dtype=float),
                                   x2.shape).copy()
        return np.full_like(x2, float(coef))

    l1_levels = [
        assemble_1d(grid.g1, along_1(a1, x2j), along_1(b1, x2j),
                    along_1(c1, x2j), bc1[0], bc1[1])
        for x2j in x2
    ]
    l2_lines = [
        assemble_1d(grid.g2, along_2(a2, x1i), along_2(b2, x1i),
                    along_2(c2, x1i), bc2[0], bc2[1])
        for x1i in x1
    ]
    if cross_onesided:
        sides = (tuple(mode == "endogenous" for mode in bc1),
                 tuple(mode == "endogenous" for mode in bc2))
    else:
        sides = ((False, False), (False, False))
    cross = CrossOperator(grid, cross_coeff, onesided_sides=sides)
    return OperatorSplit(grid, l1_levels, l2_lines, cross)


def assemble_qlsv_split(problem: TransformedProblem, grid: Grid2D) -> OperatorSplit:
    """Split operator for the transformed pricing equation.

    Direction 1 carries 0.5*x2*(d11 - omega); direction 2 carries
    0.5*eps^2*x2*d22 plus the variance drift; the cross term is
    rho*eps*x2*d12.  Boundary modes come from the problem (direction 1) and
    are endogenous in direction 2.  The mixed term keeps one-sided rows
    along the endogenous sides: zeroing them there leaves boundary modes
    the implicit sweeps never damp, which explode at large vol-of-vol.
    """
    model = problem.model
    omega = model.omega
    eps, rho = model.epsilon, model.rho
    return assemble_split(
        grid,
        a1=lambda x1, x2: x2,
        b1=0.0,
        c1=lambda x1, x2: 0.5 * omega * x2,
        a2=lambda x1, x2: eps * eps * x2,
        b2=lambda x1, x2: model.b2(x1, x2),
        c2=0.0,
        cross_coeff=lambda x1, x2: rho * eps * x2,
        bc1=(problem.lower_bc, problem.upper_bc),
        bc2=("endogenous", "endogenous"),
        cross_onesided=True,
    )
