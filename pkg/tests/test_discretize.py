"""Tests for grids, stencils, banded operators, and split operator assembly."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlsvlab.discretize import (
    BandedLU,
    BandedOperator,
    CrossOperator,
    Grid1D,
    Grid2D,
    assemble_1d,
    assemble_qlsv_split,
    assemble_split,
    banded_apply,
    first_derivative_stencils,
    second_derivative_stencils,
    stack_block_bands,
)
from qlsvlab.model import QlsvModel, dnt_problem_from_coords, transformed_call_problem


def random_grid(rng, n=12, lo=0.0, hi=3.0):
    interior = np.sort(rng.uniform(lo, hi, n - 2))
    return Grid1D(np.concatenate([[lo - 0.1], interior, [hi + 0.1]]))


@st.composite
def nonuniform_grids(draw):
    n = draw(st.integers(5, 20))
    steps = draw(st.lists(st.floats(0.05, 1.0), min_size=n - 1, max_size=n - 1))
    nodes = np.concatenate([[0.0], np.cumsum(steps)])
    return Grid1D(nodes)


# --------------------------------------------------------------------------- #
# Grids
# --------------------------------------------------------------------------- #

class TestGrids:
    def test_uniform(self):
        g = Grid1D.uniform(-1.0, 1.0, 10)
        assert g.size == 11
        assert np.allclose(np.diff(g.nodes), 0.2)

    def test_sqrt_spaced(self):
        g = Grid1D.sqrt_spaced(9.0, 6)
        assert g.nodes[0] == 0.0
        assert g.nodes[-1] == 9.0
        # uniform in sqrt(x)
        assert np.allclose(np.diff(np.sqrt(g.nodes)), np.sqrt(9.0) / 6)

    def test_validation(self):
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0, 1.0, 1.0, 2.0, 3.0]))
        with pytest.raises(ValueError):
            Grid1D(np.array([0.0, 1.0, 2.0]))
        with pytest.raises(ValueError):
            Grid2D(Grid1D.uniform(0, 1, 5), Grid1D.uniform(-1, 1, 5))

    def test_flatten_round_trip(self):
        grid = Grid2D(Grid1D.uniform(0, 1, 5), Grid1D.uniform(0, 2, 7))
        rng = np.random.default_rng(0)
        v = rng.normal(size=grid.shape)
        assert np.array_equal(grid.unflatten(grid.flatten(v)), v)
        # direction 1 is fastest in the flat layout
        flat = grid.flatten(v)
        assert flat[1] == v[1, 0]
        assert flat[grid.g1.size] == v[0, 1]


# --------------------------------------------------------------------------- #
# Stencils
# --------------------------------------------------------------------------- #

class TestStencils:
    def test_uniform_limits(self):
        h = 1.0 / 8
        g = Grid1D.uniform(0.0, 1.0, 8)
        xi = first_derivative_stencils(g)
        eta = second_derivative_stencils(g)
        np.testing.assert_allclose(xi["center"][0] * 2 * h, [-1.0, 0.0, 1.0],
                                   atol=1e-13)
        np.testing.assert_allclose(xi["forward"] * 2 * h, [-3.0, 4.0, -1.0],
                                   atol=1e-13)
        np.testing.assert_allclose(xi["backward"] * 2 * h, [1.0, -4.0, 3.0],
                                   atol=1e-13)
        # centered curvature weights encode HALF the second derivative
        np.testing.assert_allclose(eta["center"][0] * h * h, [0.5, -1.0, 0.5],
                                   atol=1e-13)
        # one-sided rows encode the full second derivative
        np.testing.assert_allclose(eta["forward"] * h * h, [2.0, -5.0, 4.0, -1.0],
                                   atol=1e-12)
        np.testing.assert_allclose(eta["backward"] * h * h, [-1.0, 4.0, -5.0, 2.0],
                                   atol=1e-12)

    @given(grid=nonuniform_grids())
    @settings(max_examples=60, deadline=None)
    def test_zero_sums(self, grid):
        xi = first_derivative_stencils(grid)
        eta = second_derivative_stencils(grid)
        assert np.max(np.abs(xi["center"].sum(axis=1))) < 1e-10
        assert np.max(np.abs(eta["center"].sum(axis=1))) < 1e-10
        for key in ("forward", "backward"):
            assert abs(xi[key].sum()) < 1e-10
            assert abs(eta[key].sum()) < 1e-10

    @given(grid=nonuniform_grids())
    @settings(max_examples=60, deadline=None)
    def test_first_derivative_exact_on_quadratics(self, grid):
        x = grid.nodes
        f = 1.3 * x**2 - 0.7 * x + 0.4
        fp = 2.6 * x - 0.7
        xi = first_derivative_stencils(grid)
        vals = np.stack([f[:-2], f[1:-1], f[2:]], axis=1)
        np.testing.assert_allclose((xi["center"] * vals).sum(axis=1), fp[1:-1],
                                   rtol=1e-7, atol=1e-8)
        assert np.dot(xi["forward"], f[:3]) == pytest.approx(fp[0], rel=1e-7,
                                                             abs=1e-8)
        assert np.dot(xi["backward"], f[-3:]) == pytest.approx(fp[-1], rel=1e-7,
                                                               abs=1e-8)

    @given(grid=nonuniform_grids())
    @settings(max_examples=60, deadline=None)
    def test_second_derivative_exactness(self, grid):
        x = grid.nodes
        f = 1.3 * x**2 - 0.7 * x + 0.4
        eta = second_derivative_stencils(grid)
        vals = np.stack([f[:-2], f[1:-1], f[2:]], axis=1)
        # interior: half of f'' = 1.3
        np.testing.assert_allclose((eta["center"] * vals).sum(axis=1), 1.3,
                                   rtol=1e-7, atol=1e-8)
        # one-sided rows: full f'', exact through cubics
        f3 = x**3 - x**2 + 2 * x
        f3pp = 6 * x - 2
        assert np.dot(eta["forward"], f3[:4]) == pytest.approx(
            f3pp[0], rel=1e-6, abs=1e-6)
        assert np.dot(eta["backward"], f3[-4:]) == pytest.approx(
            f3pp[-1], rel=1e-6, abs=1e-6)


# --------------------------------------------------------------------------- #
# Banded operators
# --------------------------------------------------------------------------- #

def _random_banded(rng, n):
    op = BandedOperator(n)
    for i in range(n):
        offs = [o for o in range(-3, 4) if 0 <= i + o < n]
        op.set_row(i, offs, rng.normal(size=len(offs)))
    return op


class TestBandedOperator:
    def test_apply_matches_dense(self):
        rng = np.random.default_rng(3)
        op = _random_banded(rng, 13)
        dense = op.matrix().toarray()
        v = rng.normal(size=13)
        np.testing.assert_allclose(op.apply(v), dense @ v, atol=1e-13)

    def test_apply_2d_column_wise(self):
        rng = np.random.default_rng(4)
        op = _random_banded(rng, 9)
        V = rng.normal(size=(9, 5))
        direct = np.stack([op.apply(V[:, j]) for j in range(5)], axis=1)
        np.testing.assert_allclose(op.apply(V), direct, atol=1e-13)

    def test_solve_matches_dense(self):
        rng = np.random.default_rng(5)
        op = _random_banded(rng, 13).plus_identity(8.0)
        dense = op.matrix().toarray()
        rhs = rng.normal(size=13)
        np.testing.assert_allclose(op.solve(rhs), np.linalg.solve(dense, rhs),
                                   atol=1e-11)

    def test_banded_lu_matches_dense(self):
        rng = np.random.default_rng(6)
        op = _random_banded(rng, 17).plus_identity(8.0)
        dense = op.matrix().toarray()
        lu = BandedLU(op)
        for _ in range(3):
            rhs = rng.normal(size=17)
            np.testing.assert_allclose(lu.solve(rhs),
                                       np.linalg.solve(dense, rhs), atol=1e-11)

    def test_block_bands_match_block_matrix(self):
        rng = np.random.default_rng(7)
        ops = [_random_banded(rng, 6) for _ in range(4)]
        bands = stack_block_bands(ops)
        v = rng.normal(size=24)
        direct = np.concatenate([op.apply(v[6 * k:6 * (k + 1)])
                                 for k, op in enumerate(ops)])
        np.testing.assert_allclose(banded_apply(bands, v), direct, atol=1e-13)

    def test_algebra_helpers(self):
        rng = np.random.default_rng(8)
        op = _random_banded(rng, 7)
        v = rng.normal(size=7)
        np.testing.assert_allclose(op.scaled(2.5).apply(v), 2.5 * op.apply(v),
                                   atol=1e-13)
        np.testing.assert_allclose(op.plus_identity(1.5).apply(v),
                                   op.apply(v) + 1.5 * v, atol=1e-13)
        np.testing.assert_allclose(op.add(op).apply(v), 2 * op.apply(v),
                                   atol=1e-13)


# --------------------------------------------------------------------------- #
# One-dimensional assembly
# --------------------------------------------------------------------------- #

class TestAssemble1D:
    def setup_method(self):
        rng = np.random.default_rng(11)
        self.grid = random_grid(rng)
        self.a = lambda x: 0.3 + x**2
        self.b = lambda x: np.sin(x)
        self.c = lambda x: 0.2 + 0.1 * x

    def test_constant_function_returns_minus_c(self):
        L = assemble_1d(self.grid, self.a, self.b, self.c)
        x = self.grid.nodes
        np.testing.assert_allclose(L.apply(np.ones(x.size)), -self.c(x),
                                   atol=1e-11)

    def test_exact_on_quadratics_including_boundary_rows(self):
        L = assemble_1d(self.grid, self.a, self.b, self.c)
        x = self.grid.nodes
        f = 0.5 * x**2 + 2 * x - 1.0
        expected = 0.5 * self.a(x) * 1.0 + self.b(x) * (x + 2.0) - self.c(x) * f
        np.testing.assert_allclose(L.apply(f), expected, rtol=1e-9, atol=1e-9)

    def test_dirichlet_rows_are_unit_rows(self):
        L = assemble_1d(self.grid, self.a, self.b, self.c,
                        "dirichlet", "dirichlet")
        dense = L.matrix().toarray()
        np.testing.assert_allclose(dense[0], np.eye(self.grid.size)[0],
                                   atol=1e-14)
        np.testing.assert_allclose(dense[-1], np.eye(self.grid.size)[-1],
                                   atol=1e-14)

    def test_uniform_laplacian(self):
        g = Grid1D.uniform(0.0, 1.0, 8)
        h = 1.0 / 8
        L = assemble_1d(g, 2.0, 0.0, 0.0, "dirichlet", "dirichlet")
        dense = L.matrix().toarray()
        assert dense[3, 2] == pytest.approx(1.0 / h**2, rel=1e-12)
        assert dense[3, 3] == pytest.approx(-2.0 / h**2, rel=1e-12)
        assert dense[3, 4] == pytest.approx(1.0 / h**2, rel=1e-12)

    def test_degenerate_diffusion_boundary_row_is_pure_drift(self):
        # with a(0)=0 the endogenous row at the left end reduces to a
        # one-sided drift row: the equation itself closes the system
        g = Grid1D.sqrt_spaced(4.0, 8)
        kappa, eps = 3.0, 0.9
        L = assemble_1d(g, lambda x: eps**2 * x, lambda x: kappa * (1.0 - x), 0.0)
        xi = first_derivative_stencils(g)
        row = L.matrix().toarray()[0]
        expected = np.zeros(g.size)
        expected[:3] = kappa * xi["forward"]
        np.testing.assert_allclose(row, expected, atol=1e-12)

    def test_refinement_order_two_with_boundary_rows(self):
        # smooth non-polynomial function: residual drops ~4x per halving
        errs = []
        for cells in (16, 32, 64):
            g = Grid1D.uniform(0.2, 1.2, cells)
            x = g.nodes
            L = assemble_1d(g, self.a, self.b, self.c)
            f = np.sin(2 * x) + np.exp(-x)
            fp = 2 * np.cos(2 * x) - np.exp(-x)
            fpp = -4 * np.sin(2 * x) + np.exp(-x)
            expected = 0.5 * self.a(x) * fpp + self.b(x) * fp - self.c(x) * f
            errs.append(np.max(np.abs(L.apply(f) - expected)))
        slope = np.log2(errs[0] / errs[2]) / 2.0
        assert slope > 1.7


# --------------------------------------------------------------------------- #
# Cross operator
# --------------------------------------------------------------------------- #

class TestCrossOperator:
    def setup_method(self):
        rng = np.random.default_rng(13)
        inner = np.sort(rng.uniform(0.05, 1.9, 8))
        self.grid = Grid2D(Grid1D.uniform(-1.0, 1.0, 10),
                           Grid1D(np.concatenate([[0.0], inner, [2.0]])))

    def test_exact_on_bilinear_quadratics(self):
        co = CrossOperator(self.grid, lambda x1, x2: 1.0 + 0.0 * x1)
        X1, X2 = self.grid.meshes()
        U = (X1**2 - X1) * (0.5 * X2**2 + X2)
        truth = (2 * X1 - 1.0) * (X2 + 1.0)
        got = co.apply(U)
        np.testing.assert_allclose(got[1:-1, 1:-1], truth[1:-1, 1:-1],
                                   rtol=1e-9, atol=1e-10)

    def test_boundary_rows_vanish(self):
        co = CrossOperator(self.grid, lambda x1, x2: 1.0 + x2)
        rng = np.random.default_rng(0)
        got = co.apply(rng.normal(size=self.grid.shape))
        assert np.max(np.abs(got[0, :])) == 0.0
        assert np.max(np.abs(got[-1, :])) == 0.0
        assert np.max(np.abs(got[:, 0])) == 0.0
        assert np.max(np.abs(got[:, -1])) == 0.0

    def test_annihilates_single_direction_functions(self):
        co = CrossOperator(self.grid, lambda x1, x2: 2.0 + x2)
        X1, X2 = self.grid.meshes()
        assert np.max(np.abs(co.apply(X1**2 - 3 * X1))) < 1e-11
        assert np.max(np.abs(co.apply(np.cos(X2)))) < 1e-11

    def test_blocks_sum_to_zero(self):
        co = CrossOperator(self.grid, lambda x1, x2: 1.0 + x1 * x2)
        sums = co.weights.sum(axis=(2, 3))
        assert np.max(np.abs(sums)) < 1e-10

    def test_matrix_matches_apply(self):
        co = CrossOperator(self.grid, lambda x1, x2: 1.0 + x2)
        rng = np.random.default_rng(1)
        V = rng.normal(size=self.grid.shape)
        via_matrix = self.grid.unflatten(co.matrix() @ self.grid.flatten(V))
        np.testing.assert_allclose(via_matrix, co.apply(V), atol=1e-12)


class TestCrossOperatorOneSided:
    def setup_method(self):
        rng = np.random.default_rng(7)
        inner = np.sort(rng.uniform(0.05, 1.9, 8))
        self.grid = Grid2D(Grid1D.uniform(-1.0, 1.0, 10),
                           Grid1D(np.concatenate([[0.0], inner, [2.0]])))
        self.sides = ((False, True), (False, True))

    def test_exact_on_bilinear_at_flagged_edges(self):
        co = CrossOperator(self.grid, 1.0, onesided_sides=self.sides)
        X1, X2 = self.grid.meshes()
        U = (X1**2 - X1) * (0.5 * X2**2 + X2)
        truth = (2 * X1 - 1.0) * (X2 + 1.0)
        got = co.apply(U)
        np.testing.assert_allclose(got[1:, 1:], truth[1:, 1:],
                                   rtol=1e-9, atol=1e-10)

    def test_unflagged_edges_stay_zero(self):
        co = CrossOperator(self.grid, lambda x1, x2: 1.0 + x2,
                           onesided_sides=self.sides)
        rng = np.random.default_rng(0)
        got = co.apply(rng.normal(size=self.grid.shape))
        assert np.max(np.abs(got[0, :])) == 0.0
        assert np.max(np.abs(got[:, 0])) == 0.0
        assert np.max(np.abs(got[-1, 1:])) > 0.0
        assert np.max(np.abs(got[1:, -1])) > 0.0

    def test_matrix_matches_apply(self):
        co = CrossOperator(self.grid, lambda x1, x2: 1.0 + x1 * x2,
                           onesided_sides=((True, True), (True, True)))
        rng = np.random.default_rng(3)
        V = rng.normal(size=self.grid.shape)
        via_matrix = self.grid.unflatten(co.matrix() @ self.grid.flatten(V))
        np.testing.assert_allclose(via_matrix, co.apply(V), atol=1e-12)

    def test_assemble_split_flags_follow_endogenous_sides(self):
        grid = Grid2D(Grid1D.uniform(0.0, 1.0, 8), Grid1D.uniform(0.0, 1.0, 7))
        split = assemble_split(grid, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5,
                               bc1=("dirichlet", "endogenous"),
                               bc2=("dirichlet", "endogenous"),
                               cross_onesided=True)
        X1, X2 = grid.meshes()
        got = split.cross.apply(X1 * X2)
        np.testing.assert_allclose(got[1:, 1:], 0.5, atol=1e-10)
        assert np.max(np.abs(got[0, :])) == 0.0
        assert np.max(np.abs(got[:, 0])) == 0.0

    def test_default_assembly_keeps_zero_boundary_rows(self):
        grid = Grid2D(Grid1D.uniform(0.0, 1.0, 8), Grid1D.uniform(0.0, 1.0, 7))
        split = assemble_split(grid, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.5,
                               bc1=("endogenous", "endogenous"),
                               bc2=("endogenous", "endogenous"))
        rng = np.random.default_rng(5)
        got = split.cross.apply(rng.normal(size=grid.shape))
        assert np.max(np.abs(got[0, :])) == 0.0
        assert np.max(np.abs(got[-1, :])) == 0.0
        assert np.max(np.abs(got[:, 0])) == 0.0
        assert np.max(np.abs(got[:, -1])) == 0.0


# --------------------------------------------------------------------------- #
# Split assembly
# --------------------------------------------------------------------------- #

def _dnt_setup(rho=-0.4, cells1=12, cells2=10):
    model = QlsvModel(0.0, 1.0, kappa=3.0, epsilon=0.9, rho=rho, v0=1.0)
    problem = dnt_problem_from_coords(model, 0.0, 1.0)
    grid = Grid2D(Grid1D.uniform(0.0, 1.0, cells1), Grid1D.sqrt_spaced(4.0, cells2))
    return model, problem, grid


class TestSplitAssembly:
    def test_zero_correlation_kills_cross(self):
        _, problem, grid = _dnt_setup(rho=0.0)
        split = assemble_qlsv_split(problem, grid)
        assert np.max(np.abs(split.cross.weights)) == 0.0

    def test_zero_variance_level_is_trivial(self):
        # at x2=0 all direction-1 coefficients vanish; for an endogenous
        # problem (call) the whole level operator is zero
        model = QlsvModel(0.0, 1.0, kappa=3.0, epsilon=0.9, rho=-0.4, v0=1.0)
        problem = transformed_call_problem(model, 1.0)
        grid = Grid2D(Grid1D.uniform(-2.0, 2.0, 12), Grid1D.sqrt_spaced(4.0, 10))
        split = assemble_qlsv_split(problem, grid)
        assert np.max(np.abs(split.l1_levels[0].diags)) == 0.0
        assert np.max(np.abs(split.cross.weights[:, 0])) == 0.0

    def test_dirichlet_levels_have_unit_rows(self):
        _, problem, grid = _dnt_setup()
        split = assemble_qlsv_split(problem, grid)
        for op in split.l1_levels:
            dense = op.matrix().toarray()
            np.testing.assert_allclose(dense[0], np.eye(op.size)[0], atol=1e-14)
            np.testing.assert_allclose(dense[-1], np.eye(op.size)[-1], atol=1e-14)

    def test_matrix_views_match_direct_application(self):
        _, problem, grid = _dnt_setup()
        split = assemble_qlsv_split(problem, grid)
        rng = np.random.default_rng(2)
        V = rng.normal(size=grid.shape)
        flat = grid.flatten(V)
        np.testing.assert_allclose(
            grid.unflatten(split.matrix_1() @ flat), split.apply_1(V), atol=1e-11)
        np.testing.assert_allclose(
            grid.unflatten(split.matrix_2() @ flat), split.apply_2(V), atol=1e-11)
        np.testing.assert_allclose(
            grid.unflatten(split.matrix_full() @ flat), split.apply_full(V),
            atol=1e-11)
        np.testing.assert_allclose(banded_apply(split.bands_1(), flat),
                                   split.matrix_1() @ flat, atol=1e-11)

    def test_pde_consistency_order_two(self):
        # split operator applied to a smooth surface reproduces the
        # transformed equation's right side at interior nodes to O(h^2)
        def residual(cells):
            model, problem, grid = _dnt_setup(cells1=cells, cells2=cells)
            split = assemble_qlsv_split(problem, grid)
            X1, X2 = grid.meshes()
            U = np.sin(math.pi * X1) * np.exp(-X2)
            U1 = math.pi * np.cos(math.pi * X1) * np.exp(-X2)
            U11 = -math.pi**2 * U
            U2, U22, U12 = -U, U, -U1
            rhs = (0.5 * X2 * (U11 - model.omega * U)
                   + model.rho * model.epsilon * X2 * U12
                   + 0.5 * model.epsilon**2 * X2 * U22
                   + model.b2(X1, X2) * U2)
            return np.max(np.abs((split.apply_full(U) - rhs)[1:-1, 1:-1]))

        e1, e2 = residual(16), residual(32)
        assert e1 / e2 > 3.0  # order two gives ratio ~4
