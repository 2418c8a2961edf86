"""Reference-pricer checks: Black-Scholes, Fourier/eigenseries covered
calls, the zero-correlation no-touch series, and the closed-form payoff
transform coefficients."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, quad_vec
from scipy.special import ndtr

from qlsvlab.analytic import (
    branch_argument_scan,
    bs_call,
    heston_call_fourier,
    heston_covered_call_fourier,
    heston_mode_factor,
    payoff_fourier_coeffs,
    real_roots_cos_bracket,
    rho0_covered_series_call,
    rho0_dnt_series,
    rho0_series_call,
)
from qlsvlab.discretize import Grid1D
from qlsvlab.galerkin import (
    SineBasis,
    build_system,
    dnt_projection,
    evolve,
    reconstruct,
)
from qlsvlab.model import (
    QlsvModel,
    covered_call_payoff,
    transformed_dnt_problem,
)
from qlsvlab.rho_expansion import affine_AB


def heston_model(kappa=2.0, epsilon=0.8, rho=-0.3, v0=1.0):
    return QlsvModel.from_normalized(0.0, 1.0, kappa, epsilon, rho, v0)


class TestBsCall:
    def test_at_the_money_one_year(self):
        # At K = F the formula collapses to F*(2*Phi(vol*sqrt(tau)/2) - 1).
        value = bs_call(1.0, 1.0, 0.2, 1.0)
        oracle = 2.0 * ndtr(0.1) - 1.0
        assert value == pytest.approx(oracle, abs=1e-15)
        assert value == pytest.approx(0.0796557, abs=1e-7)

    def test_zero_strike_limit_returns_forward(self):
        # Both tail probabilities saturate at 1, so the value is F - K.
        assert bs_call(1.3, 1e-12, 0.2, 1.0) == pytest.approx(1.3 - 1e-12,
                                                              abs=1e-15)
        assert bs_call(1.3, 1e-9, 0.2, 1.0) == pytest.approx(1.3, abs=1e-8)

    def test_short_maturity_returns_intrinsic(self):
        assert bs_call(1.2, 1.0, 0.2, 1e-12) == pytest.approx(0.2, abs=1e-9)
        assert bs_call(0.8, 1.0, 0.2, 1e-12) == pytest.approx(0.0, abs=1e-9)

    def test_monotone_in_strike_and_vol(self):
        k_ladder = [bs_call(1.0, k, 0.25, 2.0) for k in (0.8, 1.0, 1.3)]
        assert k_ladder[0] > k_ladder[1] > k_ladder[2]
        v_ladder = [bs_call(1.0, 1.1, v, 2.0) for v in (0.1, 0.2, 0.4)]
        assert v_ladder[0] < v_ladder[1] < v_ladder[2]

    def test_rejects_degenerate_inputs(self):
        with pytest.raises(ValueError):
            bs_call(1.0, 1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            bs_call(1.0, 1.0, 0.2, 0.0)


class TestHestonFourier:
    def test_short_maturity_recovers_call_payoff(self):
        # Tail of the payoff transform beyond k_max is O(1/(|x1-xK| k^2)),
        # so an explicit cutoff of 6000 leaves ~1e-8 at |x1 - xK| = 0.5.
        model = heston_model()
        x1 = np.array([-0.5, 0.5])
        price = heston_call_fourier(model, 1.0, 1e-6, 1.0, x1, k_max=6000.0)
        intrinsic = np.maximum(np.exp(x1) - 1.0, 0.0)
        assert np.max(np.abs(price - intrinsic)) < 1e-6

    def test_vanishing_vol_of_vol_is_black_scholes(self):
        # With epsilon ~ 0 and v0 = 1 the variance stays pinned at 1, so the
        # price must match a lognormal with total variance tau.
        model = heston_model(kappa=2.0, epsilon=1e-4, rho=0.0, v0=1.0)
        price = heston_call_fourier(model, 1.1, 1.0, 1.0, 0.0)
        oracle = bs_call(1.0, 1.1, 1.0, 1.0)
        assert abs(price[0] - oracle) < 1e-6 * oracle

    def test_mode_factor_conjugate_symmetric_in_wavenumber(self):
        model = heston_model(rho=-0.36)
        k = np.linspace(0.1, 50.0, 200)
        plus = heston_mode_factor(model, k, 0.5, 1.3)
        minus = heston_mode_factor(model, -k, 0.5, 1.3)
        assert np.max(np.abs(minus - np.conj(plus))) < 1e-13 * np.max(
            np.abs(plus))

    def test_two_sided_complex_integral_matches_real_form(self):
        # The one-sided real-part integral assumes the integrand is even in
        # k; check it against the full two-sided complex inversion.
        model = heston_model(rho=-0.36)
        strike, tau, x2, x1 = 1.0, 0.5, 1.0, 0.3
        x_k = math.log(strike)
        k_max = 300.0

        def two_sided(k):
            mode = heston_mode_factor(model, k, tau, x2)
            return mode * np.exp(1j * k * (x1 - x_k)) / (k * k + 0.25)

        complex_val, _ = quad_vec(two_sided, -k_max, k_max, epsabs=1e-13,
                                  epsrel=1e-12)
        two = math.sqrt(strike) * complex_val / (2.0 * math.pi)
        one = heston_covered_call_fourier(model, strike, tau, x2, x1,
                                          k_max=k_max)[0]
        assert abs(two.imag) < 1e-12
        assert abs(two.real - one) < 1e-12

    def test_principal_branch_has_no_argument_wraps(self):
        mild = heston_model(rho=-0.36)
        assert branch_argument_scan(mild, 0.5, 2000.0) < 1.0
        fast = heston_model(kappa=59.758, epsilon=23.162, rho=-0.36)
        assert branch_argument_scan(fast, 0.04317414, 2000.0) < 1.0

    def test_zero_correlation_mode_factor_is_untilted(self):
        model = heston_model(rho=0.0)
        k = np.array([0.5, 1.0, 3.0, 10.0])
        tilted = heston_mode_factor(model, k, 0.7, 1.4)
        a_val, b_val = affine_AB(0.7, k * k + 0.25, 0.0, model.kappa,
                                 model.kappa, model.epsilon)
        plain = np.exp(a_val + b_val * 1.4)
        assert np.max(np.abs(tilted - plain)) < 1e-14 * np.max(np.abs(plain))

    def test_doubling_cutoff_leaves_price_unchanged(self):
        model = heston_model(rho=-0.36)
        first = heston_call_fourier(model, 1.1, 0.5, 1.0, 0.2, k_max=150.0)
        second = heston_call_fourier(model, 1.1, 0.5, 1.0, 0.2, k_max=300.0)
        assert abs(first[0] - second[0]) < 1e-8

    def test_call_covered_call_consistency_and_bounds(self):
        model = heston_model(rho=-0.36)
        x1 = np.array([-0.4, 0.0, 0.3])
        covered = heston_covered_call_fourier(model, 1.1, 0.5, 1.0, x1)
        call = heston_call_fourier(model, 1.1, 0.5, 1.0, x1)
        forward = np.exp(x1)
        assert np.allclose(call, forward - np.exp(0.5 * x1) * covered,
                           atol=1e-14)
        assert np.all(call > np.maximum(forward - 1.1, 0.0) - 1e-12)
        assert np.all(call < forward)
        ladder = [heston_call_fourier(model, k, 0.5, 1.0, 0.0)[0]
                  for k in (0.9, 1.1, 1.4)]
        assert ladder[0] > ladder[1] > ladder[2]

    def test_fast_mean_reversion_price_is_sane(self):
        model = heston_model(kappa=59.758, epsilon=23.162, rho=-0.36)
        price = heston_call_fourier(model, 1.0, 0.04317414, 2.628, 0.0)
        assert 0.0 < price[0] < 1.0

    def test_rejects_wrong_family_and_degenerate_rho(self):
        affine = QlsvModel.from_normalized(0.0, 0.5, 2.0, 0.8, 0.0, 1.0)
        with pytest.raises(ValueError, match="log-coordinate"):
            heston_covered_call_fourier(affine, 1.0, 0.5, 1.0)


class TestRho0SeriesCall:
    def test_shifted_log_family_near_unit_slope_matches_fourier(self):
        near = QlsvModel.from_normalized(0.0, 0.999, 2.0, 0.8, 0.0, 1.0)
        log_family = heston_model(rho=0.0)
        strike, tau, x2 = 1.1, 0.5, 1.0
        for forward in (0.8, 1.0, 1.25):
            series = rho0_series_call(
                near, strike, tau, x2, float(near.map.to_coord(forward)))
            fourier = heston_call_fourier(
                log_family, strike, tau, x2,
                float(log_family.map.to_coord(forward)))
            assert abs(series[0] - fourier[0]) < 1e-4

    def test_bounded_domain_short_maturity_recovers_payoff(self):
        for alpha, beta in ((1.0, 0.6), (0.18, 0.8)):
            model = QlsvModel.from_normalized(alpha, beta, 2.0, 0.8, 0.0, 1.0)
            strike = 1.1
            payoff = covered_call_payoff(model, strike)
            x1 = np.array([float(model.map.to_coord(f))
                           for f in (0.85, 1.0, 1.3)])
            covered = rho0_covered_series_call(model, strike, 1e-4, 1.0, x1)
            assert np.max(np.abs(covered - payoff(x1))) < 1e-3

    def test_shifted_log_short_maturity_recovers_payoff(self):
        model = QlsvModel.from_normalized(0.0, 0.5, 2.0, 0.8, 0.0, 1.0)
        strike = 1.1
        payoff = covered_call_payoff(model, strike)
        x1 = np.array([float(model.map.to_coord(f)) for f in (0.85, 1.3)])
        covered = rho0_covered_series_call(model, strike, 1e-4, 1.0, x1,
                                           k_max=4000.0)
        assert np.max(np.abs(covered - payoff(x1))) < 1e-3

    def test_call_bounds_on_bounded_domain(self):
        model = QlsvModel.from_normalized(1.0, 0.6, 2.0, 0.8, 0.0, 1.0)
        x1 = np.array([float(model.map.to_coord(f)) for f in (0.9, 1.0, 1.2)])
        call = rho0_series_call(model, 1.05, 0.5, 1.0, x1)
        forward = model.map.from_coord(x1)
        assert np.all(call > np.maximum(forward - 1.05, 0.0) - 1e-12)
        assert np.all(call < forward)

    def test_rejects_nonzero_rho_and_wrong_families(self):
        tilted = QlsvModel.from_normalized(1.0, 0.6, 2.0, 0.8, -0.3, 1.0)
        with pytest.raises(ValueError, match="zero correlation"):
            rho0_series_call(tilted, 1.0, 0.5, 1.0)
        log_family = heston_model(rho=0.0)
        with pytest.raises(ValueError, match="Fourier"):
            rho0_series_call(log_family, 1.0, 0.5, 1.0)
        flat = QlsvModel.from_normalized(0.0, 0.0, 2.0, 0.8, 0.0, 1.0)
        with pytest.raises(ValueError, match="positive slope"):
            rho0_series_call(flat, 1.0, 0.5, 1.0)


class TestRho0DntSeries:
    def test_matches_stepped_mode_solver(self):
        # Same barriers priced two ways: closed-form mode amplitudes summed
        # directly, versus Crank-Nicolson stepping of the projected system.
        model = heston_model(rho=0.0)
        lower, upper = 1.0, math.e
        tau = 0.25
        problem = transformed_dnt_problem(model, lower, upper)
        basis = SineBasis(problem.x1_lower, problem.x1_upper, 30)
        grid = Grid1D.sqrt_spaced(10.0, 768)
        system = build_system(problem, basis, grid)
        nu = dnt_projection(basis, problem)
        solution = evolve(system, nu, tau, 1536)
        surface = reconstruct(solution, basis,
                              Grid1D.uniform(problem.x1_lower,
                                             problem.x1_upper, 64))
        stepped = surface.line_at_x2(1.0)
        x1 = surface.grid.g1.nodes
        series = rho0_dnt_series(model, lower, upper, tau, 1.0, x1)
        interior = slice(4, -4)
        assert np.max(np.abs(series[interior] - stepped[interior])) < 3e-6

    def test_long_maturity_decay_matches_leading_mode(self):
        model = heston_model(kappa=1.0, epsilon=0.5, rho=0.0)
        lower, upper = 1.0, math.e
        x1, x2 = 0.4, 1.2
        lam1 = math.pi**2 + 0.25

        def leading(tau):
            a_val, b_val = affine_AB(tau, lam1, 0.0, model.kappa,
                                     model.kappa, model.epsilon)
            return a_val + b_val * x2

        taus = (6.0, 6.5)
        prices = [rho0_dnt_series(model, lower, upper, t, x2, x1)[0]
                  for t in taus]
        series_slope = math.log(prices[1]) - math.log(prices[0])
        mode_slope = leading(taus[1]) - leading(taus[0])
        assert abs(series_slope - mode_slope) < 1e-8

    def test_vanishes_at_barriers(self):
        model = heston_model(rho=0.0)
        lower, upper = 1.0, math.e
        ends = rho0_dnt_series(model, lower, upper, 0.3, 1.0,
                               np.array([0.0, 1.0]))
        assert abs(ends[0]) == 0.0
        assert abs(ends[1]) < 1e-12

    def test_price_between_zero_and_discount_bound(self):
        model = heston_model(rho=0.0)
        x1 = np.linspace(0.05, 0.95, 9)
        u_vals = rho0_dnt_series(model, 1.0, math.e, 0.25, 1.0, x1)
        price = np.exp(0.5 * x1) * u_vals  # undo the 1/sqrt(sigma) scaling
        assert np.all(price > 0.0)
        assert np.all(price < 1.0)

    def test_rejects_bad_inputs(self):
        tilted = heston_model(rho=-0.2)
        with pytest.raises(ValueError, match="zero correlation"):
            rho0_dnt_series(tilted, 1.0, 2.0, 0.5, 1.0)
        flat = heston_model(rho=0.0)
        with pytest.raises(ValueError, match="barriers"):
            rho0_dnt_series(flat, 2.0, 1.0, 0.5, 1.0)


class TestPayoffFourierCoeffs:
    def test_shifted_log_closed_form_matches_quadrature(self):
        model = QlsvModel.from_normalized(0.0, 0.5, 2.0, 0.8, 0.0, 1.0)
        strike = 1.0
        nu = payoff_fourier_coeffs(model, strike)
        payoff = covered_call_payoff(model, strike)
        x_lo = model.map.x_lower
        x_k = float(model.map.to_coord(strike))
        # Above the kink the integrand decays like exp(-beta*x/2); cutting
        # at x_k + 110 leaves a tail below 4e-12 for every k probed.
        x_cut = x_k + 110.0
        for k in (0.3, 1.0, 2.7, 5.0, 10.0, 25.0, 50.0):
            oracle, err = quad(
                lambda x: payoff(x) * math.sin(k * (x - x_lo)),
                x_lo, x_cut, points=[x_k], limit=2000,
                epsabs=1e-13, epsrel=1e-12)
            assert err < 1e-10
            assert abs(nu(k) - oracle) < 1e-10 * max(1.0, abs(oracle))

    @pytest.mark.parametrize("alpha,beta", [(1.0, 0.6), (0.18, 0.8)])
    def test_bounded_domain_closed_form_matches_quadrature(self, alpha, beta):
        model = QlsvModel.from_normalized(alpha, beta, 2.0, 0.8, 0.0, 1.0)
        strike = 1.1
        nu = payoff_fourier_coeffs(model, strike)
        payoff = covered_call_payoff(model, strike)
        cmap = model.map
        width = cmap.x_upper - cmap.x_lower
        x_k = float(cmap.to_coord(strike))
        for k in (1, 2, 3, 5, 8, 13, 21, 34, 50):
            zeta = math.pi * k / width
            oracle, err = quad(
                lambda x: payoff(x) * math.sin(zeta * (x - cmap.x_lower)),
                cmap.x_lower, cmap.x_upper, points=[x_k],
                limit=max(200, 20 * k), epsabs=1e-13, epsrel=1e-12)
            oracle *= 2.0 / width
            assert err < 1e-10
            assert abs(nu(k) - oracle) < 1e-8 * max(1.0, abs(oracle))

    @settings(max_examples=50, deadline=None)
    @given(p=st.floats(-10.0, -0.02), q=st.floats(-10.0, -0.02),
           strike=st.floats(0.05, 20.0))
    def test_hyperbolic_cosine_bracket_cancels(self, p, q, strike):
        bracket = real_roots_cos_bracket(p, q, strike)
        scale = (strike - p) * (strike - q)
        assert abs(bracket) < 1e-11 * scale

    def test_cosine_bracket_rejects_positive_roots(self):
        with pytest.raises(ValueError, match="negative"):
            real_roots_cos_bracket(0.5, -1.0, 1.0)

    def test_rejects_log_family_and_flat_slope(self):
        with pytest.raises(ValueError, match="Fourier"):
            payoff_fourier_coeffs(heston_model(), 1.0)
        flat = QlsvModel.from_normalized(0.0, 0.0, 2.0, 0.8, 0.0, 1.0)
        with pytest.raises(ValueError, match="positive slope"):
            payoff_fourier_coeffs(flat, 1.0)
