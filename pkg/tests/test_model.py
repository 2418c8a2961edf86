"""Tests for parameter handling, classification, coordinate maps, payoffs."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlsvlab.model import (
    MarketParams,
    QlsvModel,
    classify,
    covered_call_payoff,
    dnt_problem_from_coords,
    no_touch_payoff,
    normalize,
    transformed_call_problem,
    transformed_dnt_problem,
)

# --------------------------------------------------------------------------- #
# Strategies: draw admissible normalized curves by family
# --------------------------------------------------------------------------- #

def _affine_curves():
    return st.floats(0.0, 0.9).map(lambda b: (0.0, b))


def _complex_root_curves():
    return st.tuples(st.floats(0.05, 3.0), st.floats(-0.95, 0.95)).map(
        lambda t: (t[0], t[1] * math.sqrt(2.0 * t[0])))


def _real_root_curves():
    def build(t):
        a, frac = t
        lo = max(a, math.sqrt(2.0 * a))
        hi = 1.0 + 0.5 * a
        return (a, lo + frac * (hi - lo))
    return st.tuples(st.floats(0.05, 1.9), st.floats(0.05, 0.95)).map(build)


def admissible_curves():
    return st.one_of(st.just((0.0, 1.0)), _affine_curves(),
                     _complex_root_curves(), _real_root_curves())


def _model(alpha, beta, **kw):
    base = dict(kappa=2.0, epsilon=0.5, rho=-0.3, v0=1.0)
    base.update(kw)
    return QlsvModel(alpha=alpha, beta=beta, **base)


# --------------------------------------------------------------------------- #
# Classification
# --------------------------------------------------------------------------- #

class TestClassify:
    def test_proportional(self):
        info = classify(0.0, 1.0)
        assert info.label == "proportional"
        assert info.omega == 0.25

    def test_affine(self):
        info = classify(0.0, 0.4)
        assert info.label == "affine"
        assert info.omega == pytest.approx(0.04, abs=1e-15)

    def test_affine_zero_slope(self):
        info = classify(0.0, 0.0)
        assert info.label == "affine"
        assert info.omega == 0.0

    def test_complex_roots_frozen(self):
        # 0.25*(F-1)^2 + 0.2*(F-1) + 1 has roots m +/- i n
        info = classify(0.5, 0.2)
        assert info.label == "complex-roots"
        assert info.omega == pytest.approx(-0.24, abs=1e-15)
        assert info.m == pytest.approx(0.6, abs=1e-14)
        assert info.n == pytest.approx(1.9595917942265424, abs=1e-13)

    def test_real_roots_frozen(self):
        info = classify(1.5, 1.74)
        assert info.label == "real-roots"
        assert info.omega == pytest.approx(0.0069, abs=1e-14)
        assert info.p == pytest.approx(-0.2707549848389077, abs=1e-13)
        assert info.q == pytest.approx(-0.0492450151610922, abs=1e-13)
        assert info.p < info.q < 0.0

    @given(curve=st.one_of(_complex_root_curves(), _real_root_curves()))
    @settings(max_examples=100, deadline=None)
    def test_roots_annihilate_curve(self, curve):
        a, b = curve
        info = classify(a, b)
        sigma = lambda f: 0.5 * a * (f - 1.0) ** 2 + b * (f - 1.0) + 1.0
        if info.label == "complex-roots":
            # curve value at complex root m + i n must vanish
            f = complex(info.m, info.n)
            val = 0.5 * a * (f - 1.0) ** 2 + b * (f - 1.0) + 1.0
            assert abs(val) < 1e-10
        else:
            assert abs(sigma(info.p)) < 1e-10
            assert abs(sigma(info.q)) < 1e-10

    @pytest.mark.parametrize("alpha,beta", [
        (-0.1, 0.5),        # concave curve
        (0.0, 1.2),         # linear slope beyond 1: vanishes inside (0, 1)
        (0.0, -0.2),        # negative slope: vanishes beyond the spot
        (0.5, 1.0),         # double root boundary: b = sqrt(2a)
        (0.5, -1.2),        # negative b beyond the complex window
        (1.5, 1.76),        # beyond b = 1 + a/2: root enters [0, inf)
        (3.0, 2.6),         # real window empty below b = a
    ])
    def test_rejects_inadmissible(self, alpha, beta):
        with pytest.raises(ValueError):
            classify(alpha, beta)

    def test_rejects_near_boundary(self):
        crit = math.sqrt(2.0 * 0.5)
        with pytest.raises(ValueError):
            classify(0.5, crit + 1e-13)
        with pytest.raises(ValueError):
            classify(0.5, crit - 1e-13)


# --------------------------------------------------------------------------- #
# Normalization
# --------------------------------------------------------------------------- #

class TestNormalize:
    def test_heston_style_frozen(self):
        params = MarketParams(alpha=0.0, beta=1.0, gamma=0.0, kappa=2.580,
                              theta=0.043, epsilon=1.0, rho=-0.36, v0=0.114,
                              spot=1.0)
        m = normalize(params)
        assert m.vol_class == "proportional"
        assert m.kappa == pytest.approx(60.0, rel=1e-12)
        assert m.epsilon == pytest.approx(23.25581395348837, rel=1e-12)
        assert m.v0 == pytest.approx(2.6511627906976747, rel=1e-12)
        assert m.time_scale == pytest.approx(0.043, rel=1e-12)
        assert m.rho == -0.36

    def test_feller_index(self):
        m = QlsvModel(0.0, 1.0, kappa=59.758, epsilon=23.162, rho=-0.36, v0=2.628)
        assert m.feller_index == pytest.approx(-0.7772211616469576, rel=1e-12)

    def test_time_scale_preserves_reversion_per_year(self):
        # kappa_dim * years == kappa_model * tau for any spot and curve
        params = MarketParams(alpha=0.1, beta=0.3, gamma=0.8, kappa=1.7,
                              theta=0.05, epsilon=0.6, rho=0.2, v0=0.04,
                              spot=1.3)
        m = normalize(params)
        years = 2.5
        assert m.kappa * m.tau_from_years(years) == pytest.approx(
            params.kappa * years, rel=1e-12)

    def test_normalized_curve_is_unit_at_spot(self):
        params = MarketParams(alpha=0.2, beta=0.1, gamma=0.9, kappa=2.0,
                              theta=0.04, epsilon=0.5, rho=-0.5, v0=0.04,
                              spot=1.7)
        m = normalize(params)
        assert m.sigma(1.0) == pytest.approx(1.0, rel=1e-14)

    def test_normalized_curve_matches_rescaled_dimensional(self):
        # sigma_model(F/spot) * spot * sigma_dim(spot)/spot == sigma_dim(F)
        params = MarketParams(alpha=0.2, beta=0.1, gamma=0.9, kappa=2.0,
                              theta=0.04, epsilon=0.5, rho=-0.5, v0=0.04,
                              spot=1.7)
        m = normalize(params)
        scale = params.sigma(params.spot)
        for f in [0.4, 0.9, 1.7, 2.4, 4.1]:
            assert m.sigma(f / params.spot) * scale == pytest.approx(
                params.sigma(f), rel=1e-12)

    def test_rejects_bad_inputs(self):
        good = dict(alpha=0.0, beta=1.0, gamma=0.0, kappa=2.0, theta=0.04,
                    epsilon=0.5, rho=-0.3, v0=0.04, spot=1.0)
        for key, bad in [("spot", -1.0), ("theta", 0.0), ("kappa", 0.0),
                         ("epsilon", -0.1), ("rho", 1.0), ("v0", -0.1)]:
            kw = dict(good)
            kw[key] = bad
            with pytest.raises(ValueError):
                MarketParams(**kw)


# --------------------------------------------------------------------------- #
# Coordinate maps
# --------------------------------------------------------------------------- #

class TestCoordinateMap:
    @given(curve=admissible_curves(), forward=st.floats(0.05, 5.0))
    @settings(max_examples=200, deadline=None)
    def test_round_trip(self, curve, forward):
        m = _model(*curve)
        cmap = m.map
        x = cmap.to_coord(forward)
        assert cmap.from_coord(x) == pytest.approx(forward, rel=1e-9, abs=1e-9)

    @given(curve=admissible_curves())
    @settings(max_examples=100, deadline=None)
    def test_spot_maps_to_origin(self, curve):
        m = _model(*curve)
        assert float(m.map.to_coord(1.0)) == pytest.approx(0.0, abs=1e-12)

    @given(curve=admissible_curves(), forward=st.floats(0.05, 5.0))
    @settings(max_examples=200, deadline=None)
    def test_sqrt_sigma_matches_curve(self, curve, forward):
        m = _model(*curve)
        x = m.map.to_coord(forward)
        assert float(m.map.sqrt_sigma(x)) ** 2 == pytest.approx(
            float(m.sigma(forward)), rel=1e-9)

    @given(curve=admissible_curves())
    @settings(max_examples=50, deadline=None)
    def test_map_has_unit_derivative_scale(self, curve):
        # dX/dF = 1/sigma(F): check by central difference at a few forwards
        m = _model(*curve)
        cmap = m.map
        for f in [0.5, 1.0, 2.0]:
            h = 1e-6
            deriv = (cmap.to_coord(f + h) - cmap.to_coord(f - h)) / (2 * h)
            assert float(deriv) == pytest.approx(1.0 / float(m.sigma(f)), rel=1e-6)

    def test_domain_ends_frozen(self):
        # complex-roots example: finite ends on both sides; values frozen from
        # direct quadrature of integral dF/sigma(F) over (0, 1) and (1, inf)
        m = _model(0.5, 0.2)
        cmap = m.map
        assert cmap.x_lower == pytest.approx(-1.017518931455181, abs=1e-12)
        assert cmap.x_upper == pytest.approx(2.7953544407346076, abs=1e-9)
        # affine example: finite lower end only
        m2 = _model(0.0, 0.4)
        assert m2.map.x_lower == pytest.approx(math.log(0.6) / 0.4, rel=1e-14)
        assert math.isinf(m2.map.x_upper)

    def test_forward_diverges_at_upper_end(self):
        m = _model(0.5, 0.2)
        cmap = m.map
        assert float(cmap.from_coord(cmap.x_upper - 1e-8)) > 1e6
        assert float(cmap.from_coord(cmap.x_lower + 1e-8)) == pytest.approx(
            0.0, abs=1e-6)

    def test_drift_shape_values(self):
        x = np.array([-0.3, 0.0, 0.4])
        assert np.allclose(_model(0.0, 1.0).map.drift_shape(x), 0.5)
        assert np.allclose(_model(0.0, 0.4).map.drift_shape(x), 0.2)
        # curved families: slope equals d(log sqrt(sigma))/dx, check by FD
        for a, b in [(0.5, 0.2), (1.5, 1.74)]:
            cmap = _model(a, b).map
            h = 1e-6
            fd = (np.log(cmap.sqrt_sigma(x + h)) - np.log(cmap.sqrt_sigma(x - h))) / (2 * h)
            assert np.allclose(cmap.drift_shape(x), fd, rtol=1e-6)

    def test_variance_drift_coefficient(self):
        m = _model(0.0, 1.0, kappa=3.0, epsilon=0.8, rho=-0.5)
        # b2 = kappa - (kappa - rho*eps/2) x2 for the log map
        val = m.b2(0.0, 2.0)
        assert float(val) == pytest.approx(3.0 - (3.0 - (-0.5) * 0.8 * 0.5) * 2.0,
                                           rel=1e-14)
        # at x2 = 1, rho = 0 the drift vanishes
        m0 = _model(0.5, 0.2, rho=0.0)
        assert float(m0.b2(0.3, 1.0)) == pytest.approx(0.0, abs=1e-14)


# --------------------------------------------------------------------------- #
# Payoffs and problems
# --------------------------------------------------------------------------- #

class TestPayoffs:
    @given(curve=admissible_curves(), strike=st.floats(0.5, 2.0))
    @settings(max_examples=100, deadline=None)
    def test_covered_call_closed_form(self, curve, strike):
        m = _model(*curve)
        cmap = m.map
        lo = cmap.x_lower if math.isfinite(cmap.x_lower) else -2.5
        hi = cmap.x_upper if math.isfinite(cmap.x_upper) else 2.5
        x = np.linspace(lo + 1e-9, hi - 1e-9, 257)
        pay = covered_call_payoff(m, strike)(x)
        direct = np.minimum(cmap.from_coord(x), strike) / cmap.sqrt_sigma(x)
        np.testing.assert_allclose(pay, direct, rtol=1e-10, atol=1e-12)

    @given(curve=admissible_curves())
    @settings(max_examples=100, deadline=None)
    def test_no_touch_closed_form(self, curve):
        m = _model(*curve)
        cmap = m.map
        lo = cmap.x_lower if math.isfinite(cmap.x_lower) else -2.5
        hi = cmap.x_upper if math.isfinite(cmap.x_upper) else 2.5
        x = np.linspace(lo + 1e-9, hi - 1e-9, 257)
        np.testing.assert_allclose(no_touch_payoff(m)(x),
                                   1.0 / cmap.sqrt_sigma(x),
                                   rtol=1e-10, atol=1e-12)

    def test_payoff_vanishes_at_lower_domain_end(self):
        # min(F, K)/sqrt(sigma) -> 0 as F -> 0 for families with finite ends
        for a, b in [(0.0, 0.4), (0.5, 0.2), (1.5, 1.74)]:
            m = _model(a, b)
            pay = covered_call_payoff(m, 1.0)
            assert float(pay(np.array([m.map.x_lower]))[0]) == pytest.approx(
                0.0, abs=1e-12)

    def test_call_problem_structure(self):
        m = _model(0.5, 0.2)
        prob = transformed_call_problem(m, 1.2)
        assert prob.kind == "covered-call"
        assert prob.lower_bc == prob.upper_bc == "endogenous"
        assert prob.x1_lower == m.map.x_lower
        assert prob.x1_upper == m.map.x_upper
        assert prob.strike == 1.2

    def test_dnt_problem_from_forwards(self):
        m = _model(0.0, 1.0)
        prob = transformed_dnt_problem(m, 0.8, 1.25)
        assert prob.kind == "double-no-touch"
        assert prob.lower_bc == prob.upper_bc == "dirichlet"
        assert prob.x1_lower == pytest.approx(math.log(0.8), rel=1e-14)
        assert prob.x1_upper == pytest.approx(math.log(1.25), rel=1e-14)

    def test_dnt_problem_from_coords(self):
        m = _model(0.0, 1.0)
        prob = dnt_problem_from_coords(m, -0.2, 0.25)
        assert prob.x1_lower == -0.2
        assert prob.x1_upper == 0.25

    def test_dnt_rejects_bad_barriers(self):
        m = _model(0.5, 0.2)
        with pytest.raises(ValueError):
            transformed_dnt_problem(m, 1.25, 0.8)
        with pytest.raises(ValueError):
            dnt_problem_from_coords(m, m.map.x_lower - 0.1, 0.5)
