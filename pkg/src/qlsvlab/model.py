"""Model definitions, normalization, vol-curve classification, coordinate maps.

The local volatility curve is quadratic in the forward,

    sigma(F) = 0.5*alpha*F^2 + beta*F + gamma          (dimensional)

and instantaneous variance follows a square-root mean-reverting process
correlated with the forward.  After normalization (forward and variance
rescaled to 1, time rescaled by the squared spot vol) the curve becomes

    sigma(F) = 0.5*a*(F - 1)^2 + b*(F - 1) + 1         (normalized)

and everything downstream works with the normalized model only.

Admissible curves (positive on the open positive half axis) fall into four
families, named here by the shape of the coordinate map that removes the
local vol from the diffusion term:

    proportional   a = 0, b = 1       log map,            x in (-inf, inf)
    affine         a = 0, 0 <= b < 1  shifted log map,    x in (x_lo, inf)
    complex-roots  a > 0, |b| < sqrt(2a)      arctangent map, x in (x_lo, x_hi)
    real-roots     a > 0, max(a, sqrt(2a)) < b < 1 + a/2  ratio log map,
                                                          x in (x_lo, x_hi)

In map coordinates the pricing PDE has constant leading coefficients and a
constant zero-order parameter omega = (b^2 - 2a)/4; the map also supplies
the spot-recovery inverse and the slope function entering the correlation
drift.  Values within 1e-12 of a family boundary are rejected because the
transforms degenerate there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

_BOUNDARY_TOL = 1e-12

__all__ = [
    "MarketParams",
    "QlsvModel",
    "VolClassInfo",
    "TransformedProblem",
    "classify",
    "normalize",
    "transformed_call_problem",
    "transformed_dnt_problem",
    "dnt_problem_from_coords",
]


# --------------------------------------------------------------------------- #
# Parameter containers
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class MarketParams:
    """Dimensional market inputs.

    ``alpha, beta, gamma`` are the coefficients of the dimensional vol curve
    sigma(F) = 0.5*alpha*F^2 + beta*F + gamma.  ``kappa, theta, epsilon`` are
    the variance mean-reversion speed, level and vol-of-vol, ``rho`` the
    spot/variance correlation, ``v0`` the initial variance and ``spot`` the
    initial forward.
    """

    alpha: float
    beta: float
    gamma: float
    kappa: float
    theta: float
    epsilon: float
    rho: float
    v0: float
    spot: float

    def __post_init__(self) -> None:
        if self.spot <= 0.0:
            raise ValueError("spot must be positive")
        if self.theta <= 0.0:
            raise ValueError("theta must be positive")
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie strictly inside (-1, 1)")
        if self.v0 < 0.0:
            raise ValueError("v0 must be non-negative")
        if self.sigma(self.spot) <= 0.0:
            raise ValueError("vol curve must be positive at the spot")

    def sigma(self, forward: float) -> float:
        """Dimensional local vol at the given forward."""
        return 0.5 * self.alpha * forward**2 + self.beta * forward + self.gamma


@dataclass(frozen=True)
class VolClassInfo:
    """Classification of a normalized quadratic vol curve.

    ``omega`` is the constant zero-order parameter of the transformed PDE.
    For the complex-roots family the curve's roots are m +/- i*n; for the
    real-roots family they are p < q < 0.
    """

    label: str
    omega: float
    m: Optional[float] = None
    n: Optional[float] = None
    p: Optional[float] = None
    q: Optional[float] = None


def classify(alpha: float, beta: float) -> VolClassInfo:
    """Classify the normalized vol curve 0.5*a*(F-1)^2 + b*(F-1) + 1.

    Raises ValueError for curves that vanish somewhere on [0, inf) or sit
    within 1e-12 of a family boundary.
    """
    a, b = float(alpha), float(beta)
    if a < -_BOUNDARY_TOL:
        raise ValueError("normalized quadratic coefficient must be non-negative")
    omega = 0.25 * (b * b - 2.0 * a)

    if a <= _BOUNDARY_TOL:
        # Linear curve b*(F-1) + 1: positive on [0, inf) iff 0 <= b <= 1.
        if abs(b - 1.0) <= _BOUNDARY_TOL:
            return VolClassInfo("proportional", 0.25)
        if b > 1.0 or b < -_BOUNDARY_TOL:
            raise ValueError("linear vol curve vanishes on the positive half axis")
        if b > 1.0 - 1e-9:
            raise ValueError("linear slope too close to 1: shifted log map degenerates")
        return VolClassInfo("affine", omega)

    crit = math.sqrt(2.0 * a)
    if abs(b) < crit - _BOUNDARY_TOL:
        # Complex conjugate roots m +/- i*n; curve positive everywhere.
        m = (a - b) / a
        n = 2.0 * math.sqrt(-omega) / a
        return VolClassInfo("complex-roots", omega, m=m, n=n)
    if abs(b) <= crit + _BOUNDARY_TOL:
        raise ValueError("double-root vol curve sits on a family boundary")
    if b < 0.0:
        raise ValueError("vol curve has a positive real root")
    # Two real roots; both must be negative for positivity on [0, inf).
    if b - a <= _BOUNDARY_TOL or b >= 1.0 + 0.5 * a - _BOUNDARY_TOL:
        raise ValueError("real-root vol curve vanishes on the positive half axis")
    s = 2.0 * math.sqrt(omega)
    p = (a - b - s) / a
    q = (a - b + s) / a
    return VolClassInfo("real-roots", omega, p=p, q=q)


@dataclass(frozen=True)
class QlsvModel:
    """Normalized model: unit forward, unit variance level, rescaled clock.

    ``alpha, beta`` parametrize the normalized vol curve as above;
    ``kappa, epsilon`` are the rescaled mean-reversion speed and vol-of-vol,
    ``v0`` the rescaled initial variance.  ``time_scale`` converts calendar
    years to model time (tau = time_scale * years); models built without a
    dimensional anchor default it to 1.
    """

    alpha: float
    beta: float
    kappa: float
    epsilon: float
    rho: float
    v0: float
    time_scale: float = 1.0

    def __post_init__(self) -> None:
        classify(self.alpha, self.beta)  # reject inadmissible curves early
        if self.kappa <= 0.0:
            raise ValueError("kappa must be positive")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("rho must lie strictly inside (-1, 1)")
        if self.v0 < 0.0:
            raise ValueError("v0 must be non-negative")
        if self.time_scale <= 0.0:
            raise ValueError("time_scale must be positive")

    @classmethod
    def from_normalized(cls, alpha: float, beta: float, kappa: float,
                        epsilon: float, rho: float, v0: float,
                        time_scale: float = 1.0) -> "QlsvModel":
        """Build directly from normalized parameters."""
        return cls(alpha, beta, kappa, epsilon, rho, v0, time_scale)

    # -- derived quantities -------------------------------------------------

    @property
    def class_info(self) -> VolClassInfo:
        return classify(self.alpha, self.beta)

    @property
    def vol_class(self) -> str:
        return self.class_info.label

    @property
    def omega(self) -> float:
        return self.class_info.omega

    @property
    def feller_index(self) -> float:
        """2*kappa/epsilon^2 - 1; negative means the origin is attainable."""
        return 2.0 * self.kappa / self.epsilon**2 - 1.0

    def sigma(self, forward):
        """Normalized local vol at the given forward (vectorized)."""
        f = np.asarray(forward, dtype=float)
        y = f - 1.0
        return 0.5 * self.alpha * y * y + self.beta * y + 1.0

    def tau_from_years(self, years: float) -> float:
        return self.time_scale * float(years)

    @property
    def map(self) -> "CoordinateMap":
        return _map_for(self)

    def b2(self, x1, x2):
        """Variance drift coefficient of the transformed PDE.

        b2(x1, x2) = kappa - (kappa - rho*epsilon*slope(x1)) * x2 where
        ``slope`` is the map's correlation drift shape.
        """
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        slope = self.map.drift_shape(x1)
        return self.kappa - (self.kappa - self.rho * self.epsilon * slope) * x2


def normalize(params: MarketParams) -> QlsvModel:
    """Rescale dimensional inputs to the unit-forward, unit-variance model.

    The vol scale is Sigma = sqrt(theta) * sigma(spot) / spot; model time is
    tau = Sigma^2 * t, so ``time_scale`` is Sigma^2 per year.
    """
    f0 = params.spot
    s = params.sigma(f0)
    a_bar = params.alpha * f0 * f0 / s
    b_bar = (params.alpha * f0 * f0 + params.beta * f0) / s
    sigma_sq = params.theta * (s / f0) ** 2
    return QlsvModel(
        alpha=a_bar,
        beta=b_bar,
        kappa=params.kappa / sigma_sq,
        epsilon=params.epsilon / (math.sqrt(params.theta) * math.sqrt(sigma_sq)),
        rho=params.rho,
        v0=params.v0 / params.theta,
        time_scale=sigma_sq,
    )


# --------------------------------------------------------------------------- #
# Coordinate maps
# --------------------------------------------------------------------------- #

class CoordinateMap:
    """Change of variables x = integral_1^F dF'/sigma(F').

    In x coordinates the forward diffusion has unit local vol and the PDE
    picks up the constant zero-order parameter ``omega``.  Subclasses supply
    the closed forms per vol family.  ``x_lower``/``x_upper`` are the images
    of F = 0 and F = inf (possibly infinite).
    """

    x_lower: float
    x_upper: float
    omega: float

    def to_coord(self, forward):
        raise NotImplementedError

    def from_coord(self, x):
        raise NotImplementedError

    def sqrt_sigma(self, x):
        """sqrt(sigma(F(x))) as a function of the map coordinate."""
        raise NotImplementedError

    def drift_shape(self, x):
        """Slope function multiplying rho*epsilon*x2 in the variance drift."""
        raise NotImplementedError


class _LogMap(CoordinateMap):
    def __init__(self) -> None:
        self.x_lower = -math.inf
        self.x_upper = math.inf
        self.omega = 0.25

    def to_coord(self, forward):
        return np.log(np.asarray(forward, dtype=float))

    def from_coord(self, x):
        return np.exp(np.asarray(x, dtype=float))

    def sqrt_sigma(self, x):
        return np.exp(0.5 * np.asarray(x, dtype=float))

    def drift_shape(self, x):
        return np.full_like(np.asarray(x, dtype=float), 0.5)


class _ShiftedLogMap(CoordinateMap):
    def __init__(self, beta: float) -> None:
        self.beta = beta
        self.omega = 0.25 * beta * beta
        self.x_lower = math.log1p(-beta) / beta if beta > 0.0 else -1.0
        self.x_upper = math.inf

    def to_coord(self, forward):
        f = np.asarray(forward, dtype=float)
        if self.beta == 0.0:
            return f - 1.0
        return np.log1p(self.beta * (f - 1.0)) / self.beta

    def from_coord(self, x):
        x = np.asarray(x, dtype=float)
        if self.beta == 0.0:
            return 1.0 + x
        return 1.0 + np.expm1(self.beta * x) / self.beta

    def sqrt_sigma(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(0.5 * self.beta * x)

    def drift_shape(self, x):
        return np.full_like(np.asarray(x, dtype=float), 0.5 * self.beta)


class _ArctanMap(CoordinateMap):
    def __init__(self, alpha: float, m: float, n: float, omega: float) -> None:
        self.alpha = alpha
        self.m = m
        self.n = n
        self.omega = omega
        self.w = math.sqrt(-omega)
        shift = math.atan2(1.0 - m, n)
        self.x_lower = (-math.atan2(m, n) - shift) / self.w
        self.x_upper = (0.5 * math.pi - shift) / self.w

    def to_coord(self, forward):
        f = np.asarray(forward, dtype=float)
        shift = math.atan2(1.0 - self.m, self.n)
        return (np.arctan((f - self.m) / self.n) - shift) / self.w

    def from_coord(self, x):
        x = np.asarray(x, dtype=float)
        amp = math.hypot(self.m, self.n)
        return amp * np.sin(self.w * (x - self.x_lower)) / np.sin(self.w * (self.x_upper - x))

    def sqrt_sigma(self, x):
        x = np.asarray(x, dtype=float)
        return self.w / (math.sqrt(0.5 * self.alpha) * np.sin(self.w * (self.x_upper - x)))

    def drift_shape(self, x):
        x = np.asarray(x, dtype=float)
        return self.w / np.tan(self.w * (self.x_upper - x))


class _LogRatioMap(CoordinateMap):
    def __init__(self, alpha: float, p: float, q: float, omega: float) -> None:
        self.alpha = alpha
        self.p = p
        self.q = q
        self.omega = omega
        self.w = math.sqrt(omega)
        self.x_lower = math.log((1.0 - p) * q / ((1.0 - q) * p)) / (2.0 * self.w)
        self.x_upper = math.log((1.0 - p) / (1.0 - q)) / (2.0 * self.w)

    def to_coord(self, forward):
        f = np.asarray(forward, dtype=float)
        ratio = (1.0 - self.p) * (f - self.q) / ((1.0 - self.q) * (f - self.p))
        return np.log(ratio) / (2.0 * self.w)

    def from_coord(self, x):
        x = np.asarray(x, dtype=float)
        amp = math.sqrt(self.p * self.q)
        return amp * np.sinh(self.w * (x - self.x_lower)) / np.sinh(self.w * (self.x_upper - x))

    def sqrt_sigma(self, x):
        x = np.asarray(x, dtype=float)
        return self.w / (math.sqrt(0.5 * self.alpha) * np.sinh(self.w * (self.x_upper - x)))

    def drift_shape(self, x):
        x = np.asarray(x, dtype=float)
        return self.w / np.tanh(self.w * (self.x_upper - x))


@lru_cache(maxsize=128)
def _map_cached(alpha: float, beta: float) -> CoordinateMap:
    info = classify(alpha, beta)
    if info.label == "proportional":
        return _LogMap()
    if info.label == "affine":
        return _ShiftedLogMap(beta if abs(beta) > _BOUNDARY_TOL else 0.0)
    if info.label == "complex-roots":
        return _ArctanMap(alpha, info.m, info.n, info.omega)
    return _LogRatioMap(alpha, info.p, info.q, info.omega)


def _map_for(model: QlsvModel) -> CoordinateMap:
    return _map_cached(model.alpha, model.beta)


# --------------------------------------------------------------------------- #
# Transformed payoffs and problems
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class TransformedProblem:
    """A pricing problem posed in map coordinates.

    ``payoff`` maps x1 arrays to the transformed terminal data
    u(x1) = (payout as a function of the forward) / sqrt(sigma).  Recover
    plain prices as sqrt(sigma(x1)) * U(tau, x1, x2).  Boundary modes are
    "dirichlet" (value pinned, zero rebate here) or "endogenous" (one-sided
    PDE rows close the system).  For barrier problems ``x1_lower/x1_upper``
    are the barriers; for calls they are the map's domain ends, possibly
    infinite, and the grid truncates them.
    """

    model: QlsvModel
    kind: str
    payoff: Callable[[np.ndarray], np.ndarray]
    x1_lower: float
    x1_upper: float
    lower_bc: str
    upper_bc: str
    strike: Optional[float] = None

    @property
    def omega(self) -> float:
        return self.model.omega


def covered_call_payoff(model: QlsvModel, strike: float) -> Callable[[np.ndarray], np.ndarray]:
    """Transformed payoff of min(F, K), in per-family closed form.

    Equals min(F(x), K) / sqrt(sigma(x)); the closed forms below avoid the
    spot-recovery ratios near the domain ends.
    """
    cmap = model.map
    info = model.class_info
    xk = float(cmap.to_coord(strike))
    label = info.label

    def payoff(x):
        x = np.asarray(x, dtype=float)
        below = x <= xk
        out = np.empty_like(x)
        if label == "proportional":
            out[below] = np.exp(0.5 * x[below])
            out[~below] = strike * np.exp(-0.5 * x[~below])
        elif label == "affine":
            b = model.beta
            if b == 0.0:
                out[below] = x[below] - cmap.x_lower
                out[~below] = strike
            else:
                out[below] = (2.0 * math.sqrt(1.0 - b) / b) * np.sinh(
                    0.5 * b * (x[below] - cmap.x_lower))
                out[~below] = strike * np.exp(-0.5 * b * x[~below])
        elif label == "complex-roots":
            w = cmap.w
            amp = math.hypot(info.m, info.n)
            root_half_a = math.sqrt(0.5 * model.alpha)
            out[below] = (root_half_a * amp / w) * np.sin(w * (x[below] - cmap.x_lower))
            out[~below] = (root_half_a * strike / w) * np.sin(w * (cmap.x_upper - x[~below]))
        else:
            w = cmap.w
            amp = math.sqrt(info.p * info.q)
            root_half_a = math.sqrt(0.5 * model.alpha)
            out[below] = (root_half_a * amp / w) * np.sinh(w * (x[below] - cmap.x_lower))
            out[~below] = (root_half_a * strike / w) * np.sinh(w * (cmap.x_upper - x[~below]))
        return out

    return payoff


def no_touch_payoff(model: QlsvModel) -> Callable[[np.ndarray], np.ndarray]:
    """Transformed payoff of a unit payout: 1 / sqrt(sigma(x)) in closed form."""
    cmap = model.map
    label = model.vol_class

    def payoff(x):
        x = np.asarray(x, dtype=float)
        if label == "proportional":
            return np.exp(-0.5 * x)
        if label == "affine":
            b = model.beta
            if b == 0.0:
                return np.ones_like(x)
            return np.exp(-0.5 * b * x)
        w = cmap.w
        root_half_a = math.sqrt(0.5 * model.alpha)
        if label == "complex-roots":
            return (root_half_a / w) * np.sin(w * (cmap.x_upper - x))
        return (root_half_a / w) * np.sinh(w * (cmap.x_upper - x))

    return payoff


def transformed_call_problem(model: QlsvModel, strike: float) -> TransformedProblem:
    """Covered-call problem on the map's full domain, endogenous far ends."""
    if strike <= 0.0:
        raise ValueError("strike must be positive")
    cmap = model.map
    return TransformedProblem(
        model=model,
        kind="covered-call",
        payoff=covered_call_payoff(model, strike),
        x1_lower=cmap.x_lower,
        x1_upper=cmap.x_upper,
        lower_bc="endogenous",
        upper_bc="endogenous",
        strike=float(strike),
    )


def transformed_dnt_problem(model: QlsvModel, barrier_lower: float,
                            barrier_upper: float) -> TransformedProblem:
    """Double-no-touch problem with barriers given in forward space."""
    if not 0.0 < barrier_lower < barrier_upper:
        raise ValueError("barriers must satisfy 0 < lower < upper")
    cmap = model.map
    return dnt_problem_from_coords(
        model,
        float(cmap.to_coord(barrier_lower)),
        float(cmap.to_coord(barrier_upper)),
    )


def dnt_problem_from_coords(model: QlsvModel, x_lower: float,
                            x_upper: float) -> TransformedProblem:
    """Double-no-touch problem with barriers given in map coordinates."""
    cmap = model.map
    if not x_lower < x_upper:
        raise ValueError("barriers out of order")
    if x_lower < cmap.x_lower or x_upper > cmap.x_upper:
        raise ValueError("barriers fall outside the map domain")
    return TransformedProblem(
        model=model,
        kind="double-no-touch",
        payoff=no_touch_payoff(model),
        x1_lower=float(x_lower),
        x1_upper=float(x_upper),
        lower_bc="dirichlet",
        upper_bc="dirichlet",
    )
