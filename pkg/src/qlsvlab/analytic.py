"""Closed-form and quadrature reference pricers.

Everything here prices against the transformed PDE's exact mode structure:

* a Fourier-integral covered-call pricer for the log-coordinate family at
  any correlation (the mode tilt absorbs the correlation term);
* zero-correlation covered-call pricers for the shifted-log family
  (sine-transform integral on a half line) and for the bounded-domain
  families (eigenseries);
* the zero-correlation double-no-touch eigenseries;
* closed forms for the payoff transform coefficients, with the telescoping
  cancellation of their cosine terms exposed for verification;
* the undiscounted Black-Scholes call.

Prices are reported as plain call values: call = forward - sqrt(sigma) * U,
where U is the transformed covered-call surface the formulas produce.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.special import ndtr

from qlsvlab.model import QlsvModel
from qlsvlab.rho_expansion import _frequency_split, affine_AB

__all__ = [
    "bs_call",
    "heston_mode_factor",
    "heston_covered_call_fourier",
    "heston_call_fourier",
    "branch_argument_scan",
    "rho0_covered_series_call",
    "rho0_series_call",
    "rho0_dnt_series",
    "payoff_fourier_coeffs",
    "real_roots_cos_bracket",
]

_K_CAP = 2.0**18
_ENVELOPE_TOL = 1e-14


# --------------------------------------------------------------------------- #
# Black-Scholes
# --------------------------------------------------------------------------- #

def bs_call(forward: float, strike: float, vol: float, tau: float) -> float:
    """Undiscounted lognormal call value."""
    if vol <= 0.0 or tau <= 0.0:
        raise ValueError("vol and tau must be positive")
    stdev = vol * math.sqrt(tau)
    d_plus = math.log(forward / strike) / stdev + 0.5 * stdev
    d_minus = d_plus - stdev
    return forward * ndtr(d_plus) - strike * ndtr(d_minus)


# --------------------------------------------------------------------------- #
# Log-coordinate family: Fourier integral, any correlation
# --------------------------------------------------------------------------- #

def heston_mode_factor(model: QlsvModel, k, tau: float, x2: float):
    """Complex mode amplitude exp(A + B*x2) of the Fourier mode exp(i*k*x1).

    The correlation folds into a complex drift tilt
    kappa_hat - i*rho*eps*k with kappa_hat = kappa - rho*eps/2.
    """
    k = np.asarray(k, dtype=float)
    lam = k**2 + 0.25
    kappa_hat = model.kappa - 0.5 * model.rho * model.epsilon
    tilt = kappa_hat - 1j * model.rho * model.epsilon * k
    a_val, b_val = affine_AB(tau, lam + 0j, 0.0j, tilt, model.kappa,
                             model.epsilon)
    return np.exp(a_val + b_val * x2)


def _auto_k_max(envelope: Callable[[float], float], start: float = 64.0,
                tol: float = _ENVELOPE_TOL) -> float:
    k = start
    while k <= _K_CAP:
        if envelope(k) < tol:
            return k
        k *= 2.0
    raise RuntimeError(
        "integrand envelope still "
        f"{envelope(_K_CAP):.2e} at wavenumber {_K_CAP:.0f}; pass an "
        "explicit k_max to integrate a slowly decaying (short-maturity) "
        "transform")


def heston_covered_call_fourier(model: QlsvModel, strike: float, tau: float,
                                x2: float, x1=0.0,
                                k_max: Optional[float] = None) -> np.ndarray:
    """Transformed covered-call surface U by Fourier inversion.

    U = (sqrt(sigma(K))/pi) * int_0^inf Re[mode(k) e^{ik(x1-X_K)}]
        / (k^2 + 1/4) dk.
    """
    if model.vol_class != "proportional":
        raise ValueError("Fourier pricer needs the log-coordinate family")
    if not abs(model.rho) < 1.0:
        raise ValueError("correlation must lie strictly inside (-1, 1)")
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x_k = float(model.map.to_coord(strike))

    if k_max is None:
        def envelope(k):
            val = heston_mode_factor(model, k, tau, x2)
            return abs(val) / (k * k + 0.25)
        k_max = _auto_k_max(envelope)

    def integrand(k):
        mode = heston_mode_factor(model, k, tau, x2)
        return np.real(mode * np.exp(1j * k * (x1 - x_k))) / (k * k + 0.25)

    integral, err = quad_vec(integrand, 0.0, k_max, epsabs=1e-12,
                             epsrel=1e-10, limit=2000)
    if err > 1e-7 * max(1.0, float(np.max(np.abs(integral)))):
        raise RuntimeError(f"Fourier quadrature error estimate {err:.2e}")
    return math.sqrt(model.sigma(strike)) * integral / math.pi


def heston_call_fourier(model: QlsvModel, strike: float, tau: float,
                        x2: float, x1=0.0,
                        k_max: Optional[float] = None) -> np.ndarray:
    """Call value: forward minus the covered call."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    covered = heston_covered_call_fourier(model, strike, tau, x2, x1, k_max)
    forward = model.map.from_coord(x1)
    return forward - model.map.sqrt_sigma(x1) * covered


def branch_argument_scan(model: QlsvModel, tau: float, k_max: float,
                         samples: int = 4096) -> float:
    """Largest jump of arg(Upsilon/2*varpi) between adjacent wavenumbers.

    The mode exponents take a principal logarithm of that ratio; a jump
    close to 2*pi would flag a branch wrap the principal value misses.
    """
    k = np.linspace(0.0, k_max, samples)
    lam = k**2 + 0.25
    kappa_hat = model.kappa - 0.5 * model.rho * model.epsilon
    tilt = kappa_hat - 1j * model.rho * model.epsilon * k
    varpi, xi_p, xi_m = _frequency_split(lam + 0j, tilt, model.epsilon)
    upsilon = xi_m + xi_p * np.exp(-varpi * tau)
    args = np.angle(upsilon / (2.0 * varpi))
    return float(np.max(np.abs(np.diff(args))))


# --------------------------------------------------------------------------- #
# Zero-correlation covered calls: sine transform / eigenseries
# --------------------------------------------------------------------------- #

def _series_sum(scale: float, term: Callable[[int], np.ndarray],
                max_modes: int, quiet_run: int = 10,
                rel_tol: float = 1e-12) -> np.ndarray:
    """Sum term(k) for k = 1.. until a run of relatively negligible terms."""
    total = None
    quiet = 0
    for k in range(1, max_modes + 1):
        t_k = term(k)
        total = t_k if total is None else total + t_k
        gauge = max(float(np.max(np.abs(total))), scale)
        if float(np.max(np.abs(t_k))) < rel_tol * gauge:
            quiet += 1
            if quiet >= quiet_run:
                return total
        else:
            quiet = 0
    raise RuntimeError(f"series did not settle within {max_modes} modes")


def rho0_covered_series_call(model: QlsvModel, strike: float, tau: float,
                             x2: float, x1=0.0,
                             k_max: Optional[float] = None,
                             max_modes: int = 20000) -> np.ndarray:
    """Transformed covered call U at zero correlation, outside the
    log-coordinate family.

    Shifted-log family: sine-transform integral over a continuous
    wavenumber on the half line above the domain end.  Bounded-domain
    families: eigenseries over the domain's sine modes.  Each mode carries
    the closed-form amplitude exp(A + B*x2).
    """
    if model.rho != 0.0:
        raise ValueError("series pricer is valid at zero correlation only")
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    cmap = model.map
    label = model.vol_class
    root_sigma_k = math.sqrt(model.sigma(strike))
    x_k = float(cmap.to_coord(strike))
    x_0 = cmap.x_lower
    kappa, epsilon = model.kappa, model.epsilon

    if label == "proportional":
        raise ValueError("log-coordinate family prices by Fourier integral")
    if label == "affine":
        beta = model.beta
        if beta <= 0.0:
            raise ValueError("shifted-log transform needs a positive slope")
        y_k = x_k - x_0

        def mode_lam(k):
            return k * k + 0.25 * beta * beta

        if k_max is None:
            def envelope(k):
                a_val, b_val = affine_AB(tau, mode_lam(k), 0.0, kappa, kappa,
                                         epsilon)
                return math.exp(a_val + b_val * x2) / mode_lam(k)
            k_max = _auto_k_max(envelope)

        def integrand(k):
            lam = mode_lam(k)
            a_val, b_val = affine_AB(tau, lam, 0.0, kappa, kappa, epsilon)
            return (math.exp(a_val + b_val * x2) / lam
                    * math.sin(k * y_k) * np.sin(k * (x1 - x_0)))

        integral, err = quad_vec(integrand, 0.0, k_max, epsabs=1e-12,
                                 epsrel=1e-10, limit=2000)
        if err > 1e-7 * max(1.0, float(np.max(np.abs(integral)))):
            raise RuntimeError(
                f"sine-transform quadrature error estimate {err:.2e}")
        return 2.0 * root_sigma_k * integral / math.pi

    # bounded domains: eigenseries
    width = cmap.x_upper - cmap.x_lower
    y_k = x_k - x_0
    omega = model.omega

    def term(k):
        zeta = math.pi * k / width
        lam = zeta * zeta + omega
        a_val, b_val = affine_AB(tau, lam, 0.0, kappa, kappa, epsilon)
        return (math.exp(a_val + b_val * x2) / lam
                * math.sin(zeta * y_k) * np.sin(zeta * (x1 - x_0)))

    total = _series_sum(1e-12, term, max_modes)
    return 2.0 * root_sigma_k * total / width


def rho0_series_call(model: QlsvModel, strike: float, tau: float, x2: float,
                     x1=0.0, k_max: Optional[float] = None,
                     max_modes: int = 20000) -> np.ndarray:
    """Call value at zero correlation: forward minus the covered call."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    covered = rho0_covered_series_call(model, strike, tau, x2, x1,
                                       k_max=k_max, max_modes=max_modes)
    return model.map.from_coord(x1) - model.map.sqrt_sigma(x1) * covered


# --------------------------------------------------------------------------- #
# Zero-correlation double-no-touch eigenseries
# --------------------------------------------------------------------------- #

def rho0_dnt_series(model: QlsvModel, barrier_lower: float,
                    barrier_upper: float, tau: float, x2: float, x1=0.0,
                    max_modes: int = 200000) -> np.ndarray:
    """Transformed no-touch surface U between two barriers (forward space).

    U = (2/width) * sum_k mode(k) * zeta_k * (1/sqrt(sigma(F_L))
        + (-1)^(k+1)/sqrt(sigma(F_U))) / Lam_k * sin(zeta_k*(x1 - X_L)).
    """
    if model.rho != 0.0:
        raise ValueError("eigenseries is valid at zero correlation only")
    if not 0.0 < barrier_lower < barrier_upper:
        raise ValueError("barriers must satisfy 0 < lower < upper")
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    cmap = model.map
    x_low = float(cmap.to_coord(barrier_lower))
    x_up = float(cmap.to_coord(barrier_upper))
    width = x_up - x_low
    omega = model.omega
    inv_root_lo = 1.0 / math.sqrt(model.sigma(barrier_lower))
    inv_root_hi = 1.0 / math.sqrt(model.sigma(barrier_upper))
    kappa, epsilon = model.kappa, model.epsilon

    def term(k):
        zeta = math.pi * k / width
        lam = zeta * zeta + omega
        a_val, b_val = affine_AB(tau, lam, 0.0, kappa, kappa, epsilon)
        weight = zeta * (inv_root_lo + (-1.0) ** (k + 1) * inv_root_hi) / lam
        return (math.exp(a_val + b_val * x2) * weight
                * np.sin(zeta * (x1 - x_low)))

    total = _series_sum(1e-12, term, max_modes)
    return 2.0 * total / width


# --------------------------------------------------------------------------- #
# Payoff transform coefficients (closed forms)
# --------------------------------------------------------------------------- #

def payoff_fourier_coeffs(model: QlsvModel,
                          strike: float) -> Callable[[np.ndarray], np.ndarray]:
    """Closed-form transform coefficients of the covered-call payoff.

    Shifted-log family: returns nu(k) over continuous wavenumber,
    nu(k) = sqrt(sigma(K)) * sin(k*Y) / (k^2 + beta^2/4), with Y the
    strike's distance from the domain end.  Bounded-domain families:
    returns nu(k) over integer mode index,
    nu_k = 2*sqrt(sigma(K))*sin(zeta_k*Y) / (width*Lam_k).
    """
    label = model.vol_class
    cmap = model.map
    root_sigma_k = math.sqrt(model.sigma(strike))
    y_k = float(cmap.to_coord(strike)) - cmap.x_lower

    if label == "proportional":
        raise ValueError("log-coordinate payoff transforms by full Fourier "
                         "integral, not a sine transform")
    if label == "affine":
        beta = model.beta
        if beta <= 0.0:
            raise ValueError("shifted-log transform needs a positive slope")

        def nu(k):
            k = np.asarray(k, dtype=float)
            return root_sigma_k * np.sin(k * y_k) / (k * k + 0.25 * beta**2)
        return nu

    width = cmap.x_upper - cmap.x_lower
    omega = model.omega

    def nu(k):
        k = np.asarray(k, dtype=float)
        zeta = np.pi * k / width
        lam = zeta * zeta + omega
        return 2.0 * root_sigma_k * np.sin(zeta * y_k) / (width * lam)
    return nu


def real_roots_cos_bracket(p: float, q: float, strike: float) -> float:
    """Cosine-term coefficient left over in the hyperbolic-family payoff
    transform before the telescoping step; it cancels identically.

    Returns sqrt(p*q)*(B2 - B1) + K*(C1 - C2) with
    B1 = sqrt((K-q)*p/((K-p)*q)), B2 = sqrt((K-p)*q/((K-q)*p)),
    C1 = sqrt((K-p)/(K-q)),       C2 = sqrt((K-q)/(K-p)).
    """
    if not (p < 0.0 and q < 0.0):
        raise ValueError("both roots must be negative")
    k = strike
    b1 = math.sqrt((k - q) * p / ((k - p) * q))
    b2 = math.sqrt((k - p) * q / ((k - q) * p))
    c1 = math.sqrt((k - p) / (k - q))
    c2 = math.sqrt((k - q) / (k - p))
    return math.sqrt(p * q) * (b2 - b1) + k * (c1 - c2)
