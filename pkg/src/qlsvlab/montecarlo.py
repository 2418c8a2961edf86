"""Monte Carlo engine for the normalized log-coordinate (Heston-type) model.

Variance steps use the Andersen quadratic-exponential moment-matched draw;
the log-forward then updates conditionally on the variance path through the
trapezoidal integrated-variance increment, so no separate spot diffusion
has to be discretized.  A counter-based generator drives a single uniform
stream per step: the variance draw consumes one uniform, the spot normal a
second, and antithetic pairing mirrors both.

Also provides two testable transition references: the noncentral
chi-square variance transition density and the Bessel-ratio characteristic
function of the integrated variance conditional on its endpoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import ive, ndtri

from qlsvlab.model import QlsvModel, TransformedProblem

__all__ = [
    "McConfig",
    "McEstimate",
    "qe_variance_step",
    "logspot_step",
    "simulate_terminal",
    "price_call_mc",
    "price_dnt_mc",
    "cir_precision",
    "ncx2_transition_density",
    "bk_char_function",
]

_QE_SWITCH = 1.5
_U_FLOOR = 1e-15  # keeps inverse-normal and log maps finite at stream ends


def _clipped(u):
    return np.clip(u, _U_FLOOR, 1.0 - _U_FLOOR)


@dataclass(frozen=True)
class McConfig:
    """Simulation size and clock: path count, monitoring frequency, seed."""

    n_paths: int
    steps_per_day: int = 3
    seed: int = 0
    antithetic: bool = True
    days_per_year: int = 365

    def __post_init__(self) -> None:
        if self.n_paths < 2:
            raise ValueError("need at least two paths")
        if self.antithetic and self.n_paths % 2 != 0:
            raise ValueError("antithetic pairing needs an even path count")
        if self.steps_per_day < 1 or self.days_per_year < 1:
            raise ValueError("step counts must be positive")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int


# --------------------------------------------------------------------------- #
# Stepping kernels
# --------------------------------------------------------------------------- #

def _qe_from_uniform(v, dt: float, kappa: float, epsilon: float, u):
    """Moment-matched variance draw from a single uniform per path."""
    v = np.asarray(v, dtype=float)
    u = _clipped(u)
    decay = math.exp(-kappa * dt)
    mean = 1.0 + (v - 1.0) * decay
    if epsilon == 0.0:
        return mean
    var = (v * epsilon**2 * decay * (1.0 - decay) / kappa
           + epsilon**2 * (1.0 - decay) ** 2 / (2.0 * kappa))
    shape = var / mean**2

    with np.errstate(invalid="ignore", divide="ignore"):
        # quadratic branch: v' = a (b + Z)^2 matching both moments
        inv = 2.0 / shape
        b_sq = inv - 1.0 + np.sqrt(inv) * np.sqrt(np.abs(inv - 1.0))
        a_coef = mean / (1.0 + b_sq)
        z = ndtri(u)
        quadratic = a_coef * (np.sqrt(np.abs(b_sq)) + z) ** 2
        # exponential branch: point mass at zero plus an exponential tail
        prob_zero = (shape - 1.0) / (shape + 1.0)
        rate = (1.0 - prob_zero) / mean
        exponential = np.where(
            u <= prob_zero, 0.0,
            np.log((1.0 - prob_zero) / (1.0 - u)) / rate)
    return np.where(shape <= _QE_SWITCH, quadratic, exponential)


def qe_variance_step(v, dt: float, kappa: float, epsilon: float,
                     rng: np.random.Generator):
    """One variance transition; exact conditional mean and variance."""
    v = np.asarray(v, dtype=float)
    return _qe_from_uniform(v, dt, kappa, epsilon, rng.random(v.shape))


def _logspot_from_normal(x, v, v_next, di, dt: float, rho: float,
                         epsilon: float, kappa: float, z):
    """Conditional log-forward update given the variance increment.

    dx = (rho/eps)*(v' - v - kappa*dt) + (rho*kappa/eps - 1/2)*dI
         + sqrt(1 - rho^2) * sqrt(dI) * Z.
    """
    if epsilon == 0.0:
        if rho != 0.0:
            raise ValueError("rho must vanish when epsilon is zero")
        drift = -0.5 * di
    else:
        drift = (rho / epsilon * (v_next - v - kappa * dt)
                 + (rho * kappa / epsilon - 0.5) * di)
    return x + drift + math.sqrt(1.0 - rho * rho) * np.sqrt(di) * z


def logspot_step(x, v, v_next, di, dt: float, rho: float, epsilon: float,
                 kappa: float, rng: np.random.Generator):
    """One conditional log-forward transition; dI is the trapezoid
    increment of integrated variance over the step."""
    x = np.asarray(x, dtype=float)
    z = ndtri(_clipped(rng.random(x.shape)))
    return _logspot_from_normal(x, v, v_next, di, dt, rho, epsilon, kappa, z)


# --------------------------------------------------------------------------- #
# Path engine
# --------------------------------------------------------------------------- #

def simulate_terminal(model: QlsvModel, years: float, config: McConfig,
                      x_start: float = 0.0,
                      barriers: Optional[Tuple[float, float]] = None):
    """Terminal log-forwards and barrier-survival flags.

    Monitoring is discrete: a path dies when its end-of-step log-forward
    leaves the open barrier interval.
    """
    if model.vol_class != "proportional":
        raise ValueError("path engine simulates the log-coordinate family")
    if years <= 0.0:
        raise ValueError("maturity must be positive")
    tau = model.tau_from_years(years)
    n_steps = max(1, round(config.days_per_year * config.steps_per_day
                           * years))
    dt = tau / n_steps
    kappa, epsilon, rho = model.kappa, model.epsilon, model.rho

    rng = np.random.Generator(np.random.Philox(config.seed))
    n = config.n_paths
    half = n // 2 if config.antithetic else n

    x = np.full(n, float(x_start))
    v = np.full(n, float(model.v0))
    alive = np.ones(n, dtype=bool)

    for _ in range(n_steps):
        u = rng.random((2, half))
        if config.antithetic:
            u_v = np.concatenate([u[0], 1.0 - u[0]])
            u_x = np.concatenate([u[1], 1.0 - u[1]])
        else:
            u_v, u_x = u[0], u[1]
        v_next = _qe_from_uniform(v, dt, kappa, epsilon, u_v)
        di = 0.5 * (v + v_next) * dt
        x = _logspot_from_normal(x, v, v_next, di, dt, rho, epsilon, kappa,
                                 ndtri(_clipped(u_x)))
        v = v_next
        if barriers is not None:
            alive &= (x > barriers[0]) & (x < barriers[1])
    return x, alive


def _estimate(payoffs: np.ndarray, config: McConfig) -> McEstimate:
    if config.antithetic:
        half = config.n_paths // 2
        values = 0.5 * (payoffs[:half] + payoffs[half:])
    else:
        values = payoffs
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(values.size))
    return McEstimate(mean, stderr, config.n_paths)


def price_call_mc(model: QlsvModel, strike: float, years: float,
                  config: McConfig, x_start: float = 0.0) -> McEstimate:
    """Call on the forward, priced from terminal log-forwards."""
    x_t, _ = simulate_terminal(model, years, config, x_start)
    payoff = np.maximum(np.exp(x_t) - strike, 0.0)
    return _estimate(payoff, config)


def price_dnt_mc(problem: TransformedProblem, years: float, config: McConfig,
                 x_start: float = 0.0) -> McEstimate:
    """Double-no-touch: unit payout if the path never leaves the barrier
    interval at any monitoring date."""
    if problem.kind != "double-no-touch":
        raise ValueError("problem must be a double-no-touch")
    _, alive = simulate_terminal(problem.model, years, config, x_start,
                                 barriers=(problem.x1_lower,
                                           problem.x1_upper))
    return _estimate(alive.astype(float), config)


# --------------------------------------------------------------------------- #
# Transition references
# --------------------------------------------------------------------------- #

def cir_precision(kappa: float, tau: float, epsilon: float) -> float:
    """Frequency parameter of the variance transition,
    kappa / (eps^2 * sinh(kappa*tau/2)); diverges like 2/(eps^2*tau)."""
    if tau <= 0.0 or epsilon <= 0.0:
        raise ValueError("tau and epsilon must be positive")
    return kappa / (epsilon**2 * math.sinh(0.5 * kappa * tau))


def ncx2_transition_density(v_next, v_now: float, tau: float, kappa: float,
                            epsilon: float):
    """Noncentral chi-square density of the variance transition.

    Evaluated through the exponentially scaled Bessel function so the
    short-maturity spike stays finite in floating point.
    """
    if v_now <= 0.0 or tau <= 0.0:
        raise ValueError("v_now and tau must be positive")
    v_next = np.asarray(v_next, dtype=float)
    if np.any(v_next < 0.0):
        raise ValueError("variance cannot be negative")
    order = 2.0 * kappa / epsilon**2 - 1.0
    freq = cir_precision(kappa, tau, epsilon)
    half_decay = math.exp(-0.5 * kappa * tau)
    v_bar_now = v_now * half_decay
    v_bar_next = v_next / half_decay
    bessel_arg = 2.0 * freq * np.sqrt(v_bar_now * v_bar_next)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_density = (
            0.5 * kappa * tau + math.log(freq)
            + 0.5 * order * (np.log(v_bar_next) - math.log(v_bar_now))
            - freq * (np.sqrt(v_bar_next) - math.sqrt(v_bar_now)) ** 2
            + np.log(ive(order, bessel_arg)))
        density = np.exp(log_density)
    # At the origin the density behaves like v^order: zero for a held-away
    # origin, a power-law spike when the origin is attainable.
    edge = np.inf if order < 0.0 else (0.0 if order > 0.0 else freq
                                       * math.exp(0.5 * kappa * tau
                                                  - freq * v_bar_now))
    return np.where(v_next == 0.0, edge, density)


def _log_endpoint_kernel(rate, tau: float, v_now: float, v_next: float,
                         order: float, epsilon: float):
    """log of P(rate) = log[ psi * exp(-psi*cosh*(v+v')) * I_order(z) ]
    with psi = rate/(eps^2*sinh(rate*tau/2)), z = 2*psi*sqrt(v*v')."""
    rate = np.asarray(rate, dtype=complex)
    freq = rate / (epsilon**2 * np.sinh(0.5 * rate * tau))
    weight = freq * np.cosh(0.5 * rate * tau)
    bessel_arg = 2.0 * freq * math.sqrt(v_now * v_next)
    log_bessel = np.log(ive(order, bessel_arg)) + np.abs(bessel_arg.real)
    return np.log(freq) - weight * (v_now + v_next) + log_bessel


def bk_char_function(l, tau: float, v_now: float, v_next: float,
                     kappa: float, epsilon: float):
    """Characteristic function of integrated variance conditional on its
    endpoint values: a ratio of endpoint kernels at rates
    sqrt(kappa^2 - 2i*eps^2*l) and kappa."""
    if v_now <= 0.0 or v_next <= 0.0:
        raise ValueError("endpoint variances must be positive")
    l = np.asarray(l, dtype=complex)
    order = 2.0 * kappa / epsilon**2 - 1.0
    rate = np.sqrt(kappa**2 - 2.0j * epsilon**2 * l)
    log_top = _log_endpoint_kernel(rate, tau, v_now, v_next, order, epsilon)
    log_bot = _log_endpoint_kernel(kappa, tau, v_now, v_next, order, epsilon)
    return np.exp(log_top - log_bot)
