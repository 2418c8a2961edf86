"""Correlation power series for mode-reduced pricing problems.

With zero correlation every spatial mode evolves independently under a
one-factor operator

    d/dtau = 0.5*eps^2*x2*d2/dx2^2 + kappa*(1 - x2)*d/dx2 - 0.5*lam*x2,

whose action on exponentials ``exp(psi*x2)`` stays exponential-affine:
``exp(A(tau) + B(tau)*x2)`` with closed-form exponents.  Correlation adds a
source ``rho*eps*x2*d/dx2`` applied to a coupling-weighted mode mix.
Iterating Duhamel's formula around the uncorrelated flow produces a power
series in ``rho*eps``:

  * the n-th term is an n-fold time-ordered integral over injection times;
  * between injections each mode chain link propagates by the affine flow;
  * each injection multiplies by ``x2`` and differentiates, so integrands
    stay (polynomial in x2) * (exponential-affine factor);
  * polynomial transport through the flow follows from differentiating the
    affine exponents with respect to the initial slope psi, since
    ``x2^l * exp(psi*x2)`` is the l-th psi-derivative of ``exp(psi*x2)``.

The time simplex is mapped to the unit cube and integrated with composite
Boole quadrature.  Everything is complex-safe: Fourier-mode systems carry
complex eigenvalues and couplings through the same code paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product as _iter_product
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "affine_AB",
    "omega_theta",
    "psi_sensitivities",
    "deriv_coeffs",
    "ChainValues",
    "term_coeffs",
    "boole_rule",
    "integrate_simplex",
    "ModeExpansion",
    "price_expansion",
    "single_mode_system",
    "single_mode_exact",
]


# --------------------------------------------------------------------------- #
# Affine building blocks
# --------------------------------------------------------------------------- #

def _frequency_split(lam, kappa_tilt, epsilon):
    """varpi = sqrt(kappa_tilt^2 + eps^2*lam) and the root offsets
    Xi_plus = -kappa_tilt + varpi, Xi_minus = kappa_tilt + varpi."""
    disc = np.asarray(kappa_tilt) ** 2 + epsilon**2 * np.asarray(lam)
    if not np.iscomplexobj(disc):
        if np.any(disc <= 0.0):
            raise ValueError(
                "eigenvalue below -kappa^2/eps^2: real-path evaluation "
                "undefined (use complex arguments for oscillatory branches)")
    varpi = np.sqrt(disc)
    return varpi, -np.asarray(kappa_tilt) + varpi, np.asarray(kappa_tilt) + varpi


def affine_AB(tau, lam, psi, kappa_tilt, kappa_drift, epsilon):
    """Closed-form exponents of the affine flow.

    Solves A' = kappa_drift*B, B' = 0.5*eps^2*B^2 - kappa_tilt*B - 0.5*lam
    with A(0) = 0, B(0) = psi.  Broadcasts over array arguments; complex
    inputs select the complex branch (principal logarithm, which stays off
    the cut for the parameter families used here; a dedicated regression
    test scans the argument of the denominator for wraps).
    """
    tau = np.asarray(tau)
    psi = np.asarray(psi)
    varpi, xi_p, xi_m = _frequency_split(lam, kappa_tilt, epsilon)
    e2 = epsilon**2
    decay = np.exp(-varpi * tau)
    upsilon = (xi_m - e2 * psi) + (xi_p + e2 * psi) * decay
    a_val = -(kappa_drift / e2) * (xi_p * tau + 2.0 * np.log(upsilon / (2.0 * varpi)))
    b_val = -(xi_p * (xi_m - e2 * psi) - xi_m * (xi_p + e2 * psi) * decay) / (e2 * upsilon)
    return a_val, b_val


def omega_theta(tau, lam, psi, kappa_tilt, epsilon):
    """Auxiliaries for psi-derivatives: Omega = (1-e^{-varpi tau})/Upsilon,
    Theta = varpi^2 e^{-varpi tau}/Upsilon^2."""
    tau = np.asarray(tau)
    psi = np.asarray(psi)
    varpi, xi_p, xi_m = _frequency_split(lam, kappa_tilt, epsilon)
    e2 = epsilon**2
    decay = np.exp(-varpi * tau)
    upsilon = (xi_m - e2 * psi) + (xi_p + e2 * psi) * decay
    return (1.0 - decay) / upsilon, varpi**2 * decay / upsilon**2


def psi_sensitivities(tau, lam, psi, kappa_tilt, kappa_drift, epsilon):
    """First three psi-derivatives of A and B: (A1, A2, A3, B1, B2, B3)."""
    omg, tht = omega_theta(tau, lam, psi, kappa_tilt, epsilon)
    e2 = epsilon**2
    a1 = 2.0 * kappa_drift * omg
    a2 = 2.0 * kappa_drift * e2 * omg**2
    a3 = 4.0 * kappa_drift * e2**2 * omg**3
    b1 = 4.0 * tht
    b2 = 8.0 * e2 * tht * omg
    b3 = 24.0 * e2**2 * tht * omg**2
    return a1, a2, a3, b1, b2, b3


def deriv_coeffs(tau, lam, psi, kappa_tilt, kappa_drift, epsilon) -> Dict[Tuple[int, int], np.ndarray]:
    """Polynomial transport table D[(l, m)], l = 0..3, m = 0..l.

    The affine flow maps x2^l * exp(psi*x2) to
    sum_m D[(l, m)] * x2^m * exp(A + B*x2); the table is the Faa di Bruno
    expansion of the l-th psi-derivative of exp(A + B*x2).
    """
    a1, a2, a3, b1, b2, b3 = psi_sensitivities(
        tau, lam, psi, kappa_tilt, kappa_drift, epsilon)
    one = np.ones(np.broadcast(np.asarray(tau), np.asarray(psi)).shape)
    return {
        (0, 0): one,
        (1, 0): a1,
        (1, 1): b1,
        (2, 0): a1**2 + a2,
        (2, 1): 2.0 * a1 * b1 + b2,
        (2, 2): b1**2,
        (3, 0): a1**3 + 3.0 * a1 * a2 + a3,
        (3, 1): 3.0 * (a1**2 * b1 + a1 * b2 + a2 * b1) + b3,
        (3, 2): 3.0 * (a1 * b1**2 + b1 * b2),
        (3, 3): b1**3,
    }


# --------------------------------------------------------------------------- #
# Coefficient transport along a mode chain
# --------------------------------------------------------------------------- #

@dataclass
class ChainValues:
    """State after transporting a constant through an injected mode chain."""

    coeffs: Dict[int, np.ndarray]   # polynomial coefficients C[m]
    psi_final: np.ndarray           # slope entering the final exponent
    log_scale: np.ndarray           # accumulated sum of A over all segments


def term_coeffs(time_set, lams, kappa, epsilon,
                kappa_drift: Optional[float] = None) -> ChainValues:
    """Transport the constant initial profile through n injections.

    ``time_set`` holds 0 = t_0 <= t_1 <= ... <= t_{n+1} = tau (the ordered
    injection times padded with the endpoints); ``lams`` holds the n+1
    segment eigenvalues.  Segment j (duration t_j - t_{j-1}) propagates by
    the affine flow of lams[j-1]; between segments the injection x2*d/dx2
    acts on the polynomial-exponential profile.  Entries of ``time_set``
    may be arrays (broadcast together) for vectorized quadrature.
    """
    if kappa_drift is None:
        kappa_drift = kappa
    n_seg = len(lams)
    if len(time_set) != n_seg + 1:
        raise ValueError("need one more time point than segments")
    gaps = []
    for j in range(n_seg):
        gap = np.asarray(time_set[j + 1]) - np.asarray(time_set[j])
        if np.any(np.real(gap) < -1e-14):
            raise ValueError("time points must be ordered")
        gaps.append(gap)

    psi = np.asarray(0.0)
    a_total = np.asarray(0.0)
    a_seg, b_seg = affine_AB(gaps[0], lams[0], psi, kappa, kappa_drift, epsilon)
    a_total = a_total + a_seg
    psi = b_seg
    coeffs: Dict[int, np.ndarray] = {0: np.ones(np.shape(psi))}

    for j in range(1, n_seg):
        table = deriv_coeffs(gaps[j], lams[j], psi, kappa, kappa_drift, epsilon)
        injected: Dict[int, np.ndarray] = {}
        for l in range(1, j + 1):
            injected[l] = psi * coeffs.get(l - 1, 0.0) + l * coeffs.get(l, 0.0)
        new_coeffs: Dict[int, np.ndarray] = {}
        for m in range(0, j + 1):
            acc = 0.0
            for l in range(max(1, m), j + 1):
                acc = acc + injected[l] * table[(l, m)]
            new_coeffs[m] = acc
        coeffs = new_coeffs
        a_seg, b_seg = affine_AB(gaps[j], lams[j], psi, kappa, kappa_drift, epsilon)
        a_total = a_total + a_seg
        psi = b_seg

    return ChainValues(coeffs=coeffs, psi_final=psi, log_scale=a_total)


# --------------------------------------------------------------------------- #
# Simplex quadrature
# --------------------------------------------------------------------------- #

def boole_rule(count: int) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Boole nodes/weights on [0, 1]; count = 4*panels + 1."""
    if count < 5 or (count - 1) % 4 != 0:
        raise ValueError("node count must be 4*panels + 1")
    nodes = np.linspace(0.0, 1.0, count)
    h = nodes[1] - nodes[0]
    weights = np.zeros(count)
    panel = np.array([7.0, 32.0, 12.0, 32.0, 7.0]) * (2.0 * h / 45.0)
    for start in range(0, count - 1, 4):
        weights[start:start + 5] += panel
    return nodes, weights


def integrate_simplex(f: Callable, tau: float, n: int,
                      nodes_per_axis: int = 33):
    """Integrate f(eta_1, ..., eta_n) over 0 < eta_1 < ... < eta_n < tau.

    The ordered region maps onto the unit cube axis by axis: each new time
    is placed a fraction of the way through the interval remaining to the
    right of its predecessor; the Jacobian collects the shrinking lengths.
    Composite Boole quadrature is applied per axis.
    """
    if n < 1:
        raise ValueError("dimension must be >= 1")
    nodes, weights = boole_rule(nodes_per_axis)
    grids = np.meshgrid(*([nodes] * n), indexing="ij")
    wgrid = weights.copy()
    for _ in range(n - 1):
        wgrid = np.multiply.outer(wgrid, weights)

    etas = []
    prev = np.asarray(0.0)
    remaining = np.asarray(1.0)
    for i in range(n):
        eta = prev + remaining * grids[i]
        etas.append(tau * eta)
        remaining = remaining * (1.0 - grids[i])
        prev = eta
    jac = np.full(grids[0].shape, float(tau) ** n)
    remaining = np.asarray(1.0)
    for i in range(n - 1):
        remaining = remaining * (1.0 - grids[i])
        jac = jac * remaining

    values = f(*etas)
    return np.sum(wgrid * jac * values)


# --------------------------------------------------------------------------- #
# Series assembly over mode chains
# --------------------------------------------------------------------------- #

@dataclass
class ModeExpansion:
    """Series engine for one mode-reduced system.

    ``lam[k]`` are the per-mode eigenvalues, ``coupling[k, l]`` the source
    matrix (row = source mode, column = receiving equation), ``nu[k]`` the
    payoff projection.  All may be complex.
    """

    lam: np.ndarray
    coupling: np.ndarray
    nu: np.ndarray
    kappa: float
    epsilon: float
    prune_tol: float = 1e-14

    def __post_init__(self) -> None:
        self.lam = np.atleast_1d(np.asarray(self.lam))
        self.coupling = np.atleast_2d(np.asarray(self.coupling))
        self.nu = np.atleast_1d(np.asarray(self.nu))
        m = self.lam.size
        if self.coupling.shape != (m, m) or self.nu.size != m:
            raise ValueError("inconsistent mode system sizes")

    @property
    def n_modes(self) -> int:
        return self.lam.size

    def order0(self, tau: float, x2) -> np.ndarray:
        """(M, len(x2)) uncorrelated coefficients nu_k * exp(A_k + B_k*x2)."""
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        a_val, b_val = affine_AB(tau, self.lam, 0.0, self.kappa, self.kappa,
                                 self.epsilon)
        return self.nu[:, None] * np.exp(a_val[:, None]
                                         + b_val[:, None] * x2[None, :])

    def order_term(self, order: int, tau: float, x2,
                   nodes_per_axis: int = 33,
                   mode_cap: Optional[int] = None) -> np.ndarray:
        """(M, len(x2)) coefficients of the order-n term (without the
        (rho*eps)^n prefactor): ordered-time integrals summed over mode
        chains k_1 -> ... -> k_{n+1}."""
        if order == 0:
            return self.order0(tau, x2)
        if order > 3:
            raise ValueError("polynomial transport tables stop at order 3")
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        m_all = self.n_modes
        cap = m_all if mode_cap is None else min(mode_cap, m_all)
        nodes, weights = boole_rule(nodes_per_axis)
        grids = np.meshgrid(*([nodes] * order), indexing="ij")
        wgrid = weights.copy()
        for _ in range(order - 1):
            wgrid = np.multiply.outer(wgrid, weights)

        etas = []
        prev = np.asarray(0.0)
        remaining = np.asarray(1.0)
        for i in range(order):
            eta = prev + remaining * grids[i]
            etas.append(tau * eta)
            remaining = remaining * (1.0 - grids[i])
            prev = eta
        jac = np.full(grids[0].shape, float(tau) ** order)
        remaining = np.asarray(1.0)
        for i in range(order - 1):
            remaining = remaining * (1.0 - grids[i])
            jac = jac * remaining
        wjac = (wgrid * jac).ravel()
        flat_times = [np.zeros_like(etas[0]).ravel()] + \
            [e.ravel() for e in etas] + [np.full(etas[0].size, float(tau))]

        out = np.zeros((m_all, x2.size), dtype=complex)
        for chain in _iter_product(range(cap), repeat=order + 1):
            weight = self.nu[chain[0]]
            for a, b in zip(chain[:-1], chain[1:]):
                weight = weight * self.coupling[a, b]
            if abs(weight) < self.prune_tol:
                continue
            lams = [self.lam[k] for k in chain]
            chain_vals = term_coeffs(flat_times, lams, self.kappa,
                                     self.epsilon)
            poly = np.zeros((flat_times[0].size, x2.size), dtype=complex)
            for mm, cval in chain_vals.coeffs.items():
                cvec = np.broadcast_to(np.asarray(cval, dtype=complex),
                                       (flat_times[0].size,))
                poly += np.multiply.outer(cvec, x2 ** mm)
            kernel = np.exp(
                np.asarray(chain_vals.log_scale, dtype=complex)[:, None]
                + np.multiply.outer(
                    np.asarray(chain_vals.psi_final, dtype=complex), x2))
            integral = (wjac[:, None] * poly * kernel).sum(axis=0)
            out[chain[-1]] += weight * integral
        return out

    def coefficients(self, tau: float, x2, order: int = 3,
                     nodes_per_axis: Sequence[int] = (33, 17, 9),
                     mode_caps: Sequence[Optional[int]] = (None, None, None),
                     ) -> Dict[int, np.ndarray]:
        """Per-order coefficient arrays {n: (M, len(x2))} for n = 0..order."""
        terms = {0: self.order0(tau, x2).astype(complex)}
        for n in range(1, order + 1):
            terms[n] = self.order_term(
                n, tau, x2,
                nodes_per_axis=nodes_per_axis[min(n - 1, len(nodes_per_axis) - 1)],
                mode_cap=mode_caps[min(n - 1, len(mode_caps) - 1)])
        return terms


# --------------------------------------------------------------------------- #
# Problem-facing assembly
# --------------------------------------------------------------------------- #

def price_expansion(problem, basis, tau: float, grid, order: int = 3,
                    nodes_per_axis: Sequence[int] = (33, 17, 9),
                    mode_caps: Sequence[Optional[int]] = (None, 16, 8)):
    """Correlation-series price surface for a barrier problem.

    Builds the sine-basis mode system (eigenvalues, couplings, payoff
    projection) for the problem's model, evaluates the series terms on the
    grid's variance nodes, applies the (rho*eps)^n prefactors, and
    reconstructs over the basis.  Returns a PriceSurface.
    """
    from qlsvlab import galerkin
    from qlsvlab.steppers import PriceSurface

    model = problem.model
    system_lam = basis.eigenvalues(model.omega)
    mu = galerkin.coupling_matrix(model, basis)
    nu = galerkin.project_payoff(basis, problem.payoff)
    engine = ModeExpansion(system_lam, mu, nu, model.kappa, model.epsilon)
    terms = engine.coefficients(tau, grid.g2.nodes, order=order,
                                nodes_per_axis=nodes_per_axis,
                                mode_caps=mode_caps)
    factor = model.rho * model.epsilon
    coeff = np.zeros_like(terms[0])
    for n, term in terms.items():
        coeff = coeff + factor**n * term
    modes_on_grid = basis.evaluate(grid.g1.nodes)      # (M, n1)
    values = np.real(np.einsum("km,kj->jm", coeff, modes_on_grid))
    return PriceSurface(grid, values, tau,
                        meta={"method": "rho-series", "order": order,
                              "modes": basis.mode_count})


def single_mode_system(kappa: float, epsilon: float,
                       wavenumber: float) -> ModeExpansion:
    """One complex Fourier mode exp(i*k*x1) of the log-coordinate model:
    eigenvalue k^2 + 1/4, self-coupling i*k + 1/2, unit payoff weight."""
    lam = np.array([wavenumber**2 + 0.25], dtype=complex)
    coupling = np.array([[1j * wavenumber + 0.5]], dtype=complex)
    nu = np.array([1.0], dtype=complex)
    return ModeExpansion(lam, coupling, nu, kappa, epsilon)


def single_mode_exact(tau: float, x2, kappa: float, epsilon: float,
                      rho: float, wavenumber: float) -> np.ndarray:
    """Exact amplitude of one Fourier mode at full correlation: the source
    folds into a complex drift tilt, leaving a pure affine solution."""
    x2 = np.asarray(x2, dtype=float)
    lam = wavenumber**2 + 0.25
    tilt = kappa - rho * epsilon * (1j * wavenumber + 0.5)
    a_val, b_val = affine_AB(tau, complex(lam), 0.0 + 0.0j, tilt, kappa,
                             epsilon)
    return np.exp(a_val + b_val * x2)
