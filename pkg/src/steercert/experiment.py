"""Idealised model of a pulsed squeezed-light experiment.

Two identical optical parametric oscillators produce single-mode squeezed
light that is interfered on a balanced beam splitter (with orthogonal
squeezing orientations), giving a two-mode entangled Gaussian state.  The
detected mode is defined by a temporal filter f(t); the quadrature variances
of the filtered mode follow from the OPO output auto-covariance functions

    <q(t)q(t')> = 1/2 delta(t-t') + (eta*gamma*nu/(gamma-nu)) exp(-(gamma-nu)|t-t'|)
    <p(t)p(t')> = 1/2 delta(t-t') - (eta*gamma*nu/(gamma+nu)) exp(-(gamma+nu)|t-t'|)

(vacuum variance 1/2).  The resulting two-mode covariance and its inverse
(the Wigner-exponent matrix, in shot-noise units) feed the certification
pipeline: binned-quadrature POVMs, model probability table, guessing
probability, and a dual witness that can be re-evaluated on measured tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import certify
from .fock import gaussian_to_fock
from .gaussian import GaussianState, largest_variance
from .povm import IntervalBinning, PeriodicBinning, alice_measurements, bob_measurements
from .stats import JointDistribution, assemblage_from_state, assemblage_to_joint

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TemporalModeParams:
    """Filter and source parameters (SI units; defaults match the setup)."""

    sigma: float = 270e-9  # filter width [s]
    omega: float = TWO_PI * 2.72e6  # filter oscillation frequency [rad/s]
    gamma: float = TWO_PI * 8.1e6  # OPO decay rate [rad/s]
    nu: float = TWO_PI * 5.2e6  # pump rate [rad/s]
    efficiency: float = 0.68

    def __post_init__(self):
        if self.sigma <= 0 or self.omega <= 0:
            raise ValueError("filter parameters must be positive")
        if not self.gamma > self.nu > 0:
            raise ValueError("rates must satisfy gamma > nu > 0 (below threshold)")
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in (0, 1]")

    @property
    def normalisation(self) -> float:
        """Value of the integral of sin(w t)^2 exp(-t^2/sigma^2) over R."""
        s, w = self.sigma, self.omega
        return 0.5 * s * math.sqrt(math.pi) * (1.0 - math.exp(-(w * s) ** 2))


def mode_function(params: TemporalModeParams, t) -> np.ndarray:
    """Normalised temporal filter f(t) = sin(w t) exp(-t^2/2 sigma^2)/sqrt(N)."""
    t = np.asarray(t, dtype=float)
    return (
        np.sin(params.omega * t)
        * np.exp(-(t**2) / (2.0 * params.sigma**2))
        / math.sqrt(params.normalisation)
    )


def mode_autocorrelation(params: TemporalModeParams, tau) -> np.ndarray:
    """Closed form of the filter autocorrelation A(tau) = int f(t) f(t+tau) dt.

    A(tau) = (sigma sqrt(pi) / 2N) exp(-tau^2/4 sigma^2)
             * [cos(w tau) - exp(-(w sigma)^2)].
    """
    s, w = params.sigma, params.omega
    tau = np.asarray(tau, dtype=float)
    pref = 0.5 * s * math.sqrt(math.pi) / params.normalisation
    return pref * np.exp(-(tau**2) / (4.0 * s * s)) * (
        np.cos(w * tau) - math.exp(-((w * s) ** 2))
    )


def _filtered_kernel_integral(params: TemporalModeParams, rate: float) -> float:
    """int_R A(tau) exp(-rate |tau|) dtau via adaptive quadrature."""
    val, err = integrate.quad(
        lambda tau: mode_autocorrelation(params, tau) * math.exp(-rate * tau),
        0.0,
        12.0 * params.sigma,
        limit=200,
        epsabs=1e-14,
        epsrel=1e-12,
    )
    if err > 1e-10:
        raise RuntimeError(f"kernel quadrature did not converge (err={err:.1e})")
    return 2.0 * val


def _filtered_kernel_double(params: TemporalModeParams, rate: float) -> float:
    """Same integral evaluated directly as a double integral (slow oracle)."""
    span = 8.0 * params.sigma

    def integrand(tp, t):
        return (
            mode_function(params, t)
            * mode_function(params, tp)
            * math.exp(-rate * abs(t - tp))
        )

    val, _ = integrate.dblquad(
        integrand, -span, span, -span, span, epsabs=1e-12, epsrel=1e-10
    )
    return val


def temporal_mode_variances(
    params: TemporalModeParams, method: str = "analytic"
) -> tuple:
    """(Var[q], Var[p]) of the filtered mode, vacuum = 1/2 in both."""
    kernel = {
        "analytic": _filtered_kernel_integral,
        "double": _filtered_kernel_double,
    }[method]
    g, n, eta = params.gamma, params.nu, params.efficiency
    var_q = 0.5 + eta * g * n / (g - n) * kernel(params, g - n)
    var_p = 0.5 - eta * g * n / (g + n) * kernel(params, g + n)
    return var_q, var_p


def experiment_covariance(params: TemporalModeParams) -> GaussianState:
    """Two-mode state after interfering the two filtered squeezers.

    The second source is squeezed along the orthogonal quadrature, so the
    balanced beam splitter yields correlated q and anti-correlated p
    quadratures; the result is returned as a Wigner-exponent matrix in
    shot-noise units with ordering (q_A, q_B, p_A, p_B).
    """
    var_q, var_p = temporal_mode_variances(params)
    # shot-noise units (vacuum variance 1): a = sum, b = difference
    a = var_q + var_p
    b = var_p - var_q
    cov = np.zeros((4, 4))
    cov[:2, :2] = [[a, b], [b, a]]
    cov[2:, 2:] = [[a, -b], [-b, a]]
    return GaussianState(2, np.linalg.inv(cov))


def squeezing_levels_db(state: GaussianState) -> tuple:
    """Squeezing of (q_A + q_B)/sqrt(2) and (p_A - p_B)/sqrt(2) in dB."""
    cov = state.covariance
    var_q = 0.5 * (cov[0, 0] + cov[1, 1] + 2.0 * cov[0, 1])
    var_p = 0.5 * (cov[2, 2] + cov[3, 3] - 2.0 * cov[2, 3])
    return 10.0 * math.log10(var_q), 10.0 * math.log10(var_p)


def experiment_report(
    params: TemporalModeParams,
    num_outcomes_alice: int,
    num_outcomes_bob: int,
    period_q: float,
    cutoff: int,
    num_settings_bob: int = 2,
    target_setting: int = 0,
    measured: JointDistribution | None = None,
    **solver_kwargs,
) -> dict:
    """Model guessing probability and (optionally) an experimental bound.

    Builds the model state and POVMs, solves the probability-variant SDP on
    the model table, and, when a measured table is supplied, evaluates the
    resulting dual witness on it for a min-entropy lower bound that needs no
    further optimisation.
    """
    state = experiment_covariance(params)
    sq_q, sq_p = squeezing_levels_db(state)
    g = state.g_matrix
    alice = alice_measurements(PeriodicBinning(period_q, num_outcomes_alice), cutoff)
    half_range = 5.0 * math.sqrt(largest_variance(state))
    bob = bob_measurements(
        num_settings_bob, IntervalBinning(half_range, num_outcomes_bob), cutoff
    )
    rho, deficit = gaussian_to_fock(state, cutoff)
    assemblage = assemblage_from_state(rho, alice)
    theory = assemblage_to_joint(assemblage, bob)
    result = certify.pguess_probabilities(
        theory, alice, bob, target_setting, **solver_kwargs
    )
    certificate = result.certificate.repaired(bob)
    report = {
        "g1": float(g[0, 0]),
        "g2": float(g[0, 1]),
        "squeezing_q_db": sq_q,
        "squeezing_p_db": sq_p,
        "truncation_deficit": deficit,
        "pguess_model": result.pguess,
        "hmin_model": result.hmin,
        "duality_gap": result.gap,
        "half_range_bob": half_range,
        "certificate": certificate.to_json(),
    }
    if measured is not None:
        u, h_lower, trivial = certificate.lower_bound(measured)
        report.update(
            {
                "pguess_bound_measured": u,
                "hmin_lower_measured": h_lower,
                "bound_trivial": trivial,
            }
        )
    return report
