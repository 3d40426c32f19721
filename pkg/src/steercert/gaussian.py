"""Zero-mean Gaussian states and the symmetric loss/noise channel.

All states are described by the real symmetric matrix ``G`` appearing in
the Wigner-function exponent ``W(z) ~ exp(-z.G z)``, with phase-space
ordering ``(q_1, ..., q_d, p_1, ..., p_d)``.  The covariance matrix in
shot-noise units is ``V = G^{-1}`` and the vacuum has ``V = I``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

SYMMETRY_TOL = 1e-12
PHYSICALITY_TOL = 1e-9
CONDITION_LIMIT = 1e12


class NumericalDegeneracyError(RuntimeError):
    """Raised when a matrix is too ill-conditioned to invert reliably."""


def symplectic_form(num_modes: int) -> np.ndarray:
    """Symplectic form Omega in (q..., p...) ordering: [q_j, p_k] = i δ_jk."""
    d = num_modes
    omega = np.zeros((2 * d, 2 * d))
    omega[:d, d:] = np.eye(d)
    omega[d:, :d] = -np.eye(d)
    return omega


def _spd_inverse(matrix: np.ndarray) -> np.ndarray:
    """Invert a symmetric positive-definite matrix via Cholesky."""
    sym = 0.5 * (matrix + matrix.T)
    if np.linalg.cond(sym) > CONDITION_LIMIT:
        raise NumericalDegeneracyError(
            f"matrix condition number exceeds {CONDITION_LIMIT:g}"
        )
    try:
        cho = sla.cho_factor(sym)
    except sla.LinAlgError as exc:
        raise NumericalDegeneracyError("Cholesky factorization failed") from exc
    inv = sla.cho_solve(cho, np.eye(sym.shape[0]))
    return 0.5 * (inv + inv.T)


@dataclass(frozen=True)
class GaussianState:
    """Zero-mean Gaussian state given by its Wigner-exponent matrix G."""

    num_modes: int
    g_matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        g = np.asarray(self.g_matrix, dtype=float)
        d = self.num_modes
        if d < 1:
            raise ValueError("num_modes must be positive")
        if g.shape != (2 * d, 2 * d):
            raise ValueError(f"g_matrix must be {2*d}x{2*d}, got {g.shape}")
        if np.max(np.abs(g - g.T)) > SYMMETRY_TOL:
            raise ValueError("g_matrix is not symmetric")
        eigvals = np.linalg.eigvalsh(g)
        if eigvals[0] <= 0:
            raise ValueError("g_matrix is not positive definite")
        object.__setattr__(self, "g_matrix", g)
        v = _spd_inverse(g)
        omega = symplectic_form(d)
        phys = np.linalg.eigvalsh(v + 1j * omega)
        if phys[0] < -PHYSICALITY_TOL:
            raise ValueError(
                f"state violates V + i Omega >= 0 (min eig {phys[0]:.3e})"
            )
        object.__setattr__(self, "_covariance", v)

    @property
    def covariance(self) -> np.ndarray:
        """Covariance matrix V = G^{-1} in shot-noise units (vacuum = I)."""
        return self._covariance.copy()

    @staticmethod
    def vacuum(num_modes: int) -> "GaussianState":
        return GaussianState(num_modes, np.eye(2 * num_modes))

    @staticmethod
    def from_covariance(v: np.ndarray, num_modes: int) -> "GaussianState":
        return GaussianState(num_modes, _spd_inverse(np.asarray(v, dtype=float)))


@dataclass(frozen=True)
class ChannelParams:
    """Symmetric beam-splitter loss with thermal noise on the open ports."""

    transmittivity: float
    noise_snu: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.transmittivity <= 1.0:
            raise ValueError("transmittivity must lie in [0, 1]")
        if self.noise_snu < 0.0:
            raise ValueError("noise_snu must be non-negative")
        if self.noise_snu > 0.0 and self.transmittivity >= 1.0:
            raise ValueError(
                "added noise with unit transmittivity gives an undefined channel"
            )

    @property
    def mean_photon_number(self) -> float:
        return mean_photon_for_noise(self.transmittivity, self.noise_snu)


def db_to_parameter(s_db: float) -> float:
    """Convert squeezing in dB (negative = squeezed) to the dimensionless parameter."""
    return -s_db * math.log(10.0) / 20.0


def parameter_to_db(s: float) -> float:
    """Inverse of :func:`db_to_parameter`."""
    return -20.0 * s / math.log(10.0)


def mean_photon_for_noise(eta: float, noise_snu: float) -> float:
    """Thermal mean photon number that adds ``noise_snu`` units of excess noise."""
    if noise_snu == 0.0:
        return 0.0
    if eta >= 1.0:
        raise ValueError("eta = 1 with nonzero noise has no finite photon number")
    return noise_snu / (2.0 * (1.0 - eta))


def squeezer_symplectic(s: float, mode: int, num_modes: int) -> np.ndarray:
    """Symplectic for single-mode squeezing: q -> e^{-s} q, p -> e^{+s} p."""
    d = num_modes
    mat = np.eye(2 * d)
    mat[mode, mode] = math.exp(-s)
    mat[d + mode, d + mode] = math.exp(s)
    return mat


def beamsplitter_symplectic(mode1: int, mode2: int, num_modes: int) -> np.ndarray:
    """Balanced beam splitter mixing two modes, same convention on q and p."""
    d = num_modes
    mat = np.eye(2 * d)
    c = 1.0 / math.sqrt(2.0)
    for off in (0, d):
        i, j = off + mode1, off + mode2
        mat[i, i] = mat[j, i] = mat[i, j] = c
        mat[j, j] = -c
    return mat


def _state_from_symplectic(symp: np.ndarray, num_modes: int) -> GaussianState:
    v = symp @ symp.T
    return GaussianState(num_modes, _spd_inverse(v))


def tms_covariance(s: float) -> GaussianState:
    """Two-mode squeezed vacuum with q_A + q_B and p_A - p_B squeezed.

    Built as a balanced beam splitter acting on a q-squeezed mode and a
    p-squeezed mode, so Var(q_A + q_B) = Var(p_A - p_B) = 2 e^{-2s}.
    """
    if s < 0:
        raise ValueError("squeezing parameter must be non-negative")
    symp = beamsplitter_symplectic(0, 1, 2) @ squeezer_symplectic(
        s, 0, 2
    ) @ squeezer_symplectic(-s, 1, 2)
    return _state_from_symplectic(symp, 2)


def split_sms_covariance(s: float) -> GaussianState:
    """Single-mode q-squeezed vacuum split on a balanced beam splitter."""
    if s < 0:
        raise ValueError("squeezing parameter must be non-negative")
    symp = beamsplitter_symplectic(0, 1, 2) @ squeezer_symplectic(s, 0, 2)
    return _state_from_symplectic(symp, 2)


def apply_loss_noise(state: GaussianState, params: ChannelParams) -> GaussianState:
    """Symmetric loss/noise channel acting on both modes of a two-mode state.

    Closed form for the surviving G after mixing each mode with a thermal
    state of mean photon number n on a transmittivity-eta beam splitter
    and tracing out the ancillas.
    """
    if state.num_modes != 2:
        raise ValueError("channel is defined for two-mode states")
    eta = params.transmittivity
    if eta == 1.0:
        return state
    nbar = params.mean_photon_number
    g_rho = state.g_matrix
    g_t = np.eye(4) / (1.0 + 2.0 * nbar)
    if eta == 0.0:
        return GaussianState(2, g_t)
    diff = g_t - g_rho
    middle = _spd_inverse(eta * g_t + (1.0 - eta) * g_rho)
    g_out = eta * g_rho + (1.0 - eta) * g_t - eta * (1.0 - eta) * diff @ middle @ diff
    return GaussianState(2, 0.5 * (g_out + g_out.T))


def largest_variance(state: GaussianState) -> float:
    """Largest diagonal entry of the covariance matrix V = G^{-1}."""
    return float(np.max(np.diag(state.covariance)))


def interleaved_to_blocked(matrix: np.ndarray) -> np.ndarray:
    """Reorder a 2d x 2d matrix from (q1,p1,q2,p2,...) to (q...,p...) ordering."""
    n = matrix.shape[0]
    if n % 2:
        raise ValueError("matrix dimension must be even")
    d = n // 2
    perm = np.r_[np.arange(0, n, 2), np.arange(1, n, 2)]
    out = matrix[np.ix_(perm, perm)]
    assert out.shape == (2 * d, 2 * d)
    return out


def blocked_to_interleaved(matrix: np.ndarray) -> np.ndarray:
    """Inverse reordering of :func:`interleaved_to_blocked`."""
    n = matrix.shape[0]
    if n % 2:
        raise ValueError("matrix dimension must be even")
    d = n // 2
    perm = np.empty(n, dtype=int)
    perm[np.r_[np.arange(0, n, 2), np.arange(1, n, 2)]] = np.arange(n)
    return matrix[np.ix_(perm, perm)]
