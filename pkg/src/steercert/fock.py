"""Truncated Fock-space representations of Gaussian states and related helpers.

The conversion from a zero-mean Gaussian state to Fock matrix elements goes
through the Husimi function: with ``Sigma_Q = R (V/2) R^dag + I/2`` (R the
quadrature-to-ladder transformation) the normalised coherent-state kernel
``exp((|a|^2+|b|^2)/2) <b|rho|a>`` equals ``C exp(w.A w / 2)`` with
``w = (a, conj(b))``, ``A = X (I - Sigma_Q^{-1})`` and ``C = det(Sigma_Q)^{-1/2}``.
Matrix elements follow from a stable normalised three-term recursion on the
Taylor coefficients of the exponential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import GaussianState, NumericalDegeneracyError

HERMITICITY_TOL = 1e-10
POSITIVITY_TOL = 1e-9


@dataclass(frozen=True)
class FockOperator:
    """Operator on the truncated Fock space of ``num_modes`` modes."""

    cutoff: int
    num_modes: int
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        dim = (self.cutoff + 1) ** self.num_modes
        arr = np.asarray(self.entries, dtype=complex)
        if arr.shape != (dim, dim):
            raise ValueError(f"entries must be {dim}x{dim}, got {arr.shape}")
        if np.max(np.abs(arr - arr.conj().T)) > HERMITICITY_TOL:
            raise ValueError("operator is not Hermitian")
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return (self.cutoff + 1) ** self.num_modes

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def validate_density(self) -> None:
        """Check density-operator invariants (trace <= 1, PSD)."""
        if self.trace() > 1.0 + 1e-9:
            raise ValueError(f"trace {self.trace():.12f} exceeds 1")
        low = self.min_eigenvalue()
        if low < -POSITIVITY_TOL:
            raise ValueError(f"operator not PSD (min eig {low:.3e})")


def hermite_functions(nmax: int, z: np.ndarray) -> np.ndarray:
    """Harmonic-oscillator wavefunctions psi_0..psi_nmax on a grid.

    Convention q = (a^dag + a)/sqrt(2), so psi_0(z) = pi^{-1/4} exp(-z^2/2).
    Uses the normalised upward recurrence, stable for n <= ~200, |z| <= ~40.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    out = np.zeros((nmax + 1, z.size))
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * z * z)
    if nmax >= 1:
        out[1] = math.sqrt(2.0) * z * out[0]
    for n in range(1, nmax):
        out[n + 1] = (
            math.sqrt(2.0 / (n + 1)) * z * out[n]
            - math.sqrt(n / (n + 1.0)) * out[n - 1]
        )
    return out


def hermite_function(n: int, z) -> np.ndarray | float:
    """Single harmonic-oscillator wavefunction psi_n(z)."""
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    val = hermite_functions(n, z_arr)[n]
    if np.isscalar(z) or np.ndim(z) == 0:
        return float(val[0])
    return val


def _ladder_transform(num_modes: int) -> np.ndarray:
    """Map (q..., p...) to (a..., conj(a)...) coordinates."""
    d = num_modes
    eye = np.eye(d)
    return np.block([[eye, 1j * eye], [eye, -1j * eye]]) / math.sqrt(2.0)


def husimi_kernel(state: GaussianState) -> tuple[np.ndarray, float]:
    """Return the quadratic kernel A and vacuum amplitude C for a Gaussian state."""
    d = state.num_modes
    r = _ladder_transform(d)
    sigma_q = 0.5 * r @ state.covariance @ r.conj().T + 0.5 * np.eye(2 * d)
    det = np.linalg.det(sigma_q).real
    if det <= 0:
        raise NumericalDegeneracyError("Husimi covariance has non-positive determinant")
    swap = np.zeros((2 * d, 2 * d))
    swap[:d, d:] = np.eye(d)
    swap[d:, :d] = np.eye(d)
    a_mat = swap @ (np.eye(2 * d) - np.linalg.inv(sigma_q))
    a_mat = 0.5 * (a_mat + a_mat.T)
    return a_mat, 1.0 / math.sqrt(det)


def gaussian_to_fock(state: GaussianState, cutoff: int) -> tuple[FockOperator, float]:
    """Fock matrix of a two-mode zero-mean Gaussian state, plus trace deficit.

    Returns ``(rho, deficit)`` where ``deficit = 1 - tr(rho)`` is the weight
    of the truncated tail.  The operator is not renormalised.
    """
    if state.num_modes != 2:
        raise ValueError("only two-mode states are supported")
    if cutoff < 1:
        raise ValueError("cutoff must be at least 1")
    a_mat, c0 = husimi_kernel(state)
    n = cutoff + 1
    # Taylor coefficients S[k] of exp(w.A w/2), normalised by sqrt(k!),
    # for k = (n1, n2, m1, m2): ket indices first, bra indices last.
    s = np.zeros((n, n, n, n), dtype=complex)
    s[0, 0, 0, 0] = 1.0
    sq = np.sqrt(np.arange(n + 1))
    for k in np.ndindex(n, n, n, n):
        if k == (0, 0, 0, 0):
            continue
        i = next(ax for ax in range(4) if k[ax] > 0)
        low = list(k)
        low[i] -= 1
        acc = 0.0 + 0.0j
        for j in range(4):
            if low[j] == 0:
                continue
            lower = list(low)
            lower[j] -= 1
            acc += a_mat[i, j] * sq[low[j]] * s[tuple(lower)]
        s[k] = acc / sq[k[i]]
        if not np.isfinite(s[k]):
            raise NumericalDegeneracyError(
                f"Fock recursion lost precision at index {k}"
            )
    # rho[(m1,m2),(n1,n2)] = <m1 m2| rho |n1 n2> = C * S[n1,n2,m1,m2]
    rho = c0 * np.transpose(s, (2, 3, 0, 1)).reshape(n * n, n * n)
    rho = 0.5 * (rho + rho.conj().T)
    op = FockOperator(cutoff=cutoff, num_modes=2, entries=rho)
    return op, 1.0 - op.trace()


def tms_fock_matrix(s: float, cutoff: int) -> np.ndarray:
    """Closed-form truncated two-mode squeezed vacuum density matrix."""
    n = cutoff + 1
    t = math.tanh(s)
    amp = np.zeros(n * n)
    for k in range(n):
        amp[k * n + k] = t**k / math.cosh(s)
    return np.outer(amp, amp)


def truncation_overlap(s: float, cutoff: int) -> float:
    """Infidelity 1 - <TMS|TMS, m> of the renormalised truncated state."""
    if s < 0:
        raise ValueError("squeezing parameter must be non-negative")
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    t2 = math.tanh(s) ** 2
    return 1.0 - math.sqrt(1.0 - t2 ** (cutoff + 1))
