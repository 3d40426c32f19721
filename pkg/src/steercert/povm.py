"""Binned homodyne POVM elements in the truncated Fock basis.

Alice bins a quadrature with a periodic mask (period T, o_A outcomes per
period); the conjugate setting uses period T_p = 2 pi / s_q so that the two
binned observables stay mutually unbiased.  Bob bins rotated quadratures
into o_B - 1 equal intervals on [-r, r] plus an overflow outcome.

Elements are Gram matrices of harmonic-oscillator wavefunctions over the
bin support, with the phase-space rotation carried by number-operator
phases: <j|M(theta)|k> = exp(i theta (j-k)) * <j|M(0)|k>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fock import FockOperator, hermite_functions

PSD_TOL = 1e-8
COMPLETENESS_TOL = 1e-7
QUADRATURE_TOL = 1e-9
_GL_ORDER = 40
_MAX_PANEL_WIDTH = 0.5


class AccuracyError(RuntimeError):
    """Raised when a numerical integral fails its consistency check."""


def integration_halfwidth(cutoff: int) -> float:
    """Support radius beyond which psi_n is negligible for n <= cutoff."""
    return math.sqrt(2.0 * cutoff + 1.0) + 8.0


@dataclass(frozen=True)
class PeriodicBinning:
    """Periodic coarse-graining of conjugate quadratures."""

    period_q: float
    num_outcomes: int
    offset: float = 0.0

    def __post_init__(self):
        if self.period_q <= 0:
            raise ValueError("period must be positive")
        if self.num_outcomes < 2:
            raise ValueError("need at least two outcomes")

    @property
    def s_q(self) -> float:
        return self.period_q / self.num_outcomes

    @property
    def period_p(self) -> float:
        # mutual unbiasedness: T_p * s_q = 2 pi
        return 2.0 * math.pi / self.s_q

    @property
    def s_p(self) -> float:
        return self.period_p / self.num_outcomes

    def period(self, setting: int) -> float:
        return self.period_q if setting == 0 else self.period_p

    def outcome(self, z, setting: int) -> np.ndarray:
        """Bin index of quadrature value(s) z for setting 0 (q) or 1 (p)."""
        t = self.period(setting)
        s = t / self.num_outcomes
        return np.asarray(
            np.floor(np.mod(np.asarray(z) - self.offset, t) / s), dtype=int
        )


@dataclass(frozen=True)
class IntervalBinning:
    """o_B - 1 equal bins on [-r, r]; the last outcome is the outside."""

    half_range: float
    num_outcomes: int

    def __post_init__(self):
        if self.half_range <= 0:
            raise ValueError("half_range must be positive")
        if self.num_outcomes < 2:
            raise ValueError("need at least two outcomes")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(-self.half_range, self.half_range, self.num_outcomes)

    def outcome(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        idx = np.searchsorted(self.edges, z, side="right") - 1
        inside = (z >= -self.half_range) & (z < self.half_range)
        idx = np.clip(idx, 0, self.num_outcomes - 2)
        return np.asarray(
            np.where(inside, idx, self.num_outcomes - 1), dtype=int
        )


def periodic_mask(a: int, z, binning: PeriodicBinning, setting: int = 0) -> np.ndarray:
    """Indicator f_a(z, T) of the periodic bin a for the given setting."""
    if not 0 <= a < binning.num_outcomes:
        raise ValueError("outcome index out of range")
    out = binning.outcome(z, setting) == a
    return np.asarray(out, dtype=int)


def _gram_on_intervals(intervals, cutoff: int, panel_width: float) -> np.ndarray:
    """Gram matrix int psi_j psi_k over a union of intervals (Gauss-Legendre)."""
    nodes, weights = np.polynomial.legendre.leggauss(_GL_ORDER)
    zs, ws = [], []
    for lo, hi in intervals:
        if hi <= lo:
            continue
        n_panels = max(1, int(math.ceil((hi - lo) / panel_width)))
        bounds = np.linspace(lo, hi, n_panels + 1)
        for left, right in zip(bounds[:-1], bounds[1:]):
            mid, half = 0.5 * (left + right), 0.5 * (right - left)
            zs.append(mid + half * nodes)
            ws.append(half * weights)
    if not zs:
        return np.zeros((cutoff + 1, cutoff + 1))
    z = np.concatenate(zs)
    w = np.concatenate(ws)
    psi = hermite_functions(cutoff, z)
    return (psi * w) @ psi.T


def quadrature_bin_element(
    intervals, theta: float, cutoff: int, check: bool = True
) -> FockOperator:
    """POVM element for the quadrature at angle theta restricted to intervals.

    ``intervals`` is a list of (lo, hi) pairs, assumed disjoint.  theta = 0
    is q and theta = pi/2 is p (elements then carry the factor i^{j-k}).
    """
    gram = _gram_on_intervals(intervals, cutoff, _MAX_PANEL_WIDTH)
    if check:
        finer = _gram_on_intervals(intervals, cutoff, 0.5 * _MAX_PANEL_WIDTH)
        err = float(np.max(np.abs(gram - finer)))
        if err > QUADRATURE_TOL:
            raise AccuracyError(f"quadrature inconsistency {err:.2e}")
        gram = finer
    ks = np.arange(cutoff + 1)
    phase = np.exp(1j * theta * (ks[:, None] - ks[None, :]))
    return FockOperator(cutoff=cutoff, num_modes=1, entries=phase * gram)


@dataclass(frozen=True)
class MeasurementSet:
    """Per-setting POVMs for one party, all at a common Fock cutoff."""

    party: str
    angles: tuple
    binnings: tuple
    elements: tuple = field(repr=False)  # elements[setting][outcome] -> FockOperator

    @property
    def num_settings(self) -> int:
        return len(self.angles)

    @property
    def num_outcomes(self) -> int:
        return len(self.elements[0])

    @property
    def cutoff(self) -> int:
        return self.elements[0][0].cutoff

    def element(self, outcome: int, setting: int) -> FockOperator:
        return self.elements[setting][outcome]

    def validate(self, psd_tol: float = PSD_TOL, comp_tol: float = COMPLETENESS_TOL):
        dim = self.elements[0][0].dim
        for setting, ops in enumerate(self.elements):
            total = np.zeros((dim, dim), dtype=complex)
            for op in ops:
                low = op.min_eigenvalue()
                if low < -psd_tol:
                    raise ValueError(
                        f"{self.party} setting {setting}: element not PSD ({low:.2e})"
                    )
                total += op.entries
            dev = float(np.linalg.norm(total - np.eye(dim), ord=2))
            if dev > comp_tol:
                raise ValueError(
                    f"{self.party} setting {setting}: completeness off by {dev:.2e}"
                )


def _periodic_intervals(
    a: int, period: float, width: float, offset: float, z_max: float
):
    """Intervals [nT + a*w + off, nT + (a+1)*w + off) clipped to [-z_max, z_max]."""
    n_lo = int(math.floor((-z_max - offset) / period)) - 1
    n_hi = int(math.ceil((z_max - offset) / period)) + 1
    out = []
    for n in range(n_lo, n_hi + 1):
        lo = n * period + a * width + offset
        hi = lo + width
        lo, hi = max(lo, -z_max), min(hi, z_max)
        if hi > lo:
            out.append((lo, hi))
    return out


def alice_measurements(binning: PeriodicBinning, cutoff: int) -> MeasurementSet:
    """Alice's two conjugate periodically binned quadratures (q then p)."""
    z_max = integration_halfwidth(cutoff)
    settings = []
    for setting, theta in ((0, 0.0), (1, 0.5 * math.pi)):
        period = binning.period(setting)
        width = period / binning.num_outcomes
        ops = [
            quadrature_bin_element(
                _periodic_intervals(a, period, width, binning.offset, z_max),
                theta,
                cutoff,
            )
            for a in range(binning.num_outcomes)
        ]
        settings.append(ops)
    return MeasurementSet(
        party="alice",
        angles=(0.0, 0.5 * math.pi),
        binnings=(binning, binning),
        elements=tuple(tuple(ops) for ops in settings),
    )


def bob_measurements(
    num_settings: int, binning: IntervalBinning, cutoff: int
) -> MeasurementSet:
    """Bob's quadratures equally spaced in [q, p], interval-binned.

    The overflow outcome is built as identity minus the interval elements,
    so each setting is complete by construction.
    """
    if num_settings < 2:
        raise ValueError("need at least two settings")
    angles = tuple(
        0.5 * math.pi * j / (num_settings - 1) for j in range(num_settings)
    )
    edges = binning.edges
    dim = cutoff + 1
    settings = []
    for theta in angles:
        ops = [
            quadrature_bin_element([(edges[i], edges[i + 1])], theta, cutoff)
            for i in range(binning.num_outcomes - 1)
        ]
        rest = np.eye(dim, dtype=complex) - sum(op.entries for op in ops)
        rest = 0.5 * (rest + rest.conj().T)
        ops.append(FockOperator(cutoff=cutoff, num_modes=1, entries=rest))
        settings.append(tuple(ops))
    return MeasurementSet(
        party="bob",
        angles=angles,
        binnings=tuple(binning for _ in angles),
        elements=tuple(settings),
    )
