"""Certification inputs: assemblages, joint distributions, empirical frequencies.

Quadrature sample values are in the wavefunction convention
q = (a^dag + a)/sqrt(2), i.e. the vacuum has variance 1/2.  The covariance
matrix V of :class:`~steercert.gaussian.GaussianState` is in shot-noise units
(vacuum = 1), so true sampling covariances are V/2.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .fock import FockOperator
from .gaussian import GaussianState
from .povm import IntervalBinning, MeasurementSet, PeriodicBinning

ASSEMBLAGE_PSD_TOL = 1e-8
NO_SIGNALLING_TOL = 1e-7


@dataclass(frozen=True)
class Assemblage:
    """Unnormalised conditional states sigma_{a|x} on Bob's mode."""

    num_outcomes: int
    num_settings: int
    operators: tuple = field(repr=False)  # operators[x][a] -> FockOperator
    trace_deficit: float = 0.0

    def sigma(self, a: int, x: int) -> FockOperator:
        return self.operators[x][a]

    @property
    def cutoff(self) -> int:
        return self.operators[0][0].cutoff

    def reduced_state(self, x: int = 0) -> np.ndarray:
        dim = self.operators[0][0].dim
        total = np.zeros((dim, dim), dtype=complex)
        for a in range(self.num_outcomes):
            total += self.operators[x][a].entries
        return total

    def outcome_probability(self, a: int, x: int) -> float:
        return self.operators[x][a].trace()

    def validate(self):
        for x in range(self.num_settings):
            for a in range(self.num_outcomes):
                low = self.operators[x][a].min_eigenvalue()
                if low < -ASSEMBLAGE_PSD_TOL:
                    raise ValueError(f"sigma({a}|{x}) not PSD (min eig {low:.2e})")
        ref = self.reduced_state(0)
        if np.trace(ref).real > 1.0 + NO_SIGNALLING_TOL:
            raise ValueError("assemblage total trace exceeds 1")
        for x in range(1, self.num_settings):
            diff = self.reduced_state(x) - ref
            dev = float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
            if dev > NO_SIGNALLING_TOL:
                raise ValueError(f"assemblage signalling: trace-norm dev {dev:.2e}")


@dataclass(frozen=True)
class JointDistribution:
    """Conditional probability table P(ab|xy)."""

    table: np.ndarray = field(repr=False)  # indexed [a, b, x, y]
    counts: np.ndarray | None = field(default=None, repr=False)
    trace_deficit: float = 0.0

    @property
    def shape(self):
        return self.table.shape

    def prob(self, a, b, x, y) -> float:
        return float(self.table[a, b, x, y])

    def alice_marginal(self) -> np.ndarray:
        """P(a|xy) summed over Bob, indexed [a, x, y]."""
        return self.table.sum(axis=1)

    def bob_marginal(self) -> np.ndarray:
        """P(b|xy) summed over Alice, indexed [b, x, y]."""
        return self.table.sum(axis=0)

    def validate(self, norm_tol: float = 1e-9):
        if np.min(self.table) < -1e-12:
            raise ValueError("negative probability entry")
        totals = self.table.sum(axis=(0, 1))
        if np.max(np.abs(totals - 1.0)) > norm_tol + self.trace_deficit:
            raise ValueError(f"normalisation off: totals {totals}")

    def to_json(self) -> str:
        o_a, o_b, m_a, m_b = self.table.shape
        payload = {
            "label_ranges": {"o_A": o_a, "o_B": o_b, "m_A": m_a, "m_B": m_b},
            "trace_deficit": self.trace_deficit,
            "probabilities": self.table.tolist(),
        }
        if self.counts is not None:
            payload["counts"] = self.counts.tolist()
        return json.dumps(payload, indent=1)

    @staticmethod
    def from_json(text: str) -> "JointDistribution":
        payload = json.loads(text)
        table = np.asarray(payload["probabilities"], dtype=float)
        counts = payload.get("counts")
        return JointDistribution(
            table=table,
            counts=None if counts is None else np.asarray(counts, dtype=int),
            trace_deficit=float(payload.get("trace_deficit", 0.0)),
        )


@dataclass(frozen=True)
class SampleRecord:
    """One homodyne round: setting labels and quadrature readings."""

    x_setting: int
    y_setting: int
    a_value: float
    b_value: float

    def __post_init__(self):
        if not (np.isfinite(self.a_value) and np.isfinite(self.b_value)):
            raise ValueError("quadrature readings must be finite")


def assemblage_from_state(rho: FockOperator, alice: MeasurementSet) -> Assemblage:
    """sigma_{a|x} = tr_A[(M_{a|x} x I) rho] for a two-mode state."""
    if rho.num_modes != 2:
        raise ValueError("need a two-mode state")
    if alice.cutoff != rho.cutoff:
        raise ValueError("cutoff mismatch between state and measurements")
    d = rho.cutoff + 1
    rho4 = rho.entries.reshape(d, d, d, d)
    settings = []
    for x in range(alice.num_settings):
        ops = []
        for a in range(alice.num_outcomes):
            m = alice.element(a, x).entries
            sig = np.einsum("kl,likj->ij", m, rho4, optimize=True)
            sig = 0.5 * (sig + sig.conj().T)
            ops.append(FockOperator(cutoff=rho.cutoff, num_modes=1, entries=sig))
        settings.append(tuple(ops))
    deficit = 1.0 - rho.trace()
    return Assemblage(
        num_outcomes=alice.num_outcomes,
        num_settings=alice.num_settings,
        operators=tuple(settings),
        trace_deficit=deficit,
    )


def joint_from_state(
    rho: FockOperator, alice: MeasurementSet, bob: MeasurementSet
) -> JointDistribution:
    """P(ab|xy) = tr[(M_{a|x} x M_{b|y}) rho]."""
    if alice.cutoff != rho.cutoff or bob.cutoff != rho.cutoff:
        raise ValueError("cutoff mismatch")
    d = rho.cutoff + 1
    rho4 = rho.entries.reshape(d, d, d, d)
    table = np.zeros(
        (alice.num_outcomes, bob.num_outcomes, alice.num_settings, bob.num_settings)
    )
    for x in range(alice.num_settings):
        for a in range(alice.num_outcomes):
            m = alice.element(a, x).entries
            sig = np.einsum("kl,likj->ij", m, rho4, optimize=True)
            for y in range(bob.num_settings):
                for b in range(bob.num_outcomes):
                    table[a, b, x, y] = np.einsum(
                        "ij,ji->", bob.element(b, y).entries, sig
                    ).real
    return JointDistribution(table=table, trace_deficit=1.0 - rho.trace())


def assemblage_to_joint(assemblage: Assemblage, bob: MeasurementSet) -> JointDistribution:
    """Contract an assemblage with Bob's POVMs (consistency path)."""
    table = np.zeros(
        (
            assemblage.num_outcomes,
            bob.num_outcomes,
            assemblage.num_settings,
            bob.num_settings,
        )
    )
    for x in range(assemblage.num_settings):
        for a in range(assemblage.num_outcomes):
            sig = assemblage.sigma(a, x).entries
            for y in range(bob.num_settings):
                for b in range(bob.num_outcomes):
                    table[a, b, x, y] = np.einsum(
                        "ij,ji->", bob.element(b, y).entries, sig
                    ).real
    return JointDistribution(table=table, trace_deficit=assemblage.trace_deficit)


class MissingSettingPair(ValueError):
    """Raised when a setting pair has no recorded samples."""

    def __init__(self, x: int, y: int):
        super().__init__(f"no records for setting pair (x={x}, y={y})")
        self.x = x
        self.y = y


def empirical_distribution(
    records,
    alice_binning: PeriodicBinning,
    bob_binning: IntervalBinning,
    num_alice_settings: int = 2,
    num_bob_settings: int = 2,
) -> JointDistribution:
    """Frequency table from raw quadrature samples."""
    o_a = alice_binning.num_outcomes
    o_b = bob_binning.num_outcomes
    counts = np.zeros((o_a, o_b, num_alice_settings, num_bob_settings), dtype=int)
    for rec in records:
        if not 0 <= rec.x_setting < num_alice_settings:
            raise ValueError(f"unknown Alice setting {rec.x_setting}")
        if not 0 <= rec.y_setting < num_bob_settings:
            raise ValueError(f"unknown Bob setting {rec.y_setting}")
        a = int(alice_binning.outcome(rec.a_value, rec.x_setting))
        b = int(bob_binning.outcome(rec.b_value))
        counts[a, b, rec.x_setting, rec.y_setting] += 1
    per_pair = counts.sum(axis=(0, 1))
    missing = np.argwhere(per_pair == 0)
    if missing.size:
        x, y = missing[0]
        raise MissingSettingPair(int(x), int(y))
    table = counts / per_pair[None, None, :, :]
    return JointDistribution(table=table, counts=counts)


@dataclass(frozen=True)
class SignallingReport:
    """Largest marginal deviations across the other party's settings."""

    alice_deviation: float
    bob_deviation: float

    @property
    def max_deviation(self) -> float:
        return max(self.alice_deviation, self.bob_deviation)


def signalling_report(dist: JointDistribution) -> SignallingReport:
    pa = dist.alice_marginal()  # [a, x, y]
    pb = dist.bob_marginal()  # [b, x, y]
    dev_a = float(np.max(np.abs(pa[:, :, :, None] - pa[:, :, None, :])))
    dev_b = float(np.max(np.abs(pb[:, :, None, :] - pb[:, None, :, :])))
    return SignallingReport(alice_deviation=dev_a, bob_deviation=dev_b)


def quadrature_covariance(
    state: GaussianState, theta_a: float, theta_b: float
) -> np.ndarray:
    """2x2 true covariance of (z_A, z_B) at the given angles (vacuum = 1/2)."""
    proj = np.array(
        [
            [np.cos(theta_a), 0.0, np.sin(theta_a), 0.0],
            [0.0, np.cos(theta_b), 0.0, np.sin(theta_b)],
        ]
    )
    return 0.5 * proj @ state.covariance @ proj.T


def sample_records(
    state: GaussianState,
    alice_angles,
    bob_angles,
    samples_per_pair: int,
    seed: int = 0,
) -> list:
    """Draw synthetic homodyne rounds for every setting pair."""
    rng = np.random.default_rng(seed)
    records = []
    for x, ta in enumerate(alice_angles):
        for y, tb in enumerate(bob_angles):
            cov = quadrature_covariance(state, ta, tb)
            draws = rng.multivariate_normal(
                np.zeros(2), cov, size=samples_per_pair
            )
            records.extend(
                SampleRecord(x, y, float(za), float(zb)) for za, zb in draws
            )
    return records


def read_samples_csv(path) -> list:
    """Read rounds from CSV with header ``x,y,a_value,b_value``."""
    records = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        required = {"x", "y", "a_value", "b_value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"sample CSV must have columns {sorted(required)}")
        for line, row in enumerate(reader, start=2):
            try:
                records.append(
                    SampleRecord(
                        x_setting=int(row["x"]),
                        y_setting=int(row["y"]),
                        a_value=float(row["a_value"]),
                        b_value=float(row["b_value"]),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"unparseable sample record on line {line}") from exc
    return records


def write_samples_csv(path, records) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y", "a_value", "b_value"])
        for rec in records:
            writer.writerow([rec.x_setting, rec.y_setting, rec.a_value, rec.b_value])
