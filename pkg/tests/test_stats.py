"""Assemblages, joint tables, empirical frequencies and signalling checks."""

import math

import numpy as np
import pytest

from steercert import fock, gaussian, povm, stats
from steercert.stats import (
    JointDistribution,
    MissingSettingPair,
    SampleRecord,
    assemblage_from_state,
    assemblage_to_joint,
    empirical_distribution,
    joint_from_state,
    quadrature_covariance,
    read_samples_csv,
    sample_records,
    signalling_report,
    write_samples_csv,
)

S4 = gaussian.db_to_parameter(-4.0)


@pytest.fixture(scope="module")
def tms_pieces():
    cutoff = 10
    state = gaussian.tms_covariance(S4)
    rho, _ = fock.gaussian_to_fock(state, cutoff)
    alice = povm.alice_measurements(povm.PeriodicBinning(3.0, 4), cutoff)
    bob = povm.bob_measurements(
        2, povm.IntervalBinning(5.0 * math.sqrt(gaussian.largest_variance(state)), 8),
        cutoff,
    )
    return state, rho, alice, bob


# ---------------------------------------------------------------------------
# assemblages


def test_product_state_assemblage_is_product(tms_pieces):
    _, _, alice, _ = tms_pieces
    cutoff = alice.cutoff
    vac, _ = fock.gaussian_to_fock(gaussian.GaussianState.vacuum(2), cutoff)
    asm = assemblage_from_state(vac, alice)
    asm.validate()
    vac_b = np.zeros((cutoff + 1, cutoff + 1))
    vac_b[0, 0] = 1.0
    for x in range(2):
        for a in range(alice.num_outcomes):
            p = asm.outcome_probability(a, x)
            assert np.allclose(asm.sigma(a, x).entries, p * vac_b, atol=1e-10)


def test_assemblage_no_signalling(tms_pieces):
    _, rho, alice, _ = tms_pieces
    asm = assemblage_from_state(rho, alice)
    asm.validate()
    # no-signalling within the 1e-7 POVM completeness budget (trace norm)
    diff = asm.reduced_state(0) - asm.reduced_state(1)
    assert np.sum(np.abs(np.linalg.eigvalsh(diff))) <= 1e-7
    # completeness: the reduced state is tr_A rho up to the same budget
    d = rho.cutoff + 1
    rho4 = rho.entries.reshape(d, d, d, d)
    tr_a = np.einsum("aiaj->ij", rho4)
    assert np.max(np.abs(asm.reduced_state(0) - tr_a)) <= 1e-7


def two_mode_wavefunction_oracle(state, a, cutoff, binning):
    """<j|sigma_{a|q}|k> for a pure two-mode state by direct quadrature.

    The TMS position wavefunction (x-convention, |psi|^2 covariance V/2)
    is the real Gaussian psi(xa, xb) = (det M / pi^2)^{1/4}
    exp(-1/2 x^T M x) with M = inv(V_qq).  The conditional Bob state at
    Alice value xa is psi(xa, .), so

        sigma[j, k] = int_bin dxa g_j(xa) g_k(xa),
        g_j(xa) = int dxb phi_j(xb) psi(xa, xb),

    evaluated on Gauss-Legendre grids (all integrands smooth Gaussians).
    """
    m = np.linalg.inv(state.covariance[:2, :2])
    norm = (np.linalg.det(m) / math.pi ** 2) ** 0.25
    z_max = povm.integration_halfwidth(cutoff)

    xb, wb = np.polynomial.legendre.leggauss(160)
    xb = xb * z_max
    wb = wb * z_max
    phi = fock.hermite_functions(cutoff, xb)  # (dim, nb)

    def block(lo, hi):
        xa, wa = np.polynomial.legendre.leggauss(160)
        xa = 0.5 * (hi - lo) * xa + 0.5 * (hi + lo)
        wa = 0.5 * (hi - lo) * wa
        expo = (
            -0.5 * m[0, 0] * xa[:, None] ** 2
            - m[0, 1] * xa[:, None] * xb[None, :]
            - 0.5 * m[1, 1] * xb[None, :] ** 2
        )
        psi = norm * np.exp(expo)  # (na, nb)
        g = psi @ (phi * wb).T  # (na, dim)
        return (g * wa[:, None]).T @ g  # (dim, dim)

    dim = cutoff + 1
    out = np.zeros((dim, dim))
    intervals = povm._periodic_intervals(
        a, binning.period_q, binning.s_q, 0.0, z_max
    )
    for lo, hi in intervals:
        out += block(lo, hi)
    return out


def test_assemblage_matches_wavefunction_oracle():
    # lossless TMS, o_A = 2 half-period bins, small cutoff: sigma_{a|q}
    # against a brute-force double quadrature of the two-mode wavefunction
    cutoff = 3
    binning = povm.PeriodicBinning(40.0, 2)  # effectively half-line bins
    state = gaussian.tms_covariance(S4)
    rho, _ = fock.gaussian_to_fock(state, cutoff)
    alice = povm.alice_measurements(binning, cutoff)
    asm = assemblage_from_state(rho, alice)
    for a in (0, 1):
        oracle = two_mode_wavefunction_oracle(state, a, cutoff, binning)
        got = np.real(asm.sigma(a, 0).entries)
        assert np.max(np.abs(got - oracle)) <= 1e-6


# ---------------------------------------------------------------------------
# joint distributions


def test_joint_consistency_triangle(tms_pieces):
    _, rho, alice, bob = tms_pieces
    direct = joint_from_state(rho, alice, bob)
    via_asm = assemblage_to_joint(assemblage_from_state(rho, alice), bob)
    assert np.max(np.abs(direct.table - via_asm.table)) <= 1e-9
    direct.validate()
    # Bob marginal of the joint equals the assemblage traces
    asm = assemblage_from_state(rho, alice)
    pa = direct.alice_marginal()
    for x in range(2):
        for a in range(alice.num_outcomes):
            assert pa[a, x, 0] == pytest.approx(
                asm.outcome_probability(a, x), abs=1e-9
            )


def test_theoretical_table_non_signalling(tms_pieces):
    _, rho, alice, bob = tms_pieces
    dist = joint_from_state(rho, alice, bob)
    report = signalling_report(dist)
    assert report.max_deviation <= 1e-9


def test_signalling_report_detects_perturbation(tms_pieces):
    _, rho, alice, bob = tms_pieces
    dist = joint_from_state(rho, alice, bob)
    table = dist.table.copy()
    table[0, 0, 0, 0] += 0.01
    report = signalling_report(JointDistribution(table=table))
    assert report.alice_deviation >= 0.01 - 1e-12


def test_joint_matches_gaussian_sampler_oracle():
    # Monte-Carlo check of P(ab|xy) for the lossless TMS pipeline
    cutoff = 12
    state = gaussian.tms_covariance(S4)
    rho, deficit = fock.gaussian_to_fock(state, cutoff)
    alice_binning = povm.PeriodicBinning(3.0, 8)
    bob_binning = povm.IntervalBinning(
        5.0 * math.sqrt(gaussian.largest_variance(state)), 16
    )
    alice = povm.alice_measurements(alice_binning, cutoff)
    bob = povm.bob_measurements(2, bob_binning, cutoff)
    dist = joint_from_state(rho, alice, bob)

    n = 2_000_000
    rng = np.random.default_rng(42)
    angles = (0.0, 0.5 * math.pi)
    for x in range(2):
        for y in range(2):
            cov = quadrature_covariance(state, angles[x], angles[y])
            draws = rng.multivariate_normal(np.zeros(2), cov, size=n)
            a_idx = alice_binning.outcome(draws[:, 0], x)
            b_idx = bob_binning.outcome(draws[:, 1])
            counts = np.zeros((8, 16))
            np.add.at(counts, (a_idx, b_idx), 1)
            freq = counts / n
            sem = np.sqrt(np.maximum(freq * (1 - freq), 1e-12) / n)
            # truncation moves ~deficit of mass; allow it on top of 4 SE
            diff = np.abs(freq - dist.table[:, :, x, y])
            assert np.all(diff <= 4.0 * sem + deficit + 2e-4)


# ---------------------------------------------------------------------------
# empirical frequencies


def test_empirical_single_record():
    binning_a = povm.PeriodicBinning(3.0, 8)
    binning_b = povm.IntervalBinning(5.0, 16)
    z_a = 3.0 / 8 * 3.5  # bin 3
    z_b = -5.0 + 10.0 / 15 * 7.5  # bin 7
    records = []
    for x in range(2):
        for y in range(2):
            records.append(SampleRecord(x, y, z_a if x == 0 else 0.1, z_b))
    dist = empirical_distribution(records, binning_a, binning_b)
    assert dist.prob(3, 7, 0, 0) == 1.0
    assert dist.counts is not None and dist.counts.sum() == 4


def test_empirical_idempotent_under_duplication():
    state = gaussian.tms_covariance(S4)
    records = sample_records(state, (0.0, 0.5 * math.pi), (0.0, 0.5 * math.pi), 500, 7)
    binning_a = povm.PeriodicBinning(3.0, 8)
    binning_b = povm.IntervalBinning(5.0, 16)
    one = empirical_distribution(records, binning_a, binning_b)
    two = empirical_distribution(records + records, binning_a, binning_b)
    assert np.allclose(one.table, two.table)


def test_empirical_missing_pair_raises():
    records = [SampleRecord(0, 0, 0.1, 0.2), SampleRecord(1, 1, 0.3, -0.2)]
    with pytest.raises(MissingSettingPair) as err:
        empirical_distribution(
            records, povm.PeriodicBinning(3.0, 4), povm.IntervalBinning(5.0, 4)
        )
    assert "x=" in str(err.value) and "y=" in str(err.value)


def test_empirical_matches_theory_within_statistics():
    cutoff = 12
    state = gaussian.tms_covariance(S4)
    rho, deficit = fock.gaussian_to_fock(state, cutoff)
    binning_a = povm.PeriodicBinning(3.0, 4)
    binning_b = povm.IntervalBinning(
        5.0 * math.sqrt(gaussian.largest_variance(state)), 8
    )
    alice = povm.alice_measurements(binning_a, cutoff)
    bob = povm.bob_measurements(2, binning_b, cutoff)
    theory = joint_from_state(rho, alice, bob)
    n = 16_000
    records = sample_records(state, (0.0, 0.5 * math.pi), (0.0, 0.5 * math.pi), n, 3)
    emp = empirical_distribution(records, binning_a, binning_b)
    sem = np.sqrt(np.maximum(emp.table * (1 - emp.table), 1e-9) / n)
    assert np.all(np.abs(emp.table - theory.table) <= 4.0 * sem + deficit + 1e-3)
    # finite statistics make the table signalling at the ~N^{-1/2} scale
    report = signalling_report(emp)
    assert report.max_deviation > 0.0
    assert 1e-4 < report.max_deviation < 0.1


def test_sampler_covariance():
    state = gaussian.tms_covariance(S4)
    # vacuum = 1/2 convention; q_A + q_B squeezed
    cov = quadrature_covariance(state, 0.0, 0.0)
    var_sum = cov[0, 0] + cov[1, 1] + 2 * cov[0, 1]
    assert var_sum == pytest.approx(math.exp(-2.0 * S4), abs=1e-12)
    vac = quadrature_covariance(gaussian.GaussianState.vacuum(2), 0.3, 1.1)
    assert np.allclose(vac, 0.5 * np.eye(2), atol=1e-12)


# ---------------------------------------------------------------------------
# CSV round trip


def test_samples_csv_round_trip(tmp_path):
    state = gaussian.tms_covariance(S4)
    records = sample_records(state, (0.0,), (0.0, 0.5 * math.pi), 50, 11)
    path = tmp_path / "samples.csv"
    write_samples_csv(path, records)
    back = read_samples_csv(path)
    assert back == records


def test_samples_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("foo,bar\n1,2\n")
    with pytest.raises(ValueError):
        read_samples_csv(path)


def test_samples_csv_rejects_unparseable_row(tmp_path):
    path = tmp_path / "bad2.csv"
    path.write_text("x,y,a_value,b_value\n0,0,hello,1.0\n")
    with pytest.raises(ValueError, match="line 2"):
        read_samples_csv(path)


def test_joint_json_round_trip(tms_pieces):
    _, rho, alice, bob = tms_pieces
    dist = joint_from_state(rho, alice, bob)
    back = JointDistribution.from_json(dist.to_json())
    assert np.allclose(back.table, dist.table)
    assert back.trace_deficit == pytest.approx(dist.trace_deficit)
