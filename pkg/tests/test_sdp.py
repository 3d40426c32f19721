"""Block SDP solver: compilation, backends, certification, cross-validation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from steercert import sdp
from steercert.sdp import (
    NumericalFailure,
    SdpProblem,
    embed_hermitian,
    extract_hermitian,
    smat,
    svec,
)


def random_hermitian(rng, dim, complex_entries=True):
    m = rng.normal(size=(dim, dim))
    if complex_entries:
        m = m + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (m + m.conj().T)


def random_feasible_problem(rng, num_blocks=5, max_dim=6, complex_entries=False):
    """Random bounded feasible problem with known-feasible interior point."""
    dims = [int(rng.integers(2, max_dim + 1)) for _ in range(num_blocks)]
    problem = SdpProblem(dims, sense="max")
    # strictly feasible reference point: random PSD blocks, total trace 1
    ref = []
    for i, d in enumerate(dims):
        m = random_hermitian(rng, d, complex_entries)
        ref.append(m @ m.conj().T + 0.1 * np.eye(d))
    total = sum(float(np.real(np.trace(x))) for x in ref)
    ref = [x / total for x in ref]
    for i, d in enumerate(dims):
        problem.set_objective(i, random_hermitian(rng, d, complex_entries))
    problem.add_scalar_constraint(
        [(i, np.eye(dims[i])) for i in range(num_blocks)], 1.0
    )
    for _ in range(4):
        terms = []
        rhs = 0.0
        for i in range(num_blocks):
            c = random_hermitian(rng, dims[i], complex_entries)
            terms.append((i, c))
            rhs += float(np.real(np.trace(c @ ref[i])))
        problem.add_scalar_constraint(terms, rhs)
    return problem


# ---------------------------------------------------------------------------
# vectorisation and embedding


def test_svec_smat_round_trip():
    rng = np.random.default_rng(0)
    for lower in (True, False):
        m = random_hermitian(rng, 5, complex_entries=False).real
        v = svec(m, lower)
        assert v.shape == (15,)
        assert np.allclose(smat(v, 5, lower), m, atol=1e-14)
        # svec preserves the trace inner product
        m2 = random_hermitian(rng, 5, complex_entries=False).real
        assert np.dot(svec(m, lower), svec(m2, lower)) == pytest.approx(
            float(np.trace(m @ m2)), abs=1e-12
        )


def test_hermitian_embedding_round_trip():
    rng = np.random.default_rng(1)
    h = random_hermitian(rng, 4)
    e = embed_hermitian(h)
    assert e.shape == (8, 8)
    assert np.allclose(e, e.T, atol=1e-14)
    assert np.allclose(extract_hermitian(e), h, atol=1e-14)
    # embedding preserves eigenvalues (doubled)
    ev_h = np.linalg.eigvalsh(h)
    ev_e = np.linalg.eigvalsh(e)
    assert np.allclose(np.repeat(np.sort(ev_h), 2), np.sort(ev_e), atol=1e-12)


# ---------------------------------------------------------------------------
# toy problems with known optima


@pytest.mark.parametrize("method", ["clarabel", "scs", "cvxopt"])
@pytest.mark.parametrize("form", ["direct", "lmi"])
def test_trace_normalised_identity_objective(method, form):
    if method == "cvxopt" and form != "lmi":
        pytest.skip("cvxopt backend is LMI-form only")
    problem = SdpProblem([2], sense="max")
    problem.set_objective(0, np.eye(2))
    problem.add_scalar_constraint([(0, np.eye(2))], 1.0)
    tol = 1e-5 if method == "scs" else 1e-7
    sol = sdp.solve(problem, gap_tol=tol, feas_tol=tol, method=method, form=form)
    assert sol.status == "optimal"
    assert sol.primal_objective == pytest.approx(1.0, abs=10 * tol)
    assert sol.dual_objective == pytest.approx(1.0, abs=10 * tol)


@pytest.mark.parametrize("method", ["clarabel", "cvxopt"])
def test_eigenvalue_problem(method):
    problem = SdpProblem([2], sense="max")
    problem.set_objective(0, np.diag([1.0, -1.0]))
    problem.add_scalar_constraint([(0, np.eye(2))], 1.0)
    sol = sdp.solve(problem, method=method, form="lmi")
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)
    x = sol.block_values[0]
    assert x[0, 0].real == pytest.approx(1.0, abs=1e-5)


def test_block_sum_constraint():
    # two blocks forced to sum to a fixed PSD matrix; maximize trace of one
    target = np.diag([0.7, 0.3])
    problem = SdpProblem([2, 2], sense="max")
    problem.set_objective(0, np.eye(2))
    problem.add_block_sum_constraint([(0, 1.0), (1, 1.0)], target)
    sol = sdp.solve(problem)
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)
    assert np.allclose(sol.block_values[0] + sol.block_values[1], target, atol=1e-6)


def test_minimisation_sense():
    problem = SdpProblem([2], sense="min")
    problem.set_objective(0, np.diag([1.0, 2.0]))
    problem.add_scalar_constraint([(0, np.eye(2))], 1.0)
    sol = sdp.solve(problem)
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)


def test_complex_block_solves_like_real_embedding():
    rng = np.random.default_rng(3)
    c = random_hermitian(rng, 3)
    a1 = random_hermitian(rng, 3)
    complex_problem = SdpProblem([3], sense="max")
    complex_problem.set_objective(0, c)
    complex_problem.add_scalar_constraint([(0, np.eye(3))], 1.0)
    complex_problem.add_scalar_constraint([(0, a1)], 0.2)

    # hand-built real embedding of the same program (factor 1/2 keeps the
    # trace pairing: tr[C X] = 1/2 tr[E(C) E(X)])
    real_problem = SdpProblem([6], sense="max")
    real_problem.set_objective(0, 0.5 * embed_hermitian(c))
    real_problem.add_scalar_constraint([(0, 0.5 * embed_hermitian(np.eye(3)))], 1.0)
    real_problem.add_scalar_constraint([(0, 0.5 * embed_hermitian(a1))], 0.2)

    sol_c = sdp.solve(complex_problem)
    sol_r = sdp.solve(real_problem)
    assert sol_c.primal_objective == pytest.approx(
        sol_r.primal_objective, abs=1e-9 * (1 + abs(sol_c.primal_objective))
    )
    assert np.max(np.abs(sol_c.block_values[0].imag.diagonal())) <= 1e-9


def test_scaling_invariance():
    rng = np.random.default_rng(5)
    problem = random_feasible_problem(rng, num_blocks=3, max_dim=4)
    base = sdp.solve(problem)
    scaled = SdpProblem(problem.block_dims, sense="max")
    for blk, mat in problem.objective.items():
        scaled.set_objective(blk, 7.0 * mat)
    for con in problem.scalar_constraints:
        scaled.add_scalar_constraint(con.terms, con.rhs)
    sol = sdp.solve(scaled)
    assert sol.status == "optimal"
    assert sol.primal_objective == pytest.approx(
        7.0 * base.primal_objective, rel=1e-6
    )


# ---------------------------------------------------------------------------
# certification contract


def test_optimal_certificate_residuals():
    rng = np.random.default_rng(8)
    problem = random_feasible_problem(rng, num_blocks=4, max_dim=5)
    gap_tol = 1e-7
    sol = sdp.solve(problem, gap_tol=gap_tol, feas_tol=1e-7)
    scale = 1.0 + abs(sol.primal_objective)
    assert sol.duality_gap <= gap_tol * scale
    assert sol.residuals["equality"] <= 1e-7 * scale
    assert sol.residuals["min_eigenvalue"] >= -1e-7 * scale
    # complementary slackness through the recomputed duals: the dual slack
    # paired with each primal block should be numerically orthogonal to it
    assert sol.residuals["dual_min_eigenvalue"] >= -1e-6 * scale


def test_lmi_and_direct_forms_agree():
    rng = np.random.default_rng(13)
    problem = random_feasible_problem(rng, num_blocks=4, max_dim=5)
    direct = sdp.solve(problem, form="direct")
    lmi = sdp.solve(problem, form="lmi")
    assert lmi.primal_objective == pytest.approx(
        direct.primal_objective, abs=1e-6 * (1 + abs(direct.primal_objective))
    )


def test_iteration_limit_raises_numerical_failure():
    rng = np.random.default_rng(21)
    problem = random_feasible_problem(rng, num_blocks=4, max_dim=5)
    with pytest.raises(NumericalFailure) as err:
        sdp.solve(problem, max_iters=1)
    sol = err.value.solution
    assert sol is not None
    assert sol.status == "numerical-failure"
    assert "gap" in sol.residuals


def test_infeasible_problem_reports_certificate():
    # tr X = 1 and tr X = 2 cannot hold together
    problem = SdpProblem([2], sense="max")
    problem.set_objective(0, np.eye(2))
    problem.add_scalar_constraint([(0, np.eye(2))], 1.0)
    problem.add_scalar_constraint([(0, np.diag([1.0, 1.0 + 1e-9])) ], 2.0)
    sol = sdp.solve(problem, eliminate_redundant=False)
    assert sol.status == "infeasible"
    assert sol.certificate is not None
    assert sol.residuals["certificate_violation"] <= 1e-6


def test_redundant_rows_are_eliminated():
    problem = SdpProblem([2], sense="max")
    problem.set_objective(0, np.eye(2))
    problem.add_scalar_constraint([(0, np.eye(2))], 1.0)
    problem.add_scalar_constraint([(0, 2.0 * np.eye(2))], 2.0)  # same row twice
    sol = sdp.solve(problem)
    assert sol.status == "optimal"
    assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)


# ---------------------------------------------------------------------------
# cross-solver validation (acceptance criterion: random small SDPs to 1e-5)


@pytest.mark.parametrize("seed", range(5))
def test_cross_solver_agreement(seed):
    rng = np.random.default_rng(100 + seed)
    problem = random_feasible_problem(
        rng, num_blocks=5, max_dim=6, complex_entries=(seed % 2 == 0)
    )
    ref = sdp.solve(problem, method="clarabel", gap_tol=1e-8, feas_tol=1e-8)
    scale = 1.0 + abs(ref.primal_objective)
    for method in ("scs", "cvxopt"):
        kwargs = {"form": "lmi"} if method == "cvxopt" else {}
        sol = sdp.solve(
            problem, method=method, gap_tol=1e-6, feas_tol=1e-6, **kwargs
        )
        assert abs(sol.primal_objective - ref.primal_objective) <= 1e-5 * scale
        assert abs(sol.dual_objective - ref.dual_objective) <= 1e-5 * scale


# ---------------------------------------------------------------------------
# dump / load


def test_dump_load_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    problem = random_feasible_problem(rng, num_blocks=3, max_dim=4, complex_entries=True)
    problem.add_block_sum_constraint(
        [(0, 1.0)], np.zeros((problem.block_dims[0],) * 2)
    )
    path = tmp_path / "problem.sdp"
    problem.dump(path)
    loaded = SdpProblem.load(path)
    assert loaded.block_dims == problem.block_dims
    assert loaded.sense == problem.sense
    a = sdp.solve(problem)
    b = sdp.solve(loaded)
    assert b.primal_objective == pytest.approx(a.primal_objective, abs=1e-8)


# ---------------------------------------------------------------------------
# input validation


def test_rejects_non_hermitian_objective():
    problem = SdpProblem([2])
    with pytest.raises(ValueError):
        problem.set_objective(0, np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_rejects_dimension_mismatch():
    problem = SdpProblem([2, 3])
    with pytest.raises(ValueError):
        problem.add_scalar_constraint([(0, np.eye(3))], 1.0)
    with pytest.raises(ValueError):
        problem.add_block_sum_constraint([(0, 1.0), (1, 1.0)], np.eye(2))


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_random_problems_certified(seed):
    rng = np.random.default_rng(seed)
    problem = random_feasible_problem(rng, num_blocks=3, max_dim=4)
    sol = sdp.solve(problem)
    assert sol.status == "optimal"
    scale = 1.0 + abs(sol.primal_objective)
    assert sol.duality_gap <= 1e-7 * scale
