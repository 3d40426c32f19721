"""Randomness certification from steering data via guessing-probability SDPs.

An eavesdropper holding the untrusted side prepares, for each guess ``e`` of
the target outcome, a sub-normalised conditional state ``X[e, a, x]`` on the
trusted mode.  Her guessing probability is

    p_guess = max sum_e tr X[e, e, x*]

subject to no-signalling between the untrusted settings and to reproducing
either the observed assemblage (tomography variant) or the observed joint
probability table through the trusted POVMs (probability variant).  The
certified min-entropy is ``-log2(p_guess)``.

The dual solution of the probability variant is a linear witness
``sum_ab xi[a,b,x,y] P(ab|xy) >= p_guess`` valid for any no-signalling data,
so it can be exported and re-evaluated on experimental tables without
re-solving the SDP.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .fock import FockOperator, gaussian_to_fock
from .gaussian import GaussianState
from .povm import MeasurementSet, PeriodicBinning, alice_measurements
from .stats import Assemblage, JointDistribution, assemblage_from_state, assemblage_to_joint

FEASIBILITY_TOL = 1e-7
STRONG_DUALITY_TOL = 1e-5
# interior-point accuracy attainable on truncated-state data is limited by
# the smallest assemblage eigenvalues; 1e-6 is reliable and well inside the
# 1e-5 certification requirement
DEFAULT_GAP_TOL = 1e-6
DEFAULT_FEAS_TOL = 1e-6


@dataclass(frozen=True)
class CertificationResult:
    """Outcome of a guessing-probability solve."""

    pguess: float
    hmin: float
    gap: float
    residuals: dict
    solution: sdp.SdpSolution
    certificate: "DualCertificate | None" = None


def _blocks(num_guess: int, num_outcomes: int, num_settings: int):
    def index(e, a, x):
        return (e * num_outcomes + a) * num_settings + x

    return num_guess * num_outcomes * num_settings, index


def _add_no_signalling(problem, index, num_guess, num_outcomes, num_settings, dim):
    """Constrain sum_a X[e,a,x] to be setting-independent; returns ids."""
    ids = {}
    zero = np.zeros((dim, dim))
    for e in range(num_guess):
        for x in range(1, num_settings):
            terms = [(index(e, a, x), 1.0) for a in range(num_outcomes)]
            terms += [(index(e, a, 0), -1.0) for a in range(num_outcomes)]
            ids[(e, x)] = problem.add_block_sum_constraint(terms, zero)
    return ids


def _set_guess_objective(problem, index, num_guess, target_setting, dim):
    eye = np.eye(dim)
    for e in range(num_guess):
        problem.set_objective(index(e, e, target_setting), eye)


def _auto_method(num_blocks: int, dim: int) -> str:
    """Pick a backend from the problem size.

    Clarabel's sparse-direct factorisation is fastest on small instances but
    its fill-in (with the padded patterns needed to keep the ordering sane)
    exhausts memory once the blocks grow; the dense per-cone reduction in the
    cvxopt backend scales to large blocks at a modest per-iteration cost.
    """
    d = 2 * dim  # real embedding of a complex block
    weight = num_blocks * (d * (d + 1) // 2) ** 2
    return "cvxopt" if weight > 1.2e7 else "clarabel"


def _solve_bounding(problem: sdp.SdpProblem, gap_tol: float, feas_tol: float, **kwargs) -> sdp.SdpSolution:
    """Solve, accepting iterates whose dual side is rigorous.

    On nearly degenerate instances (the truncated state sits on the boundary
    of the feasible set) interior-point iterates can stall with a sloppy
    primal while the dual slack stays cleanly feasible.  The reported bound
    is computed from the dual side only, so such iterates still yield a
    valid guessing-probability bound; accept them instead of failing, as
    long as the primal is close enough to confirm the bound is not loose.
    """
    try:
        return sdp.solve(problem, gap_tol=gap_tol, feas_tol=feas_tol, **kwargs)
    except sdp.NumericalFailure as err:
        sol = err.solution
        if sol is None or sol.dual_objective is None:
            raise
        res = sol.residuals
        scale = 1.0 + abs(sol.dual_objective)
        dual_ok = res.get("dual_min_eigenvalue", -np.inf) >= -10 * feas_tol * scale
        primal_near = (
            res.get("equality", np.inf) <= 1e-3 * scale
            and res.get("min_eigenvalue", -np.inf) >= -1e-5 * scale
            and res.get("gap", np.inf) <= 1e-2 * scale
        )
        if not (dual_ok and primal_near):
            raise
        sol.status = "dual-feasible"
        return sol


def _safe_pguess(solution: sdp.SdpSolution, num_settings: int) -> float:
    """Rigorous upper bound on the guessing probability from the dual side.

    Any exactly feasible primal has total trace equal to the number of
    untrusted settings, so a dual slack with smallest eigenvalue -eps still
    bounds the optimum after adding eps times that trace. Reporting this
    instead of the primal value keeps the min-entropy bound conservative even
    when the near-empty interior lets the backend exploit tiny infeasibilities.
    """
    eps = max(0.0, -solution.residuals.get("dual_min_eigenvalue", 0.0))
    return solution.dual_objective + eps * num_settings


def pguess_tomography(
    assemblage: Assemblage,
    target_setting: int = 0,
    gap_tol: float = DEFAULT_GAP_TOL,
    feas_tol: float = DEFAULT_FEAS_TOL,
    method: str = "auto",
    **solver_kwargs,
) -> CertificationResult:
    """Guessing probability given the exact conditional-state assemblage."""
    num_outcomes = len(assemblage.operators[0])
    num_settings = len(assemblage.operators)
    dim = assemblage.cutoff + 1
    nblocks, index = _blocks(num_outcomes, num_outcomes, num_settings)
    if method == "auto":
        method = _auto_method(nblocks, dim)
    problem = sdp.SdpProblem([dim] * nblocks, sense="max")
    _set_guess_objective(problem, index, num_outcomes, target_setting, dim)
    # reproducing the assemblage; one group per non-reference setting is
    # implied by no-signalling and is dropped to keep the rows independent
    for x in range(num_settings):
        for a in range(num_outcomes):
            if x != 0 and a == num_outcomes - 1:
                continue
            terms = [(index(e, a, x), 1.0) for e in range(num_outcomes)]
            problem.add_block_sum_constraint(terms, assemblage.sigma(a, x).entries)
    _add_no_signalling(problem, index, num_outcomes, num_outcomes, num_settings, dim)
    solver_kwargs.setdefault("form", "lmi")
    solution = _solve_bounding(
        problem, gap_tol, feas_tol, method=method, **solver_kwargs
    )
    pguess = _safe_pguess(solution, num_settings)
    return CertificationResult(
        pguess=pguess,
        hmin=-math.log2(min(pguess, 1.0)) if pguess < 1.0 else 0.0,
        gap=solution.duality_gap,
        residuals=solution.residuals,
        solution=solution,
    )


def _measurement_digest(alice: MeasurementSet, bob: MeasurementSet, target: int) -> str:
    h = hashlib.sha256()
    for mset in (alice, bob):
        for setting in mset.elements:
            for op in setting:
                h.update(np.ascontiguousarray(op.entries).tobytes())
    h.update(str(target).encode())
    return h.hexdigest()


def pguess_probabilities(
    dist: JointDistribution,
    alice: MeasurementSet,
    bob: MeasurementSet,
    target_setting: int = 0,
    gap_tol: float = DEFAULT_GAP_TOL,
    feas_tol: float = DEFAULT_FEAS_TOL,
    method: str = "auto",
    **solver_kwargs,
) -> CertificationResult:
    """Guessing probability given the joint table and trusted-side POVMs.

    ``dist`` must be (numerically) no-signalling; rows made redundant by the
    trusted POVM completeness are dropped before solving.
    """
    num_a, num_b, num_x, num_y = dist.shape
    if num_x != alice.num_settings or num_y != bob.num_settings:
        raise ValueError("distribution shape does not match measurement sets")
    dim = bob.cutoff + 1
    nblocks, index = _blocks(num_a, num_a, num_x)
    if method == "auto":
        method = _auto_method(nblocks, dim)
    problem = sdp.SdpProblem([dim] * nblocks, sense="max")
    _set_guess_objective(problem, index, num_a, target_setting, dim)
    constraint_rows = []  # (a, b, x, y) per scalar constraint, in order
    for x in range(num_x):
        for y in range(num_y):
            for a in range(num_a):
                for b in range(num_b):
                    # rows implied by POVM completeness / no-signalling
                    if y > 0 and b == num_b - 1:
                        continue
                    if x > 0 and y == 0 and a == num_a - 1 and b == num_b - 1:
                        continue
                    element = bob.element(b, y).entries
                    terms = [(index(e, a, x), element) for e in range(num_a)]
                    problem.add_scalar_constraint(terms, dist.prob(a, b, x, y))
                    constraint_rows.append((a, b, x, y))
    _add_no_signalling(problem, index, num_a, num_a, num_x, dim)
    solver_kwargs.setdefault("form", "lmi")
    solution = _solve_bounding(
        problem, gap_tol, feas_tol, method=method, **solver_kwargs
    )
    pguess = _safe_pguess(solution, num_x)
    certificate = _extract_certificate(
        dist, alice, bob, target_setting, solution, constraint_rows
    )
    return CertificationResult(
        pguess=pguess,
        hmin=-math.log2(min(pguess, 1.0)) if pguess < 1.0 else 0.0,
        gap=solution.duality_gap,
        residuals=solution.residuals,
        solution=solution,
        certificate=certificate,
    )


@dataclass
class DualCertificate:
    """Linear witness on joint tables certifying a guessing-probability bound.

    ``evaluate`` returns ``u = sum xi * P``; for no-signalling tables this is
    an upper bound on the guessing probability achievable with the recorded
    trusted POVMs.  ``offsets[e, x]`` are the no-signalling multipliers needed
    to verify feasibility of the witness independently of any solver.
    """

    xi: np.ndarray  # (num_a, num_b, num_x, num_y)
    offsets: np.ndarray  # (num_guess, num_x, dim, dim) complex
    target_setting: int
    pguess_reference: float
    gap: float
    provenance: str
    metadata: dict = field(default_factory=dict)

    def evaluate(self, table: np.ndarray) -> float:
        table = np.asarray(table, dtype=float)
        if table.shape != self.xi.shape:
            raise ValueError("table shape does not match certificate")
        return float(np.sum(self.xi * table))

    def lower_bound(self, dist: JointDistribution):
        """Min-entropy lower bound from the witness; flags the trivial case."""
        u = self.evaluate(dist.table)
        if u >= 1.0:
            return u, 0.0, True
        return u, -math.log2(u), False

    def feasibility_slack(self, bob: MeasurementSet) -> float:
        """Smallest eigenvalue over the witness feasibility conditions.

        The witness is valid when, for every (guess e, outcome a, setting x),

            sum_by xi[a,b,x,y] M[b|y] + offsets[e,x] - [e==a][x==x*] I  >=  0.
        """
        num_a, num_b, num_x, num_y = self.xi.shape
        dim = bob.cutoff + 1
        worst = np.inf
        witness = np.zeros((num_a, num_x, dim, dim), dtype=complex)
        for a in range(num_a):
            for x in range(num_x):
                acc = np.zeros((dim, dim), dtype=complex)
                for y in range(num_y):
                    for b in range(num_b):
                        c = self.xi[a, b, x, y]
                        if c != 0.0:
                            acc += c * bob.element(b, y).entries
                witness[a, x] = acc
        eye = np.eye(dim)
        for e in range(num_a):
            for a in range(num_a):
                for x in range(num_x):
                    mat = witness[a, x] + self.offsets[e, x]
                    if e == a and x == self.target_setting:
                        mat = mat - eye
                    worst = min(worst, float(np.linalg.eigvalsh(mat)[0]))
        return worst

    def repaired(self, bob: MeasurementSet, margin: float = 0.0) -> "DualCertificate":
        """Restore exact feasibility by a uniform shift through completeness.

        Adding a constant to ``xi[a, b, x, 0]`` for all (a, b, x) adds that
        constant times the identity to every feasibility condition, at the
        cost of ``num_x * constant`` on the certified bound.
        """
        slack = self.feasibility_slack(bob)
        shift = max(0.0, margin - slack)
        if shift == 0.0:
            return self
        xi = self.xi.copy()
        xi[:, :, :, 0] += shift
        return DualCertificate(
            xi=xi,
            offsets=self.offsets.copy(),
            target_setting=self.target_setting,
            pguess_reference=self.pguess_reference + xi.shape[2] * shift,
            gap=self.gap,
            provenance=self.provenance,
            metadata=dict(self.metadata, repaired_shift=shift),
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "xi": self.xi.tolist(),
                "offsets_re": self.offsets.real.tolist(),
                "offsets_im": self.offsets.imag.tolist(),
                "target_setting": self.target_setting,
                "pguess_reference": self.pguess_reference,
                "gap": self.gap,
                "provenance": self.provenance,
                "metadata": self.metadata,
            }
        )

    @staticmethod
    def from_json(text: str) -> "DualCertificate":
        data = json.loads(text)
        offsets = np.asarray(data["offsets_re"]) + 1j * np.asarray(
            data["offsets_im"]
        )
        return DualCertificate(
            xi=np.asarray(data["xi"], dtype=float),
            offsets=offsets,
            target_setting=int(data["target_setting"]),
            pguess_reference=float(data["pguess_reference"]),
            gap=float(data["gap"]),
            provenance=data["provenance"],
            metadata=data.get("metadata", {}),
        )


def _extract_certificate(
    dist, alice, bob, target_setting, solution, constraint_rows
) -> DualCertificate:
    num_a, num_b, num_x, num_y = dist.shape
    xi = np.zeros(dist.shape)
    for value, (a, b, x, y) in zip(solution.scalar_duals, constraint_rows):
        xi[a, b, x, y] = value
    dim = bob.cutoff + 1
    offsets = np.zeros((num_a, num_x, dim, dim), dtype=complex)
    # no-signalling multipliers enter block (e, a, x>0) with +H[e,x] and
    # block (e, a, 0) with -sum_x H[e,x]; constraint order follows
    # _add_no_signalling
    idx = 0
    for e in range(num_a):
        for x in range(1, num_x):
            h = solution.block_sum_duals[
                len(solution.block_sum_duals) - num_a * (num_x - 1) + idx
            ]
            offsets[e, x] += h
            offsets[e, 0] -= h
            idx += 1
    cert = DualCertificate(
        xi=xi,
        offsets=offsets,
        target_setting=target_setting,
        pguess_reference=solution.dual_objective,
        gap=solution.duality_gap,
        provenance=_measurement_digest(alice, bob, target_setting),
        metadata={
            "num_outcomes": [num_a, num_b],
            "num_settings": [num_x, num_y],
            "cutoff": bob.cutoff,
        },
    )
    # the witness value on the defining table reproduces the multiplier-side
    # objective identically; a deviation means the multipliers were mangled
    strong = abs(cert.evaluate(dist.table) - solution.dual_objective)
    if strong > STRONG_DUALITY_TOL * (1.0 + solution.dual_objective):
        raise sdp.SdpError(
            f"strong-duality check failed: witness value deviates by {strong:.3e}"
        )
    return cert


@dataclass(frozen=True)
class BinningProfile:
    """Record of a binning-period scan."""

    periods: np.ndarray
    hmin: np.ndarray
    best_period: float
    best_hmin: float


def optimize_binning(
    state: GaussianState,
    num_outcomes: int,
    cutoff: int,
    target_setting: int = 0,
    period_min: float = 2.0,
    period_max: float = 10.0,
    coarse_step: float = 0.5,
    fine_step: float = 0.1,
    bob: MeasurementSet | None = None,
    **solver_kwargs,
) -> BinningProfile:
    """Scan the position-binning period for the best certified min-entropy.

    A coarse grid over ``[period_min, period_max]`` is refined once around
    the best point.  The tomography variant is used unless Bob measurement
    operators are supplied.
    """

    def entropy(period: float) -> float:
        binning = PeriodicBinning(period, num_outcomes)
        alice = alice_measurements(binning, cutoff)
        rho, _ = gaussian_to_fock(state, cutoff)
        assemblage = assemblage_from_state(rho, alice)
        if bob is None:
            result = pguess_tomography(
                assemblage, target_setting, **solver_kwargs
            )
        else:
            dist = assemblage_to_joint(assemblage, bob)
            result = pguess_probabilities(
                dist, alice, bob, target_setting, **solver_kwargs
            )
        return result.hmin

    periods = list(np.arange(period_min, period_max + 1e-9, coarse_step))
    values = [entropy(t) for t in periods]
    best = int(np.argmax(values))
    lo = max(period_min, periods[best] - coarse_step)
    hi = min(period_max, periods[best] + coarse_step)
    for t in np.arange(lo, hi + 1e-9, fine_step):
        if min(abs(t - s) for s in periods) > 1e-9:
            periods.append(t)
            values.append(entropy(t))
    order = np.argsort(periods)
    periods_arr = np.asarray(periods)[order]
    values_arr = np.asarray(values)[order]
    best = int(np.argmax(values_arr))
    return BinningProfile(
        periods=periods_arr,
        hmin=values_arr,
        best_period=float(periods_arr[best]),
        best_hmin=float(values_arr[best]),
    )
