"""Block-structured semidefinite programming with certified duality gaps.

Problems are stated over Hermitian PSD blocks with linear equality
constraints (scalar trace equalities and block-sum matrix equalities).
Complex Hermitian blocks are handled by the standard real symmetric
embedding H -> [[Re H, -Im H], [Im H, Re H]] (with a factor 1/2 on data
matrices so trace pairings are preserved).  The compiled conic form

    min  q.x   s.t.  A_eq x = b,   x in PSD x ... x PSD

is handed to an interior-point backend (Clarabel by default, SCS as a
lower-accuracy alternative).  All reported objectives, duality gaps and
feasibility residuals are recomputed here from the returned iterates, so
an "optimal" status is certified independently of the backend's claim.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

HERMITICITY_TOL = 1e-12
DEFAULT_GAP_TOL = 1e-7
DEFAULT_FEAS_TOL = 1e-7
REDUNDANCY_TOL = 1e-10
_ELIMINATION_ROW_LIMIT = 8000
MAX_ITERS_ENV = "STEERCERT_SDP_MAX_ITERS"


class SdpError(RuntimeError):
    pass


class NumericalFailure(SdpError):
    """Solver did not reach the requested accuracy; best iterate attached."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class _ScalingBreakdown(ArithmeticError):
    """Interior-point scaling matrices are no longer numerically meaningful."""


def _check_hermitian(matrix: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be square")
    if np.max(np.abs(m - m.conj().T)) > HERMITICITY_TOL:
        raise ValueError(f"{what} is not Hermitian")
    return m


def _svec_indices(dim: int, lower: bool):
    """(rows, cols, scale) of the triangular column-stacked svec layout."""
    rows, cols = [], []
    for j in range(dim):
        rng = range(j, dim) if lower else range(j + 1)
        for i in rng:
            rows.append(i)
            cols.append(j)
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    scale = np.where(rows == cols, 1.0, math.sqrt(2.0))
    return rows, cols, scale


def svec(matrix: np.ndarray, lower: bool) -> np.ndarray:
    rows, cols, scale = _svec_indices(matrix.shape[0], lower)
    return matrix[rows, cols] * scale


def smat(vec: np.ndarray, dim: int, lower: bool) -> np.ndarray:
    rows, cols, scale = _svec_indices(dim, lower)
    out = np.zeros((dim, dim))
    vals = vec / scale
    out[rows, cols] = vals
    out[cols, rows] = vals
    return out


def embed_hermitian(matrix: np.ndarray) -> np.ndarray:
    """Real symmetric embedding of a Hermitian matrix."""
    re, im = matrix.real, matrix.imag
    return np.block([[re, -im], [im, re]])


def extract_hermitian(embedded: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed_hermitian` (projects onto the embedded space)."""
    d = embedded.shape[0] // 2
    re = 0.5 * (embedded[:d, :d] + embedded[d:, d:])
    im = 0.5 * (embedded[d:, :d] - embedded[:d, d:])
    return re + 1j * im


@dataclass
class _ScalarEq:
    terms: list  # [(block, hermitian matrix)]
    rhs: float


@dataclass
class _BlockSumEq:
    terms: list  # [(block, real coefficient)]
    rhs: np.ndarray


class SdpProblem:
    """maximize/minimize sum_i tr[C_i X_i] over PSD Hermitian blocks X_i."""

    def __init__(self, block_dims, sense: str = "max"):
        if sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        self.block_dims = list(block_dims)
        if any(d < 1 for d in self.block_dims):
            raise ValueError("block dimensions must be positive")
        self.sense = sense
        self.objective = {}
        self.scalar_constraints: list[_ScalarEq] = []
        self.block_sum_constraints: list[_BlockSumEq] = []

    @property
    def num_blocks(self) -> int:
        return len(self.block_dims)

    def set_objective(self, block: int, matrix) -> None:
        self.objective[block] = _check_hermitian(matrix, "objective matrix")

    def add_scalar_constraint(self, terms, rhs: float) -> int:
        checked = []
        for block, matrix in terms:
            m = _check_hermitian(matrix, "constraint matrix")
            if m.shape[0] != self.block_dims[block]:
                raise ValueError("constraint matrix dimension mismatch")
            checked.append((block, m))
        self.scalar_constraints.append(_ScalarEq(checked, float(rhs)))
        return len(self.scalar_constraints) - 1

    def add_block_sum_constraint(self, terms, rhs) -> int:
        rhs = _check_hermitian(rhs, "block-sum right-hand side")
        dims = {self.block_dims[b] for b, _ in terms}
        if len(dims) != 1 or rhs.shape[0] != dims.pop():
            raise ValueError("block-sum constraint requires equal block dims")
        self.block_sum_constraints.append(
            _BlockSumEq([(b, float(c)) for b, c in terms], rhs)
        )
        return len(self.block_sum_constraints) - 1

    # -- conic compilation ------------------------------------------------

    def _block_is_complex(self) -> list:
        complex_flags = [False] * self.num_blocks
        def flag(block, matrix):
            if np.max(np.abs(matrix.imag)) > 1e-14:
                complex_flags[block] = True
        for block, mat in self.objective.items():
            flag(block, mat)
        for con in self.scalar_constraints:
            for block, mat in con.terms:
                flag(block, mat)
        for con in self.block_sum_constraints:
            if np.max(np.abs(con.rhs.imag)) > 1e-14:
                for block, _ in con.terms:
                    complex_flags[block] = True
        # block-sum constraints force a common representation
        changed = True
        while changed:
            changed = False
            for con in self.block_sum_constraints:
                if any(complex_flags[b] for b, _ in con.terms):
                    for b, _ in con.terms:
                        if not complex_flags[b]:
                            complex_flags[b] = True
                            changed = True
        return complex_flags

    def compile(self, lower_triangular: bool):
        """Build (q, A_eq triplets, b_eq, cone dims, layout) in svec space."""
        complex_flags = self._block_is_complex()
        cone_dims = [
            2 * d if c else d for d, c in zip(self.block_dims, complex_flags)
        ]
        svec_lens = [d * (d + 1) // 2 for d in cone_dims]
        offsets = np.concatenate([[0], np.cumsum(svec_lens)]).astype(int)
        nvar = int(offsets[-1])

        def real_data(block, matrix):
            if complex_flags[block]:
                return 0.5 * embed_hermitian(matrix)
            return matrix.real.copy()

        sign = -1.0 if self.sense == "max" else 1.0
        q = np.zeros(nvar)
        for block, mat in self.objective.items():
            dat = real_data(block, mat)
            q[offsets[block] : offsets[block + 1]] = sign * svec(
                dat, lower_triangular
            )

        rows, cols, vals, b_list = [], [], [], []
        row_meta = []  # ("scalar", idx) or ("blocksum", idx, component)
        r = 0
        for idx, con in enumerate(self.scalar_constraints):
            for block, mat in con.terms:
                v = svec(real_data(block, mat), lower_triangular)
                nz = np.nonzero(v)[0]
                rows.extend([r] * len(nz))
                cols.extend((offsets[block] + nz).tolist())
                vals.extend(v[nz].tolist())
            b_list.append(con.rhs)
            row_meta.append(("scalar", idx, 0))
            r += 1
        for idx, con in enumerate(self.block_sum_constraints):
            any_complex = complex_flags[con.terms[0][0]]
            rhs_mat = (
                embed_hermitian(con.rhs) if any_complex else con.rhs.real.copy()
            )
            rhs_vec = svec(rhs_mat, lower_triangular)
            ncomp = rhs_vec.size
            for comp in range(ncomp):
                for block, coeff in con.terms:
                    rows.append(r)
                    cols.append(offsets[block] + comp)
                    vals.append(coeff)
                b_list.append(rhs_vec[comp])
                row_meta.append(("blocksum", idx, comp))
                r += 1

        a_eq = sp.coo_matrix(
            (vals, (rows, cols)), shape=(r, nvar)
        ).tocsr()
        return {
            "q": q,
            "A_eq": a_eq,
            "b_eq": np.asarray(b_list),
            "cone_dims": cone_dims,
            "offsets": offsets,
            "complex_flags": complex_flags,
            "row_meta": row_meta,
            "lower": lower_triangular,
            "sign": sign,
        }

    # -- sparse text dump/load --------------------------------------------
    # Format: header lines then one record per line:
    #   objective  <block> <row> <col> <re> <im>
    #   scalar     <index> <rhs>     /  sterm <index> <block> <row> <col> <re> <im>
    #   blocksum   <index> ...       /  bterm / brhs records analogously.

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"sdp {self.sense} blocks {len(self.block_dims)}\n")
            fh.write("dims " + " ".join(map(str, self.block_dims)) + "\n")
            for block, mat in sorted(self.objective.items()):
                for (i, j), v in np.ndenumerate(mat):
                    if v != 0:
                        fh.write(
                            f"objective {block} {i} {j} {float(v.real)!r} {float(v.imag)!r}\n"
                        )
            for idx, con in enumerate(self.scalar_constraints):
                fh.write(f"scalar {idx} {float(con.rhs)!r}\n")
                for block, mat in con.terms:
                    for (i, j), v in np.ndenumerate(mat):
                        if v != 0:
                            fh.write(
                                f"sterm {idx} {block} {i} {j} {float(v.real)!r} {float(v.imag)!r}\n"
                            )
            for idx, con in enumerate(self.block_sum_constraints):
                fh.write(f"blocksum {idx}\n")
                for block, coeff in con.terms:
                    fh.write(f"bterm {idx} {block} {float(coeff)!r}\n")
                for (i, j), v in np.ndenumerate(con.rhs):
                    if v != 0:
                        fh.write(f"brhs {idx} {i} {j} {float(v.real)!r} {float(v.imag)!r}\n")

    @staticmethod
    def load(path) -> "SdpProblem":
        with open(path) as fh:
            header = fh.readline().split()
            sense = header[1]
            dims_line = fh.readline().split()
            dims = list(map(int, dims_line[1:]))
            prob = SdpProblem(dims, sense=sense)
            objective = {}
            scalars, sterms = {}, {}
            bterms, brhs = {}, {}
            for line in fh:
                parts = line.split()
                tag = parts[0]
                if tag == "objective":
                    block, i, j = map(int, parts[1:4])
                    objective.setdefault(
                        block, np.zeros((dims[block], dims[block]), dtype=complex)
                    )[i, j] = float(parts[4]) + 1j * float(parts[5])
                elif tag == "scalar":
                    scalars[int(parts[1])] = float(parts[2])
                elif tag == "sterm":
                    idx, block, i, j = map(int, parts[1:5])
                    key = (idx, block)
                    sterms.setdefault(
                        key, np.zeros((dims[block], dims[block]), dtype=complex)
                    )[i, j] = float(parts[5]) + 1j * float(parts[6])
                elif tag == "blocksum":
                    bterms.setdefault(int(parts[1]), [])
                elif tag == "bterm":
                    bterms.setdefault(int(parts[1]), []).append(
                        (int(parts[2]), float(parts[3]))
                    )
                elif tag == "brhs":
                    idx, i, j = map(int, parts[1:4])
                    d = dims[bterms[idx][0][0]]
                    brhs.setdefault(idx, np.zeros((d, d), dtype=complex))[i, j] = (
                        float(parts[4]) + 1j * float(parts[5])
                    )
            for block, mat in objective.items():
                prob.set_objective(block, mat)
            for idx in sorted(scalars):
                terms = [
                    (block, mat) for (i, block), mat in sorted(sterms.items())
                    if i == idx
                ]
                prob.add_scalar_constraint(terms, scalars[idx])
            for idx in sorted(bterms):
                d = dims[bterms[idx][0][0]]
                rhs = brhs.get(idx, np.zeros((d, d), dtype=complex))
                prob.add_block_sum_constraint(bterms[idx], rhs)
        return prob


@dataclass
class SdpSolution:
    status: str  # optimal | infeasible | numerical-failure
    primal_objective: float | None
    dual_objective: float | None
    block_values: list | None
    scalar_duals: np.ndarray | None
    block_sum_duals: list | None
    residuals: dict = field(default_factory=dict)
    certificate: np.ndarray | None = None

    @property
    def duality_gap(self) -> float:
        return abs(self.primal_objective - self.dual_objective)


def _drop_redundant_rows(a_eq, b_eq, tol=REDUNDANCY_TOL):
    """Rank-revealing elimination of dependent equality rows.

    Uses pivoted Cholesky of A A^T; skipped for very tall systems (callers
    are expected to avoid structural redundancies there).
    """
    nrows = a_eq.shape[0]
    if nrows > _ELIMINATION_ROW_LIMIT:
        return a_eq, b_eq, np.arange(nrows)
    gram = (a_eq @ a_eq.T).toarray()
    from scipy.linalg.lapack import dpstrf

    scale = max(1.0, float(np.max(np.diag(gram))))
    _, piv, rank, _ = dpstrf(gram / scale, lower=1, tol=tol)
    keep = np.sort(piv[:rank] - 1)
    if keep.size == nrows:
        return a_eq, b_eq, np.arange(nrows)
    return a_eq[keep], b_eq[keep], keep


def _solution_from_x(problem, compiled, x):
    offsets = compiled["offsets"]
    lower = compiled["lower"]
    blocks = []
    for i, dim in enumerate(compiled["cone_dims"]):
        vec = x[offsets[i] : offsets[i + 1]]
        mat = smat(vec, dim, lower)
        if compiled["complex_flags"][i]:
            blocks.append(extract_hermitian(mat))
        else:
            blocks.append(mat.astype(complex))
    return blocks


def _dual_matrices(problem, compiled, z_eq, row_keep):
    """Split equality duals into scalar multipliers and block-sum matrices."""
    z_full = np.zeros(len(compiled["row_meta"]))
    z_full[row_keep] = z_eq
    n_scalar = len(problem.scalar_constraints)
    scalar_duals = np.zeros(n_scalar)
    sum_vecs = {}
    for val, meta in zip(z_full, compiled["row_meta"]):
        kind, idx, comp = meta
        if kind == "scalar":
            scalar_duals[idx] = val
        else:
            sum_vecs.setdefault(idx, {})[comp] = val
    lower = compiled["lower"]
    block_sum_duals = []
    for idx, con in enumerate(problem.block_sum_constraints):
        block0 = con.terms[0][0]
        dim = compiled["cone_dims"][block0]
        vec = np.zeros(dim * (dim + 1) // 2)
        for comp, val in sum_vecs.get(idx, {}).items():
            vec[comp] = val
        mat = smat(vec, dim, lower)
        if compiled["complex_flags"][block0]:
            block_sum_duals.append(2.0 * extract_hermitian(mat))
        else:
            block_sum_duals.append(mat.astype(complex))
    return scalar_duals, block_sum_duals


def solve(
    problem: SdpProblem,
    gap_tol: float = DEFAULT_GAP_TOL,
    feas_tol: float = DEFAULT_FEAS_TOL,
    method: str = "clarabel",
    max_iters: int | None = None,
    verbose: bool = False,
    eliminate_redundant: bool = True,
    form: str = "direct",
) -> SdpSolution:
    """Solve an :class:`SdpProblem` and certify the result.

    ``form="direct"`` passes the compiled problem to the backend as-is (PSD
    variables, equality rows). ``form="lmi"`` solves the transposed problem
    (one variable per equality row, a single linear matrix inequality per
    block) and maps the backend's cone duals back to the primal blocks. The
    LMI form is dramatically faster when equality rows couple many blocks,
    because the interior-point KKT system then factorises block by block.
    Both forms go through the same independent residual verification.

    Raises :class:`NumericalFailure` (with the best iterate attached) if the
    backend stops early or the recomputed residuals exceed the tolerances.
    """
    if form not in ("direct", "lmi"):
        raise ValueError(f"unknown form {form!r}")
    if max_iters is None:
        max_iters = int(os.environ.get(MAX_ITERS_ENV, "200"))
    lower = method == "scs"
    compiled = problem.compile(lower_triangular=lower)
    a_eq, b_eq = compiled["A_eq"], compiled["b_eq"]
    if eliminate_redundant and a_eq.shape[0]:
        a_eq, b_eq, row_keep = _drop_redundant_rows(a_eq, b_eq)
    else:
        row_keep = np.arange(a_eq.shape[0])

    backend_tol = 0.1 * min(gap_tol, feas_tol)
    if method == "clarabel":
        x, z_eq, status_raw = _solve_clarabel(
            compiled, a_eq, b_eq, max_iters, verbose, backend_tol, form
        )
    elif method == "scs":
        x, z_eq, status_raw = _solve_scs(
            compiled, a_eq, b_eq, max_iters, verbose, backend_tol, form
        )
    elif method == "cvxopt":
        if form != "lmi":
            raise ValueError("the cvxopt backend only supports form='lmi'")
        x, z_eq, status_raw = _solve_cvxopt_lmi(
            compiled, a_eq, b_eq, max_iters, verbose, backend_tol
        )
    else:
        raise ValueError(f"unknown method {method!r}")

    if status_raw == "infeasible":
        cert_res = float(
            np.max(np.abs(a_eq.T @ z_eq - _psd_part(compiled, a_eq.T @ z_eq)))
        )
        return SdpSolution(
            status="infeasible",
            primal_objective=None,
            dual_objective=None,
            block_values=None,
            scalar_duals=None,
            block_sum_duals=None,
            residuals={"certificate_violation": cert_res},
            certificate=z_eq,
        )

    sign = compiled["sign"]
    q = compiled["q"]
    primal_min = float(q @ x)
    dual_min = float(-b_eq @ z_eq)
    primal = sign * primal_min
    dual = sign * dual_min
    # recompute residuals independently of the backend
    eq_res = float(np.max(np.abs(a_eq @ x - b_eq))) if b_eq.size else 0.0
    blocks = _solution_from_x(problem, compiled, x)
    min_eig = min(
        (float(np.linalg.eigvalsh(blk)[0]) for blk in blocks), default=0.0
    )
    s_dual = q + a_eq.T @ z_eq
    dual_min_eig = _min_block_eig(compiled, s_dual)
    gap = abs(primal_min - dual_min)
    residuals = {
        "equality": eq_res,
        "min_eigenvalue": min_eig,
        "dual_min_eigenvalue": dual_min_eig,
        "gap": gap,
    }
    scalar_duals, block_sum_duals = _dual_matrices(
        problem, compiled, z_eq, row_keep
    )
    # orient multipliers so that sum(dual * rhs) equals the optimum directly
    if sign > 0:
        scalar_duals = -scalar_duals
        block_sum_duals = [-m for m in block_sum_duals]
    solution = SdpSolution(
        status="optimal",
        primal_objective=primal,
        dual_objective=dual,
        block_values=blocks,
        scalar_duals=scalar_duals,
        block_sum_duals=block_sum_duals,
        residuals=residuals,
    )
    scale = 1.0 + abs(primal_min)
    ok = (
        status_raw == "optimal"
        and gap <= gap_tol * scale
        and eq_res <= feas_tol * scale
        and min_eig >= -feas_tol * scale
        and dual_min_eig >= -10 * feas_tol * scale
    )
    if not ok:
        solution.status = "numerical-failure"
        raise NumericalFailure(
            f"solver stopped with status={status_raw}, residuals={residuals}",
            solution=solution,
        )
    return solution


def _min_block_eig(compiled, vec) -> float:
    offsets = compiled["offsets"]
    lower = compiled["lower"]
    worst = np.inf
    for i, dim in enumerate(compiled["cone_dims"]):
        mat = smat(vec[offsets[i] : offsets[i + 1]], dim, lower)
        worst = min(worst, float(np.linalg.eigvalsh(mat)[0]))
    return worst


def _psd_part(compiled, vec):
    offsets = compiled["offsets"]
    lower = compiled["lower"]
    out = np.zeros_like(vec)
    for i, dim in enumerate(compiled["cone_dims"]):
        sl = slice(offsets[i], offsets[i + 1])
        mat = smat(vec[sl], dim, lower)
        w, v = np.linalg.eigh(mat)
        pos = (v * np.clip(w, 0.0, None)) @ v.T
        out[sl] = svec(pos, lower)
    return out


def _pad_row_pattern(a_eq, offsets):
    """Pad each row's sparsity pattern to whole svec blocks (explicit zeros).

    Constraint rows that touch single components of many blocks have very low
    degree, so fill-reducing orderings eliminate them first and merge every
    block they couple into one huge dense clique. Padding the pattern to full
    blocks makes those rows high-degree, so the ordering eliminates the block
    interiors first and the factor stays block-structured.
    """
    a = a_eq.tocsr()
    bounds = np.asarray(offsets)
    nrows = a.shape[0]
    row_blocks = []
    indptr = np.zeros(nrows + 1, dtype=np.int64)
    for i in range(nrows):
        idx = a.indices[a.indptr[i] : a.indptr[i + 1]]
        blocks = np.unique(np.searchsorted(bounds, idx, side="right") - 1)
        row_blocks.append(blocks)
        width = int(np.sum(bounds[blocks + 1] - bounds[blocks]))
        indptr[i + 1] = indptr[i] + width
    nnz = int(indptr[-1])
    cols = np.empty(nnz, dtype=np.int32)
    vals = np.zeros(nnz)
    for i in range(nrows):
        pos = indptr[i]
        for b in row_blocks[i]:
            width = int(bounds[b + 1] - bounds[b])
            cols[pos : pos + width] = np.arange(
                bounds[b], bounds[b + 1], dtype=np.int32
            )
            pos += width
        idx = a.indices[a.indptr[i] : a.indptr[i + 1]]
        val = a.data[a.indptr[i] : a.indptr[i + 1]]
        full = cols[indptr[i] : indptr[i + 1]]
        vals[indptr[i] + np.searchsorted(full, idx)] = val
    return sp.csr_matrix((vals, cols, indptr), shape=a.shape)


def _solve_clarabel(compiled, a_eq, b_eq, max_iters, verbose, tol, form):
    import clarabel

    nvar = compiled["q"].size
    neq = a_eq.shape[0]
    if neq:
        a_eq = _pad_row_pattern(a_eq, compiled["offsets"])
    psd_cones = [clarabel.PSDTriangleConeT(d) for d in compiled["cone_dims"]]
    if form == "lmi":
        # transposed problem: min -b'w  s.t.  q - A'w in PSD cones
        # (transpose of CSR is a zero-copy CSC view)
        a_full = a_eq.T.tocsc(copy=False)
        b_full = compiled["q"].copy()
        q_vec = -b_eq
        cones = psd_cones
        nw = neq
    else:
        a_full = sp.vstack(
            [a_eq.tocsc(), -sp.identity(nvar, format="csc")]
        ).tocsc()
        b_full = np.concatenate([b_eq, np.zeros(nvar)])
        q_vec = compiled["q"]
        cones = [clarabel.ZeroConeT(neq)] + psd_cones
        nw = nvar
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.max_iter = max_iters
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.tol_feas = tol
    p_zero = sp.csc_matrix((nw, nw))
    solver = clarabel.DefaultSolver(p_zero, q_vec, a_full, b_full, cones, settings)
    result = solver.solve()
    status = str(result.status)
    if form == "lmi":
        # cone duals of the transposed problem are the primal blocks;
        # its variables are the (negated) equality multipliers
        x = np.asarray(result.z)
        z_eq = -np.asarray(result.x)
        if status in ("Solved", "AlmostSolved"):
            return x, z_eq, "optimal"
        if status in ("DualInfeasible", "AlmostDualInfeasible"):
            return x, -z_eq, "infeasible"
        return x, z_eq, f"backend:{status}"
    x = np.asarray(result.x)
    z_eq = np.asarray(result.z)[:neq]
    if status in ("Solved", "AlmostSolved"):
        return x, z_eq, "optimal"
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return x, z_eq, "infeasible"
    return x, z_eq, f"backend:{status}"


def _solve_scs(compiled, a_eq, b_eq, max_iters, verbose, tol, form):
    import scs

    # no pattern padding here: SCS handles cones by projection, so its KKT
    # system has no dense per-cone blocks and the raw sparsity is best
    nvar = compiled["q"].size
    neq = a_eq.shape[0]
    if form == "lmi":
        a_full = sp.csc_matrix(a_eq.T)
        b_full = compiled["q"].copy()
        cone = {"s": list(compiled["cone_dims"])}
        data = {"A": a_full, "b": b_full, "c": -b_eq}
    else:
        a_full = sp.vstack(
            [a_eq.tocsc(), -sp.identity(nvar, format="csc")]
        ).tocsc()
        b_full = np.concatenate([b_eq, np.zeros(nvar)])
        cone = {"z": neq, "s": list(compiled["cone_dims"])}
        data = {"A": a_full, "b": b_full, "c": compiled["q"]}
    solver = scs.SCS(
        data,
        cone,
        eps_abs=tol,
        eps_rel=tol,
        max_iters=max(max_iters, 20000) * 500,
        verbose=verbose,
    )
    out = solver.solve()
    status = out["info"]["status"]
    if form == "lmi":
        x = np.asarray(out["y"])
        z_eq = -np.asarray(out["x"])
        if "solved" in status.lower():
            return x, z_eq, "optimal"
        if "infeasible" in status.lower():
            return x, -z_eq, "infeasible"
        return x, z_eq, f"backend:{status}"
    x = np.asarray(out["x"])
    z_eq = np.asarray(out["y"])[:neq]
    if "solved" in status.lower():
        return x, z_eq, "optimal"
    if "infeasible" in status.lower():
        return x, z_eq, "infeasible"
    return x, z_eq, f"backend:{status}"


def _solve_cvxopt_lmi(compiled, a_eq, b_eq, max_iters, verbose, tol):
    """CVXOPT conelp on the transposed (LMI) form with a dense-Schur KKT.

    Sparse-direct interior-point backends degrade badly when componentwise
    coupling rows (no-signalling, block sums) tie many PSD blocks together:
    fill-reducing orderings merge the blocks into one huge dense clique.
    Here the KKT system is reduced per cone onto the multiplier space with
    dense BLAS-3 work, which is immune to the coupling pattern and keeps
    memory at O(multipliers^2) plus one d^2 x d^2 scratch block.
    """
    import cvxopt
    import cvxopt.solvers
    from scipy.linalg import cho_factor, cho_solve

    dims = list(compiled["cone_dims"])
    offsets = compiled["offsets"]
    lower = compiled["lower"]
    neq = a_eq.shape[0]
    q = compiled["q"]

    # per-cone svec <-> full column-major vectorisation (mutually inverse on
    # symmetric matrices: to_svec = sv @ full, to_full = sv.T @ svec)
    full_offsets = np.concatenate([[0], np.cumsum([d * d for d in dims])])
    nfull = int(full_offsets[-1])
    sv_maps = []
    for d in dims:
        rows_t, cols_t, scale = _svec_indices(d, lower)
        svec_d = rows_t.size
        off = rows_t != cols_t
        ii = np.concatenate([np.arange(svec_d), np.arange(svec_d)[off]])
        jj = np.concatenate([cols_t * d + rows_t, (rows_t * d + cols_t)[off]])
        vv = np.concatenate([np.where(off, scale / 2.0, 1.0), scale[off] / 2.0])
        sv_maps.append(sp.csr_matrix((vv, (ii, jj)), shape=(svec_d, d * d)))

    def to_full(vec_svec):
        out = np.empty(nfull)
        for k in range(len(dims)):
            out[full_offsets[k] : full_offsets[k + 1]] = (
                sv_maps[k].T @ vec_svec[offsets[k] : offsets[k + 1]]
            )
        return out

    def to_svec(vec_full):
        out = np.empty(offsets[-1])
        for k in range(len(dims)):
            out[offsets[k] : offsets[k + 1]] = (
                sv_maps[k] @ vec_full[full_offsets[k] : full_offsets[k + 1]]
            )
        return out

    # conelp data: min c.w  s.t.  G w + s = h,  s in PSD blocks,
    # with G = full-vectorised A^T and h = full-vectorised q
    to_full_mat = sp.block_diag([m.T for m in sv_maps], format="csr")
    g_sp = (to_full_mat @ a_eq.T).tocoo()
    G = cvxopt.spmatrix(
        g_sp.data.tolist(),
        g_sp.row.tolist(),
        g_sp.col.tolist(),
        (nfull, neq),
    )
    hh = cvxopt.matrix(to_full(q))
    cc_vec = cvxopt.matrix(-b_eq)

    # restriction of A to the rows touching each cone
    acsc = a_eq.tocsc()
    cone_rows, cone_mats = [], []
    for k in range(len(dims)):
        sub = acsc[:, offsets[k] : offsets[k + 1]].tocoo()
        rows_k = np.unique(sub.row)
        remap = np.zeros(neq, dtype=np.int64)
        remap[rows_k] = np.arange(rows_k.size)
        mat = sp.csr_matrix(
            (sub.data, (remap[sub.row], sub.col)),
            shape=(rows_k.size, offsets[k + 1] - offsets[k]),
        )
        cone_rows.append(rows_k)
        cone_mats.append(mat)
    # same restrictions in full (column-major matrix) coordinates, used to
    # assemble the Schur complement in Gram form
    cone_full = [cone_mats[k] @ sv_maps[k] for k in range(len(dims))]

    factor_count = [0]
    guard_scaling = [True]

    def kktsolver(W):
        factor_count[0] += 1
        if guard_scaling[0] and factor_count[0] > 5:
            worst = max(np.linalg.cond(np.asarray(r)) for r in W["r"])
            if worst * worst > 1e12:
                # scaling point past the numerically resolvable range: the
                # iterates are about to diverge, so bail out and restart up
                # to the last healthy iteration
                raise _ScalingBreakdown()
        qmats = [np.array(r) @ np.array(r).T for r in W["rti"]]
        rmats = [np.array(r) for r in W["r"]]
        # Schur complement on the multipliers: H = sum_k A_k KQ_k A_k^T with
        # KQ_k representing U -> Q_k U Q_k.  Assembled in Gram form
        # H_k = B_k B_k^T, B_k = A_k (rti x rti), so that H stays positive
        # semidefinite to rounding even when the scaling point is extreme
        rti_mats = [np.array(r) for r in W["rti"]]
        h_schur = np.zeros((neq, neq))
        for k, d in enumerate(dims):
            b_k = cone_full[k] @ np.kron(rti_mats[k], rti_mats[k])
            h_k = b_k @ b_k.T
            idx = cone_rows[k]
            h_schur[np.ix_(idx, idx)] += 0.5 * (h_k + h_k.T)
        base = max(float(np.max(np.abs(np.diag(h_schur)))), 1.0)
        jitter = 0.0
        for attempt in range(7):
            try:
                factor = cho_factor(
                    h_schur + jitter * np.eye(neq) if jitter else h_schur,
                    lower=True,
                    check_finite=False,
                )
                break
            except np.linalg.LinAlgError:
                jitter = base * 10.0 ** (-14 + 2 * attempt)
        else:  # pragma: no cover - pathological scaling
            raise NumericalFailure("KKT Schur complement not factorisable")

        def apply_q(vec_full):
            out = np.empty_like(vec_full)
            for k, d in enumerate(dims):
                fl = slice(full_offsets[k], full_offsets[k + 1])
                m = vec_full[fl].reshape(d, d, order="F")
                # cvxopt 's' vectors use 'L' storage: only the lower
                # triangle is guaranteed valid, so mirror it
                m = np.tril(m) + np.tril(m, -1).T
                out[fl] = (qmats[k] @ m @ qmats[k]).ravel(order="F")
            return out

        def scale_by_w(vec_full):
            out = np.empty_like(vec_full)
            for k, d in enumerate(dims):
                fl = slice(full_offsets[k], full_offsets[k + 1])
                m = vec_full[fl].reshape(d, d, order="F")
                out[fl] = (rmats[k].T @ m @ rmats[k]).ravel(order="F")
            return out

        def schur_solve(rhs):
            # refine against the unregularised matrix so the jitter added
            # for factorisability does not leak into the step
            ux = cho_solve(factor, rhs, check_finite=False)
            norm = max(float(np.linalg.norm(rhs)), 1.0)
            for _ in range(8):
                resid = rhs - h_schur @ ux
                if float(np.linalg.norm(resid)) <= 1e-12 * norm:
                    break
                ux = ux + cho_solve(factor, resid, check_finite=False)
            return ux

        def solve_kkt(x, y, z):
            bx = np.array(x).ravel()
            bz = np.array(z).ravel()
            rhs = bx + acsc @ to_svec(apply_q(bz))
            ux = schur_solve(rhs)
            uz = apply_q(to_full(acsc.T @ ux) - bz)
            x[:] = cvxopt.matrix(ux)
            z[:] = cvxopt.matrix(scale_by_w(uz))

        return solve_kkt

    saved = dict(cvxopt.solvers.options)
    try:
        cvxopt.solvers.options.update(
            {
                "show_progress": bool(verbose),
                "maxiters": int(max_iters),
                "abstol": tol,
                "reltol": tol,
                "feastol": max(tol, 1e-9),
                "refinement": 2,
            }
        )
        cone_spec = {"l": 0, "q": [], "s": [int(d) for d in dims]}

        def run(iters_cap):
            cvxopt.solvers.options["maxiters"] = int(iters_cap)
            factor_count[0] = 0
            return cvxopt.solvers.conelp(
                cc_vec, G, hh, dims=cone_spec, kktsolver=kktsolver
            )

        def iterate_score(s):
            # how far the returned iterate is from optimal primal/dual
            # feasibility in the original problem's coordinates
            if s["x"] is None or s["z"] is None:
                return np.inf
            xs = to_svec(np.asarray(s["z"]).ravel())
            ws = np.asarray(s["x"]).ravel()
            eq = np.linalg.norm(a_eq @ xs - b_eq) / (1.0 + np.linalg.norm(b_eq))
            obj = float(q @ xs)
            gap = abs(obj - float(b_eq @ ws)) / (1.0 + abs(obj))
            return eq + gap

        try:
            sol = run(max_iters)
        except (ArithmeticError, ValueError):
            # scaling breakdown once the iterates outrun the achievable
            # accuracy; rerun stopping just before the breakdown iteration so
            # the last healthy iterate is returned
            guard_scaling[0] = False
            sol = run(max(factor_count[0] - 4, 1))
        # conelp can also die internally (singular KKT) a few steps after the
        # scaling point degrades, handing back the corrupted final iterate
        # with status "unknown"; back off to just before the degradation and
        # keep whichever iterate is cleanest
        if sol["status"] not in ("optimal", "primal infeasible", "dual infeasible"):
            guard_scaling[0] = False
            best = sol
            best_score = iterate_score(sol)
            iters = int(sol.get("iterations", max_iters))
            for backoff in (3, 6):
                if best_score <= 100.0 * tol or iters - backoff < 2:
                    break
                retry = run(iters - backoff)
                score = iterate_score(retry)
                if score < best_score:
                    best, best_score = retry, score
            sol = best
    finally:
        cvxopt.solvers.options.clear()
        cvxopt.solvers.options.update(saved)

    status = sol["status"]
    if status == "dual infeasible" and sol["x"] is not None:
        return np.zeros(offsets[-1]), np.array(sol["x"]).ravel(), "infeasible"
    if sol["x"] is None or sol["z"] is None:
        return np.zeros(offsets[-1]), np.zeros(neq), f"backend:{status}"
    w = np.array(sol["x"]).ravel()
    z_full = np.array(sol["z"]).ravel()
    for k, d in enumerate(dims):
        fl = slice(full_offsets[k], full_offsets[k + 1])
        m = z_full[fl].reshape(d, d, order="F")
        z_full[fl] = (np.tril(m) + np.tril(m, -1).T).ravel(order="F")
    x_svec = to_svec(z_full)
    # candidate mapped back exactly like the other LMI backends; the caller's
    # independent residual checks decide whether "unknown" iterates pass
    return x_svec, -w, "optimal" if status in ("optimal", "unknown") else f"backend:{status}"
