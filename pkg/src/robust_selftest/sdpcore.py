"""SDP intermediate representation over (possibly complex) scalar variables.

A problem is a set of Hermitian-matrix-valued affine expressions required
to be positive semidefinite, scalar affine equalities and a real affine
objective to minimize. ``assemble`` turns it into a real conic program:
every complex variable becomes two real ones and every complex PSD block
goes through :func:`qmat.real_embed`.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Hashable, Mapping

import numpy as np
import scipy.sparse as sp

from . import qmat

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near_optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"

VarId = Hashable


class MalformedProblem(ValueError):
    pass


class MomentVariablePool:
    """Scalar variables by id. Real variables take real values; a fixed
    variable is substituted as a constant during assembly."""

    def __init__(self):
        self.real: dict[VarId, bool] = {}
        self.fixed: dict[VarId, complex] = {}
        self.unit_ids: list[VarId] = []

    def add(self, vid: VarId, real: bool = False) -> VarId:
        if vid in self.real:
            if self.real[vid] != real:
                raise MalformedProblem(f"variable {vid!r} redeclared with different reality")
        else:
            self.real[vid] = real
        return vid

    def fix(self, vid: VarId, value: complex) -> None:
        if vid not in self.real:
            raise KeyError(vid)
        value = complex(value)
        if self.real[vid] and abs(value.imag) > 1e-12:
            raise MalformedProblem(f"real variable {vid!r} fixed to complex value {value}")
        self.fixed[vid] = value

    def __contains__(self, vid) -> bool:
        return vid in self.real

    def __len__(self) -> int:
        return len(self.real)

    def free_ids(self) -> list:
        return [v for v in self.real if v not in self.fixed]


class LinearMatrixExpr:
    """``C + sum_k (z_k A_k  or  conj(z_k) A_k)`` with square complex matrices."""

    def __init__(self, size: int, constant=None):
        self.size = int(size)
        self.constant = (np.zeros((size, size), dtype=complex) if constant is None
                         else np.array(constant, dtype=complex))
        self.terms: dict[tuple, np.ndarray] = {}

    def add_term(self, vid: VarId, coeff, conj: bool = False) -> "LinearMatrixExpr":
        key = (vid, bool(conj))
        coeff = np.asarray(coeff, dtype=complex)
        if key in self.terms:
            self.terms[key] = self.terms[key] + coeff
        else:
            self.terms[key] = coeff.copy()
        return self

    def add_entry(self, vid: VarId, i: int, j: int, conj: bool = False, value: complex = 1.0):
        m = np.zeros((self.size, self.size), dtype=complex)
        m[i, j] = value
        return self.add_term(vid, m, conj)

    def map(self, f: Callable[[np.ndarray], np.ndarray]) -> "LinearMatrixExpr":
        """Apply a complex-linear map to the constant and every coefficient."""
        c = f(self.constant)
        out = LinearMatrixExpr(c.shape[0], c)
        for k, v in self.terms.items():
            out.terms[k] = np.asarray(f(v), dtype=complex)
        return out

    def kron(self, b) -> "LinearMatrixExpr":
        b = np.asarray(b, dtype=complex)
        return self.map(lambda a: np.kron(a, b))

    def __mul__(self, s) -> "LinearMatrixExpr":
        return self.map(lambda a: a * s)

    __rmul__ = __mul__

    def __add__(self, other) -> "LinearMatrixExpr":
        if isinstance(other, LinearMatrixExpr):
            if other.size != self.size:
                raise MalformedProblem("size mismatch in matrix expression")
            out = self.map(lambda a: a)
            out.constant = out.constant + other.constant
            for (vid, conj), v in other.terms.items():
                out.add_term(vid, v, conj)
            return out
        out = self.map(lambda a: a)
        out.constant = out.constant + np.asarray(other, dtype=complex)
        return out

    def __neg__(self) -> "LinearMatrixExpr":
        return self * -1.0

    def __sub__(self, other) -> "LinearMatrixExpr":
        return self + (-other if isinstance(other, LinearMatrixExpr) else -np.asarray(other))

    def evaluate(self, assignment: Mapping) -> np.ndarray:
        out = self.constant.copy()
        for (vid, conj), coeff in self.terms.items():
            z = complex(assignment[vid])
            out += coeff * (np.conj(z) if conj else z)
        return out

    def variables(self) -> set:
        return {vid for vid, _ in self.terms}


class ScalarExpr:
    """Complex affine scalar ``c + sum_k a_k z_k (or a_k conj(z_k))``."""

    def __init__(self, constant: complex = 0.0, terms: Mapping | None = None):
        self.constant = complex(constant)
        self.terms: dict[tuple, complex] = {}
        for k, v in (terms or {}).items():
            self.terms[k] = complex(v)

    def add(self, vid: VarId, coeff: complex = 1.0, conj: bool = False) -> "ScalarExpr":
        key = (vid, bool(conj))
        self.terms[key] = self.terms.get(key, 0.0) + complex(coeff)
        return self

    @classmethod
    def var(cls, vid: VarId, coeff: complex = 1.0, conj: bool = False) -> "ScalarExpr":
        return cls().add(vid, coeff, conj)

    def __add__(self, other) -> "ScalarExpr":
        out = ScalarExpr(self.constant, self.terms)
        if isinstance(other, ScalarExpr):
            out.constant += other.constant
            for (vid, conj), c in other.terms.items():
                out.add(vid, c, conj)
        else:
            out.constant += complex(other)
        return out

    __radd__ = __add__

    def __mul__(self, s) -> "ScalarExpr":
        s = complex(s)
        return ScalarExpr(self.constant * s, {k: v * s for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def __sub__(self, other):
        return self + (-other if isinstance(other, ScalarExpr) else -complex(other))

    def evaluate(self, assignment: Mapping) -> complex:
        v = self.constant
        for (vid, conj), c in self.terms.items():
            z = complex(assignment[vid])
            v += c * (np.conj(z) if conj else z)
        return complex(v)

    def real_part(self) -> "ScalarExpr":
        """Re(expr) written as an expression in the same variables."""
        out = ScalarExpr(self.constant.real)
        for (vid, conj), c in self.terms.items():
            out.add(vid, c / 2, conj)
            out.add(vid, np.conj(c) / 2, not conj)
        return out

    def imag_part(self) -> "ScalarExpr":
        out = ScalarExpr(self.constant.imag)
        for (vid, conj), c in self.terms.items():
            out.add(vid, c / 2j, conj)
            out.add(vid, -np.conj(c) / 2j, not conj)
        return out


@dataclass
class SdpProblem:
    """Minimize ``objective`` subject to every ``psd`` expression being
    positive semidefinite and every ``equalities`` expression vanishing."""

    pool: MomentVariablePool
    psd: list = field(default_factory=list)
    equalities: list = field(default_factory=list)
    objective: ScalarExpr = field(default_factory=ScalarExpr)
    meta: dict = field(default_factory=dict)
    psd_names: list = field(default_factory=list)

    def add_psd(self, expr: LinearMatrixExpr, name: str = "") -> None:
        self.psd.append(expr)
        self.psd_names.append(name or f"block{len(self.psd) - 1}")

    def add_equality(self, expr: ScalarExpr) -> None:
        self.equalities.append(expr)

    def validate(self) -> None:
        for e in self.psd:
            for vid in e.variables():
                if vid not in self.pool:
                    raise MalformedProblem(f"unknown variable {vid!r} in PSD constraint")
        for e in self.equalities + [self.objective]:
            for vid, _ in e.terms:
                if vid not in self.pool:
                    raise MalformedProblem(f"unknown variable {vid!r}")

    def scaled(self, factor: float) -> "SdpProblem":
        """Copy with the objective multiplied by ``factor``."""
        return SdpProblem(self.pool, list(self.psd), list(self.equalities), self.objective * factor,
                          dict(self.meta), list(self.psd_names))


@dataclass
class SolveSettings:
    tol: float = 1e-8
    max_iter: int = 200
    solver: str = "clarabel"
    verbose: bool = False
    # backend asked for a second opinion when the first one breaks down; only
    # an infeasibility certificate from it is adopted
    infeasibility_check: str | None = "scs"


@dataclass
class SolveReport:
    status: str
    objective: float
    primal_residual: float
    dual_residual: float
    assignment: dict
    solve_seconds: float = 0.0
    solver_status: str = ""
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status in (OPTIMAL, NEAR_OPTIMAL)


# --------------------------------------------------------------------------
# assembly


@dataclass
class ConicBlock:
    """Real symmetric block ``F0 + sum_k x_k F[k]`` required PSD."""

    name: str
    f0: np.ndarray
    coeffs: np.ndarray  # (n_vars, n, n)
    embedded: bool

    @property
    def dim(self) -> int:
        return self.f0.shape[0]


@dataclass
class ConicProgram:
    """Minimize ``c @ x + c0`` s.t. ``A x = b`` and every block PSD."""

    var_index: list
    c: np.ndarray
    c0: float
    a_eq: np.ndarray
    b_eq: np.ndarray
    blocks: list
    inconsistent: bool = False

    @property
    def n_vars(self) -> int:
        return len(self.var_index)

    def evaluate_objective(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.c0)

    def block_values(self, x: np.ndarray) -> list:
        return [b.f0 + np.tensordot(x, b.coeffs, axes=1) for b in self.blocks]

    def to_vector(self, assignment: Mapping) -> np.ndarray:
        x = np.zeros(self.n_vars)
        for k, (vid, part) in enumerate(self.var_index):
            z = complex(assignment[vid])
            x[k] = z.real if part == "re" else z.imag
        return x

    def to_assignment(self, x: np.ndarray, pool: MomentVariablePool) -> dict:
        out: dict = {vid: complex(v) for vid, v in pool.fixed.items()}
        for k, (vid, part) in enumerate(self.var_index):
            out[vid] = out.get(vid, 0j) + (x[k] if part == "re" else 1j * x[k])
        for vid in pool.real:
            out.setdefault(vid, 0j)
        return out


def _herm_scale(m: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0


def _split_matrix_terms(expr: LinearMatrixExpr, pool: MomentVariablePool, index: dict):
    """Constant and per-real-variable Hermitian coefficient matrices."""
    const = expr.constant.copy()
    coeffs: dict[int, np.ndarray] = {}
    by_var: dict = {}
    for (vid, conj), m in expr.terms.items():
        slot = by_var.setdefault(vid, [0, 0])
        slot[1 if conj else 0] = slot[1 if conj else 0] + m
    for vid, (m_plain, m_conj) in by_var.items():
        if vid in pool.fixed:
            z = pool.fixed[vid]
            const = const + z * m_plain + np.conj(z) * m_conj
            continue
        h_re = m_plain + m_conj
        h_im = 1j * (m_plain - m_conj)
        parts = [("re", h_re)] if pool.real[vid] else [("re", h_re), ("im", h_im)]
        for part, h in parts:
            h = np.asarray(h, dtype=complex) if not np.isscalar(h) else np.zeros_like(const)
            if not qmat.is_hermitian(h, 1e-12 * _herm_scale(h)):
                raise MalformedProblem(f"non-Hermitian coefficient placement for variable {vid!r}")
            k = index[(vid, part)]
            coeffs[k] = coeffs.get(k, 0) + h
    if not qmat.is_hermitian(const, 1e-12 * _herm_scale(const)):
        raise MalformedProblem("constant part of PSD constraint is not Hermitian")
    return const, coeffs


def _split_scalar(expr: ScalarExpr, pool: MomentVariablePool, index: dict, n: int):
    """Real and imaginary parts as (row, constant) over the real variables."""
    re_row = np.zeros(n)
    im_row = np.zeros(n)
    const = expr.constant
    for (vid, conj), c in expr.terms.items():
        if vid in pool.fixed:
            z = pool.fixed[vid]
            const += c * (np.conj(z) if conj else z)
            continue
        # c z = c u + i c v ; c conj(z) = c u - i c v
        cu = c
        cv = (-1j * c) if conj else (1j * c)
        k = index[(vid, "re")]
        re_row[k] += cu.real
        im_row[k] += cu.imag
        if not pool.real[vid]:
            k = index[(vid, "im")]
            re_row[k] += cv.real
            im_row[k] += cv.imag
    return (re_row, const.real), (im_row, const.imag)


def _reduce_equalities(a: np.ndarray, b: np.ndarray, tol: float = 1e-9):
    """Independent rows spanning the same affine set; flags inconsistency."""
    if a.shape[0] == 0:
        return a, b, False
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    scale = max(1.0, s[0] if s.size else 0.0)
    r = int(np.sum(s > tol * scale))
    b_proj = u[:, :r] @ (u[:, :r].T @ b)
    inconsistent = bool(np.linalg.norm(b - b_proj) > 1e-7 * max(1.0, np.linalg.norm(b)))
    return s[:r, None] * vt[:r], u[:, :r].T @ b, inconsistent


def assemble(problem: SdpProblem, reduce: bool = True) -> ConicProgram:
    """Real conic form of ``problem``."""
    problem.validate()
    pool = problem.pool
    var_index = []
    for vid in pool.free_ids():
        var_index.append((vid, "re"))
        if not pool.real[vid]:
            var_index.append((vid, "im"))
    index = {v: k for k, v in enumerate(var_index)}
    n = len(var_index)

    blocks = []
    for name, expr in zip(problem.psd_names, problem.psd):
        const, coeffs = _split_matrix_terms(expr, pool, index)
        is_real = np.all(np.abs(const.imag) == 0) and all(np.all(np.abs(h.imag) == 0) for h in coeffs.values())
        if is_real:
            f0 = ((const + const.conj().T) / 2).real
            size = expr.size
            emb = lambda h: ((h + h.conj().T) / 2).real  # noqa: E731
        else:
            f0 = qmat.real_embed_any((const + const.conj().T) / 2)
            size = 2 * expr.size
            emb = lambda h: qmat.real_embed_any((h + h.conj().T) / 2)  # noqa: E731
        f = np.zeros((n, size, size))
        for k, h in coeffs.items():
            f[k] = emb(h)
        blocks.append(ConicBlock(name, f0, f, not is_real))

    rows, rhs = [], []
    for eq in problem.equalities:
        for row, const in _split_scalar(eq, pool, index, n):
            if np.all(row == 0) and abs(const) <= 1e-12:
                continue
            rows.append(row)
            rhs.append(-const)
    a_eq = np.array(rows).reshape(len(rows), n)
    b_eq = np.array(rhs, dtype=float)
    inconsistent = False
    if reduce:
        a_eq, b_eq, inconsistent = _reduce_equalities(a_eq, b_eq)

    (c_re, c0), (c_im, c0_im) = _split_scalar(problem.objective, pool, index, n)
    if np.max(np.abs(c_im), initial=0.0) > 1e-12 or abs(c0_im) > 1e-12:
        raise MalformedProblem("objective is not real-valued")
    return ConicProgram(var_index, c_re, float(c0), a_eq, b_eq, blocks, inconsistent)


# --------------------------------------------------------------------------
# backends


def _svec_upper_colmajor(n: int):
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def _svec_lower_colmajor(n: int):
    rows, cols = [], []
    for j in range(n):
        for i in range(j, n):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def _stacked_cone_data(prog: ConicProgram, order: Callable):
    """(A, b) for ``A x + s = b`` with the zero cone first, then each PSD block
    in scaled triangular vectorization."""
    a_parts = [sp.csc_matrix(prog.a_eq)]
    b_parts = [prog.b_eq]
    sq2 = np.sqrt(2.0)
    for blk in prog.blocks:
        r, c = order(blk.dim)
        scale = np.where(r == c, 1.0, sq2)
        b_parts.append(blk.f0[r, c] * scale)
        a_parts.append(sp.csc_matrix(-(blk.coeffs[:, r, c] * scale).T))
    a = sp.vstack(a_parts, format="csc") if a_parts else sp.csc_matrix((0, prog.n_vars))
    return a, np.concatenate(b_parts)


def _solve_clarabel(prog: ConicProgram, settings: SolveSettings):
    import clarabel

    a, b = _stacked_cone_data(prog, _svec_upper_colmajor)
    cones = []
    if prog.a_eq.shape[0]:
        cones.append(clarabel.ZeroConeT(prog.a_eq.shape[0]))
    cones += [clarabel.PSDTriangleConeT(blk.dim) for blk in prog.blocks]
    opts = clarabel.DefaultSettings()
    opts.verbose = settings.verbose
    opts.max_iter = settings.max_iter
    opts.tol_gap_abs = settings.tol
    opts.tol_gap_rel = settings.tol
    opts.tol_feas = settings.tol
    opts.tol_ktratio = min(1e-6, settings.tol * 100)
    opts.presolve_enable = False
    opts.chordal_decomposition_enable = False
    p = sp.csc_matrix((prog.n_vars, prog.n_vars))
    solver = clarabel.DefaultSolver(p, prog.c, a, b, cones, opts)
    sol = solver.solve()
    name = str(sol.status)
    status = {
        "Solved": OPTIMAL,
        "AlmostSolved": NEAR_OPTIMAL,
        "PrimalInfeasible": INFEASIBLE,
        "AlmostPrimalInfeasible": INFEASIBLE,
    }.get(name, NUMERICAL_FAILURE)
    dual_res = float(sol.r_dual)
    return status, np.array(sol.x), name, int(sol.iterations), dual_res


def _solve_scs(prog: ConicProgram, settings: SolveSettings):
    import scs

    a, b = _stacked_cone_data(prog, _svec_lower_colmajor)
    data = {"A": a, "b": b, "c": prog.c}
    cone = {"z": int(prog.a_eq.shape[0]), "s": [blk.dim for blk in prog.blocks]}
    solver = scs.SCS(data, cone, eps_abs=settings.tol, eps_rel=settings.tol,
                     max_iters=max(settings.max_iter, 100_000), verbose=settings.verbose)
    sol = solver.solve()
    name = sol["info"]["status"]
    status = {"solved": OPTIMAL, "solved_inaccurate": NEAR_OPTIMAL,
              "infeasible": INFEASIBLE, "infeasible_inaccurate": INFEASIBLE}.get(name, NUMERICAL_FAILURE)
    return status, np.array(sol["x"]), name, int(sol["info"]["iter"]), float(sol["info"]["res_dual"])


BACKENDS: dict[str, Callable] = {"clarabel": _solve_clarabel, "scs": _solve_scs}


def evaluate_residuals(problem: SdpProblem, assignment: Mapping) -> tuple[float, float]:
    """(worst negative eigenvalue over PSD blocks, worst equality violation)."""
    psd_res = 0.0
    for e in problem.psd:
        m = e.evaluate(assignment)
        lam = np.linalg.eigvalsh((m + m.conj().T) / 2)[0]
        psd_res = max(psd_res, -float(lam))
    eq_res = max((abs(e.evaluate(assignment)) for e in problem.equalities), default=0.0)
    return psd_res, float(eq_res)


def _second_opinion(prog: ConicProgram, settings: SolveSettings) -> str | None:
    """Backend status name if the check backend certifies infeasibility."""
    check = SolveSettings(tol=max(settings.tol, 1e-7), max_iter=settings.max_iter,
                          solver=settings.infeasibility_check, infeasibility_check=None)
    try:
        status, _, name, _, _ = BACKENDS[check.solver](prog, check)
    except Exception as exc:  # a missing or broken check backend changes nothing
        log.warning("infeasibility check failed: %s", exc)
        return None
    return name if status == INFEASIBLE else None


def solve(problem: SdpProblem, settings: SolveSettings | None = None) -> SolveReport:
    settings = settings or SolveSettings()
    t0 = time.perf_counter()
    prog = assemble(problem)
    if prog.inconsistent:
        return SolveReport(INFEASIBLE, math.nan, math.inf, math.nan, {}, time.perf_counter() - t0,
                           "inconsistent equalities")
    if prog.n_vars == 0:
        x = np.zeros(0)
        assignment = prog.to_assignment(x, problem.pool)
        feasible = all(qmat.min_eigenvalue((v + v.T) / 2) >= -settings.tol for v in prog.block_values(x))
        status = OPTIMAL if feasible else INFEASIBLE
        return SolveReport(status, prog.c0, 0.0, 0.0, assignment, time.perf_counter() - t0, "trivial")
    try:
        backend = BACKENDS[settings.solver]
    except KeyError:
        raise ValueError(f"unknown solver {settings.solver!r}; choose from {sorted(BACKENDS)}") from None
    try:
        status, x, name, iters, dual_res = backend(prog, settings)
    except Exception as exc:  # backend breakdown
        log.warning("solver failure: %s", exc)
        return SolveReport(NUMERICAL_FAILURE, math.nan, math.nan, math.nan, {}, time.perf_counter() - t0,
                           repr(exc))
    if status in (OPTIMAL, NEAR_OPTIMAL) and not np.all(np.isfinite(x)):
        status = NUMERICAL_FAILURE
    if status == NUMERICAL_FAILURE and settings.infeasibility_check not in (None, settings.solver):
        second = _second_opinion(prog, settings)
        if second is not None:
            name = f"{name}; {settings.infeasibility_check}: {second}"
            status = INFEASIBLE
    assignment = prog.to_assignment(x, problem.pool) if status != INFEASIBLE else {}
    if assignment:
        psd_res, eq_res = evaluate_residuals(problem, assignment)
        primal_res = max(psd_res, eq_res)
        obj = float(problem.objective.evaluate(assignment).real)
    else:
        primal_res, obj = math.nan, math.nan
    return SolveReport(status, obj, primal_res, dual_res, assignment, time.perf_counter() - t0, name, iters)


def verify(report: SolveReport, problem: SdpProblem, tol: float) -> bool:
    """True iff the report's assignment satisfies every constraint within ``tol``."""
    if math.isinf(tol):
        return True
    if not report.assignment:
        return False
    try:
        psd_res, eq_res = evaluate_residuals(problem, report.assignment)
    except KeyError:
        return False
    for vid, v in problem.pool.fixed.items():
        if abs(complex(report.assignment.get(vid, np.nan)) - v) > tol:
            return False
    return psd_res <= tol and eq_res <= tol


# --------------------------------------------------------------------------
# SDPA sparse export


def _fmt(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return format(v, ".17g")


def export_sdpa(problem: SdpProblem, destination) -> Path:
    """Write the assembled problem in SDPA sparse format (``.dat-s``).

    SDPA's primal is ``min c.x  s.t.  sum_i x_i F_i - F_0 >= 0``. PSD blocks
    map directly (``F_0 = -constant``); every equality ``a.x = b`` becomes a
    pair of entries in one trailing diagonal (LP) block.
    """
    prog = assemble(problem)
    dest = Path(destination)
    n = prog.n_vars
    n_eq = prog.a_eq.shape[0]
    struct = [blk.dim for blk in prog.blocks]
    if n_eq:
        struct.append(-2 * n_eq)
    lines = [f'"robust_selftest export: objective offset {_fmt(prog.c0)}', str(n), str(len(struct)),
             " ".join(str(s) for s in struct), " ".join(_fmt(v) for v in prog.c)]
    entries = []
    for bno, blk in enumerate(prog.blocks, start=1):
        mats = [-blk.f0] + [blk.coeffs[k] for k in range(n)]
        for mno, m in enumerate(mats):
            ii, jj = np.nonzero(np.triu(np.abs(m) > 0))
            for i, j in zip(ii, jj):
                entries.append((mno, bno, i + 1, j + 1, m[i, j]))
    if n_eq:
        bno = len(prog.blocks) + 1
        for r in range(n_eq):
            # a.x - b >= 0 and -(a.x - b) >= 0
            for sign, pos in ((1.0, 2 * r + 1), (-1.0, 2 * r + 2)):
                if prog.b_eq[r] != 0:
                    entries.append((0, bno, pos, pos, sign * prog.b_eq[r]))
                for k in np.nonzero(prog.a_eq[r])[0]:
                    entries.append((k + 1, bno, pos, pos, sign * prog.a_eq[r, k]))
    entries.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
    lines += [f"{m} {b} {i} {j} {_fmt(v)}" for m, b, i, j, v in entries]
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text("\n".join(lines) + "\n")
    return dest
