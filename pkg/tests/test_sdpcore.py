import math
import re
from pathlib import Path

import numpy as np
import pytest

from robust_selftest import qmat
from robust_selftest import sdpcore as sc
from robust_selftest.scenarios import ObservedData, bb84_assemblage, build_assemblage_bound
from robust_selftest.scenarios.oracle import choi_problem, dual_problem

from conftest import random_hermitian

DATA = Path(__file__).parent / "data"


# ---------------------------------------------------------------- toy problems

def scalar_problem(lower=None, upper=None):
    """minimize x subject to x >= lower and x <= upper, as 1x1 PSD blocks."""
    pool = sc.MomentVariablePool()
    pool.add("x", real=True)
    prob = sc.SdpProblem(pool)
    if lower is not None:
        prob.add_psd(sc.LinearMatrixExpr(1, [[-lower]]).add_entry("x", 0, 0), "x - lower")
    if upper is not None:
        prob.add_psd(sc.LinearMatrixExpr(1, [[upper]]).add_term("x", [[-1.0]]), "upper - x")
    prob.objective = sc.ScalarExpr.var("x")
    return prob


def eigen_problem(m):
    """minimize y subject to y*1 - m >= 0; the optimum is lambda_max(m)."""
    pool = sc.MomentVariablePool()
    pool.add("y", real=True)
    prob = sc.SdpProblem(pool)
    d = m.shape[0]
    prob.add_psd(sc.LinearMatrixExpr(d, -m).add_term("y", np.eye(d)))
    prob.objective = sc.ScalarExpr.var("y")
    return prob


def complex_equality_problem(rng):
    """A Hermitian 3x3 matrix W >= 0 with a pinned complex entry and trace;
    minimize tr(C W) for random Hermitian C."""
    pool = sc.MomentVariablePool()
    w = sc.LinearMatrixExpr(3)
    for p in range(3):
        for q in range(p, 3):
            pool.add(("w", p, q), real=p == q)
            w.add_entry(("w", p, q), p, q)
            if p != q:
                w.add_entry(("w", p, q), q, p, conj=True)
    prob = sc.SdpProblem(pool)
    prob.add_psd(w, "W")
    prob.add_equality(sc.ScalarExpr(-1.0, {(("w", p, p), False): 1.0 for p in range(3)}))
    prob.add_equality(sc.ScalarExpr(-(0.1 + 0.05j)).add(("w", 0, 1)))
    c = random_hermitian(3, rng)
    obj = sc.ScalarExpr()
    for p in range(3):
        for q in range(3):
            vid, conj = (("w", p, q), False) if p <= q else (("w", q, p), True)
            obj.add(vid, c[q, p], conj)
    prob.objective = obj
    return prob, c


def test_min_x_over_psd_cone_is_zero():
    rep = sc.solve(scalar_problem(lower=0.0))
    assert rep.ok and abs(rep.objective) < 1e-7


def test_eigenvalue_dominance():
    rep = sc.solve(eigen_problem(qmat.Z))
    assert rep.status == sc.OPTIMAL
    assert abs(rep.objective - 1) < 1e-7


def test_complex_block_eigenvalue(rng):
    m = random_hermitian(4, rng)
    rep = sc.solve(eigen_problem(m))
    assert abs(rep.objective - np.linalg.eigvalsh(m)[-1]) < 1e-7


def test_commuting_rank_one_fidelity_dual():
    p = np.array([0.7, 0.3])
    q = np.array([0.2, 0.8])
    k = np.kron(np.diag(p), np.diag(q).T)
    rep = sc.solve(dual_problem(k, 2))
    # Y (x) 1 >= diag(p_i q_j) decouples per i: y_i >= p_i max_j q_j
    assert abs(rep.objective - np.sum(p * q.max())) < 1e-7


def test_dual_equals_largest_eigenvalue_sum_for_block_diagonal(rng):
    # K = |0><0| (x) A + |1><1| (x) B: the dual optimum is lambda_max(A) + lambda_max(B)
    a, b = random_hermitian(2, rng), random_hermitian(2, rng)
    k = np.kron(np.diag([1, 0]), a) + np.kron(np.diag([0, 1]), b)
    rep = sc.solve(dual_problem(k, 2))
    assert abs(rep.objective - (np.linalg.eigvalsh(a)[-1] + np.linalg.eigvalsh(b)[-1])) < 1e-6


def test_infeasible_toy():
    rep = sc.solve(scalar_problem(lower=1.0, upper=0.0))
    assert rep.status == sc.INFEASIBLE
    assert not rep.ok and math.isnan(rep.objective)


def test_inconsistent_equalities_are_infeasible():
    prob = scalar_problem(lower=0.0)
    prob.add_equality(sc.ScalarExpr(-1.0).add("x"))
    prob.add_equality(sc.ScalarExpr(-2.0).add("x"))
    assert sc.solve(prob).status == sc.INFEASIBLE


def test_both_backends_agree(rng):
    prob, _ = complex_equality_problem(rng)
    a = sc.solve(prob, sc.SolveSettings(solver="clarabel"))
    b = sc.solve(prob, sc.SolveSettings(solver="scs", tol=1e-9))
    assert a.ok and b.ok
    assert abs(a.objective - b.objective) < 1e-5


def test_complex_problem_against_cvxpy(rng):
    cp = pytest.importorskip("cvxpy")
    prob, c = complex_equality_problem(rng)
    rep = sc.solve(prob)
    w = cp.Variable((3, 3), hermitian=True)
    cons = [w >> 0, cp.real(cp.trace(w)) == 1, w[0, 1] == 0.1 + 0.05j]
    ref = cp.Problem(cp.Minimize(cp.real(cp.trace(c @ w))), cons)
    ref.solve(solver=cp.CLARABEL)
    assert abs(rep.objective - ref.value) < 1e-6


def test_unknown_backend():
    with pytest.raises(ValueError):
        sc.solve(scalar_problem(lower=0.0), sc.SolveSettings(solver="nope"))


def test_second_opinion_certifies_infeasibility(monkeypatch):
    def broken(prog, settings):
        return sc.NUMERICAL_FAILURE, np.full(prog.n_vars, np.nan), "Stalled", 0, math.nan

    monkeypatch.setitem(sc.BACKENDS, "clarabel", broken)
    rep = sc.solve(scalar_problem(lower=1.0, upper=0.0))
    assert rep.status == sc.INFEASIBLE and "scs" in rep.solver_status
    # feasible problems keep the failure: only certificates are adopted
    assert sc.solve(scalar_problem(lower=0.0)).status == sc.NUMERICAL_FAILURE
    off = sc.SolveSettings(infeasibility_check=None)
    assert sc.solve(scalar_problem(lower=1.0, upper=0.0), off).status == sc.NUMERICAL_FAILURE


# ---------------------------------------------------------------- malformed input

def test_non_hermitian_placement_is_rejected():
    pool = sc.MomentVariablePool()
    pool.add("z", real=False)
    prob = sc.SdpProblem(pool)
    prob.add_psd(sc.LinearMatrixExpr(2).add_entry("z", 0, 1))  # missing the conjugate entry
    with pytest.raises(sc.MalformedProblem):
        sc.assemble(prob)


def test_unknown_variable_is_rejected():
    prob = scalar_problem(lower=0.0)
    prob.add_equality(sc.ScalarExpr.var("ghost"))
    with pytest.raises(sc.MalformedProblem):
        sc.assemble(prob)


def test_real_variable_cannot_be_fixed_to_complex():
    pool = sc.MomentVariablePool()
    pool.add("x", real=True)
    with pytest.raises(sc.MalformedProblem):
        pool.fix("x", 1j)
    with pytest.raises(sc.MalformedProblem):
        pool.add("x", real=False)


# ---------------------------------------------------------------- verify

def test_verify_examples():
    prob = eigen_problem(qmat.Z)
    rep = sc.solve(prob)
    assert sc.verify(rep, prob, 1e-6)
    bad = sc.SolveReport(rep.status, rep.objective, 0, 0, {"y": rep.assignment["y"] - 1e-3})
    assert not sc.verify(bad, prob, 1e-6)
    assert sc.verify(bad, prob, math.inf)
    assert not sc.verify(sc.SolveReport(sc.INFEASIBLE, math.nan, 0, 0, {}), prob, 1e-6)


def test_verify_checks_equalities(rng):
    prob, _ = complex_equality_problem(rng)
    rep = sc.solve(prob)
    assert sc.verify(rep, prob, 1e-6)
    moved = dict(rep.assignment)
    moved[("w", 0, 1)] += 1e-3j
    assert not sc.verify(sc.SolveReport(rep.status, rep.objective, 0, 0, moved), prob, 1e-6)


# ---------------------------------------------------------------- properties

def test_weak_duality_against_feasible_points(rng):
    for _ in range(5):
        rho = qmat.random_density_matrix(2, rng)
        ref = qmat.random_density_matrix(2, rng)
        k = np.kron(rho, ref.T)
        prob = dual_problem(k, 2)
        rep = sc.solve(prob)
        assert rep.ok
        for _ in range(5):
            g = random_hermitian(2, rng)
            y = np.linalg.eigvalsh(k)[-1] * np.eye(2) + g @ g
            assignment = {("Y", p, q): y[p, q] for p in range(2) for q in range(p, 2)}
            report = sc.SolveReport(sc.OPTIMAL, 0, 0, 0, assignment)
            assert sc.verify(report, prob, 1e-9)
            assert rep.objective <= prob.objective.evaluate(assignment).real + 1e-7


@pytest.mark.parametrize("factor", [0.5, 2.0])
def test_objective_scaling_covariance(rng, factor):
    k = np.kron(qmat.random_density_matrix(2, rng), qmat.random_density_matrix(2, rng).T)
    prob = dual_problem(k, 2)
    base = sc.solve(prob).objective
    assert abs(sc.solve(prob.scaled(factor)).objective - factor * base) < 1e-6 * max(1, factor)


def random_assignment(pool, rng):
    out = {}
    for vid, real in pool.real.items():
        if vid in pool.fixed:
            out[vid] = pool.fixed[vid]
        else:
            out[vid] = complex(rng.standard_normal(), 0 if real else rng.standard_normal())
    return out


@pytest.mark.parametrize("builder", ["chsh", "choi"])
def test_assemble_evaluate_commute(rng, builder):
    if builder == "chsh":
        prob = build_assemblage_bound(bb84_assemblage(), ObservedData.from_functional("chsh", 2.5), level=2)
    else:
        prob = choi_problem(np.kron(qmat.random_density_matrix(2, rng), random_hermitian(2, rng).T), 2)
    prog = sc.assemble(prob, reduce=False)
    for _ in range(100):
        a = random_assignment(prob.pool, rng)
        x = prog.to_vector(a)
        assert abs(prog.evaluate_objective(x) - prob.objective.evaluate(a).real) < 1e-12
        for blk, expr, val in zip(prog.blocks, prob.psd, prog.block_values(x)):
            m = expr.evaluate(a)
            direct = qmat.real_embed_any(m) if blk.embedded else m.real
            assert np.max(np.abs(val - direct)) < 1e-12
        eq_direct = []
        for e in prob.equalities:
            z = e.evaluate(a)
            eq_direct += [z.real, z.imag]
        resid = prog.a_eq @ x - prog.b_eq
        # rows that vanish identically are dropped during assembly
        nonzero = [v for v in eq_direct if abs(v) > 0]
        assert np.allclose(np.sort(np.abs(resid)), np.sort(np.abs(nonzero))[-len(resid):] if len(resid) else [],
                           atol=1e-12)
        assert prog.to_assignment(x, prob.pool).keys() >= set(prob.pool.free_ids())


def test_reduced_equalities_describe_same_set(rng):
    prob = build_assemblage_bound(bb84_assemblage(), ObservedData.from_functional("chsh", 2.5), level=2)
    full = sc.assemble(prob, reduce=False)
    red = sc.assemble(prob, reduce=True)
    assert red.a_eq.shape[0] == np.linalg.matrix_rank(full.a_eq)
    x = np.linalg.lstsq(full.a_eq, full.b_eq, rcond=None)[0]
    assert np.allclose(red.a_eq @ x, red.b_eq, atol=1e-10)
    null = np.linalg.svd(full.a_eq)[2][red.a_eq.shape[0]:]
    assert np.allclose(red.a_eq @ null.T, 0, atol=1e-10)


def test_real_blocks_are_not_embedded(rng):
    prog = sc.assemble(eigen_problem(qmat.Z))
    assert not prog.blocks[0].embedded and prog.blocks[0].dim == 2
    prog = sc.assemble(eigen_problem(random_hermitian(2, rng)))
    assert prog.blocks[0].embedded and prog.blocks[0].dim == 4


# ---------------------------------------------------------------- SDPA export

def read_sdpa(path):
    """Minimal independent SDPA-sparse reader: (offset, c, blocks, F) with
    F[b][k] the dense matrix of constraint k (k = 0 is F_0) in block b."""
    text = Path(path).read_text().splitlines()
    offset = 0.0
    body = []
    for line in text:
        if line.startswith('"') or line.startswith("*"):
            m = re.search(r"objective offset\s+(\S+)", line)
            if m:
                offset = float(m.group(1))
            continue
        body.append(line)
    m = int(body[0].split()[0])
    nblocks = int(body[1].split()[0])
    sizes = [int(s) for s in re.split(r"[\s,{}()]+", body[2].strip()) if s] if nblocks else []
    c = np.array([float(v) for v in re.split(r"[\s,{}()]+", body[3].strip()) if v])
    mats = [[np.zeros((abs(s), abs(s))) for _ in range(m + 1)] for s in sizes]
    for line in body[4:]:
        if not line.strip():
            continue
        k, b, i, j, v = line.split()
        k, b, i, j = int(k), int(b) - 1, int(i) - 1, int(j) - 1
        mats[b][k][i, j] = float(v)
        mats[b][k][j, i] = float(v)
    return offset, c, sizes, mats


def solve_sdpa_with_cvxpy(path):
    cp = pytest.importorskip("cvxpy")
    offset, c, sizes, mats = read_sdpa(path)
    x = cp.Variable(len(c))
    cons = []
    for size, fs in zip(sizes, mats):
        expr = -fs[0] + sum(x[k] * fs[k + 1] for k in range(len(c)))
        if size > 0:
            cons.append((expr + expr.T) / 2 >> 0)
        else:
            cons.append(cp.diag(expr) >= 0)
    prob = cp.Problem(cp.Minimize(c @ x + offset), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.value


def test_sdpa_golden_min_x(tmp_path):
    out = sc.export_sdpa(scalar_problem(lower=1.0), tmp_path / "toy.dat-s")
    assert out.read_bytes() == (DATA / "min_x_ge_1.dat-s").read_bytes()


def test_sdpa_golden_header_only(tmp_path):
    pool = sc.MomentVariablePool()
    pool.add("x", real=True)
    prob = sc.SdpProblem(pool, objective=sc.ScalarExpr(2.5).add("x"))
    out = sc.export_sdpa(prob, tmp_path / "empty.dat-s")
    assert out.read_bytes() == (DATA / "unconstrained.dat-s").read_bytes()
    offset, c, sizes, _ = read_sdpa(out)
    assert offset == 2.5 and sizes == [] and list(c) == [1.0]


@pytest.mark.parametrize("case", ["eigen", "equality", "chsh"])
def test_sdpa_round_trip_through_external_solver(tmp_path, rng, case):
    if case == "eigen":
        prob = eigen_problem(random_hermitian(3, rng))
    elif case == "equality":
        prob, _ = complex_equality_problem(rng)
    else:
        prob = build_assemblage_bound(bb84_assemblage(), ObservedData.from_functional("chsh", 2.5), level=1)
    ours = sc.solve(prob)
    path = sc.export_sdpa(prob, tmp_path / f"{case}.dat-s")
    assert abs(solve_sdpa_with_cvxpy(path) - ours.objective) < 1e-5


def test_sdpa_entries_are_upper_triangular(tmp_path, rng):
    prob, _ = complex_equality_problem(rng)
    path = sc.export_sdpa(prob, tmp_path / "p.dat-s")
    lines = [l for l in path.read_text().splitlines()[5:] if l.strip()]
    for line in lines:
        _, _, i, j, _ = line.split()
        assert int(i) <= int(j)
