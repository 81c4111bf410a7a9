"""Best achievable fidelity of a fixed resource, optimized over CPTP maps.

For a fixed resource the fidelity ``sum_i c_i tr[ref_i Lambda(rho_i)]`` is
linear in the (transposed) Choi operator ``W`` of ``Lambda``:
``tr(K W)`` with ``K = sum_i c_i rho_i (x) ref_i^T``. The primal problem maximizes
it over ``W >= 0, tr_out W = 1``; the dual minimizes ``tr Y`` subject to
``Y (x) 1 >= K``. Both are exposed so they can be checked against each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import qmat
from .. import sdpcore as sc
from ..moments import Strategy
from .presets import ReferenceAssemblage, ReferenceBipartiteState, ReferenceEnsemble


class OracleError(RuntimeError):
    pass


@dataclass
class FidelityWeights:
    c: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        if np.any(self.c < 0):
            raise ValueError("fidelity weights must be nonnegative")

    @classmethod
    def uniform(cls, n: int, value: float | None = None) -> "FidelityWeights":
        return cls(np.full(n, 1.0 / n if value is None else value))


def fidelity_operator(resource: Sequence, reference: Sequence, weights: FidelityWeights) -> np.ndarray:
    """``K = sum_i c_i rho_i (x) ref_i^T`` on input (x) output."""
    if not (len(resource) == len(reference) == len(weights.c)):
        raise ValueError("resource, reference and weights must be aligned")
    k = None
    for rho, ref, c in zip(resource, reference, weights.c):
        if c == 0:
            continue
        term = c * np.kron(qmat.check_hermitian(rho, atol=1e-10), qmat.check_hermitian(ref, atol=1e-10).T)
        k = term if k is None else k + term
    if k is None:
        d = np.asarray(resource[0]).shape[0] * np.asarray(reference[0]).shape[0]
        k = np.zeros((d, d), dtype=complex)
    return k


def bb_contract(x_b, w, d_b: int | None = None) -> np.ndarray:
    """``tr_{BB'}[(X (x) W)(1_{A'} (x) |psi+><psi+|_{BB'})]`` with the
    unnormalized ``|psi+> = sum_k |kk>``; ``W`` acts on A' (x) B'."""
    x_b = qmat.as_matrix(x_b)
    w = qmat.as_matrix(w)
    d_b = x_b.shape[0] if d_b is None else d_b
    if x_b.shape != (d_b, d_b) or w.shape[0] % d_b:
        raise qmat.ShapeError(f"cannot contract X of shape {x_b.shape} with W of shape {w.shape}")
    d_ap = w.shape[0] // d_b
    return np.einsum("kl,akcl->ac", x_b, w.reshape(d_ap, d_b, d_ap, d_b))


def block_bb_contract(m, w, n_blocks: int, d_b: int) -> np.ndarray:
    """Apply :func:`bb_contract` to every B-block of ``m`` on C^n (x) B,
    giving an operator on C^n (x) A'."""
    m = np.asarray(m, dtype=complex)
    d_ap = w.shape[0] // d_b
    out = np.einsum("ikjl,akcl->iajc", m.reshape(n_blocks, d_b, n_blocks, d_b),
                    np.asarray(w, dtype=complex).reshape(d_ap, d_b, d_ap, d_b))
    return out.reshape(n_blocks * d_ap, n_blocks * d_ap)


def steering_fidelity_operator(rho_ab, dims, ref: ReferenceBipartiteState) -> np.ndarray:
    """Operator on A (x) A' for a channel acting on A only."""
    d_a, d_b = dims
    if ref.dims[1] != d_b:
        raise qmat.ShapeError("B and B' must have equal dimension")
    return block_bb_contract(rho_ab, ref.rho_ref.T, d_a, d_b)


def _hermitian_variable(pool: sc.MomentVariablePool, label: str, n: int) -> sc.LinearMatrixExpr:
    expr = sc.LinearMatrixExpr(n)
    for p in range(n):
        for q in range(p, n):
            vid = pool.add((label, p, q), real=(p == q))
            expr.add_entry(vid, p, q)
            if p != q:
                expr.add_entry(vid, q, p, conj=True)
    return expr


def dual_problem(k: np.ndarray, d_in: int) -> sc.SdpProblem:
    k = qmat.check_hermitian(k, atol=1e-9, name="fidelity operator")
    d_out = k.shape[0] // d_in
    pool = sc.MomentVariablePool()
    y = _hermitian_variable(pool, "Y", d_in)
    prob = sc.SdpProblem(pool, meta={"form": "dual"})
    prob.add_psd(y.kron(np.eye(d_out)) - k, "Y(x)1 - K")
    prob.objective = sc.ScalarExpr(0, {(("Y", p, p), False): 1.0 for p in range(d_in)})
    return prob


def choi_problem(k: np.ndarray, d_in: int) -> sc.SdpProblem:
    k = qmat.check_hermitian(k, atol=1e-9, name="fidelity operator")
    n = k.shape[0]
    d_out = n // d_in
    pool = sc.MomentVariablePool()
    w = _hermitian_variable(pool, "W", n)
    prob = sc.SdpProblem(pool, meta={"form": "choi"})
    prob.add_psd(w, "W")

    def entry(r, s):
        return (("W", r, s), False) if r <= s else (("W", s, r), True)

    for a in range(d_in):
        for c in range(a, d_in):
            eq = sc.ScalarExpr(-1.0 if a == c else 0.0)
            for o in range(d_out):
                vid, conj = entry(a * d_out + o, c * d_out + o)
                eq.add(vid, 1.0, conj)
            prob.add_equality(eq)
    obj = sc.ScalarExpr()
    for r in range(n):
        for s in range(n):
            if k[s, r] != 0:
                vid, conj = entry(r, s)
                obj.add(vid, -k[s, r], conj)
    prob.objective = obj
    return prob


def _run(prob: sc.SdpProblem, settings: sc.SolveSettings | None) -> float:
    rep = sc.solve(prob, settings or sc.SolveSettings())
    if not rep.ok:
        raise OracleError(f"fidelity oracle failed: {rep.status} ({rep.solver_status})")
    return rep.objective


def oracle_dual_from_operator(k, d_in: int, settings=None) -> float:
    return _run(dual_problem(k, d_in), settings)


def oracle_choi_from_operator(k, d_in: int, settings=None) -> float:
    return -_run(choi_problem(k, d_in), settings)


def fidelity_oracle_dual(resource: Sequence, reference: Sequence, weights: FidelityWeights,
                         settings: sc.SolveSettings | None = None) -> float:
    """max over CPTP maps of the weighted fidelity, via ``min tr Y``."""
    k = fidelity_operator(resource, reference, weights)
    return oracle_dual_from_operator(k, np.asarray(resource[0]).shape[0], settings)


def fidelity_oracle_choi(resource: Sequence, reference: Sequence, weights: FidelityWeights,
                         settings: sc.SolveSettings | None = None) -> float:
    """Same quantity as :func:`fidelity_oracle_dual`, maximized directly over
    Choi operators."""
    k = fidelity_operator(resource, reference, weights)
    return oracle_choi_from_operator(k, np.asarray(resource[0]).shape[0], settings)


def assemblage_weights(p: np.ndarray, p_ref: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """``c[a, x] = 1 / (n_x sqrt(P(a|x) P_ref(a|x)))``; zero where either
    marginal vanishes (the term drops out)."""
    n_x = p.shape[1]
    prod = p * p_ref
    with np.errstate(divide="ignore"):
        c = np.where(prod > tol, 1.0 / (n_x * np.sqrt(np.maximum(prod, tol))), 0.0)
    return c


def _strategy_operator(strategy: Strategy, reference) -> tuple[np.ndarray, int]:
    if strategy.kind == "assemblage":
        if not isinstance(reference, ReferenceAssemblage):
            raise TypeError("assemblage strategies need a ReferenceAssemblage")
        n_a, n_x = strategy.meta["n_a"], strategy.meta["n_x"]
        p = np.array([[np.trace(strategy.states[x * n_a + a]).real for x in range(n_x)] for a in range(n_a)])
        c = assemblage_weights(p, reference.p_ref)
        res = [strategy.states[x * n_a + a] for x in range(n_x) for a in range(n_a)]
        ref = [reference.sigma_ref[x][a] for x in range(n_x) for a in range(n_a)]
        w = [c[a, x] for x in range(n_x) for a in range(n_a)]
        return fidelity_operator(res, ref, FidelityWeights(w)), strategy.dims[0]
    if strategy.kind == "ensemble":
        if not isinstance(reference, ReferenceEnsemble):
            raise TypeError("ensemble strategies need a ReferenceEnsemble")
        w = FidelityWeights.uniform(len(strategy.states))
        return fidelity_operator(strategy.states, reference.rho_ref, w), strategy.dims[0]
    if strategy.kind == "bipartite":
        if not isinstance(reference, ReferenceBipartiteState):
            raise TypeError("bipartite strategies need a ReferenceBipartiteState")
        return steering_fidelity_operator(strategy.states[0], strategy.dims, reference), strategy.dims[0]
    raise ValueError(f"unknown strategy kind {strategy.kind!r}")


def strategy_fidelity(strategy: Strategy, reference, settings=None, form: str = "dual") -> float:
    """Oracle fidelity of an explicit strategy against a reference, with the
    scenario's own weights (and, for bipartite states, a map on A only)."""
    k, d_in = _strategy_operator(strategy, reference)
    if form == "dual":
        return oracle_dual_from_operator(k, d_in, settings)
    if form == "choi":
        return oracle_choi_from_operator(k, d_in, settings)
    raise ValueError(f"unknown oracle form {form!r}")


__all__ = [
    "FidelityWeights", "OracleError", "assemblage_weights", "bb_contract", "block_bb_contract",
    "fidelity_operator", "fidelity_oracle_choi", "fidelity_oracle_dual", "steering_fidelity_operator",
    "strategy_fidelity",
]
