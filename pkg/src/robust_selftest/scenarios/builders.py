"""Moment-matrix relaxations of the minimal optimized fidelity.

Each builder returns an :class:`~robust_selftest.sdpcore.SdpProblem` whose
optimum lower-bounds the worst-case fidelity (over resources compatible with
the data) of the best CPTP map onto the reference. Moment matrices are
declared as variables; shared words share a variable.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .. import qmat
from .. import sdpcore as sc
from ..moments import (DimSpan, EffectSymbol, MomentLayout, ReductionRules, build_layout,
                       generate_words, party_symbols, sample_dim_span)
from .data import ObservedData, rac_bit
from .oracle import assemblage_weights, block_bb_contract
from .presets import ReferenceAssemblage, ReferenceBipartiteState, ReferenceEnsemble


def declare_moments(pool: sc.MomentVariablePool, layout: MomentLayout, label) -> None:
    for k in range(layout.n_moments):
        pool.add((label, k), real=layout.self_adjoint[k])


def gamma_expr(layout: MomentLayout, label) -> sc.LinearMatrixExpr:
    """Symbolic moment matrix whose entry (i, j) is the variable of the
    moment ``tr(S_j^dagger S_i .)`` (or its conjugate)."""
    m = layout.size
    coeffs: dict = {}
    for i, row in enumerate(layout.entries):
        for j, e in enumerate(row):
            if e is None:
                continue
            key = ((label, e[0]), e[1])
            if key not in coeffs:
                coeffs[key] = np.zeros((m, m), dtype=complex)
            coeffs[key][i, j] += 1.0
    expr = sc.LinearMatrixExpr(m)
    for (vid, conj), c in coeffs.items():
        expr.add_term(vid, c, conj)
    return expr


def moment_var(layout: MomentLayout, label, word) -> sc.ScalarExpr:
    """Scalar expression for ``tr(word .)``."""
    k, conj = layout.moment_id(word)
    return sc.ScalarExpr.var((label, k), 1.0, conj)


def parameter_exprs(pool: sc.MomentVariablePool, layout: MomentLayout, label) -> list:
    """Expressions matching :meth:`MomentLayout.parameters` order."""
    out = []
    for k in range(layout.n_moments):
        vid = (label, k)
        if pool.real[vid]:
            out.append(sc.ScalarExpr.var(vid))
        else:
            z = sc.ScalarExpr.var(vid)
            out.append(z.real_part())
            out.append(z.imag_part())
    return out


def _layout_for(symbols, level: int, rules: ReductionRules, extras=()) -> MomentLayout:
    return build_layout(generate_words(symbols, level, extras, rules), rules)


def _check_words_cover(layout: MomentLayout, symbols) -> None:
    for s in symbols:
        layout.moment_id((s,))


# ------------------------------------------------------------------ Bell


def build_assemblage_bound(ref: ReferenceAssemblage, data: ObservedData, level: int = 3,
                           rules: ReductionRules = ReductionRules(True), consistency: bool = True,
                           extras: Sequence = (), n_b: int = 2, n_y: int = 2) -> sc.SdpProblem:
    """Relaxation for an assemblage in the Bell scenario.

    Variables are the moment matrices of every ``sigma_{a|x}`` and of ``Y``
    over words in Bob's effects. In table mode every ``P(a, b|x, y)`` is
    pinned; in functional mode (``chsh``) only the CHSH value is pinned,
    together with the assumed marginals (default uniform).
    """
    n_x, n_a = ref.n_x, ref.n_a
    if data.kind == "table":
        table = np.asarray(data.table, dtype=float)
        if table.ndim != 4 or table.shape[0] != n_a or table.shape[2] != n_x:
            raise qmat.ShapeError(f"table shape {table.shape} does not match reference ({n_a}, ., {n_x}, .)")
        n_b, n_y = table.shape[1], table.shape[3]
        marg = table.sum(axis=1)[:, :, 0]
    elif data.functional == "chsh":
        if (n_a, n_x, n_b, n_y) != (2, 2, 2, 2):
            raise qmat.ShapeError("the CHSH functional needs two binary settings per party")
        marg = (np.full((n_a, n_x), 1.0 / n_a) if data.marginals is None
                else np.asarray(data.marginals, dtype=float))
        if marg.shape != (n_a, n_x):
            raise qmat.ShapeError(f"marginals shape {marg.shape} != {(n_a, n_x)}")
    else:
        raise ValueError(f"unsupported functional {data.functional!r} for the Bell scenario")

    symbols = party_symbols("B", n_y, n_b)
    layout = _layout_for(symbols, level, rules, extras)
    pool = sc.MomentVariablePool()
    prob = sc.SdpProblem(pool, meta={"scenario": "bell-assemblage", "level": level,
                                     "projective": rules.projective, "consistency": consistency,
                                     "n_words": layout.size})
    weights = assemblage_weights(marg, ref.p_ref)
    d_ref = ref.dim

    declare_moments(pool, layout, "Y")
    pool.unit_ids.append(("Y", 0))
    main = gamma_expr(layout, "Y").kron(np.eye(d_ref))
    for x in range(n_x):
        for a in range(n_a):
            label = ("sigma", a, x)
            declare_moments(pool, layout, label)
            pool.fix((label, 0), marg[a, x])
            g = gamma_expr(layout, label)
            prob.add_psd(g, f"Gamma(sigma_{a}|{x})")
            if weights[a, x] > 0:
                main = main - g.kron(ref.sigma_ref[x][a].T) * weights[a, x]
    prob.add_psd(main, "Gamma(Y)(x)1 - sum c Gamma(sigma)(x)ref^T")

    if data.kind == "table":
        for a in range(n_a):
            for x in range(n_x):
                for s in symbols:
                    k, _ = layout.moment_id((s,))
                    pool.fix((("sigma", a, x), k), table[a, s.outcome, x, s.setting])
    else:
        # <A_x B_y> = sum_a (-1)^a (2 P(a, 0|x, y) - P(a|x))
        expr = sc.ScalarExpr(-data.value)
        for x in range(2):
            for y in range(2):
                sxy = -1.0 if (x, y) == (1, 1) else 1.0
                for a in range(2):
                    sa = sxy * (1.0 if a == 0 else -1.0)
                    expr = expr + moment_var(layout, ("sigma", a, x), (EffectSymbol("B", y, 0),)) * (2 * sa)
                    expr = expr + sc.ScalarExpr(-sa * marg[a, x])
        prob.add_equality(expr)

    if consistency:
        for x in range(1, n_x):
            for k in range(layout.n_moments):
                eq = sc.ScalarExpr()
                for a in range(n_a):
                    eq.add((("sigma", a, x), k), 1.0)
                    eq.add((("sigma", a, 0), k), -1.0)
                prob.add_equality(eq)

    prob.objective = sc.ScalarExpr.var(("Y", 0))
    prob.meta["layout"] = layout
    prob.meta["weights"] = weights
    return prob


# ------------------------------------------------------- prepare-and-measure


def pm_span(n_x: int, level: int, d: int, n_b: int = 2, n_y: int = 2,
            rules: ReductionRules = ReductionRules(True), seed: int = 0,
            stabilization_window: int = 30, extras: Sequence = ()) -> DimSpan:
    """Dimension-``d`` span for ``n_x`` preparations plus the dual operator,
    all measured by the same devices."""
    symbols = party_symbols("B", n_y, n_b)
    words = generate_words(symbols, level, extras, rules)
    return sample_dim_span(symbols, words, d, seed=seed, stabilization_window=stabilization_window,
                           n_slots=n_x + 1, rules=rules, free_scale_slots=(n_x,))


def build_pm_bound(ref: ReferenceEnsemble, data: ObservedData, level: int = 2, d: int = 2,
                   span: DimSpan | None = None, rules: ReductionRules = ReductionRules(True),
                   n_b: int = 2, n_y: int | None = None, seed: int = 0,
                   extras: Sequence = ()) -> sc.SdpProblem:
    """Relaxation for a constellation of states in the prepare-and-measure
    scenario with the system dimension bounded by ``d``.

    The moment matrices of all preparations and of ``Y`` must lie jointly in
    the span of those realizable in dimension ``d``. ``span=None`` samples
    it here with ``seed``.
    """
    if d < 2:
        raise ValueError("dimension must be at least 2")
    n_x = ref.n_x
    if data.kind == "table":
        table = np.asarray(data.table, dtype=float)
        if table.ndim != 3 or table.shape[1] != n_x:
            raise qmat.ShapeError(f"table shape {table.shape} does not match {n_x} preparations")
        n_b, n_y = table.shape[0], table.shape[2]
    elif data.functional.startswith("rac"):
        n = int(np.log2(n_x))
        if 2 ** n != n_x:
            raise qmat.ShapeError("a RAC needs 2^n preparations")
        n_y, n_b = n, 2
    else:
        raise ValueError(f"unsupported functional {data.functional!r} for prepare-and-measure")
    n_y = int(n_y)

    symbols = party_symbols("B", n_y, n_b)
    layout = _layout_for(symbols, level, rules, extras)
    if span is None:
        span = sample_dim_span(symbols, list(layout.words), d, seed=seed, n_slots=n_x + 1, rules=rules,
                               free_scale_slots=(n_x,))
    if span.layout.words != layout.words or span.n_slots != n_x + 1 or span.d != d:
        raise ValueError("span does not match the word list, preparation count or dimension")

    pool = sc.MomentVariablePool()
    prob = sc.SdpProblem(pool, meta={"scenario": "prepare-measure", "level": level, "dimension": d,
                                     "projective": rules.projective, "n_words": layout.size,
                                     "span_dim": span.dim})
    declare_moments(pool, layout, "Y")
    pool.unit_ids.append(("Y", 0))
    main = gamma_expr(layout, "Y").kron(np.eye(ref.dim))
    for x in range(n_x):
        label = ("rho", x)
        declare_moments(pool, layout, label)
        pool.fix((label, 0), 1.0)
        g = gamma_expr(layout, label)
        prob.add_psd(g, f"Gamma(rho_{x})")
        main = main - g.kron(ref.rho_ref[x].T) * (1.0 / n_x)
    prob.add_psd(main, "Gamma(Y)(x)1 - sum Gamma(rho)(x)ref^T / n_x")

    if data.kind == "table":
        for x in range(n_x):
            for s in symbols:
                k, _ = layout.moment_id((s,))
                pool.fix((("rho", x), k), table[s.outcome, x, s.setting])
    else:
        n = n_y
        expr = sc.ScalarExpr(-data.value)
        scale = 1.0 / (n * 2 ** n)
        for x in range(n_x):
            for y in range(n):
                p0 = moment_var(layout, ("rho", x), (EffectSymbol("B", y, 0),))
                # P(b = x_y | x, y) with P(1|x, y) = 1 - P(0|x, y)
                expr = expr + (p0 * scale if rac_bit(x, y, n) == 0 else (sc.ScalarExpr(1.0) - p0) * scale)
        prob.add_equality(expr)

    params = []
    for x in range(n_x):
        params += parameter_exprs(pool, layout, ("rho", x))
    params += parameter_exprs(pool, layout, "Y")
    comp = span.complement()
    for col in comp.T:
        eq = sc.ScalarExpr()
        for c, p in zip(col, params):
            if abs(c) > 1e-14:
                eq = eq + p * c
        prob.add_equality(eq)

    prob.objective = sc.ScalarExpr.var(("Y", 0))
    prob.meta["layout"] = layout
    return prob


# ---------------------------------------------------------------- steering


def block_moment_expr(pool: sc.MomentVariablePool, layout: MomentLayout, d_b: int, label) -> sc.LinearMatrixExpr:
    """Symbolic ``(Gamma (x) id)(rho_AB)``: every moment is a d_B x d_B block
    variable, Hermitian for self-adjoint words."""
    m = layout.size
    n = m * d_b
    block_vars = {}
    for k in range(layout.n_moments):
        sa = layout.self_adjoint[k]
        for p in range(d_b):
            for q in range(d_b):
                if sa and q < p:
                    continue
                pool.add((label, k, p, q), real=(sa and p == q))
                block_vars[(k, p, q)] = True
    coeffs: dict = {}

    def put(key, i, j, p, q):
        if key not in coeffs:
            coeffs[key] = np.zeros((n, n), dtype=complex)
        coeffs[key][i * d_b + p, j * d_b + q] += 1.0

    for i, row in enumerate(layout.entries):
        for j, e in enumerate(row):
            if e is None:
                continue
            k, conj = e
            sa = layout.self_adjoint[k]
            for p in range(d_b):
                for q in range(d_b):
                    # block X_k or its adjoint at (i, j); entry (p, q)
                    if conj:
                        src, flip = (q, p), True
                    else:
                        src, flip = (p, q), False
                    sp_, sq_ = src
                    if sa and sq_ < sp_:
                        sp_, sq_ = sq_, sp_
                        flip = not flip
                    put(((label, k, sp_, sq_), flip), i, j, p, q)
    expr = sc.LinearMatrixExpr(n)
    for (vid, conj), c in coeffs.items():
        expr.add_term(vid, c, conj)
    return expr


def block_entry(layout: MomentLayout, label, word, p: int, q: int) -> sc.ScalarExpr:
    """Entry (p, q) of the B-block for ``tr_A((word (x) 1) rho_AB)``."""
    k, conj = layout.moment_id(word)
    sa = layout.self_adjoint[k]
    if conj:
        p, q = q, p
    flip = conj
    if sa and q < p:
        p, q = q, p
        flip = not flip
    return sc.ScalarExpr.var((label, k, p, q), 1.0, flip)


def build_steering_bound(ref: ReferenceBipartiteState, data: ObservedData, level: int = 2,
                         rules: ReductionRules = ReductionRules(True), n_a: int = 2, n_x: int = 2,
                         extras: Sequence = ()) -> sc.SdpProblem:
    """Relaxation for an entangled state in the steering scenario.

    The map acts on the untrusted side A only; the moment matrix is applied
    to A, leaving d_B x d_B operator-valued blocks. Data is either the full
    assemblage ``sigma[a, x]`` or the value of the steering functional.
    """
    d_ap, d_b = ref.dims
    if data.kind == "table":
        sigma = np.asarray(data.table, dtype=complex)
        if sigma.ndim != 4 or sigma.shape[2:] != (d_b, d_b):
            raise qmat.ShapeError(f"assemblage shape {sigma.shape} does not match d_B = {d_b}")
        n_a, n_x = sigma.shape[:2]
    elif data.functional == "steering":
        if (n_a, n_x, d_b) != (2, 2, 2):
            raise qmat.ShapeError("the steering functional needs two binary settings on qubit B")
    else:
        raise ValueError(f"unsupported functional {data.functional!r} for steering")

    symbols = party_symbols("A", n_x, n_a)
    layout = _layout_for(symbols, level, rules, extras)
    m = layout.size
    pool = sc.MomentVariablePool()
    prob = sc.SdpProblem(pool, meta={"scenario": "steering", "level": level,
                                     "projective": rules.projective, "n_words": m})
    label = "rhoAB"
    big = block_moment_expr(pool, layout, d_b, label)
    prob.add_psd(big, "(Gamma x id)(rho_AB)")

    declare_moments(pool, layout, "Y")
    pool.unit_ids.append(("Y", 0))
    w = ref.rho_ref.T
    r = big.map(lambda mat: block_bb_contract(mat, w, m, d_b))
    prob.add_psd(gamma_expr(layout, "Y").kron(np.eye(d_ap)) - r, "Gamma(Y)(x)1 - R")

    # unit trace
    norm = sc.ScalarExpr(-1.0)
    for p in range(d_b):
        norm = norm + block_entry(layout, label, (), p, p)
    prob.add_equality(norm)

    if data.kind == "table":
        rho_b = sigma[:, 0].sum(axis=0)
        for p in range(d_b):
            for q in range(p, d_b):
                prob.add_equality(block_entry(layout, label, (), p, q) - complex(rho_b[p, q]))
        for s in symbols:
            target = sigma[s.outcome, s.setting]
            for p in range(d_b):
                for q in range(d_b):
                    prob.add_equality(block_entry(layout, label, (s,), p, q) - complex(target[p, q]))
    else:
        # tr[Z (2 s_{0|0} - rho_B) + X (2 s_{0|1} - rho_B)]
        expr = sc.ScalarExpr(-data.value)
        for x, pauli in ((0, qmat.Z), (1, qmat.X)):
            for p in range(2):
                for q in range(2):
                    c = pauli[q, p]
                    if c == 0:
                        continue
                    expr = expr + block_entry(layout, label, (EffectSymbol("A", x, 0),), p, q) * (2 * c)
                    expr = expr - block_entry(layout, label, (), p, q) * c
        prob.add_equality(expr)

    prob.objective = sc.ScalarExpr.var(("Y", 0))
    prob.meta["layout"] = layout
    return prob
