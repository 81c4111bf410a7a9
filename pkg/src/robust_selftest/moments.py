"""Operator words, moment-matrix layouts and their numeric realizations.

A moment matrix over the word list ``S_0 = 1, S_1, ..., S_{m-1}`` has entry
``(i, j) = tr(S_j^dagger S_i rho)``. This is the convention of the completely
positive map ``rho -> sum_l K_l rho K_l^dagger`` with
``K_l = sum_j |j><l| S_j``, so realized matrices are positive whenever
``rho`` is.

Every measurement drops its last outcome from the alphabet; that effect is
``1 - sum(others)`` and never appears inside a word.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import qmat


@dataclass(frozen=True, order=True)
class EffectSymbol:
    party: str
    setting: int
    outcome: int

    def __str__(self) -> str:
        return f"{self.party}{self.outcome}|{self.setting}"


Word = tuple  # tuple[EffectSymbol, ...]; () is the identity
ZERO = None


@dataclass(frozen=True)
class ReductionRules:
    """``projective`` enables E^2 = E and E_b E_b' = 0 within one setting."""

    projective: bool = True


def word_key(w: Word) -> tuple:
    return (len(w), tuple((s.party, s.setting, s.outcome) for s in w))


def adjoint(w: Word) -> Word:
    # effects are Hermitian
    return tuple(reversed(w))


def reduce_word(w: Iterable[EffectSymbol], rules: ReductionRules = ReductionRules()) -> Word | None:
    """Normal form of a word, or ``ZERO`` when orthogonality kills it."""
    w = tuple(w)
    if not rules.projective:
        return w
    out: list[EffectSymbol] = []
    for s in w:
        if out:
            top = out[-1]
            if top == s:
                continue
            if top.party == s.party and top.setting == s.setting:
                return ZERO
        out.append(s)
    return tuple(out)


def word_str(w: Word | None) -> str:
    if w is ZERO:
        return "0"
    if not w:
        return "1"
    return "*".join(str(s) for s in w)


def party_symbols(party: str, n_settings: int, n_outcomes: int | Sequence[int]) -> list[EffectSymbol]:
    """Alphabet for one party with the last outcome of every setting removed."""
    if isinstance(n_outcomes, int):
        n_outcomes = [n_outcomes] * n_settings
    return [EffectSymbol(party, y, b) for y in range(n_settings) for b in range(n_outcomes[y] - 1)]


def generate_words(symbols: Sequence[EffectSymbol], level: int, extras: Sequence[Word] = (),
                   rules: ReductionRules = ReductionRules()) -> list[Word]:
    """All distinct reduced words of length <= ``level``, identity first,
    in graded lexicographic order, then any ``extras`` not already present."""
    if level < 1:
        raise ValueError("level must be >= 1")
    symbols = sorted(set(symbols))
    words: list[Word] = [()]
    seen = {()}
    frontier: list[Word] = [()]
    for length in range(1, level + 1):
        new = []
        for w in frontier:
            for s in symbols:
                r = reduce_word(w + (s,), rules)
                if r is ZERO or len(r) != length or r in seen:
                    continue
                seen.add(r)
                new.append(r)
        new.sort(key=word_key)
        words.extend(new)
        frontier = new
    for e in extras:
        r = reduce_word(e, rules)
        if r is ZERO or r in seen:
            continue
        seen.add(r)
        words.append(r)
    return words


@dataclass(frozen=True)
class MomentLayout:
    """Variable-sharing structure of a moment matrix.

    ``entries[i][j]`` is ``(moment_id, conjugated)`` or ``None`` for an entry
    that is identically zero. Moment ``k`` is ``tr(moment_words[k] rho)``;
    a conjugated entry holds its complex conjugate.
    """

    words: tuple
    rules: ReductionRules
    moment_words: tuple
    entries: tuple
    self_adjoint: tuple

    @property
    def size(self) -> int:
        return len(self.words)

    @property
    def n_moments(self) -> int:
        return len(self.moment_words)

    @property
    def unit_id(self) -> int:
        return 0

    @cached_property
    def moment_index(self) -> dict:
        return {w: k for k, w in enumerate(self.moment_words)}

    def moment_id(self, w: Iterable[EffectSymbol]) -> tuple[int, bool]:
        """Id and conjugation flag of the moment ``tr(w rho)``."""
        r = reduce_word(w, self.rules)
        if r is ZERO:
            raise KeyError("word reduces to zero")
        if r in self.moment_index:
            return self.moment_index[r], False
        a = adjoint(r)
        if a in self.moment_index:
            return self.moment_index[a], True
        raise KeyError(f"moment {word_str(r)} does not appear in the layout")

    @cached_property
    def representatives(self) -> tuple:
        """One ``(i, j, conjugated)`` position per moment id."""
        reps: dict[int, tuple] = {}
        for i, row in enumerate(self.entries):
            for j, e in enumerate(row):
                if e is not None and e[0] not in reps:
                    reps[e[0]] = (i, j, e[1])
        return tuple(reps[k] for k in range(self.n_moments))

    @property
    def n_real_parameters(self) -> int:
        return sum(1 if sa else 2 for sa in self.self_adjoint)

    def parameters(self, gamma: np.ndarray) -> np.ndarray:
        """Real coordinates of a moment matrix: Re of every moment, then Im of
        every moment that is not self-adjoint, interleaved by id."""
        out = []
        for k, (i, j, conj) in enumerate(self.representatives):
            v = gamma[i, j]
            if conj:
                v = np.conj(v)
            out.append(v.real)
            if not self.self_adjoint[k]:
                out.append(v.imag)
        return np.array(out)


def build_layout(words: Sequence[Word], rules: ReductionRules = ReductionRules()) -> MomentLayout:
    words = tuple(tuple(w) for w in words)
    if not words or words[0] != ():
        raise ValueError("word list must begin with the identity word")
    if len(set(words)) != len(words):
        raise ValueError("words must be distinct")
    for w in words:
        if reduce_word(w, rules) != w:
            raise ValueError(f"word {word_str(w)} is not reduced")
    index: dict[Word, int] = {(): 0}
    moment_words: list[Word] = [()]
    entries = []
    for i, si in enumerate(words):
        row = []
        for j, sj in enumerate(words):
            w = reduce_word(adjoint(sj) + si, rules)
            if w is ZERO:
                row.append(None)
                continue
            a = adjoint(w)
            canon = min(w, a, key=word_key)
            if canon not in index:
                index[canon] = len(moment_words)
                moment_words.append(canon)
            row.append((index[canon], w != canon))
        entries.append(tuple(row))
    self_adjoint = tuple(adjoint(w) == w for w in moment_words)
    return MomentLayout(words, rules, tuple(moment_words), tuple(entries), self_adjoint)


@dataclass
class Strategy:
    """Explicit finite-dimensional realization.

    ``states`` holds the resource parts (assemblage elements ordered
    ``x * n_a + a``, ensemble states ordered by ``x``, or a single bipartite
    state). ``povms`` maps ``(party, setting)`` to the full list of effects,
    including the last outcome.
    """

    dims: tuple
    states: list
    povms: dict
    kind: str = "ensemble"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.states = [qmat.check_hermitian(s, atol=1e-10, name="state") for s in self.states]
        self.povms = {k: [qmat.check_hermitian(e, atol=1e-10, name="effect") for e in v]
                      for k, v in self.povms.items()}

    def validate(self, tol: float = 1e-10) -> None:
        for k, effects in self.povms.items():
            for e in effects:
                if qmat.min_eigenvalue((e + e.conj().T) / 2) < -tol:
                    raise ValueError(f"effect of {k} is not positive")
            total = sum(effects)
            if np.max(np.abs(total - np.eye(total.shape[0]))) > tol:
                raise ValueError(f"effects of {k} do not sum to identity")
        for s in self.states:
            if qmat.min_eigenvalue((s + s.conj().T) / 2) < -tol:
                raise ValueError("state is not positive")

    def operator(self, s: EffectSymbol) -> np.ndarray:
        return self.povms[(s.party, s.setting)][s.outcome]

    def word_operator(self, w: Word, dim: int) -> np.ndarray:
        op = np.eye(dim, dtype=complex)
        for s in w:
            op = op @ self.operator(s)
        return op

    def symbols(self, party: str | None = None) -> list[EffectSymbol]:
        out = []
        for (p, y), effects in sorted(self.povms.items()):
            if party is None or p == party:
                out.extend(EffectSymbol(p, y, b) for b in range(len(effects) - 1))
        return out


def _word_ops(layout: MomentLayout, ops: Mapping[EffectSymbol, np.ndarray] | Strategy, dim: int):
    if isinstance(ops, Strategy):
        return [ops.word_operator(w, dim) for w in layout.words]
    res = []
    for w in layout.words:
        op = np.eye(dim, dtype=complex)
        for s in w:
            op = op @ ops[s]
        res.append(op)
    return res


def realize_moment_matrix(layout: MomentLayout, strategy, target) -> np.ndarray:
    """Numeric ``Gamma(target)`` with entries ``tr(S_j^dagger S_i target)``."""
    target = qmat.as_matrix(target)
    dim = target.shape[0]
    try:
        ops = _word_ops(layout, strategy, dim)
    except ValueError as exc:
        raise qmat.ShapeError(str(exc)) from exc
    # rows: S_i target; entries tr(S_j^dag S_i target) = <S_j, S_i target>
    st = np.stack([op @ target for op in ops])
    flat_ops = np.stack(ops).reshape(len(ops), -1)
    flat_st = st.reshape(len(ops), -1)
    return flat_st @ flat_ops.conj().T


def realize_block_moment(layout: MomentLayout, strategy, bipartite_state,
                         dims: Sequence[int]) -> np.ndarray:
    """``(Gamma x id)(rho_AB)``: an m x m array of B-blocks
    ``tr_A((S_j^dagger S_i x 1) rho_AB)``, returned as an (m d_B) square matrix
    ordered as C^m (x) B."""
    rho = qmat.as_matrix(bipartite_state)
    d_a, d_b = (int(d) for d in dims)
    if rho.shape != (d_a * d_b, d_a * d_b):
        raise qmat.ShapeError(f"state of size {rho.shape} does not match dims {dims}")
    ops = _word_ops(layout, strategy, d_a)
    m = len(ops)
    # tr_A((O x 1) rho)[b, b'] = sum_{a, a'} O[a', a] rho[(a, b), (a', b')]
    t = rho.reshape(d_a, d_b, d_a, d_b)
    out = np.zeros((m, d_b, m, d_b), dtype=complex)
    for i in range(m):
        for j in range(m):
            o = ops[j].conj().T @ ops[i]
            out[i, :, j, :] = np.einsum("ca,abcd->bd", o, t)
    return out.reshape(m * d_b, m * d_b)


@dataclass(frozen=True)
class DimSpan:
    """Orthonormal basis (columns) of the real-linear span of moment
    parameter vectors realizable in dimension ``d``.

    A vector concatenates :meth:`MomentLayout.parameters` of ``n_slots``
    moment matrices that share one set of measurements.
    """

    basis: np.ndarray
    layout: MomentLayout
    d: int
    n_slots: int
    n_samples: int

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    def complement(self) -> np.ndarray:
        """Orthonormal basis of the orthogonal complement of the span."""
        u, _, _ = np.linalg.svd(self.basis, full_matrices=True)
        return u[:, self.dim:]

    def residual(self, vec: np.ndarray) -> float:
        vec = np.asarray(vec, dtype=float)
        return float(np.linalg.norm(vec - self.basis @ (self.basis.T @ vec)))


def _outcome_counts(symbols: Iterable[EffectSymbol]) -> dict:
    counts: dict = {}
    for s in symbols:
        key = (s.party, s.setting)
        counts[key] = max(counts.get(key, 1), s.outcome + 2)
    return counts


def random_strategy_ops(symbols: Sequence[EffectSymbol], d: int, rng: np.random.Generator,
                        projective: bool = True, nontrivial: bool = True) -> dict:
    """Random measurements for every setting in ``symbols``, keyed by
    ``(party, setting)`` and including the last outcome. ``nontrivial``
    keeps every projective outcome nonzero (no effect equal to 0 or 1)."""
    povms = {}
    for key, n_out in sorted(_outcome_counts(symbols).items()):
        if projective:
            povms[key] = qmat.random_projective_measurement(d, n_out, rng, nontrivial)
        else:
            povms[key] = qmat.random_povm(d, n_out, rng)
    return povms


def sample_dim_span(symbols: Sequence[EffectSymbol], words: Sequence[Word], d: int, seed: int = 0,
                    stabilization_window: int = 30, n_slots: int = 1,
                    rules: ReductionRules = ReductionRules(), rel_cutoff: float = 1e-7,
                    max_samples: int = 100_000, free_scale_slots: Sequence[int] = (),
                    nontrivial: bool = True) -> DimSpan:
    """Sample moment matrices of Haar-random ``d``-dimensional strategies
    until the span has not grown for ``stabilization_window`` draws.

    Each draw fixes one random measurement per setting and evaluates
    ``n_slots`` independent pure states against it. Slots share a common
    normalization (they model density matrices) except those listed in
    ``free_scale_slots``, whose trace is drawn independently (they model
    unnormalized positive operators).

    With ``nontrivial`` (the default) projective measurements never contain
    an effect equal to 0 or 1. For two binary settings this matters: trivial
    effects remove every relation that ties the slots together and the span
    then carries no dimension information at all.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    layout = build_layout(words, rules)
    free = set(free_scale_slots)
    if any(not 0 <= k < n_slots for k in free):
        raise ValueError("free_scale_slots must index existing slots")
    rng = np.random.default_rng(seed)
    samples: list[np.ndarray] = []
    q = np.zeros((layout.n_real_parameters * n_slots, 0))
    stable = 0
    while stable < stabilization_window and len(samples) < max_samples:
        povms = random_strategy_ops(symbols, d, rng, rules.projective, nontrivial)
        ops = {s: povms[(s.party, s.setting)][s.outcome] for s in symbols}
        vec = np.concatenate([
            (rng.uniform(0.5, 1.5) if k in free else 1.0)
            * layout.parameters(realize_moment_matrix(layout, ops, qmat.random_pure_state(d, rng)))
            for k in range(n_slots)
        ])
        samples.append(vec)
        r = vec - q @ (q.T @ vec)
        r = r - q @ (q.T @ r)
        nr = np.linalg.norm(r)
        if nr > rel_cutoff * max(np.linalg.norm(vec), 1.0):
            q = np.column_stack([q, r / nr])
            stable = 0
        else:
            stable += 1
    mat = np.array(samples).T
    u, sv, _ = np.linalg.svd(mat, full_matrices=False)
    rank = int(np.sum(sv > rel_cutoff * sv[0])) if sv.size and sv[0] > 0 else 0
    basis = u[:, :rank]
    # deterministic sign convention
    signs = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(rank)])
    basis = basis * np.where(signs == 0, 1, signs)
    return DimSpan(basis, layout, d, n_slots, len(samples))
