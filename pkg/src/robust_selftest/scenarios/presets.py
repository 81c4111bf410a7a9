"""Reference resources and explicit strategies used throughout the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import qmat
from ..moments import Strategy


@dataclass
class ReferenceAssemblage:
    """``sigma_ref[x][a]`` sub-normalized; each normalized element pure."""

    sigma_ref: list

    def __post_init__(self):
        self.sigma_ref = [[qmat.check_hermitian(s, atol=1e-10, name="sigma_ref") for s in row]
                          for row in self.sigma_ref]
        for row in self.sigma_ref:
            for s in row:
                if qmat.min_eigenvalue(s) < -1e-10:
                    raise ValueError("reference assemblage element is not positive")
            if abs(sum(np.trace(s).real for s in row) - 1) > 1e-9:
                raise ValueError("reference marginals do not sum to one")

    @property
    def n_x(self) -> int:
        return len(self.sigma_ref)

    @property
    def n_a(self) -> int:
        return len(self.sigma_ref[0])

    @property
    def dim(self) -> int:
        return self.sigma_ref[0][0].shape[0]

    @property
    def p_ref(self) -> np.ndarray:
        """``p_ref[a, x]``."""
        return np.array([[np.trace(self.sigma_ref[x][a]).real for x in range(self.n_x)]
                         for a in range(self.n_a)])


@dataclass
class ReferenceEnsemble:
    rho_ref: list

    def __post_init__(self):
        self.rho_ref = [qmat.check_hermitian(r, atol=1e-10, name="rho_ref") for r in self.rho_ref]
        for r in self.rho_ref:
            if abs(np.trace(r).real - 1) > 1e-9:
                raise ValueError("reference states must have unit trace")

    @property
    def n_x(self) -> int:
        return len(self.rho_ref)

    @property
    def dim(self) -> int:
        return self.rho_ref[0].shape[0]


@dataclass
class ReferenceBipartiteState:
    """Pure reference state on A' (x) B'."""

    rho_ref: np.ndarray
    dims: tuple = (2, 2)

    def __post_init__(self):
        self.rho_ref = qmat.check_hermitian(self.rho_ref, atol=1e-10, name="rho_ref")
        self.dims = tuple(int(d) for d in self.dims)
        if self.rho_ref.shape[0] != self.dims[0] * self.dims[1]:
            raise qmat.ShapeError("reference state does not match dims")


def bb84_assemblage() -> ReferenceAssemblage:
    """{|0><0|/2, |1><1|/2 ; |+><+|/2, |-><-|/2}, indexed [x][a]."""
    return ReferenceAssemblage([
        [qmat.ket_to_dm(qmat.KET0) / 2, qmat.ket_to_dm(qmat.KET1) / 2],
        [qmat.ket_to_dm(qmat.KET_PLUS) / 2, qmat.ket_to_dm(qmat.KET_MINUS) / 2],
    ])


def rac_states() -> list:
    """Ideal 2->1 RAC constellation ordered by x = 2*x_0 + x_1."""
    return [qmat.ket_to_dm(k) for k in (qmat.KET0, qmat.KET_PLUS, qmat.KET_MINUS, qmat.KET1)]


def rac2_ensemble() -> ReferenceEnsemble:
    return ReferenceEnsemble(rac_states())


def phi_plus_state() -> ReferenceBipartiteState:
    return ReferenceBipartiteState(qmat.max_entangled(2, normalized=True), (2, 2))


REFERENCES = {
    "bb84": bb84_assemblage,
    "rac2": rac2_ensemble,
    "phi_plus": phi_plus_state,
}


def preset_reference(name: str):
    try:
        return REFERENCES[name]()
    except KeyError:
        raise KeyError(f"unknown reference preset {name!r}; choose from {sorted(REFERENCES)}") from None


def dichotomic(observable) -> list:
    """Projectors (1 + B)/2, (1 - B)/2 of a +-1 observable."""
    b = np.asarray(observable, dtype=complex)
    one = np.eye(b.shape[0])
    return [(one + b) / 2, (one - b) / 2]


def assemblage_strategy(sigma, povms: dict, party: str = "B") -> Strategy:
    """Bell-scenario strategy from ``sigma[x][a]`` and Bob's measurements."""
    n_x, n_a = len(sigma), len(sigma[0])
    states = [sigma[x][a] for x in range(n_x) for a in range(n_a)]
    dim = states[0].shape[0]
    return Strategy((dim,), states, povms, kind="assemblage", meta={"n_a": n_a, "n_x": n_x, "party": party})


def _s1() -> Strategy:
    sigma = bb84_assemblage().sigma_ref
    povms = {("B", 0): dichotomic((qmat.Z + qmat.X) / np.sqrt(2)),
             ("B", 1): dichotomic((qmat.Z - qmat.X) / np.sqrt(2))}
    return assemblage_strategy(sigma, povms)


def _s2() -> Strategy:
    sigma = [[qmat.ket_to_dm(qmat.KET0) / 2, qmat.ket_to_dm(qmat.KET1) / 2],
             [np.eye(2) / 4, np.eye(2) / 4]]
    povms = {("B", 0): dichotomic(qmat.Z), ("B", 1): dichotomic(qmat.Z)}
    return assemblage_strategy(sigma, povms)


def _rac2_ideal() -> Strategy:
    povms = {("B", 0): dichotomic((qmat.Z + qmat.X) / np.sqrt(2)),
             ("B", 1): dichotomic((qmat.Z - qmat.X) / np.sqrt(2))}
    return Strategy((2,), rac_states(), povms, kind="ensemble", meta={"party": "B"})


def _singlet_zx() -> Strategy:
    povms = {("A", 0): dichotomic(qmat.Z), ("A", 1): dichotomic(qmat.X)}
    return Strategy((2, 2), [qmat.max_entangled(2, normalized=True)], povms, kind="bipartite",
                    meta={"party": "A"})


PRESET_STRATEGIES = {"S1": _s1, "S2": _s2, "rac2_ideal": _rac2_ideal, "singlet_zx": _singlet_zx}


def preset_strategy(name: str) -> Strategy:
    try:
        return PRESET_STRATEGIES[name]()
    except KeyError:
        raise KeyError(f"unknown strategy preset {name!r}; choose from {sorted(PRESET_STRATEGIES)}") from None


def mix_strategies(s1: Strategy, s2: Strategy, t: float) -> Strategy:
    """Convex mixture ``t*s1 + (1-t)*s2`` realized with a classical flag.

    The flag is a qubit appended to the measured system; measurements act
    as the branch's own POVM conditioned on the flag. Bipartite strategies
    attach the flag to the measured party A.
    """
    if s1.kind != s2.kind or set(s1.povms) != set(s2.povms) or len(s1.states) != len(s2.states):
        raise ValueError("strategies are not of the same shape")
    f0 = np.diag([1.0, 0.0]).astype(complex)
    f1 = np.diag([0.0, 1.0]).astype(complex)
    povms = {k: [np.kron(e1, f0) + np.kron(e2, f1) for e1, e2 in zip(s1.povms[k], s2.povms[k])]
             for k in s1.povms}
    if s1.kind == "bipartite":
        (d_a, d_b), (d_a2, d_b2) = s1.dims, s2.dims
        if (d_a, d_b) != (d_a2, d_b2):
            raise ValueError("bipartite strategies must share dims")

        def lift(rho, flag):
            # A (x) B -> (A (x) F) (x) B
            t4 = np.kron(rho, flag).reshape(d_a, d_b, 2, d_a, d_b, 2)
            return t4.transpose(0, 2, 1, 3, 5, 4).reshape(2 * d_a * d_b, 2 * d_a * d_b)

        states = [t * lift(r1, f0) + (1 - t) * lift(r2, f1) for r1, r2 in zip(s1.states, s2.states)]
        dims = (2 * d_a, d_b)
    else:
        states = [t * np.kron(r1, f0) + (1 - t) * np.kron(r2, f1) for r1, r2 in zip(s1.states, s2.states)]
        dims = (2 * s1.dims[0],)
    return Strategy(dims, states, povms, kind=s1.kind, meta=dict(s1.meta))


def random_assemblage_strategy(rng: np.random.Generator, d_b: int = 2, n_a: int = 2, n_x: int = 2,
                               n_b: int = 2, n_y: int = 2, projective: bool = True) -> Strategy:
    """Assemblage from a random pure two-qudit state and random measurements."""
    d_a = 2
    rho = qmat.random_pure_state(d_a * d_b, rng)
    sigma = []
    for _ in range(n_x):
        effects = (qmat.random_projective_measurement(d_a, n_a, rng, nontrivial=True) if projective
                   else qmat.random_povm(d_a, n_a, rng))
        sigma.append([qmat.partial_trace(np.kron(e, np.eye(d_b)) @ rho, (d_a, d_b), [1]) for e in effects])
    povms = {}
    for y in range(n_y):
        povms[("B", y)] = (qmat.random_projective_measurement(d_b, n_b, rng, nontrivial=True) if projective
                           else qmat.random_povm(d_b, n_b, rng))
    sigma = [[(s + s.conj().T) / 2 for s in row] for row in sigma]
    return assemblage_strategy(sigma, povms)


def random_ensemble_strategy(rng: np.random.Generator, d: int = 2, n_x: int = 4, n_y: int = 2,
                             n_b: int = 2, projective: bool = True, pure: bool = False) -> Strategy:
    states = [qmat.random_pure_state(d, rng) if pure else qmat.random_density_matrix(d, rng)
              for _ in range(n_x)]
    povms = {("B", y): (qmat.random_projective_measurement(d, n_b, rng, nontrivial=True) if projective
                        else qmat.random_povm(d, n_b, rng)) for y in range(n_y)}
    return Strategy((d,), states, povms, kind="ensemble", meta={"party": "B"})


def random_bipartite_strategy(rng: np.random.Generator, d_a: int = 2, d_b: int = 2, n_x: int = 2,
                              n_a: int = 2, projective: bool = True) -> Strategy:
    rho = qmat.random_density_matrix(d_a * d_b, rng, rank=int(rng.integers(1, d_a * d_b + 1)))
    povms = {("A", x): (qmat.random_projective_measurement(d_a, n_a, rng, nontrivial=True) if projective
                        else qmat.random_povm(d_a, n_a, rng)) for x in range(n_x)}
    return Strategy((d_a, d_b), [rho], povms, kind="bipartite", meta={"party": "A"})
