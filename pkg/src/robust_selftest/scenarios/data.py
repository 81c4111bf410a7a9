"""Observed data: full tables from strategies and the scalar functionals."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .. import qmat
from ..moments import Strategy


@dataclass
class ObservedData:
    """Either a full table or a single functional value.

    Table layouts: Bell ``P[a, b, x, y]``; prepare-and-measure
    ``P[b, x, y]``; steering assemblage ``sigma[a, x]`` as an
    ``(n_a, n_x, d, d)`` complex array. ``marginals`` (``P[a, x]``) only
    matters for the Bell functional mode, where it is assumed rather than
    observed.
    """

    kind: str
    table: np.ndarray | None = None
    functional: str | None = None
    value: float | None = None
    marginals: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("table", "functional"):
            raise ValueError(f"unknown data kind {self.kind!r}")
        if self.kind == "table":
            if self.table is None:
                raise ValueError("table data requires a table")
            self.table = np.asarray(self.table)
        elif self.functional is None or self.value is None:
            raise ValueError("functional data requires a name and a value")

    @classmethod
    def from_table(cls, table) -> "ObservedData":
        return cls("table", table=np.asarray(table))

    @classmethod
    def from_functional(cls, name: str, value: float, marginals=None) -> "ObservedData":
        return cls("functional", functional=name, value=float(value),
                   marginals=None if marginals is None else np.asarray(marginals, dtype=float))


def bell_table(strategy: Strategy) -> np.ndarray:
    """``P[a, b, x, y] = tr(sigma_{a|x} E_{b|y})``."""
    n_a, n_x = strategy.meta["n_a"], strategy.meta["n_x"]
    party = strategy.meta.get("party", "B")
    ys = sorted(y for (p, y) in strategy.povms if p == party)
    n_b = len(strategy.povms[(party, ys[0])])
    table = np.zeros((n_a, n_b, n_x, len(ys)))
    for a, b, x, y in product(range(n_a), range(n_b), range(n_x), ys):
        table[a, b, x, y] = np.trace(strategy.states[x * n_a + a] @ strategy.povms[(party, y)][b]).real
    return table


def pm_table(strategy: Strategy) -> np.ndarray:
    """``P[b, x, y] = tr(rho_x E_{b|y})``."""
    party = strategy.meta.get("party", "B")
    ys = sorted(y for (p, y) in strategy.povms if p == party)
    n_b = len(strategy.povms[(party, ys[0])])
    table = np.zeros((n_b, len(strategy.states), len(ys)))
    for b, x, y in product(range(n_b), range(len(strategy.states)), ys):
        table[b, x, y] = np.trace(strategy.states[x] @ strategy.povms[(party, y)][b]).real
    return table


def steering_assemblage(strategy: Strategy) -> np.ndarray:
    """``sigma[a, x] = tr_A((E_{a|x} (x) 1) rho_AB)``."""
    d_a, d_b = strategy.dims
    rho = strategy.states[0]
    party = strategy.meta.get("party", "A")
    xs = sorted(x for (p, x) in strategy.povms if p == party)
    n_a = len(strategy.povms[(party, xs[0])])
    out = np.zeros((n_a, len(xs), d_b, d_b), dtype=complex)
    for a, x in product(range(n_a), xs):
        e = np.kron(strategy.povms[(party, x)][a], np.eye(d_b))
        out[a, x] = qmat.partial_trace(e @ rho, (d_a, d_b), [1])
    return out


def table_of(strategy: Strategy) -> np.ndarray:
    return {"assemblage": bell_table, "ensemble": pm_table, "bipartite": steering_assemblage}[strategy.kind](strategy)


def chsh_value(table: np.ndarray) -> float:
    """Signed correlator sum <A0B0> + <A0B1> + <A1B0> - <A1B1>."""
    signs = np.array([[1, -1], [-1, 1]])
    corr = np.einsum("ab,abxy->xy", signs, table)
    return float(corr[0, 0] + corr[0, 1] + corr[1, 0] - corr[1, 1])


def rac_bit(x: int, y: int, n: int) -> int:
    """Bit ``x_y`` of the input string, with x_0 the most significant."""
    return (x >> (n - 1 - y)) & 1


def rac_value(table: np.ndarray, n: int | None = None) -> float:
    """Average success probability (1 / (n 2^n)) sum_{x,y} P(b = x_y | x, y)."""
    n_b, n_x, n_y = table.shape
    n = n_y if n is None else n
    if n_x != 2 ** n or n_y != n or n_b != 2:
        raise qmat.ShapeError(f"table shape {table.shape} is not an {n}->1 RAC table")
    total = sum(table[rac_bit(x, y, n), x, y] for x in range(n_x) for y in range(n_y))
    return float(total / (n * 2 ** n))


def steering_value(sigma: np.ndarray) -> float:
    """tr[Z (sigma_{0|0} - sigma_{1|0}) + X (sigma_{0|1} - sigma_{1|1})]."""
    if sigma.shape[:2] != (2, 2) or sigma.shape[2] != 2:
        raise qmat.ShapeError(f"assemblage shape {sigma.shape} is not 2x2 qubit")
    v = np.trace(qmat.Z @ (sigma[0, 0] - sigma[1, 0])) + np.trace(qmat.X @ (sigma[0, 1] - sigma[1, 1]))
    return float(v.real)


def evaluate_functional(name: str, source) -> float:
    """Evaluate ``chsh``, ``rac`` / ``rac2`` / ``rac<n>`` or ``steering`` on a
    strategy or a table."""
    table = table_of(source) if isinstance(source, Strategy) else np.asarray(source)
    if name == "chsh":
        if table.shape != (2, 2, 2, 2):
            raise qmat.ShapeError(f"CHSH needs a 2x2x2x2 table, got {table.shape}")
        return chsh_value(table)
    if name.startswith("rac"):
        n = int(name[3:]) if name[3:] else None
        return rac_value(table, n)
    if name == "steering":
        return steering_value(table)
    raise ValueError(f"unknown functional {name!r}")
