"""Dense complex matrix kernel used by every other module.

Operators are plain ``numpy`` arrays. Hermiticity is checked, never
repaired: a matrix that fails the check is rejected.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

HERMITIAN_ATOL = 1e-12

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
KET_MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)


class ShapeError(ValueError):
    """Operator dimensions do not match the declared subsystem shape."""


class NotHermitianError(ValueError):
    pass


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-d array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def is_hermitian(m, atol: float = HERMITIAN_ATOL) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.all(np.abs(m - m.conj().T) <= atol))


def check_hermitian(m, atol: float = HERMITIAN_ATOL, name: str = "operator") -> np.ndarray:
    """Return ``m`` as a complex array, raising if it is not Hermitian."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} is not square: {m.shape}")
    if not is_hermitian(m, atol):
        err = np.max(np.abs(m - m.conj().T))
        raise NotHermitianError(f"{name} is not Hermitian (max deviation {err:.3e})")
    return m


def ket_to_dm(ket) -> np.ndarray:
    v = np.asarray(ket, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(*ops) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, as_matrix(op))
    return out


def _check_shape(m: np.ndarray, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if any(d < 1 for d in dims):
        raise ShapeError(f"subsystem dimensions must be positive: {dims}")
    if m.shape[0] != m.shape[1] or int(np.prod(dims)) != m.shape[0]:
        raise ShapeError(f"shape {dims} inconsistent with operator of size {m.shape}")
    return dims


def partial_trace(m, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Trace out every tensor factor of ``m`` not listed in ``keep``.

    ``dims`` gives the factor dimensions in order; the kept factors appear in
    the result in ascending index order.
    """
    m = as_matrix(m)
    dims = _check_shape(m, dims)
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise ShapeError(f"keep indices {keep} out of range for {n} factors")
    t = m.reshape(dims + dims)
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out_idx = keep + [n + k for k in keep]
    res = np.einsum(t, row + col, out_idx)
    d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
    return res.reshape(d_keep, d_keep)


def partial_transpose(m, dims: Sequence[int], sys: Sequence[int]) -> np.ndarray:
    m = as_matrix(m)
    dims = _check_shape(m, dims)
    n = len(dims)
    t = m.reshape(dims + dims)
    perm = list(range(2 * n))
    for s in sys:
        perm[s], perm[n + s] = perm[n + s], perm[s]
    d = m.shape[0]
    return t.transpose(perm).reshape(d, d)


def trace_inner(a, b) -> complex:
    """Hilbert-Schmidt inner product tr(a^dagger b)."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def min_eigenvalue(m) -> float:
    m = check_hermitian(m)
    return float(np.linalg.eigvalsh(m)[0])


def is_psd(m, tol: float = 1e-10) -> bool:
    m = np.asarray(m, dtype=complex)
    return float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0]) >= -tol


def real_embed(m) -> np.ndarray:
    """Map a Hermitian d x d matrix to the real symmetric 2d x 2d matrix
    [[Re m, -Im m], [Im m, Re m]]; the spectrum is duplicated."""
    m = check_hermitian(m)
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def real_embed_any(m) -> np.ndarray:
    """Same block layout as :func:`real_embed` without the Hermiticity check."""
    m = np.asarray(m, dtype=complex)
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def max_entangled(d: int, normalized: bool = False) -> np.ndarray:
    """Projector onto sum_k |k>|k>, divided by d when ``normalized``."""
    if d < 1:
        raise ValueError("d must be positive")
    v = np.eye(d, dtype=complex).reshape(-1)
    rho = np.outer(v, v)
    return rho / d if normalized else rho


def psd_sqrt_inv(m, tol: float = 1e-12) -> np.ndarray:
    w, v = np.linalg.eigh(check_hermitian(m, atol=1e-9))
    inv = np.array([1 / np.sqrt(x) if x > tol else 0.0 for x in w])
    return (v * inv) @ v.conj().T


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a Ginibre matrix."""
    g = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(g)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_pure_state(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return ket_to_dm(v / np.linalg.norm(v))


def random_density_matrix(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    k = d if rank is None else rank
    g = rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_projective_measurement(d: int, n_outcomes: int, rng: np.random.Generator,
                                  nontrivial: bool = False) -> list[np.ndarray]:
    """Haar-rotated diagonal projectors; every basis vector is assigned to a
    uniformly random outcome. ``nontrivial`` forces every outcome to get at
    least one vector when d >= n_outcomes."""
    u = random_unitary(d, rng)
    if nontrivial and d >= n_outcomes:
        labels = np.concatenate([np.arange(n_outcomes), rng.integers(0, n_outcomes, d - n_outcomes)])
        labels = rng.permutation(labels)
    else:
        labels = rng.integers(0, n_outcomes, d)
    effects = []
    for k in range(n_outcomes):
        diag = (labels == k).astype(float)
        effects.append((u * diag) @ u.conj().T)
    return effects


def random_povm(d: int, n_outcomes: int, rng: np.random.Generator) -> list[np.ndarray]:
    gs = [rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d)) for _ in range(n_outcomes)]
    parts = [g.conj().T @ g for g in gs]
    s_inv = psd_sqrt_inv(sum(parts))
    return [s_inv @ p @ s_inv for p in parts]
