"""Dense operators, spectral primitives and small linear-algebra utilities.

Every matrix here is a plain ``numpy.ndarray`` of complex dtype.  The thin
wrapper classes validate structure once at construction and cache the
eigensystem; they expose ``__array__`` so they can be handed to numpy
directly.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
NEGATIVE_EIG_TOL = 1e-12
RANK_TOL = 1e-10
MAX_DIM = 64


class OperatorError(ValueError):
    """Raised when a matrix fails the structural checks of an operator type."""


def as_matrix(M) -> np.ndarray:
    """Return ``M`` as a square complex ndarray (no copy when possible)."""
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise OperatorError(f"expected a square matrix, got shape {A.shape}")
    return A


def dag(M: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(M, -1, -2))


def commutator(A, B) -> np.ndarray:
    A, B = np.asarray(A), np.asarray(B)
    return A @ B - B @ A


def hs_inner(A, B) -> complex:
    """Hilbert-Schmidt inner product tr(A* B)."""
    return complex(np.vdot(np.asarray(A), np.asarray(B)))


def _check_dim(d: int) -> None:
    if d > MAX_DIM:
        raise OperatorError(f"dimension {d} exceeds the configured cap {MAX_DIM}")


@dataclass(frozen=True)
class Eigensystem:
    """Ascending eigenvalues with the matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues) @ dag(U)

    def to_eigenbasis(self, A) -> np.ndarray:
        U = self.eigenvectors
        return dag(U) @ np.asarray(A) @ U

    def from_eigenbasis(self, A) -> np.ndarray:
        U = self.eigenvectors
        return U @ np.asarray(A) @ dag(U)


class HermitianOperator:
    """Hermitian matrix, symmetrized exactly after a tolerance check."""

    def __init__(self, M, tol: float = HERMITIAN_TOL):
        A = as_matrix(M)
        _check_dim(A.shape[0])
        scale = max(1.0, float(np.max(np.abs(A))) if A.size else 1.0)
        if np.max(np.abs(A - dag(A)), initial=0.0) > tol * scale:
            raise OperatorError("matrix is not Hermitian within tolerance")
        self.matrix = (A + dag(A)) / 2
        self.matrix.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @cached_property
    def eig(self) -> Eigensystem:
        return spectral_decompose(self.matrix)

    def __repr__(self) -> str:
        return f"HermitianOperator(dim={self.dim})"


class DensityOperator(HermitianOperator):
    """Positive semidefinite, unit-trace operator with a cached spectrum.

    Eigenvalues in ``[-1e-12, 0)`` are clipped to zero; anything more negative
    is rejected.  ``full_rank`` compares the smallest eigenvalue against
    ``rank_tol``.
    """

    def __init__(self, M, rank_tol: float = RANK_TOL, tol: float = HERMITIAN_TOL):
        super().__init__(M, tol=tol)
        tr = np.trace(self.matrix)
        if abs(tr - 1.0) > TRACE_TOL * max(1, self.dim):
            raise OperatorError(f"trace {tr.real:.15g} differs from 1")
        E = spectral_decompose(self.matrix)
        if E.eigenvalues[0] < -NEGATIVE_EIG_TOL:
            raise OperatorError(f"negative eigenvalue {E.eigenvalues[0]:.3e}")
        lam = np.clip(E.eigenvalues, 0.0, None)
        self.rank_tol = rank_tol
        self.__dict__["eig"] = Eigensystem(lam, E.eigenvectors)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.eig.eigenvalues

    @property
    def full_rank(self) -> bool:
        return bool(self.eigenvalues[0] > self.rank_tol)

    @property
    def support_mask(self) -> np.ndarray:
        return self.eigenvalues > self.rank_tol

    @cached_property
    def support_projector(self) -> np.ndarray:
        U = self.eig.eigenvectors[:, self.support_mask]
        return U @ dag(U)

    def power(self, z: complex) -> np.ndarray:
        """rho**z on the support; zero on the kernel (for any exponent)."""
        lam = self.eigenvalues
        mask = self.support_mask
        vals = np.zeros(lam.shape, dtype=complex)
        vals[mask] = np.exp(z * np.log(lam[mask]))
        return matrix_function(self.eig, vals)

    def log(self) -> np.ndarray:
        """Logarithm on the support, zero on the kernel."""
        lam = self.eigenvalues
        mask = self.support_mask
        vals = np.zeros(lam.shape)
        vals[mask] = np.log(lam[mask])
        return matrix_function(self.eig, vals)

    def require_full_rank(self, what: str = "state") -> None:
        if not self.full_rank:
            raise OperatorError(
                f"{what} must be full rank (min eigenvalue {self.eigenvalues[0]:.3e})")

    def __repr__(self) -> str:
        return f"DensityOperator(dim={self.dim}, full_rank={self.full_rank})"


def as_density(rho) -> DensityOperator:
    return rho if isinstance(rho, DensityOperator) else DensityOperator(rho)


def spectral_decompose(H) -> Eigensystem:
    """Eigendecomposition of a Hermitian matrix with ascending eigenvalues."""
    A = as_matrix(H)
    A = (A + dag(A)) / 2
    try:
        lam, U = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - eigh on Hermitian input
        raise RuntimeError("Hermitian eigensolver failed to converge") from exc
    return Eigensystem(lam, U)


def matrix_function(E: Eigensystem, f: Callable | np.ndarray) -> np.ndarray:
    """U diag(f(lambda)) U*; ``f`` is a callable or precomputed values."""
    vals = f(E.eigenvalues) if callable(f) else np.asarray(f)
    U = E.eigenvectors
    return (U * vals) @ dag(U)


def trace_norm(M) -> float:
    M = np.asarray(M)
    if not M.any():
        return 0.0
    return float(np.sum(np.linalg.svd(M, compute_uv=False)))


def fidelity(rho, sigma) -> float:
    """||sqrt(rho) sqrt(sigma)||_1."""
    rho, sigma = as_density(rho), as_density(sigma)
    if rho.dim != sigma.dim:
        raise OperatorError("dimension mismatch")
    F = trace_norm(rho.power(0.5) @ sigma.power(0.5))
    return min(F, 1.0)


def tensor(*ops) -> np.ndarray:
    out = np.asarray(ops[0], dtype=complex)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op))
    return out


def partial_trace(M, dims: Sequence[int], which: int | Sequence[int]) -> np.ndarray:
    """Trace out the subsystem(s) ``which`` of an operator on ``prod(dims)``."""
    M = np.asarray(M)
    dims = list(dims)
    n = len(dims)
    if M.shape != (int(np.prod(dims)),) * 2:
        raise OperatorError(f"shape {M.shape} incompatible with dims {dims}")
    drop = sorted({which} if isinstance(which, (int, np.integer)) else set(which))
    keep = [k for k in range(n) if k not in drop]
    T = M.reshape(dims + dims)
    # einsum labels: row index k -> k, column index k -> n + k (or k when traced)
    row = list(range(n))
    col = [k if k in drop else n + k for k in range(n)]
    out_labels = keep + [n + k for k in keep]
    R = np.einsum(T, row + col, out_labels)
    d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
    return R.reshape(d_keep, d_keep)


# ---------------------------------------------------------------------------
# Seeded random generators


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def ginibre(rows: int, cols: int, rng) -> np.ndarray:
    rng = _rng(rng)
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def random_unitary(dim: int, rng) -> np.ndarray:
    """Haar unitary via QR with the phase correction."""
    Q, R = np.linalg.qr(ginibre(dim, dim, rng))
    d = np.diag(R)
    return Q * (d / np.abs(d))


def random_density(dim: int, rng, rank: int | None = None, mix: float = 0.0) -> np.ndarray:
    """Hilbert-Schmidt random state, optionally mixed with I/dim.

    ``mix`` bounds the smallest eigenvalue below by ``mix/dim`` and keeps
    sweeps away from numerically singular states.
    """
    G = ginibre(dim, rank or dim, rng)
    rho = G @ dag(G)
    rho /= np.trace(rho).real
    if mix:
        rho = (1 - mix) * rho + mix * np.eye(dim) / dim
    return (rho + dag(rho)) / 2


def random_pure(dim: int, rng) -> np.ndarray:
    v = ginibre(dim, 1, rng)[:, 0]
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def random_hermitian(dim: int, rng, traceless: bool = False) -> np.ndarray:
    G = ginibre(dim, dim, rng)
    H = (G + dag(G)) / 2
    if traceless:
        H -= np.trace(H) / dim * np.eye(dim)
    return H


# ---------------------------------------------------------------------------
# JSON operator format: {"dim": d, "re": [[...]], "im": [[...]]}


def operator_to_json(M) -> dict:
    M = np.asarray(M, dtype=complex)
    return {"dim": int(M.shape[0]), "re": M.real.tolist(), "im": M.imag.tolist()}


def operator_from_json(obj: dict) -> np.ndarray:
    re = np.asarray(obj["re"], dtype=float)
    im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    M = re + 1j * im
    if M.shape != (obj["dim"], obj["dim"]):
        raise OperatorError(f"declared dim {obj['dim']} does not match data {M.shape}")
    return M

