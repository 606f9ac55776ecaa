"""Quantum channels, Petz-type recovery maps and covariance utilities.

Superoperators use column-stacking vectorization: ``vec(X)[i + j*d] = X[i, j]``,
so ``vec(A X B) = (B.T kron A) vec(X)`` and a Kraus channel has matrix
``sum_k conj(K_k) kron K_k``.  The Choi matrix is
``sum_ij |i><j| kron Phi(|i><j|)`` (input factor first).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, reduce
from math import gcd
from typing import Sequence

import numpy as np

from .operators import (
    DensityOperator,
    as_density,
    as_matrix,
    dag,
    ginibre,
    matrix_function,
    operator_from_json,
    operator_to_json,
    spectral_decompose,
    tensor,
)
from .quadrature import BetaQuadrature, composite_gauss_legendre

logger = logging.getLogger(__name__)

TP_TOL = 1e-10
CHOI_TOL = 1e-10
PINV_TOL = 1e-10


class ChannelError(ValueError):
    pass


def vec(X) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, rows: int, cols: int | None = None) -> np.ndarray:
    return np.asarray(v).reshape((rows, cols or rows), order="F")


class QuantumChannel:
    """CPTP map held as a Kraus list, with derived superoperator and Choi forms."""

    def __init__(self, kraus: Sequence, tol: float = TP_TOL, validate: bool = True):
        ks = np.asarray([np.asarray(K, dtype=complex) for K in kraus])
        if ks.ndim != 3 or len(ks) == 0:
            raise ChannelError("kraus must be a non-empty sequence of equal-shape matrices")
        self.kraus = ks
        self.kraus.setflags(write=False)
        if validate:
            err = np.max(np.abs(self.tp_defect()))
            if err > tol:
                raise ChannelError(f"not trace preserving: |sum K*K - I| = {err:.3e}")

    @property
    def dim_in(self) -> int:
        return self.kraus.shape[2]

    @property
    def dim_out(self) -> int:
        return self.kraus.shape[1]

    def tp_defect(self) -> np.ndarray:
        return np.einsum("kai,kaj->ij", self.kraus.conj(), self.kraus) - np.eye(self.dim_in)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.shape != (self.dim_in, self.dim_in):
            raise ChannelError(f"input shape {X.shape} does not match dim_in={self.dim_in}")
        return np.einsum("kai,ij,kbj->ab", self.kraus, X, self.kraus.conj())

    def adjoint_apply(self, Y) -> np.ndarray:
        Y = np.asarray(Y)
        if Y.shape != (self.dim_out, self.dim_out):
            raise ChannelError(f"input shape {Y.shape} does not match dim_out={self.dim_out}")
        return np.einsum("kai,ab,kbj->ij", self.kraus.conj(), Y, self.kraus)

    def __call__(self, X) -> np.ndarray:
        return self.apply(X)

    def state(self, rho) -> DensityOperator:
        return DensityOperator(self.apply(np.asarray(rho)))

    @cached_property
    def superoperator(self) -> np.ndarray:
        return sum(np.kron(K.conj(), K) for K in self.kraus)

    @cached_property
    def choi(self) -> np.ndarray:
        v = np.array([K.T.ravel() for K in self.kraus])  # v[k, i*dout + a] = K[a, i]
        return v.T @ v.conj()

    def compose(self, first: "QuantumChannel") -> "QuantumChannel":
        """The channel ``self o first``."""
        if first.dim_out != self.dim_in:
            raise ChannelError("dimension mismatch in composition")
        ks = [B @ A for B in self.kraus for A in first.kraus]
        return QuantumChannel(ks)

    @classmethod
    def from_choi(cls, J, dim_in: int, dim_out: int, tol: float = CHOI_TOL) -> "QuantumChannel":
        J = as_matrix(J)
        E = spectral_decompose(J)
        scale = max(1.0, float(np.max(np.abs(E.eigenvalues))))
        if E.eigenvalues[0] < -tol * scale:
            raise ChannelError(f"Choi matrix not PSD (min eigenvalue {E.eigenvalues[0]:.3e})")
        keep = E.eigenvalues > tol * scale * 1e-3
        ks = [np.sqrt(lam) * v.reshape(dim_in, dim_out).T
              for lam, v in zip(E.eigenvalues[keep], E.eigenvectors[:, keep].T)]
        if not ks:
            ks = [np.zeros((dim_out, dim_in))]
        return cls(ks, tol=max(TP_TOL, 10 * tol))

    @classmethod
    def from_superoperator(cls, S, dim_in: int, dim_out: int, tol: float = CHOI_TOL):
        S4 = np.asarray(S).reshape(dim_out, dim_out, dim_in, dim_in)  # [b, a, j, i]
        J = S4.transpose(3, 1, 2, 0).reshape(dim_in * dim_out, dim_in * dim_out)
        return cls.from_choi(J, dim_in, dim_out, tol=tol)

    def to_json(self) -> dict:
        return {"dim_in": self.dim_in, "dim_out": self.dim_out,
                "kraus": [operator_to_json_rect(K) for K in self.kraus]}

    @classmethod
    def from_json(cls, obj: dict) -> "QuantumChannel":
        ks = [operator_from_json_rect(k) for k in obj["kraus"]]
        ch = cls(ks)
        if (ch.dim_in, ch.dim_out) != (obj["dim_in"], obj["dim_out"]):
            raise ChannelError("declared dimensions do not match Kraus data")
        return ch

    def __repr__(self) -> str:
        return f"QuantumChannel({self.dim_in}->{self.dim_out}, kraus={len(self.kraus)})"


def operator_to_json_rect(K) -> dict:
    K = np.asarray(K)
    if K.shape[0] == K.shape[1]:
        return operator_to_json(K)
    return {"rows": K.shape[0], "cols": K.shape[1], "re": K.real.tolist(), "im": K.imag.tolist()}


def operator_from_json_rect(obj: dict) -> np.ndarray:
    if "dim" in obj:
        return operator_from_json(obj)
    return np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)


# ---------------------------------------------------------------------------
# Channel builders


def identity_channel(dim: int) -> QuantumChannel:
    return QuantumChannel([np.eye(dim)])


def unitary_channel(U) -> QuantumChannel:
    return QuantumChannel([np.asarray(U, dtype=complex)])


def hamiltonian_unitary(H, s: float) -> np.ndarray:
    """exp(-i H s)."""
    E = spectral_decompose(H)
    return matrix_function(E, np.exp(-1j * E.eigenvalues * s))


def pinching_channel(H, tol: float = 1e-9) -> QuantumChannel:
    """Dephasing onto the eigenspaces of ``H`` (eigenvalues merged within ``tol``)."""
    E = spectral_decompose(H)
    lam, U = E.eigenvalues, E.eigenvectors
    groups, start = [], 0
    for k in range(1, len(lam) + 1):
        if k == len(lam) or lam[k] - lam[k - 1] > tol * max(1.0, abs(lam[k])):
            groups.append(slice(start, k))
            start = k
    projectors = [U[:, g] @ dag(U[:, g]) for g in groups]
    return QuantumChannel(projectors)


def partial_trace_channel(dims: Sequence[int], which: int) -> QuantumChannel:
    """Trace out subsystem ``which`` of a bipartite (or multipartite) system."""
    dims = list(dims)
    d_drop = dims[which]
    ks = []
    for k in range(d_drop):
        e = np.zeros((1, d_drop))
        e[0, k] = 1
        factors = [e if j == which else np.eye(d) for j, d in enumerate(dims)]
        ks.append(tensor(*factors))
    return QuantumChannel(ks)


def attach_ancilla(dim_in: int, tau, W=None) -> QuantumChannel:
    """Channel X -> W (X kron tau) W*; W defaults to the identity."""
    tau = as_density(tau)
    E = tau.eig
    ks = [np.kron(np.eye(dim_in), np.sqrt(lam) * v[:, None])
          for lam, v in zip(E.eigenvalues, E.eigenvectors.T) if lam > 0]
    if W is not None:
        W = np.asarray(W, dtype=complex)
        ks = [W @ K for K in ks]
    return QuantumChannel(ks)


def random_isometry(rows: int, cols: int, rng) -> np.ndarray:
    if rows < cols:
        raise ChannelError("isometry needs rows >= cols")
    Q, R = np.linalg.qr(ginibre(rows, cols, rng))
    d = np.diag(R)
    return Q * (d / np.abs(d))


def random_channel(dim_in: int, dim_out: int, kraus_count: int, seed) -> QuantumChannel:
    """Kraus operators sliced from a Haar-random isometry into dim_out x kraus_count."""
    if kraus_count < 1:
        raise ChannelError("kraus_count must be >= 1")
    if dim_out * kraus_count < dim_in:
        raise ChannelError("dim_out * kraus_count must be at least dim_in")
    V = random_isometry(dim_out * kraus_count, dim_in, seed)
    return QuantumChannel([V[k * dim_out:(k + 1) * dim_out] for k in range(kraus_count)])


# ---------------------------------------------------------------------------
# Petz-type recovery maps


def _rotated_petz_kraus(sigma: DensityOperator, phi: QuantumChannel, t: float):
    out = as_density(phi.apply(sigma.matrix))
    left = sigma.power(0.5 - 1j * t)
    right = out.power(-0.5 + 1j * t)
    ks = [left @ dag(K) @ right for K in phi.kraus]
    return ks, out


def rotated_petz_map(sigma, phi: QuantumChannel, t: float = 0.0) -> QuantumChannel:
    """sigma^(1/2-it) Phi*(Phi(sigma)^(-1/2+it) . Phi(sigma)^(-1/2-it)) sigma^(1/2+it).

    Inverse powers of Phi(sigma) act on its support only.  Inputs supported on
    the kernel of Phi(sigma) are sent to ``tr(Q X) sigma`` so that the result
    is trace preserving on the whole output space; this does not change the
    map on the support.
    """
    sigma = as_density(sigma)
    if sigma.dim != phi.dim_in:
        raise ChannelError("reference state dimension does not match the channel input")
    ks, out = _rotated_petz_kraus(sigma, phi, t)
    if not out.full_rank:
        Uk = out.eig.eigenvectors[:, ~out.support_mask]
        sq = sigma.power(0.5)
        for q in Uk.T:
            for j in range(sigma.dim):
                col = sq[:, j]
                ks.append(np.outer(col, q.conj()))
    return QuantumChannel(ks)


def petz_map(sigma, phi: QuantumChannel) -> QuantumChannel:
    return rotated_petz_map(sigma, phi, 0.0)


def rotated_petz_apply(sigma, phi: QuantumChannel, X, t: float = 0.0) -> np.ndarray:
    """Apply the rotated Petz map on the support of Phi(sigma) without building Kraus lists."""
    sigma = as_density(sigma)
    out = as_density(phi.apply(sigma.matrix))
    inner = out.power(-0.5 + 1j * t) @ np.asarray(X) @ out.power(-0.5 - 1j * t)
    return sigma.power(0.5 - 1j * t) @ phi.adjoint_apply(inner) @ sigma.power(0.5 + 1j * t)


def universal_recovery_apply(sigma, phi: QuantumChannel, X, quad: BetaQuadrature | None = None):
    """Integral of R^{t/2}_{sigma,Phi}(X) against dbeta(t)."""
    quad = quad or BetaQuadrature()
    ts, ws = quad.rule()
    sigma = as_density(sigma)
    out = as_density(phi.apply(sigma.matrix))
    X = np.asarray(X)
    # spectral data reused for every node
    ls, Us = sigma.eigenvalues, sigma.eig.eigenvectors
    lo, Uo = out.eigenvalues, out.eig.eigenvectors
    ms, mo = sigma.support_mask, out.support_mask
    log_s = np.where(ms, np.log(np.where(ms, ls, 1.0)), 0.0)
    log_o = np.where(mo, np.log(np.where(mo, lo, 1.0)), 0.0)
    Xo = dag(Uo) @ X @ Uo
    acc = np.zeros((sigma.dim, sigma.dim), dtype=complex)
    for t, w in zip(ts, ws):
        s = t / 2
        po = np.where(mo, np.exp((-0.5 + 1j * s) * log_o), 0.0)
        inner = Uo @ (po[:, None] * Xo * po.conj()[None, :]) @ dag(Uo)
        Y = dag(Us) @ phi.adjoint_apply(inner) @ Us
        ps = np.where(ms, np.exp((0.5 - 1j * s) * log_s), 0.0)
        acc += w * (ps[:, None] * Y * ps.conj()[None, :])
    return Us @ acc @ dag(Us)


# ---------------------------------------------------------------------------
# Contraction operator V_{rho,t}


def lmul(A) -> np.ndarray:
    """Superoperator of X -> A X."""
    A = np.asarray(A)
    return np.kron(np.eye(A.shape[1]), A)


def rmul(B) -> np.ndarray:
    """Superoperator of X -> X B."""
    B = np.asarray(B)
    return np.kron(B.T, np.eye(B.shape[0]))


def modular_superoperator(rho) -> np.ndarray:
    """Delta_rho: X -> rho X rho^{-1}."""
    rho = as_density(rho)
    rho.require_full_rank()
    return lmul(rho.matrix) @ rmul(rho.power(-1))


@dataclass(frozen=True)
class ContractionOperator:
    """Matrix of A -> Phi*(A Phi(rho)^(-1/2-it)) rho^(1/2+it), from B(K) to B(H)."""

    t: float
    matrix: np.ndarray
    delta_in: np.ndarray
    delta_out: np.ndarray

    def contraction_excess(self) -> float:
        """Largest eigenvalue of V*V - I (<= 0 for a contraction)."""
        V = self.matrix
        M = dag(V) @ V - np.eye(V.shape[1])
        return float(np.linalg.eigvalsh((M + dag(M)) / 2)[-1])

    def modular_excess(self) -> float:
        """Largest eigenvalue of V* Delta_rho V - Delta_Phi(rho)."""
        V = self.matrix
        M = dag(V) @ self.delta_in @ V - self.delta_out
        return float(np.linalg.eigvalsh((M + dag(M)) / 2)[-1])


def contraction_operator(rho, phi: QuantumChannel, t: float) -> ContractionOperator:
    rho = as_density(rho)
    rho.require_full_rank("rho")
    out = as_density(phi.apply(rho.matrix))
    out.require_full_rank("Phi(rho)")
    P = out.power(-0.5 - 1j * t)
    Q = rho.power(0.5 + 1j * t)
    V = rmul(Q) @ dag(phi.superoperator) @ rmul(P)
    return ContractionOperator(t, V, modular_superoperator(rho), modular_superoperator(out))


# ---------------------------------------------------------------------------
# Covariance under time translations


def generator_superoperator(H) -> np.ndarray:
    """X -> -i[H, X]."""
    H = np.asarray(H, dtype=complex)
    return -1j * (lmul(H) - rmul(H))


def check_covariance(phi: QuantumChannel, H_in, H_out) -> float:
    """Spectral norm of Phi o G_in - G_out o Phi for the generators X -> -i[H, X]."""
    S = phi.superoperator
    D = S @ generator_superoperator(H_in) - generator_superoperator(H_out) @ S
    return float(np.linalg.norm(D, 2))


def common_period(*Hs, max_denominator: int = 1000, tol: float = 1e-9) -> float | None:
    """Smallest T > 0 with exp(-i H T) a phase times identity for every H, or None.

    All nonzero eigenvalue gaps must be rational multiples of a common base
    frequency (denominators up to ``max_denominator``).
    """
    gaps = []
    for H in Hs:
        lam = spectral_decompose(H).eigenvalues
        d = np.abs(lam[:, None] - lam[None, :]).ravel()
        gaps.extend(d[d > tol * max(1.0, np.max(np.abs(lam)))])
    if not gaps:
        return None
    g0 = min(gaps)
    fracs = []
    for g in gaps:
        f = Fraction(g / g0).limit_denominator(max_denominator)
        if abs(float(f) * g0 - g) > tol * max(1.0, g):
            return None
        fracs.append(f)
    den = reduce(lambda a, b: a * b // gcd(a, b), (f.denominator for f in fracs), 1)
    nums = [int(f * den) for f in fracs]
    base = g0 / den * reduce(gcd, nums)
    return float(2 * np.pi / base)


def _eig_vec_basis(H):
    E = spectral_decompose(H)
    U = E.eigenvectors
    return E.eigenvalues, np.kron(U.T, dag(U))  # vec(U* X U) = W vec(X)


def time_average_superoperator(S, H_from, H_to, T: float | None, tol: float = 1e-9):
    """Superoperator of (1/T) int_{-T/2}^{T/2} Ad[e^{i H_to t}] o S o Ad[e^{-i H_from t}] dt.

    Evaluated exactly in the joint eigenbases, where each matrix element picks
    up a sinc factor.  ``T=None`` returns the T -> infinity limit, i.e. the
    projection onto resonant (zero-frequency) elements.
    """
    F, Wf = _eig_vec_basis(H_from)
    E, Wt = _eig_vec_basis(H_to)
    # column-stacked index a + b*d  ->  (a, b)
    w_to = (E[:, None] - E[None, :]).reshape(-1, order="F")
    w_from = (F[:, None] - F[None, :]).reshape(-1, order="F")
    omega = w_to[:, None] - w_from[None, :]
    St = Wt @ np.asarray(S) @ dag(Wf)
    if T is None:
        scale = max(1.0, np.max(np.abs(E)), np.max(np.abs(F)))
        K = (np.abs(omega) <= tol * scale).astype(float)
    else:
        K = np.sinc(omega * T / (2 * np.pi))
    return dag(Wt) @ (St * K) @ Wf


def _ad(H, t: float) -> np.ndarray:
    """Superoperator of X -> e^{iHt} X e^{-iHt}."""
    U = hamiltonian_unitary(H, -t)
    return np.kron(U.conj(), U)


def time_average_quadrature(S, H_from, H_to, T: float, panels: int = 64, nodes: int = 8):
    """Same average as :func:`time_average_superoperator`, by Gauss-Legendre panels."""
    ts, ws = composite_gauss_legendre(-T / 2, T / 2, panels, nodes)
    acc = np.zeros_like(np.asarray(S, dtype=complex))
    for t, w in zip(ts, ws):
        acc += w * (_ad(H_to, t) @ S @ _ad(H_from, -t))
    return acc / T


def twirl_channel(phi: QuantumChannel, H_in, H_out, T: float | None = None) -> QuantumChannel:
    """Covariant channel obtained by averaging Phi over the time-translation orbit."""
    if T is None:
        T = common_period(H_in, H_out)
    S = time_average_superoperator(phi.superoperator, H_in, H_out, T)
    return QuantumChannel.from_superoperator(S, phi.dim_in, phi.dim_out)


def averaged_petz(rho, phi: QuantumChannel, H_in, H_out, T: float | None = None,
                  method: str = "exact", panels: int = 64, nodes: int = 8,
                  covariance_tol: float = 1e-8) -> QuantumChannel:
    """Time-averaged Petz map (1/T) int e^{iH_in t} R(e^{-iH_out t} . e^{iH_out t}) e^{-iH_in t} dt.

    ``T=None`` means the infinite-time limit.  ``method="quadrature"`` evaluates
    the finite-T integral with Gauss-Legendre panels instead of the exact
    sinc weights.
    """
    residual = check_covariance(phi, H_in, H_out)
    if residual > covariance_tol:
        warnings.warn(f"channel is not covariant (residual {residual:.2e}); "
                      "the averaged map need not recover the orbit", stacklevel=2)
    R = petz_map(rho, phi)
    if method == "exact":
        S = time_average_superoperator(R.superoperator, H_out, H_in, T)
    elif method == "quadrature":
        if T is None:
            raise ChannelError("quadrature averaging needs a finite T")
        S = time_average_quadrature(R.superoperator, H_out, H_in, T, panels, nodes)
    else:
        raise ChannelError(f"unknown averaging method {method!r}")
    return QuantumChannel.from_superoperator(S, phi.dim_out, phi.dim_in)
