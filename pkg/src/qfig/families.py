"""Smooth state families, their Fisher information, and the qubit counter-example."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .channels import QuantumChannel, hamiltonian_unitary, pinching_channel, rotated_petz_apply
from .metrics import RLD, SLD, MonotoneMetric, metric_eval, parse_metric
from .operators import (
    DensityOperator,
    OperatorError,
    as_density,
    commutator,
    dag,
    random_density,
    random_hermitian,
    trace_norm,
)
from .quadrature import adaptive_integral

FD_STEP = 1e-5


class FamilyError(ValueError):
    pass


@dataclass(frozen=True)
class StateFamily:
    """theta -> rho_theta on an interval, with an exact or finite-difference derivative."""

    interval: tuple[float, float]
    state: Callable[[float], np.ndarray]
    derivative: Callable[[float], np.ndarray] | None = None
    label: str = "family"
    fd_step: float = FD_STEP

    @property
    def exact_derivative(self) -> bool:
        return self.derivative is not None

    def rho(self, theta: float) -> DensityOperator:
        return DensityOperator(self.state(theta))

    def rho_dot(self, theta: float) -> np.ndarray:
        if self.derivative is not None:
            D = np.asarray(self.derivative(theta), dtype=complex)
        else:
            h = self.fd_step
            D = (np.asarray(self.state(theta + h)) - np.asarray(self.state(theta - h))) / (2 * h)
        return (D + dag(D)) / 2

    def fd_discrepancy(self, theta: float, h: float | None = None) -> float:
        """Frobenius distance between the declared derivative and a central difference."""
        h = self.fd_step if h is None else h
        fd = (np.asarray(self.state(theta + h)) - np.asarray(self.state(theta - h))) / (2 * h)
        return float(np.linalg.norm(fd - self.rho_dot(theta)))

    def grid(self, n: int) -> np.ndarray:
        return np.linspace(self.interval[0], self.interval[1], n)

    def pushforward(self, phi: QuantumChannel) -> "StateFamily":
        deriv = None if self.derivative is None else (lambda th: phi.apply(self.derivative(th)))
        return StateFamily(self.interval, lambda th: phi.apply(self.state(th)), deriv,
                           f"{phi!r}({self.label})", self.fd_step)


@dataclass(frozen=True)
class MultiFamily:
    """theta in R^n -> rho_theta with partial derivatives."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    state: Callable[[np.ndarray], np.ndarray]
    partials: Callable[[np.ndarray], Sequence[np.ndarray]] | None = None
    label: str = "multi-family"
    fd_step: float = FD_STEP

    @property
    def n_params(self) -> int:
        return len(self.lower)

    def rho(self, theta) -> DensityOperator:
        return DensityOperator(self.state(np.asarray(theta, dtype=float)))

    def rho_partials(self, theta) -> list[np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        if self.partials is not None:
            parts = [np.asarray(P, dtype=complex) for P in self.partials(theta)]
        else:
            h = self.fd_step
            parts = []
            for i in range(self.n_params):
                e = np.zeros(self.n_params)
                e[i] = h
                parts.append((np.asarray(self.state(theta + e))
                              - np.asarray(self.state(theta - e))) / (2 * h))
        return [(P + dag(P)) / 2 for P in parts]

    def pushforward(self, phi: QuantumChannel) -> "MultiFamily":
        parts = None
        if self.partials is not None:
            parts = lambda th: [phi.apply(P) for P in self.partials(th)]  # noqa: E731
        return MultiFamily(self.lower, self.upper, lambda th: phi.apply(self.state(th)),
                           parts, f"{phi!r}({self.label})", self.fd_step)

    def restrict(self, index: int, base) -> StateFamily:
        """One-parameter slice through ``base`` along coordinate ``index``."""
        base = np.asarray(base, dtype=float)

        def at(t):
            th = base.copy()
            th[index] = t
            return th

        deriv = None if self.partials is None else (lambda t: self.partials(at(t))[index])
        return StateFamily((self.lower[index], self.upper[index]),
                           lambda t: self.state(at(t)), deriv, self.label, self.fd_step)


# ---------------------------------------------------------------------------
# Fisher information


def qfi(m: MonotoneMetric | str, fam: StateFamily, theta: float) -> float:
    return metric_eval(parse_metric(m), fam.rho(theta), fam.rho_dot(theta))


def qfi_matrix(m: MonotoneMetric | str, fam: MultiFamily, theta) -> np.ndarray:
    m = parse_metric(m)
    rho = fam.rho(theta)
    parts = fam.rho_partials(theta)
    n = len(parts)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = metric_eval(m, rho, parts[i], parts[j]).real
    return out


def sld_operator(rho, A) -> np.ndarray:
    """L with A = (L rho + rho L) / 2."""
    rho = as_density(rho)
    rho.require_full_rank()
    lam = rho.eigenvalues
    E = rho.eig
    return E.from_eigenbasis(2 * E.to_eigenbasis(A) / (lam[:, None] + lam[None, :]))


def purity_of_coherence_forms(rho, L) -> tuple[float, float]:
    """tr(rho^-1 L rho^2 L) - tr(rho L^2) and -tr(rho^-1 [rho, L]^2)."""
    rho = as_density(rho)
    rho.require_full_rank()
    R, L = rho.matrix, np.asarray(L)
    Rinv = rho.power(-1)
    first = np.trace(Rinv @ L @ R @ R @ L) - np.trace(R @ L @ L)
    C = commutator(R, L)
    second = -np.trace(Rinv @ C @ C)
    return float(first.real), float(second.real)


def purity_of_coherence(rho, L) -> float:
    return purity_of_coherence_forms(rho, L)[1]


class GapCheck(NamedTuple):
    gap: float
    quarter_purity: float
    residual: float


def rld_sld_gap_check(fam: StateFamily, theta: float) -> GapCheck:
    """RLD minus SLD information against a quarter of the purity of coherence of the SLD."""
    rho = fam.rho(theta)
    A = fam.rho_dot(theta)
    gap = metric_eval(RLD, rho, A) - metric_eval(SLD, rho, A)
    quarter = purity_of_coherence(rho, sld_operator(rho, A)) / 4
    return GapCheck(gap, quarter, abs(gap - quarter))


# ---------------------------------------------------------------------------
# Family builders


def make_unitary_orbit(rho, H, interval: tuple[float, float] = (0.0, 1.0)) -> StateFamily:
    """t -> exp(-iHt) rho exp(iHt), derivative -i[H, rho_t]."""
    R = as_density(rho).matrix
    H = np.asarray(H, dtype=complex)

    def state(t):
        U = hamiltonian_unitary(H, t)
        return U @ R @ dag(U)

    return StateFamily(interval, state, lambda t: -1j * commutator(H, state(t)), "unitary-orbit")


def make_linear_interpolation(rho, sigma) -> StateFamily:
    """t -> t sigma + (1 - t) rho on [0, 1]."""
    R, S = as_density(rho).matrix, as_density(sigma).matrix
    return StateFamily((0.0, 1.0), lambda t: t * S + (1 - t) * R, lambda t: S - R,
                       "linear-interpolation")


def random_family(dim: int, rng, mix: float = 0.3, h_scale: float = 1.0,
                  interval: tuple[float, float] = (0.0, 1.0)) -> StateFamily:
    """exp(-iH th)((1 - th) rho0 + th rho1) exp(iH th) with exact derivative.

    ``H`` has spectral norm ``h_scale`` so central differences stay accurate.
    """
    rng = np.random.default_rng(rng)
    r0 = random_density(dim, rng, mix=mix)
    r1 = random_density(dim, rng, mix=mix)
    H = random_hermitian(dim, rng)
    H *= h_scale / np.linalg.norm(H, 2)

    def mixed(th):
        return (1 - th) * r0 + th * r1

    def state(th):
        U = hamiltonian_unitary(H, th)
        return U @ mixed(th) @ dag(U)

    def derivative(th):
        U = hamiltonian_unitary(H, th)
        return U @ (r1 - r0) @ dag(U) - 1j * commutator(H, state(th))

    return StateFamily(interval, state, derivative, f"random-{dim}")


def random_multi_family(dim: int, n_params: int, rng, mix: float = 0.3,
                        radius: float = 0.1) -> MultiFamily:
    """rho0 + sum_i theta_i D_i with traceless D_i scaled to keep the box positive."""
    rng = np.random.default_rng(rng)
    r0 = random_density(dim, rng, mix=mix)
    lam_min = np.linalg.eigvalsh(r0)[0]
    Ds = []
    for _ in range(n_params):
        D = random_hermitian(dim, rng, traceless=True)
        Ds.append(D * (lam_min / (2 * n_params * radius * np.linalg.norm(D, 2))))
    lower, upper = (-radius,) * n_params, (radius,) * n_params
    return MultiFamily(lower, upper, lambda th: r0 + sum(t * D for t, D in zip(th, Ds)),
                       lambda th: list(Ds), f"random-multi-{dim}x{n_params}")


# ---------------------------------------------------------------------------
# Qubit counter-example


def affine_profile(c0: float, c1: float):
    """p(theta) = c0 + c1 theta together with its derivative."""
    return (lambda th: c0 + c1 * th), (lambda th: c1 + 0.0 * th)


@dataclass(frozen=True)
class CounterexampleFamily(StateFamily):
    """[[p, eps r], [eps r, 1 - p]] with r' / r = p' (1 - 2p) / (2 p (1 - p)) and r(a) = 1."""

    p: Callable[[float], float] = field(default=None, repr=False)
    p_dot: Callable[[float], float] = field(default=None, repr=False)
    epsilon: float = 0.0
    epsilon_bound: float = 0.0

    def r(self, theta: float) -> float:
        return _r_value(self.p, self.p_dot, self.interval[0], theta)

    def sld_diagonal(self, theta: float) -> np.ndarray:
        """The SLD diag(p'/p, -p'/(1 - p)) shared by every member of the family."""
        p, pd = self.p(theta), self.p_dot(theta)
        return np.diag([pd / p, -pd / (1 - p)]).astype(complex)


def _log_r_rate(p, p_dot, s):
    ps = p(s)
    return p_dot(s) * (1 - 2 * ps) / (2 * ps * (1 - ps))


def _r_value(p, p_dot, a, theta) -> float:
    return math.exp(adaptive_integral(lambda s: _log_r_rate(p, p_dot, s), a, theta))


def make_counterexample_family(p=None, p_dot=None, interval: tuple[float, float] = (0.0, 1.0),
                               epsilon: float | None = None, epsilon_fraction: float = 0.9,
                               check_points: int = 1001) -> CounterexampleFamily:
    """Full-rank qubit family whose SLD is always diagonal.

    ``epsilon=None`` picks ``epsilon_fraction`` times the supremum allowed by
    eps^2 < min p(1 - p) / r^2, estimated on ``check_points`` grid points.
    """
    if p is None:
        p, p_dot = affine_profile(0.25, 0.25)
    if p_dot is None:
        raise FamilyError("p_dot is required with a custom p")
    a, b = interval
    grid = np.linspace(a, b, check_points)
    pv = np.array([p(t) for t in grid], dtype=float)
    pd = np.array([p_dot(t) for t in grid], dtype=float)
    if np.any(pv <= 0) or np.any(pv >= 1):
        raise FamilyError("p must map the interval into (0, 1)")
    if np.any(np.abs(pd) <= 1e-12):
        raise FamilyError("p_dot must not vanish on the interval")
    r = np.array([_r_value(p, p_dot, a, t) for t in grid])
    bound = float(np.sqrt(np.min(pv * (1 - pv) / r ** 2)))
    if epsilon is None:
        epsilon = epsilon_fraction * bound
    if not 0 <= epsilon < bound:
        raise FamilyError(f"epsilon {epsilon} violates the bound {bound}")
    eps = float(epsilon)

    def state(th):
        pt, rt = p(th), _r_value(p, p_dot, a, th)
        return np.array([[pt, eps * rt], [eps * rt, 1 - pt]], dtype=complex)

    def derivative(th):
        pdt = p_dot(th)
        rt = _r_value(p, p_dot, a, th)
        rd = rt * _log_r_rate(p, p_dot, th)
        return np.array([[pdt, eps * rd], [eps * rd, -pdt]], dtype=complex)

    return CounterexampleFamily(interval, state, derivative, "counterexample",
                                p=p, p_dot=p_dot, epsilon=eps, epsilon_bound=bound)


@dataclass
class CounterexampleReport:
    grid: np.ndarray
    sld_gap: np.ndarray
    rld_gap: np.ndarray
    bkm_gap: np.ndarray
    commutator_norm: np.ndarray
    recovery_residual: dict[float, np.ndarray]
    anchor: float

    @property
    def max_abs_sld_gap(self) -> float:
        return float(np.max(np.abs(self.sld_gap)))

    def min_rld_gap(self, comm_tol: float = 1e-6) -> float:
        mask = self.commutator_norm > comm_tol
        return float(np.min(self.rld_gap[mask])) if mask.any() else 0.0

    def min_bkm_gap(self, comm_tol: float = 1e-6) -> float:
        mask = self.commutator_norm > comm_tol
        return float(np.min(self.bkm_gap[mask])) if mask.any() else 0.0

    @property
    def recovery_margin(self) -> float:
        """min over t of the worst recovery residual on the grid.

        The anchor state is always recovered, so the per-t grid maximum is the
        quantity that certifies non-recoverability of the whole family.
        """
        return float(min(np.max(v) for v in self.recovery_residual.values()))


def counterexample_verify(fam: StateFamily, grid: int | Sequence[float] = 101,
                          ts: Sequence[float] = (0.0, 1.0, -1.0),
                          anchor: float | None = None) -> CounterexampleReport:
    """Compare the family with its standard-basis pinching under SLD, RLD and BKM."""
    from .metrics import BKM

    thetas = fam.grid(grid) if isinstance(grid, (int, np.integer)) else np.asarray(grid, float)
    dim = fam.rho(thetas[0]).dim
    pinch = pinching_channel(np.diag(np.arange(dim, dtype=float)))
    out = fam.pushforward(pinch)
    anchor = 0.5 * sum(fam.interval) if anchor is None else anchor
    rho_o = fam.rho(anchor)
    sld, rld, bkm, comm = [], [], [], []
    residual = {float(t): [] for t in ts}
    for th in thetas:
        rho, A = fam.rho(th), fam.rho_dot(th)
        rho_out, A_out = out.rho(th), out.rho_dot(th)
        sld.append(metric_eval(SLD, rho, A) - metric_eval(SLD, rho_out, A_out))
        rld.append(metric_eval(RLD, rho, A) - metric_eval(RLD, rho_out, A_out))
        bkm.append(metric_eval(BKM, rho, A) - metric_eval(BKM, rho_out, A_out))
        comm.append(np.linalg.norm(commutator(rho.matrix, sld_operator(rho, A)), 2))
        for t in ts:
            rec = rotated_petz_apply(rho_o, pinch, rho_out.matrix, t)
            residual[float(t)].append(trace_norm(rho.matrix - rec))
    return CounterexampleReport(thetas, np.array(sld), np.array(rld), np.array(bkm),
                                np.array(comm), {k: np.array(v) for k, v in residual.items()},
                                anchor)


def family_from_config(cfg: dict) -> StateFamily:
    """Build a family from a CLI config entry."""
    from .operators import operator_from_json

    kind = cfg.get("kind")
    if kind == "counterexample":
        prof = str(cfg.get("p", "affine:0.25,0.25"))
        name, _, args = prof.partition(":")
        if name != "affine":
            raise FamilyError(f"unknown profile {prof!r}")
        try:
            c0, c1 = (float(x) for x in args.split(","))
        except ValueError:
            raise FamilyError(f"bad affine profile {prof!r}") from None
        p, pd = affine_profile(c0, c1)
        interval = tuple(float(x) for x in cfg.get("interval", (0.0, 1.0)))
        eps = cfg.get("epsilon", "auto:0.9")
        if isinstance(eps, str):
            label, _, frac = eps.partition(":")
            if label != "auto":
                raise FamilyError(f"bad epsilon spec {eps!r}")
            return make_counterexample_family(p, pd, interval, None, float(frac or 0.9))
        return make_counterexample_family(p, pd, interval, float(eps))
    if kind == "unitary-orbit":
        try:
            rho = operator_from_json(cfg["rho"])
            H = operator_from_json(cfg["H"])
        except (KeyError, OperatorError) as exc:
            raise FamilyError(f"bad unitary-orbit config: {exc}") from None
        interval = tuple(float(x) for x in cfg.get("interval", (0.0, 1.0)))
        return make_unitary_orbit(rho, H, interval)
    raise FamilyError(f"unknown family kind {kind!r}")
