"""Recoverability bounds and sufficiency tests as executable checks.

Every inequality is returned as a :class:`BoundReport`, which stores both
sides, the intermediate quantities and the verdict, so sweeps can be audited
after the fact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .channels import QuantumChannel, petz_map, rotated_petz_apply
from .divergences import chi2, dmax, relative_entropy
from .families import StateFamily, qfi
from .metrics import (
    BKM,
    SYMMETRIC_INVERSE,
    MonotoneMetric,
    alpha_metric,
    j_apply,
    j_inverse_apply,
    metric_eval,
    parse_metric,
)
from .operators import as_density, dag, trace_norm
from .quadrature import BetaQuadrature, trapezoid

BOUND_TOL = 1e-9
DERIVED_TOL_FLOOR = 1e-8


class AnalysisError(ValueError):
    pass


@dataclass
class BoundReport:
    """One inequality check.

    ``orientation`` is ``"le"`` when the claim is lhs <= rhs and ``"ge"`` for
    lhs >= rhs; either way ``tolerance`` is the slack granted to roundoff.
    """

    check: str
    lhs: float
    rhs: float
    orientation: str = "le"
    components: dict[str, float] = field(default_factory=dict)
    tolerance: float = BOUND_TOL

    @property
    def margin(self) -> float:
        """Distance to violation; negative means violated beyond the tolerance."""
        diff = self.rhs - self.lhs if self.orientation == "le" else self.lhs - self.rhs
        return float(diff + self.tolerance)

    @property
    def satisfied(self) -> bool:
        return bool(self.margin >= 0)

    def to_json(self) -> dict:
        return {"check": self.check, "lhs": float(self.lhs), "rhs": float(self.rhs),
                "orientation": self.orientation,
                "components": {k: float(v) for k, v in self.components.items()},
                "satisfied": self.satisfied, "tolerance": self.tolerance}


# ---------------------------------------------------------------------------
# Lemma-level quantities


class RecoveryDefect(NamedTuple):
    defect: np.ndarray
    gap: float
    middle: float
    lower: float


def metric_gap(m: MonotoneMetric | str, rho, A, phi: QuantumChannel) -> float:
    """gamma_rho(A) - gamma_Phi(rho)(Phi(A))."""
    m = parse_metric(m)
    return metric_eval(m, rho, A) - metric_eval(m, phi.state(rho), phi.apply(A))


def recovery_defect(m: MonotoneMetric | str, rho, A, phi: QuantumChannel) -> RecoveryDefect:
    """D = A - J_rho^-1 Phi* J_Phi(rho) Phi(A), with gap >= gamma_rho(D) >= ||D||_1^2."""
    m = parse_metric(m)
    rho = as_density(rho)
    out = phi.state(rho)
    A = np.asarray(A)
    back = j_inverse_apply(m, rho, phi.adjoint_apply(j_apply(m, out, phi.apply(A))))
    D = A - back
    return RecoveryDefect(D, metric_gap(m, rho, A, phi), metric_eval(m, rho, D),
                          trace_norm(D) ** 2)


def _h_terms(rho, A, phi: QuantumChannel) -> tuple[float, float]:
    rho = as_density(rho)
    out = phi.state(rho)
    A = np.asarray(A)
    B = phi.apply(A)
    R, Ri = rho.matrix, rho.power(-1)
    S, Si = out.matrix, out.power(-1)
    h1 = math.sqrt(max(np.trace(dag(A) @ Ri @ A).real, 0.0))
    h2a = math.sqrt(max(np.trace(Ri @ Ri @ dag(A) @ R @ A).real, 0.0))
    h2b = math.sqrt(max(np.trace(Si @ Si @ dag(B) @ S @ B).real, 0.0))
    return h1, (h2a + h2b) / 2


def _rotated_residual(rho, A, phi: QuantumChannel, t: float) -> float:
    return trace_norm(np.asarray(A) - rotated_petz_apply(rho, phi, phi.apply(A), t))


@dataclass(frozen=True)
class WeightChoice:
    """Weight w with W_ab = int_a^b w(s)/s ds and 1/w <= C nu on [a, b]."""

    name: str
    W: float
    C: float


def default_weight(m: MonotoneMetric, a: float, b: float, grid: int = 4001) -> WeightChoice:
    """BKM: w = 1 + s, C = 1.  alpha: w = s^a, C = pi / sin(pi a).  Otherwise w = s.

    The alpha choice pairs with the density sin(pi a)/pi s^-a, which
    represents the same metric on Hermitian arguments.  For other metrics C is
    the maximum of 1/(s nu(s)) on a log grid over [a, b], inflated by 0.1%.
    """
    if not 0 < a <= b:
        raise AnalysisError("need 0 < a <= b")
    if m.name == "bkm":
        return WeightChoice("1+s", math.log(b / a) + b - a, 1.0)
    if m.name in ("alpha", "symmetric_inverse"):
        al = 0.5 if m.param is None else m.param
        return WeightChoice("s^alpha", (b ** al - a ** al) / al, math.pi / math.sin(math.pi * al))
    if m.nu is None:
        raise AnalysisError(f"metric {m.label} has no integral representation")
    s = np.geomspace(a, b, grid)
    C = float(np.max(1.0 / (s * m.nu(s)))) * 1.001
    return WeightChoice("s", math.log(b / a), C)


def lemma_bound_check(m: MonotoneMetric | str, rho, A, phi: QuantumChannel, t: float = 0.0,
                      a: float = 1e-3, b: float = 1e3,
                      weight: WeightChoice | None = None) -> BoundReport:
    """||A - R^t(Phi(A))||_1 <= cosh(pi t)/pi (4 sqrt(a) h1 + 4/sqrt(b) h2 + sqrt(C W) h3)."""
    m = parse_metric(m)
    if not m.regular:
        raise AnalysisError("the three-term bound needs a regular metric")
    weight = weight or default_weight(m, a, b)
    h1, h2 = _h_terms(rho, A, phi)
    gap = metric_gap(m, rho, A, phi)
    h3 = math.sqrt(max(gap, 0.0))
    lhs = _rotated_residual(rho, A, phi, t)
    rhs = math.cosh(math.pi * t) / math.pi * (
        4 * math.sqrt(a) * h1 + 4 / math.sqrt(b) * h2 + math.sqrt(weight.C * weight.W) * h3)
    return BoundReport("lemma_bound_check", lhs, rhs, "le",
                       {"h1": h1, "h2": h2, "h3": h3, "gap": gap, "W_ab": weight.W,
                        "C_ab": weight.C, "a": a, "b": b, "t": t})


def bkm_bound_check(rho, A, phi: QuantumChannel, t: float = 0.0,
                    epsilon: float | Sequence[float] = 0.25) -> BoundReport:
    """BKM gap >= sup_eps (pi/cosh(pi t) * err / K(eps))^(4/(1-2 eps))."""
    eps_list = [float(epsilon)] if np.isscalar(epsilon) else [float(e) for e in epsilon]
    if any(not 0 < e < 0.5 for e in eps_list):
        raise AnalysisError("epsilon must lie in (0, 1/2)")
    h1, h2 = _h_terms(rho, A, phi)
    gap = metric_gap(BKM, rho, A, phi)
    err = _rotated_residual(rho, A, phi, t)
    best, best_eps, best_K = -math.inf, eps_list[0], math.nan
    for e in eps_list:
        K = 4 * h1 + 4 * h2 + 1 + (e * math.e) ** -0.5
        val = (math.pi / math.cosh(math.pi * t) * err / K) ** (4 / (1 - 2 * e))
        if val > best:
            best, best_eps, best_K = val, e, K
    return BoundReport("bkm_bound_check", gap, best, "ge",
                       {"h1": h1, "h2": h2, "K": best_K, "epsilon": best_eps,
                        "recovery_error": err, "t": t})


def alpha_bound_check(rho, A, phi: QuantumChannel, t: float = 0.0,
                      alpha: float = 0.25) -> BoundReport:
    """alpha-metric gap >= (pi/cosh(pi t) * err / K)^(2/alpha), alpha in (0, 1/2)."""
    if not 0 < alpha < 0.5:
        raise AnalysisError("alpha must lie in (0, 1/2)")
    h1, h2 = _h_terms(rho, A, phi)
    gap = metric_gap(alpha_metric(alpha), rho, A, phi)
    err = _rotated_residual(rho, A, phi, t)
    K = 4 * h1 + 4 * h2 + math.sqrt(math.pi / (alpha * math.sin(math.pi * alpha)))
    rhs = (math.pi / math.cosh(math.pi * t) * err / K) ** (2 / alpha)
    return BoundReport("alpha_bound_check", gap, rhs, "ge",
                       {"h1": h1, "h2": h2, "K": K, "alpha": alpha,
                        "recovery_error": err, "t": t})


# ---------------------------------------------------------------------------
# Pairs


def chi2_gap(m: MonotoneMetric | str, rho, sigma, phi: QuantumChannel) -> float:
    return chi2(m, rho, sigma) - chi2(m, phi.state(rho), phi.state(sigma))


def chi_half_recovery_check(rho, sigma, phi: QuantumChannel) -> BoundReport:
    """chi2_{1/2}(rho, sigma) - chi2_{1/2}(Phi rho, Phi sigma) >= ||rho - R_sigma(Phi rho)||_1^2."""
    rho, sigma = as_density(rho), as_density(sigma)
    gap = chi2_gap(SYMMETRIC_INVERSE, rho, sigma, phi)
    rec = petz_map(sigma, phi).apply(phi.apply(rho.matrix))
    err = trace_norm(rho.matrix - rec)
    return BoundReport("chi_half_recovery_check", gap, err ** 2, "ge",
                       {"recovery_error": err})


def derived_tolerance(chi_half_gap: float) -> float:
    """Recovery tolerance implied by the chi2_{1/2} bound, floored against roundoff."""
    return max(math.sqrt(max(chi_half_gap, 0.0)), DERIVED_TOL_FLOOR)


@dataclass
class SufficiencyVerdict:
    sufficient: bool
    gap: float
    tol: float
    chi_half_gap: float
    derived_tol: float
    residuals: dict[float, float]
    chi_half_report: BoundReport | None = None

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    @property
    def recovered(self) -> bool:
        return self.max_residual <= self.derived_tol

    @property
    def consistent(self) -> bool:
        """Sufficient instances recover; insufficient ones have a positive certified error."""
        if self.sufficient:
            return self.recovered
        return self.certified_error > 0 and bool(self.chi_half_report.satisfied)

    @property
    def certified_error(self) -> float:
        """Petz recovery error, bounded above by sqrt of the chi2_{1/2} gap."""
        return self.residuals.get(0.0, self.max_residual)

    @property
    def label(self) -> str:
        return "SUFFICIENT" if self.sufficient else "NOT_SUFFICIENT"


def pair_sufficiency_test(m: MonotoneMetric | str, rho, sigma, phi: QuantumChannel,
                          tol: float = 1e-8,
                          ts: Sequence[float] = (0.0, 1.0, -1.0, 2.0, -2.0)) -> SufficiencyVerdict:
    """Is Phi sufficient for {rho, sigma}?  Judged by the chi2 gap of a regular metric."""
    m = parse_metric(m)
    if not m.regular:
        raise AnalysisError("sufficiency is characterized by regular metrics only")
    rho, sigma = as_density(rho), as_density(sigma)
    gap = chi2_gap(m, rho, sigma, phi)
    half = chi_half_recovery_check(rho, sigma, phi)
    out = phi.apply(rho.matrix)
    residuals = {float(t): trace_norm(rho.matrix - rotated_petz_apply(sigma, phi, out, t))
                 for t in ts}
    return SufficiencyVerdict(bool(gap < tol), gap, tol, half.lhs, derived_tolerance(half.lhs),
                              residuals, half)


# ---------------------------------------------------------------------------
# Families


@dataclass
class FamilyVerdict:
    sufficient: bool
    max_gap: float
    tol: float
    grid: np.ndarray
    gaps: np.ndarray
    anchor: float
    residuals: dict[float, np.ndarray]
    derived_tol: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(max(np.max(v) for v in self.residuals.values()))

    @property
    def recovered(self) -> bool:
        return all(bool(np.all(v <= self.derived_tol)) for v in self.residuals.values())

    @property
    def label(self) -> str:
        return "SUFFICIENT" if self.sufficient else "NOT_SUFFICIENT"


def family_sufficiency_test(m: MonotoneMetric | str, fam: StateFamily, phi: QuantumChannel,
                            grid: int | Sequence[float] = 21, tol: float = 1e-8,
                            ts: Sequence[float] = (0.0, 1.0),
                            anchor: float | None = None) -> FamilyVerdict:
    """QFI gaps over the grid, then rotated-Petz recovery of every member from one anchor."""
    m = parse_metric(m)
    if not m.regular:
        raise AnalysisError("sufficiency is characterized by regular metrics only")
    thetas = fam.grid(grid) if isinstance(grid, (int, np.integer)) else np.asarray(grid, float)
    out_fam = fam.pushforward(phi)
    gaps = np.array([qfi(m, fam, th) - qfi(m, out_fam, th) for th in thetas])
    anchor = 0.5 * sum(fam.interval) if anchor is None else anchor
    rho_o = fam.rho(anchor)
    residuals = {float(t): [] for t in ts}
    dtol = []
    for th in thetas:
        rho = fam.rho(th)
        out = phi.apply(rho.matrix)
        for t in ts:
            rec = rotated_petz_apply(rho_o, phi, out, t)
            residuals[float(t)].append(trace_norm(rho.matrix - rec))
        dtol.append(derived_tolerance(chi2_gap(SYMMETRIC_INVERSE, rho, rho_o, phi)))
    max_gap = float(np.max(gaps))
    return FamilyVerdict(bool(max_gap < tol), max_gap, tol, thetas, gaps, anchor,
                         {k: np.array(v) for k, v in residuals.items()}, np.array(dtol))


class LogDerivative(NamedTuple):
    direct: np.ndarray
    quadrature: np.ndarray
    residual: float


def log_derivative(fam: StateFamily, theta: float,
                   quad: BetaQuadrature | None = None) -> LogDerivative:
    """d/dtheta log rho_theta two ways: divided differences and the beta-measure integral."""
    quad = quad or BetaQuadrature()
    rho = fam.rho(theta)
    rho.require_full_rank()
    A = fam.rho_dot(theta)
    lam = rho.eigenvalues
    E = rho.eig
    At = E.to_eigenbasis(A)
    li, lj = lam[:, None], lam[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        dd = (np.log(li) - np.log(lj)) / (li - lj)
    close = np.abs(li - lj) <= 1e-8 * np.maximum(li, lj)
    dd = np.where(close, 2.0 / (li + lj), dd)
    direct = E.from_eigenbasis(dd * At)

    ts, ws = quad.rule()
    acc = np.zeros_like(A, dtype=complex)
    for t, w in zip(ts, ws):
        acc += w * (rho.power(-(1 + 1j * t) / 2) @ A @ rho.power(-(1 - 1j * t) / 2))
    return LogDerivative(direct, acc, float(np.linalg.norm(direct - acc)))


def entropy_gap_integral_check(fam: StateFamily, phi: QuantumChannel, grid: int = 101,
                               lam_floor: float | None = None,
                               tolerance: float = 1e-9) -> BoundReport:
    """D(rho_b||rho_a) - D(Phi rho_b||Phi rho_a) <= int e^{Dmax(rho_b||rho_th)/2} sqrt(BKM gap).

    The right side is a trapezoid sum; ``richardson_rel_change`` compares it
    with the same sum on every other grid point.  With ``lam_floor`` the
    cruder lambda^{-1/2} int sqrt(gap) form is evaluated as well and must also
    hold.
    """
    if grid < 3 or grid % 2 == 0:
        raise AnalysisError("grid must be odd and >= 3 for the Richardson comparison")
    a, b = fam.interval
    thetas = fam.grid(grid)
    out_fam = fam.pushforward(phi)
    rho_b = fam.rho(b)
    gaps = np.array([qfi(BKM, fam, th) - qfi(BKM, out_fam, th) for th in thetas])
    root = np.sqrt(np.maximum(gaps, 0.0))
    weights = np.array([math.exp(0.5 * dmax(rho_b, fam.rho(th))) for th in thetas])
    integrand = weights * root
    rhs = trapezoid(integrand, thetas)
    rhs_half = trapezoid(integrand[::2], thetas[::2])
    rel = abs(rhs - rhs_half) / rhs if rhs > 0 else abs(rhs - rhs_half)
    lhs = relative_entropy(rho_b, fam.rho(a)) - relative_entropy(out_fam.rho(b), out_fam.rho(a))
    comps = {"weighted_rhs": rhs, "rhs_half_grid": rhs_half, "richardson_rel_change": rel,
             "min_gap": float(np.min(gaps)), "grid": grid}
    if lam_floor is not None:
        min_eig = min(fam.rho(th).eigenvalues[0] for th in thetas)
        if min_eig < lam_floor:
            raise AnalysisError(f"family dips below the floor ({min_eig:.3e} < {lam_floor:.3e})")
        floor_rhs = trapezoid(root, thetas) / math.sqrt(lam_floor)
        comps.update({"lambda": lam_floor, "floor_rhs": floor_rhs})
        # both bounds must hold, i.e. lhs <= the smaller one
        rhs = min(rhs, floor_rhs)
    return BoundReport("entropy_gap_integral_check", lhs, rhs, "le", comps, tolerance)
