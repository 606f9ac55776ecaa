"""Coherence under time-translation symmetry: QFI-based measures, skew information,
covariant channels and recovery of the orbit by the time-averaged Petz map."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import (
    QuantumChannel,
    attach_ancilla,
    averaged_petz,
    check_covariance,
    common_period,
    hamiltonian_unitary,
    random_channel,
    twirl_channel,
)
from .metrics import MonotoneMetric, metric_eval, parse_metric
from .operators import (
    HermitianOperator,
    as_density,
    commutator,
    dag,
    random_density,
    random_unitary,
    trace_norm,
)
from .recovery_analysis import chi2_gap, chi_half_recovery_check

COVARIANCE_TOL = 1e-8


class SymmetryError(ValueError):
    pass


@dataclass(frozen=True)
class SymmetrySpec:
    """Input and output Hamiltonians; ``period`` is filled in when the spectra are commensurate."""

    H_in: np.ndarray
    H_out: np.ndarray
    period: float | None = None

    @classmethod
    def build(cls, H_in, H_out=None) -> "SymmetrySpec":
        H_in = HermitianOperator(H_in).matrix
        H_out = H_in if H_out is None else HermitianOperator(H_out).matrix
        return cls(H_in, H_out, common_period(H_in, H_out))

    def period_defect(self) -> float:
        """Distance of exp(-iH T) from a multiple of the identity, maximized over both H."""
        if self.period is None:
            return math.inf
        worst = 0.0
        for H in (self.H_in, self.H_out):
            U = hamiltonian_unitary(H, self.period)
            phase = U[0, 0] / abs(U[0, 0])
            worst = max(worst, float(np.max(np.abs(U - phase * np.eye(len(U))))))
        return worst


def coherence_qfi(m: MonotoneMetric | str, rho, H) -> float:
    """gamma_rho(i[H, rho]): the Fisher information of the orbit exp(-iHt) rho exp(iHt)."""
    rho = as_density(rho)
    return metric_eval(parse_metric(m), rho, 1j * commutator(np.asarray(H), rho.matrix))


def wyd_skew_forms(rho, H, alpha: float) -> tuple[float, float]:
    """tr(rho H^2) - tr(rho^(1-a) H rho^a H) and -1/2 tr([rho^a, H][rho^(1-a), H])."""
    if not 0 < alpha < 1:
        raise SymmetryError("alpha must lie in (0, 1)")
    rho = as_density(rho)
    H = np.asarray(H, dtype=complex)
    Ra, Rb = rho.power(alpha), rho.power(1 - alpha)
    first = np.trace(rho.matrix @ H @ H) - np.trace(Rb @ H @ Ra @ H)
    second = -0.5 * np.trace(commutator(Ra, H) @ commutator(Rb, H))
    return float(first.real), float(second.real)


def wyd_skew(rho, H, alpha: float) -> float:
    return wyd_skew_forms(rho, H, alpha)[1]


def wyd_skew_factor(alpha: float) -> float:
    """W = factor * coherence_qfi(WYD(alpha)); the factor is a(1-a)/2."""
    return alpha * (1 - alpha) / 2


def integer_hamiltonian(dim: int, rng, max_level: int = 3, diagonal: bool = False) -> np.ndarray:
    """Random Hamiltonian with integer spectrum in {0..max_level}, so the period is 2 pi."""
    rng = np.random.default_rng(rng)
    levels = rng.integers(0, max_level + 1, size=dim).astype(float)
    levels[0], levels[-1] = 0.0, float(max(1, levels[-1]))  # at least one nonzero gap
    if diagonal:
        return np.diag(levels).astype(complex)
    U = random_unitary(dim, rng)
    return U @ np.diag(levels) @ dag(U)


def covariant_reversible_channel(H_in, rng, ancilla_dim: int = 2,
                                 max_level: int = 2) -> tuple[QuantumChannel, np.ndarray]:
    """X -> W (X kron tau) W* with tau diagonal in the ancilla energy basis.

    Returns the channel and the output Hamiltonian W (H_in + H_anc) W*, which
    makes the channel covariant for any unitary W.
    """
    rng = np.random.default_rng(rng)
    d = len(H_in)
    H_anc = np.diag(rng.integers(0, max_level + 1, size=ancilla_dim).astype(float))
    p = rng.dirichlet(np.ones(ancilla_dim)) * 0.8 + 0.2 / ancilla_dim
    tau = np.diag(p)
    W = random_unitary(d * ancilla_dim, rng)
    H_tot = np.kron(H_in, np.eye(ancilla_dim)) + np.kron(np.eye(d), H_anc)
    return attach_ancilla(d, tau, W), W @ H_tot @ dag(W)


def covariant_degrading_channel(H_in, H_out, rng, kraus_count: int = 2) -> QuantumChannel:
    """Twirl of a Haar-random channel over the period of (H_in, H_out)."""
    d_in, d_out = len(H_in), len(H_out)
    k = max(kraus_count, -(-d_in // d_out))
    return twirl_channel(random_channel(d_in, d_out, k, rng), H_in, H_out)


@dataclass
class MonotonicityRecord:
    seed: int
    coherence_in: float
    coherence_out: float

    @property
    def satisfied(self) -> bool:
        return self.coherence_in >= self.coherence_out - 1e-9


def coherence_monotonicity_sweep(m: MonotoneMetric | str, phi: QuantumChannel,
                                 spec: SymmetrySpec, seeds: Sequence[int],
                                 mix: float = 0.2) -> list[MonotonicityRecord]:
    """I_H_in(rho) >= I_H_out(Phi(rho)) on random full-rank states."""
    m = parse_metric(m)
    res = check_covariance(phi, spec.H_in, spec.H_out)
    if res > COVARIANCE_TOL:
        raise SymmetryError(f"channel is not covariant (residual {res:.2e})")
    out = []
    for seed in seeds:
        rho = random_density(phi.dim_in, np.random.default_rng(seed), mix=mix)
        out.append(MonotonicityRecord(int(seed), coherence_qfi(m, rho, spec.H_in),
                                      coherence_qfi(m, phi.apply(rho), spec.H_out)))
    return out


@dataclass
class CovariantRecoveryVerdict:
    gap: float
    tol: float
    covariance_residual: float
    orbit_times: np.ndarray
    recovery_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    recovery_covariance: float = math.nan
    chi_gaps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    petz_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))
    chi_half_satisfied: bool = True

    @property
    def reversible(self) -> bool:
        return abs(self.gap) < self.tol

    @property
    def max_recovery_residual(self) -> float:
        return float(np.max(self.recovery_residuals)) if self.recovery_residuals.size else math.nan

    @property
    def certified_error(self) -> float:
        """Largest Petz error on an orbit pair whose regular chi2 gap is positive."""
        if not self.petz_errors.size:
            return 0.0
        live = self.chi_gaps > self.tol
        return float(np.max(self.petz_errors[live])) if live.any() else 0.0


def covariant_recovery_harness(m: MonotoneMetric | str, rho, phi: QuantumChannel,
                               spec: SymmetrySpec, tol: float = 1e-8,
                               orbit_times: Sequence[float] | None = None) -> CovariantRecoveryVerdict:
    """Recover the whole orbit with one covariant map, or certify that no map can.

    When the coherence is preserved, the time-averaged Petz map of rho is
    built (exactly, as the infinite-time average) and applied to Phi(rho_t)
    along the orbit.  Otherwise each orbit pair (rho_t, rho) is checked for a
    positive chi2 gap, and the corresponding Petz error is reported.
    """
    m = parse_metric(m)
    rho = as_density(rho)
    rho.require_full_rank()
    residual = check_covariance(phi, spec.H_in, spec.H_out)
    if residual > COVARIANCE_TOL:
        raise SymmetryError(f"channel is not covariant (residual {residual:.2e})")
    gap = coherence_qfi(m, rho, spec.H_in) - coherence_qfi(m, phi.apply(rho.matrix), spec.H_out)
    if orbit_times is None:
        span = spec.period or 2 * math.pi
        orbit_times = np.linspace(0, span, 9)[:-1]
    ts = np.asarray(orbit_times, dtype=float)
    orbit = []
    for t in ts:
        U = hamiltonian_unitary(spec.H_in, t)
        orbit.append(U @ rho.matrix @ dag(U))
    verdict = CovariantRecoveryVerdict(gap, tol, residual, ts)
    if verdict.reversible:
        R = averaged_petz(rho, phi, spec.H_in, spec.H_out, T=None)
        verdict.recovery_residuals = np.array(
            [trace_norm(r - R.apply(phi.apply(r))) for r in orbit])
        verdict.recovery_covariance = check_covariance(R, spec.H_out, spec.H_in)
    else:
        chis, errs, ok = [], [], True
        for r in orbit:
            chis.append(chi2_gap(m, r, rho, phi))
            rep = chi_half_recovery_check(r, rho, phi)
            errs.append(rep.components["recovery_error"])
            ok = ok and rep.satisfied
        verdict.chi_gaps, verdict.petz_errors = np.array(chis), np.array(errs)
        verdict.chi_half_satisfied = ok
    return verdict
