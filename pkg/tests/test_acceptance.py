"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""
import math

import numpy as np

from qfig.asymmetry import (
    SymmetrySpec,
    covariant_degrading_channel,
    covariant_recovery_harness,
    covariant_reversible_channel,
    integer_hamiltonian,
)
from qfig.channels import (
    contraction_operator,
    random_channel,
    rotated_petz_apply,
    unitary_channel,
    universal_recovery_apply,
)
from qfig.divergences import chi2, relative_entropy
from qfig.families import (
    counterexample_verify,
    make_counterexample_family,
    qfi,
    qfi_matrix,
    random_family,
    random_multi_family,
    rld_sld_gap_check,
)
from qfig.metrics import (
    BKM,
    RLD,
    SLD,
    alpha_metric,
    builtin_metrics,
    metric_eval,
    metric_eval_integral,
    regular_metrics,
    wyd_hessian_reference,
    wyd_metric,
)
from qfig.operators import random_density, random_hermitian, random_unitary, trace_norm
from qfig.quadrature import BetaQuadrature
from qfig.recovery_analysis import (
    alpha_bound_check,
    bkm_bound_check,
    chi2_gap,
    chi_half_recovery_check,
    entropy_gap_integral_check,
    family_sufficiency_test,
    lemma_bound_check,
    log_derivative,
    metric_gap,
    pair_sufficiency_test,
)
from qfig.sampling import random_instance, reversible_channel

DPI_TOL = 1e-9
EPS_GRID = tuple(np.round(np.arange(0.05, 0.46, 0.05), 2))


def lossy_channel(d: int, rng):
    # Kraus rank >= 2 keeps the sample away from unitaries, which are trivially sufficient
    return random_channel(d, d, int(rng.integers(2, 4)), rng)


def rngs(base: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(base).spawn(n)]


def test_01_counterexample(record):
    fam = make_counterexample_family()
    rep = counterexample_verify(fam, grid=101, ts=(0.0, 1.0, -1.0))
    sld, rld, rec = rep.max_abs_sld_gap, rep.min_rld_gap(), rep.recovery_margin
    ok = sld < 1e-8 and rld > 1e-4 and rec > 1e-3
    assert record(1, "counter-example", ok,
                  f"max|SLD gap|={sld:.2e} min RLD gap={rld:.3e} recovery residual={rec:.3e}")


def test_02_gap_identity(record):
    worst = 0.0
    for rng in rngs(2, 100):
        fam = random_family(int(rng.integers(2, 5)), rng)
        for th in rng.uniform(0, 1, size=3):
            worst = max(worst, rld_sld_gap_check(fam, th).residual)
    assert record(2, "RLD-SLD gap identity", worst < 1e-9, f"max residual={worst:.2e}")


def test_03_dpi_sweeps(record):
    metrics = builtin_metrics()
    violations = {"metric_eval": 0, "chi2": 0, "relative_entropy": 0, "qfi": 0, "qfi_matrix": 0}
    for rng in rngs(3, 200):
        inst = random_instance(rng)
        phi = inst.phi
        r_out, s_out, A_out = phi.apply(inst.rho), phi.apply(inst.sigma), phi.apply(inst.A)
        d = inst.rho.shape[0]
        fam = random_family(d, rng)
        out_fam = fam.pushforward(phi)
        mf = random_multi_family(d, 2, rng)
        out_mf = mf.pushforward(phi)
        th, th2 = float(rng.uniform()), rng.uniform(-0.1, 0.1, size=2)
        for m in metrics:
            violations["metric_eval"] += (metric_eval(m, inst.rho, inst.A)
                                          < metric_eval(m, r_out, A_out) - DPI_TOL)
            violations["chi2"] += chi2(m, inst.rho, inst.sigma) < chi2(m, r_out, s_out) - DPI_TOL
            violations["qfi"] += qfi(m, fam, th) < qfi(m, out_fam, th) - DPI_TOL
            F = qfi_matrix(m, mf, th2) - qfi_matrix(m, out_mf, th2)
            violations["qfi_matrix"] += np.linalg.eigvalsh(F)[0] < -DPI_TOL
        violations["relative_entropy"] += (relative_entropy(inst.rho, inst.sigma)
                                           < relative_entropy(r_out, s_out) - DPI_TOL)
    total = sum(violations.values())
    assert record(3, "DPI sweeps", total == 0,
                  ", ".join(f"{k}={v}" for k, v in violations.items()) + " violations / 200")


def test_04_ordering_and_reduction(record):
    order_bad, worst_comm = 0, 0.0
    for rng in rngs(4, 200):
        inst = random_instance(rng)
        lo, hi = metric_eval(SLD, inst.rho, inst.A), metric_eval(RLD, inst.rho, inst.A)
        for m in builtin_metrics():
            v = metric_eval(m, inst.rho, inst.A)
            order_bad += not (lo - 1e-10 * lo <= v <= hi + 1e-10 * hi)
        # commuting pair and tangent
        d = int(rng.integers(2, 6))
        p, q = rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))
        a = rng.standard_normal(d)
        a -= a.mean()
        fisher, chi = np.sum(a ** 2 / p), np.sum((p - q) ** 2 / q)
        for m in builtin_metrics():
            worst_comm = max(worst_comm,
                             abs(metric_eval(m, np.diag(p), np.diag(a)) - fisher) / fisher,
                             abs(chi2(m, np.diag(p), np.diag(q)) - chi) / chi)
    ok = order_bad == 0 and worst_comm < 1e-10
    assert record(4, "ordering and commuting reduction", ok,
                  f"ordering violations={order_bad}, max commuting rel. error={worst_comm:.2e}")


def test_05_integral_vs_spectral(record):
    strict = [BKM, alpha_metric(0.25), alpha_metric(0.5), alpha_metric(0.75)]
    wyds = [wyd_metric(0.3), wyd_metric(0.5), wyd_metric(0.8)]
    worst_strict = worst_wyd = worst_hess = 0.0
    for rng in rngs(5, 50):
        inst = random_instance(rng)
        for m in strict + wyds:
            spec = metric_eval(m, inst.rho, inst.A)
            rel = abs(metric_eval_integral(m, inst.rho, inst.A) - spec) / spec
            if m in strict:
                worst_strict = max(worst_strict, rel)
            else:
                worst_wyd = max(worst_wyd, rel)
    for rng in rngs(55, 10):
        rho = random_density(3, rng, mix=0.3)
        A = random_hermitian(3, rng, traceless=True)
        for a in (0.3, 0.5, 0.8):
            ref = wyd_hessian_reference(rho, A, A, a, h=1e-4)
            worst_hess = max(worst_hess, abs(metric_eval(wyd_metric(a), rho, A) - ref) / ref)
    ok = worst_strict < 1e-6 and worst_wyd < 1e-4 and worst_hess < 1e-5
    assert record(5, "integral vs spectral", ok,
                  f"BKM/alpha rel={worst_strict:.2e}, WYD rel={worst_wyd:.2e}, "
                  f"WYD Hessian oracle rel={worst_hess:.2e}")


def test_06_contraction(record):
    worst_c = worst_m = -math.inf
    for rng in rngs(6, 100):
        inst = random_instance(rng)
        for t in (-2.0, -1.0, 0.0, 1.0, 2.0):
            V = contraction_operator(inst.rho, inst.phi, t)
            worst_c = max(worst_c, V.contraction_excess())
            worst_m = max(worst_m, V.modular_excess())
    ok = worst_c <= 1e-9 and worst_m <= 1e-9
    assert record(6, "contraction invariants", ok,
                  f"max eig(V*V-I)={worst_c:.2e}, max eig(V*D V-D')={worst_m:.2e}")


def test_07_chi_half_bound(record):
    fails, worst = 0, math.inf
    for rng in rngs(7, 200):
        inst = random_instance(rng)
        rep = chi_half_recovery_check(inst.rho, inst.sigma, inst.phi)
        fails += not rep.satisfied
        worst = min(worst, rep.lhs - rep.rhs)
    eq = 0.0
    for rng in rngs(77, 10):
        d = int(rng.integers(2, 5))
        rho, sigma = random_density(d, rng, mix=0.2), random_density(d, rng, mix=0.2)
        for phi in (unitary_channel(random_unitary(d, rng)), reversible_channel(d, rng)):
            rep = chi_half_recovery_check(rho, sigma, phi)
            eq = max(eq, abs(rep.lhs), rep.rhs)
    ok = fails == 0 and eq < 1e-9
    assert record(7, "chi2_1/2 recovery bound", ok,
                  f"violations={fails}/200, min(lhs-rhs)={worst:.2e}, equality branch max={eq:.2e}")


def test_08_lemma_and_corollaries(record):
    fails, n = 0, 0
    for rng in rngs(8, 100):
        inst = random_instance(rng)
        for t in (0.0, 1.0):
            reps = [lemma_bound_check(m, inst.rho, inst.A, inst.phi, t) for m in regular_metrics()]
            reps.append(bkm_bound_check(inst.rho, inst.A, inst.phi, t, EPS_GRID))
            reps += [alpha_bound_check(inst.rho, inst.A, inst.phi, t, a) for a in (0.1, 0.25, 0.4)]
            fails += sum(not r.satisfied for r in reps)
            n += len(reps)
    assert record(8, "three-term lemma and corollaries", fails == 0,
                  f"{fails} violated of {n} reports")


def test_09_equivalence(record):
    worst_gap = worst_res = 0.0
    for rng in rngs(9, 20):
        d = int(rng.integers(2, 4))
        rho, sigma = random_density(d, rng, mix=0.2), random_density(d, rng, mix=0.2)
        A = random_hermitian(d, rng, traceless=True)
        phi = reversible_channel(d, rng)
        for m in regular_metrics():
            worst_gap = max(worst_gap, abs(chi2_gap(m, rho, sigma, phi)),
                            abs(metric_gap(m, rho, A, phi)))
        out = phi.apply(rho)
        for t in (0.0, 1.0, -1.0, 2.0, -2.0):
            worst_res = max(worst_res, trace_norm(rho - rotated_petz_apply(sigma, phi, out, t)))
    min_gap, min_cert = math.inf, math.inf
    for rng in rngs(99, 20):
        d = int(rng.integers(2, 5))
        rho, sigma = random_density(d, rng, mix=0.2), random_density(d, rng, mix=0.2)
        phi = lossy_channel(d, rng)
        for m in regular_metrics():
            min_gap = min(min_gap, chi2_gap(m, rho, sigma, phi))
        v = pair_sufficiency_test(BKM, rho, sigma, phi)
        min_cert = min(min_cert, v.certified_error if v.consistent else -1.0)
    ok = worst_gap < 1e-8 and worst_res < 1e-7 and min_gap > 0 and min_cert > 0
    assert record(9, "sufficiency equivalence", ok,
                  f"reversible: max gap={worst_gap:.2e}, max residual={worst_res:.2e}; "
                  f"non-sufficient: min gap={min_gap:.2e}, min certified error={min_cert:.2e}")


def test_10_family_sufficiency(record):
    worst_rec = 0.0
    for rng in rngs(10, 20):
        d = int(rng.integers(2, 4))
        fam = random_family(d, rng)
        v = family_sufficiency_test(BKM, fam, reversible_channel(d, rng), grid=21)
        worst_rec = max(worst_rec, v.max_residual if v.sufficient else math.inf)
    worst_ld = 0.0
    for rng in rngs(100, 50):
        fam = random_family(int(rng.integers(2, 5)), rng)
        worst_ld = max(worst_ld, log_derivative(fam, float(rng.uniform())).residual)
    ok = worst_rec < 1e-7 and worst_ld < 1e-6
    assert record(10, "family sufficiency and log-derivative", ok,
                  f"max anchor recovery residual={worst_rec:.2e}, "
                  f"max log-derivative residual={worst_ld:.2e}")


def test_11_entropy_gap_integral(record):
    fails = 0
    worst_rich = 0.0
    floors = 0
    for rng in rngs(11, 100):
        d = int(rng.integers(2, 4))
        fam = random_family(d, rng, mix=0.4)
        phi = lossy_channel(d, rng)
        lam = min(fam.rho(th).eigenvalues[0] for th in fam.grid(101))
        rep = entropy_gap_integral_check(fam, phi, grid=101, lam_floor=0.99 * lam)
        floors += 1
        fails += not rep.satisfied
        worst_rich = max(worst_rich, rep.components["richardson_rel_change"])
    ok = fails == 0 and worst_rich < 0.01
    assert record(11, "entropy-gap integral bound", ok,
                  f"violations={fails}/100 (floor variant on {floors}), "
                  f"max Richardson change={worst_rich:.2e}")


def test_12_bkm_hessian(record):
    h = 1e-3
    worst = 0.0
    for rng in rngs(12, 50):
        fam = random_family(int(rng.integers(2, 5)), rng, mix=0.3)
        th = float(rng.uniform(0.2, 0.8))

        def D(a, b):
            return relative_entropy(fam.rho(a), fam.rho(b))

        fd = -(D(th + h, th + h) - D(th + h, th - h) - D(th - h, th + h)
               + D(th - h, th - h)) / (4 * h * h)
        bkm = metric_eval(BKM, fam.rho(th), fam.rho_dot(th))
        worst = max(worst, abs(fd - bkm) / bkm)
    assert record(12, "BKM Hessian identity", worst < 1e-4, f"max rel. error={worst:.2e}")


def test_13_asymmetry(record):
    worst_gap = worst_rec = worst_cov = 0.0
    for rng in rngs(13, 10):
        d = int(rng.integers(2, 4))
        H_in = integer_hamiltonian(d, rng)
        phi, H_out = covariant_reversible_channel(H_in, rng)
        rho = random_density(d, rng, mix=0.2)
        v = covariant_recovery_harness(BKM, rho, phi, SymmetrySpec.build(H_in, H_out))
        worst_gap = max(worst_gap, abs(v.gap))
        worst_rec = max(worst_rec, v.max_recovery_residual if v.reversible else math.inf)
        worst_cov = max(worst_cov, v.recovery_covariance if v.reversible else math.inf)
    min_gap, min_cert = math.inf, math.inf
    for rng in rngs(133, 10):
        d = int(rng.integers(2, 4))
        H_in, H_out = integer_hamiltonian(d, rng), integer_hamiltonian(d, rng)
        phi = covariant_degrading_channel(H_in, H_out, rng)
        rho = random_density(d, rng, mix=0.2)
        v = covariant_recovery_harness(BKM, rho, phi, SymmetrySpec.build(H_in, H_out))
        min_gap = min(min_gap, v.gap)
        min_cert = min(min_cert, v.certified_error if v.chi_half_satisfied else -1.0)
    ok = worst_gap < 1e-8 and worst_rec < 1e-6 and worst_cov < 1e-6 and min_gap > 0 \
        and min_cert > 0
    assert record(13, "asymmetry recovery", ok,
                  f"reversible: max gap={worst_gap:.2e}, max residual={worst_rec:.2e}, "
                  f"max covariance={worst_cov:.2e}; degrading: min gap={min_gap:.2e}, "
                  f"min certified error={min_cert:.2e}")


def test_14_universal_map(record):
    _, w = BetaQuadrature().rule()
    wsum = abs(w.sum() - 1)
    worst_rec, monotone = 0.0, True
    for rng in rngs(14, 20):
        inst = random_instance(rng)
        target = inst.phi.apply(inst.sigma)
        errs = [trace_norm(universal_recovery_apply(inst.sigma, inst.phi, target,
                                                    BetaQuadrature(panels=p, weight_tol=1.0))
                           - inst.sigma) for p in (2, 4, 8, 16, 32)]
        monotone &= all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))
        worst_rec = max(worst_rec, errs[-1])
    ok = wsum < 1e-8 and worst_rec < 1e-8 and monotone
    assert record(14, "universal recovery map", ok,
                  f"|sum w - 1|={wsum:.2e}, max reference error={worst_rec:.2e}, "
                  f"monotone refinement={monotone}")
