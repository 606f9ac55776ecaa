import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from qfig.metrics import (
    BKM,
    RLD,
    SLD,
    SYMMETRIC_INVERSE,
    MetricError,
    alpha_metric,
    builtin_metrics,
    j_apply,
    j_inverse_apply,
    metric_eval,
    metric_eval_integral,
    parse_metric,
    regular_metrics,
    wyd_hessian_reference,
    wyd_metric,
)
from qfig.operators import DensityOperator, random_density, random_hermitian
from qfig.sampling import random_instance

seeds = st.integers(0, 2**32 - 1)
GRID = np.geomspace(1e-3, 1e3, 401)
OFFDIAG = np.array([[0, 0.5], [0.5, 0]], dtype=complex)
RHO_Q = np.diag([0.75, 0.25])


def herm_power(M, p):
    lam, U = np.linalg.eigh(M)
    return (U * lam ** p) @ U.conj().T


@pytest.mark.parametrize("m", builtin_metrics(), ids=lambda m: m.label)
def test_symmetry_condition(m):
    g = m.g(GRID)
    np.testing.assert_allclose(m.g(1 / GRID), GRID * g, rtol=1e-10)
    assert m.g(np.array([1.0]))[0] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("m", builtin_metrics(), ids=lambda m: m.label)
def test_kernel_properties(m):
    x, y = np.meshgrid(GRID[::8], GRID[::8])
    c = m.c(x, y)
    np.testing.assert_allclose(c, m.g(x / y) / y, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(c, c.T, rtol=1e-12)
    np.testing.assert_allclose(m.c(GRID, GRID), 1 / GRID, rtol=1e-12)
    assert np.all(SLD.c(x, y) <= c * (1 + 1e-12))
    assert np.all(c <= RLD.c(x, y) * (1 + 1e-12))


def test_kernel_near_diagonal_is_continuous():
    x = 0.3
    for m in builtin_metrics():
        for eps in (1e-7, 1e-9, 1e-11):
            assert m.c(x * (1 + eps), x) == pytest.approx(1 / x, rel=1e-6)


def test_wyd_kernel_matches_defining_formula():
    # the (x - y)^2 denominator, written out directly
    x, y, a = 0.7, 0.2, 0.3
    ref = (x ** a - y ** a) * (x ** (1 - a) - y ** (1 - a)) / (a * (1 - a) * (x - y) ** 2)
    assert wyd_metric(a).c(x, y) == pytest.approx(ref, rel=1e-13)


def test_maximally_mixed_qubit():
    A = np.diag([0.5, -0.5])
    for m in builtin_metrics():
        assert metric_eval(m, np.eye(2) / 2, A) == pytest.approx(1.0, rel=1e-12)


def test_commuting_qubit():
    A = np.diag([0.25, -0.25])
    for m in builtin_metrics():
        assert metric_eval(m, RHO_Q, A) == pytest.approx(1 / 3, rel=1e-12)


def test_offdiagonal_qubit_hand_values():
    assert metric_eval(SLD, RHO_Q, OFFDIAG) == pytest.approx(1.0, rel=1e-13)
    assert metric_eval(RLD, RHO_Q, OFFDIAG) == pytest.approx(4 / 3, rel=1e-13)
    assert metric_eval(BKM, RHO_Q, OFFDIAG) == pytest.approx(math.log(3), rel=1e-13)
    # sym-inv: 2 * (1/4) / sqrt(3/16)
    assert metric_eval(SYMMETRIC_INVERSE, RHO_Q, OFFDIAG) == pytest.approx(2 / math.sqrt(3))


def test_rld_outside_support_is_infinite():
    rho = np.diag([1.0, 0.0])
    assert metric_eval(RLD, rho, OFFDIAG) == math.inf
    assert metric_eval(SLD, rho, OFFDIAG) == pytest.approx(1.0)
    assert metric_eval(RLD, rho, np.diag([1.0, 0.0])) == pytest.approx(1.0)


def test_j_examples():
    rho = DensityOperator(random_density(3, 4, mix=0.3))
    A = random_hermitian(3, 5)
    r = rho.power(-0.5)
    np.testing.assert_allclose(j_apply(SYMMETRIC_INVERSE, rho, A), r @ A @ r, atol=1e-12)
    R = rho.matrix
    np.testing.assert_allclose(j_inverse_apply(SLD, rho, A), (R @ A + A @ R) / 2, atol=1e-13)


def test_bkm_inverse_against_integral():
    rho = random_density(3, 6, mix=0.3)
    A = random_hermitian(3, 7)
    ref, _ = integrate.quad_vec(lambda t: herm_power(rho, t) @ A @ herm_power(rho, 1 - t),
                                0, 1, epsabs=1e-13)
    np.testing.assert_allclose(j_inverse_apply(BKM, rho, A), ref, atol=1e-11)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_j_round_trip_and_adjointness(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    rho = random_density(d, rng, mix=0.2)
    A, B = random_hermitian(d, rng), random_hermitian(d, rng)
    for m in builtin_metrics():
        np.testing.assert_allclose(j_inverse_apply(m, rho, j_apply(m, rho, A)), A, atol=1e-10)
        ab = np.vdot(A, j_apply(m, rho, B))
        assert abs(ab - metric_eval(m, rho, A, B)) < 1e-10 * max(1, abs(ab))
        assert abs(ab - np.conj(np.vdot(B, j_apply(m, rho, A)))) < 1e-12 * max(1, abs(ab))


def test_integral_representation_hand_case():
    assert metric_eval_integral(BKM, RHO_Q, OFFDIAG) == pytest.approx(math.log(3), rel=1e-6)
    ref = np.trace(OFFDIAG @ herm_power(RHO_Q, -0.5) @ OFFDIAG @ herm_power(RHO_Q, -0.5)).real
    assert metric_eval_integral(SYMMETRIC_INVERSE, RHO_Q, OFFDIAG) == pytest.approx(ref, rel=1e-6)
    for m in regular_metrics():
        assert metric_eval_integral(m, RHO_Q, np.zeros((2, 2))) == 0
    with pytest.raises(MetricError):
        metric_eval_integral(SLD, RHO_Q, OFFDIAG)


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_integral_matches_spectral(seed):
    inst = random_instance(seed)
    for m in regular_metrics():
        spec = metric_eval(m, inst.rho, inst.A)
        assert metric_eval_integral(m, inst.rho, inst.A) == pytest.approx(spec, rel=1e-6)


def test_integral_matches_spectral_at_large_eigenvalue_ratios():
    rho = np.diag([1e-4, 0.3, 1 - 0.3 - 1e-4])
    A = random_hermitian(3, 1, traceless=True)
    for m in (alpha_metric(0.05), alpha_metric(0.95), wyd_metric(0.1), BKM):
        spec = metric_eval(m, rho, A)
        assert metric_eval_integral(m, rho, A) == pytest.approx(spec, rel=1e-9)


def test_wyd_hessian_commuting():
    rho = np.diag([0.2, 0.3, 0.5])
    A = np.diag([0.1, -0.04, -0.06])
    fisher = np.sum(np.diag(A) ** 2 / np.diag(rho))
    assert wyd_hessian_reference(rho, A, A, 0.3) == pytest.approx(fisher, rel=1e-6)
    assert wyd_hessian_reference(rho, np.zeros((3, 3)), A, 0.3) == 0


@pytest.mark.parametrize("alpha", [0.5, 0.3, 0.8])
def test_wyd_hessian_selects_squared_denominator(alpha):
    rho = random_density(3, 12, mix=0.3)
    A = random_hermitian(3, 13, traceless=True)
    ref = wyd_hessian_reference(rho, A, A, alpha, h=1e-4)
    assert metric_eval(wyd_metric(alpha), rho, A) == pytest.approx(ref, rel=1e-5)

    # the alternative (x - y)(x + y)-type denominator disagrees
    def c_alt(x, y):
        xa, ya = x ** alpha, y ** alpha
        return (xa - ya) * (x / xa - y / ya) / (alpha * (1 - alpha) * (x ** 2 - y ** 2))

    lam, U = np.linalg.eigh(rho)
    At = U.conj().T @ A @ U
    x, y = lam[:, None], lam[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        C = np.where(np.eye(3, dtype=bool), 1 / x, c_alt(x, y))
    alt = float(np.sum(C * np.abs(At) ** 2))
    assert abs(alt - ref) > 1e-2 * ref


def test_wyd_hessian_offdiagonal_bilinear():
    rho = random_density(2, 3, mix=0.3)
    A, B = random_hermitian(2, 4, traceless=True), random_hermitian(2, 5, traceless=True)
    val = metric_eval(wyd_metric(0.5), rho, A, B).real
    assert wyd_hessian_reference(rho, A, B, 0.5) == pytest.approx(val, rel=1e-5)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_dpi_and_ordering(seed):
    inst = random_instance(seed)
    out, A_out = inst.phi.apply(inst.rho), inst.phi.apply(inst.A)
    vals = {}
    for m in builtin_metrics():
        v_in, v_out = metric_eval(m, inst.rho, inst.A), metric_eval(m, out, A_out)
        assert v_in >= v_out - 1e-9
        vals[m.label] = v_in
    for v in vals.values():
        assert vals["sld"] - 1e-10 <= v <= vals["rld"] + 1e-10


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_trace_norm_lower_bound(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    rho, A = random_density(d, rng), random_hermitian(d, rng)
    tn = np.sum(np.abs(np.linalg.eigvalsh(A)))
    assert tn ** 2 <= metric_eval(SLD, rho, A) * (1 + 1e-10)


def test_parse_metric_grammar():
    assert parse_metric("sld") is SLD and parse_metric("bures") is SLD
    assert parse_metric("RLD") is RLD and parse_metric("bkm") is BKM
    assert parse_metric("sym-inv") is SYMMETRIC_INVERSE
    assert parse_metric("alpha:0.25").param == 0.25
    assert parse_metric("wyd:0.3").label == "wyd:0.3"
    assert parse_metric(BKM) is BKM
    for bad in ("foo", "alpha:x", "alpha:1.5", "wyd:0", "alpha"):
        with pytest.raises(MetricError):
            parse_metric(bad)


def test_regularity_flags():
    assert not SLD.regular and not RLD.regular
    assert all(m.nu is not None for m in regular_metrics())
    assert {m.label for m in regular_metrics()} >= {"bkm", "alpha:0.25", "symmetric_inverse"}
