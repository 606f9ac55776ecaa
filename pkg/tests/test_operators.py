import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qfig.operators import (
    DensityOperator,
    HermitianOperator,
    OperatorError,
    fidelity,
    matrix_function,
    operator_from_json,
    operator_to_json,
    partial_trace,
    random_density,
    random_hermitian,
    random_pure,
    spectral_decompose,
    tensor,
    trace_norm,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(2, 8)


def eig2x2(M):
    # closed form for a 2x2 Hermitian matrix
    a, d = M[0, 0].real, M[1, 1].real
    b = M[0, 1]
    mean, rad = (a + d) / 2, math.sqrt(((a - d) / 2) ** 2 + abs(b) ** 2)
    return np.array([mean - rad, mean + rad])


def test_spectral_decompose_identity():
    E = spectral_decompose(np.eye(2))
    np.testing.assert_allclose(E.eigenvalues, [1, 1])


def test_spectral_decompose_diagonal():
    E = spectral_decompose(np.diag([0.25, 0.75]))
    np.testing.assert_allclose(E.eigenvalues, [0.25, 0.75])
    np.testing.assert_allclose(np.abs(E.eigenvectors), np.eye(2), atol=1e-15)


def test_spectral_decompose_against_closed_form():
    M = np.array([[0.3, 0.5], [0.5, -0.1]], dtype=complex)
    np.testing.assert_allclose(spectral_decompose(M).eigenvalues, eig2x2(M), atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(seeds, dims)
def test_reconstruction(seed, d):
    H = random_hermitian(d, seed)
    E = spectral_decompose(H)
    assert np.linalg.norm(E.reconstruct() - H) / np.linalg.norm(H) < 1e-10
    assert np.all(np.diff(E.eigenvalues) >= 0)
    np.testing.assert_allclose(E.eigenvectors.conj().T @ E.eigenvectors, np.eye(d), atol=1e-12)


def test_matrix_function_identity_and_sqrt():
    rho = random_density(4, 3)
    E = spectral_decompose(rho)
    np.testing.assert_allclose(matrix_function(E, lambda x: x), rho, atol=1e-14)
    S = matrix_function(E, np.sqrt)
    assert np.linalg.norm(S @ S - rho) < 1e-10


def test_imaginary_power_is_unitary():
    U = DensityOperator(np.diag([0.25, 0.75])).power(1j)
    np.testing.assert_allclose(np.abs(np.diag(U)), 1, atol=1e-15)
    np.testing.assert_allclose(U @ U.conj().T, np.eye(2), atol=1e-14)


def test_trace_norm_examples():
    assert trace_norm(np.zeros((3, 3))) == 0
    assert trace_norm(random_density(3, 1)) == pytest.approx(1, abs=1e-12)
    assert trace_norm(np.diag([0.75, -0.25])) == pytest.approx(1)


@settings(max_examples=50, deadline=None)
@given(seeds, dims)
def test_trace_norm_dominates_trace(seed, d):
    M = random_hermitian(d, seed)
    assert trace_norm(M) >= abs(np.trace(M)) - 1e-12
    P = M @ M
    assert trace_norm(P) == pytest.approx(np.trace(P).real, rel=1e-12)


def test_fidelity_examples():
    rho = random_density(3, 0)
    assert fidelity(rho, rho) == pytest.approx(1, abs=1e-10)
    assert fidelity(np.diag([1.0, 0]), np.diag([0, 1.0])) == pytest.approx(0, abs=1e-15)
    f = fidelity(np.diag([0.75, 0.25]), np.diag([0.5, 0.5]))
    assert f == pytest.approx(math.sqrt(3 / 8) + math.sqrt(1 / 8), abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(2, 5))
def test_fidelity_symmetric(seed, d):
    rng = np.random.default_rng(seed)
    rho, sigma = random_density(d, rng), random_density(d, rng)
    assert abs(fidelity(rho, sigma) - fidelity(sigma, rho)) < 1e-12
    assert 0 <= fidelity(rho, sigma) < 1 - 1e-8


def test_tensor_and_partial_trace():
    np.testing.assert_allclose(tensor(np.eye(2) / 2, np.eye(2) / 2), np.eye(4) / 4)
    rho, sigma = random_density(2, 1), random_density(3, 2)
    np.testing.assert_allclose(partial_trace(tensor(rho, sigma), [2, 3], 1), rho, atol=1e-14)
    np.testing.assert_allclose(partial_trace(tensor(rho, sigma), [2, 3], 0), sigma, atol=1e-14)
    psi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    np.testing.assert_allclose(partial_trace(np.outer(psi, psi), [2, 2], 1), np.eye(2) / 2)


def test_partial_trace_preserves_trace():
    M = random_hermitian(12, 5)
    for which in (0, 1, 2, [0, 2]):
        assert np.trace(partial_trace(M, [2, 3, 2], which)) == pytest.approx(np.trace(M))


def test_density_validation():
    with pytest.raises(OperatorError):
        DensityOperator(np.diag([0.6, 0.6]))
    with pytest.raises(OperatorError):
        DensityOperator(np.diag([1.1, -0.1]))
    with pytest.raises(OperatorError):
        HermitianOperator(np.array([[0, 1], [0, 0]]))
    rho = DensityOperator(np.diag([1 + 5e-13, -5e-13]))
    assert rho.eigenvalues[0] == 0
    assert not rho.full_rank
    assert DensityOperator(np.eye(3) / 3).full_rank


def test_pure_state_support():
    rho = DensityOperator(random_pure(3, 4))
    assert rho.support_mask.sum() == 1
    np.testing.assert_allclose(rho.support_projector, rho.matrix, atol=1e-12)
    with pytest.raises(OperatorError):
        rho.require_full_rank()


def test_json_round_trip():
    M = random_hermitian(3, 9)
    back = operator_from_json(json.loads(json.dumps(operator_to_json(M))))
    np.testing.assert_array_equal(back, M)
    with pytest.raises(OperatorError):
        operator_from_json({"dim": 2, "re": [[1.0]], "im": [[0.0]]})
