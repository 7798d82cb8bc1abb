import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from classim.errors import ValidationError
from classim.linalg import (eig_hermitian, hermitian, hermitian_to_real_vector, is_psd, lambda_max,
                            random_hermitian, real_vector_to_hermitian, sample_haar_unitaries,
                            sample_haar_unitary, sqrtm_psd, trace_distance)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def test_eig_identity(backend):
    w, _ = eig_hermitian(np.eye(2))
    assert np.allclose(w, [1, 1])


def test_eig_pauli_z(backend):
    w, v = eig_hermitian(SZ)
    assert np.allclose(w, [-1, 1])
    assert abs(abs(v[1, 0]) - 1) < 1e-12 and abs(abs(v[0, 1]) - 1) < 1e-12


def test_eig_rotated_pauli(backend):
    w, _ = eig_hermitian((SX + SZ) / np.sqrt(2))
    assert np.allclose(w, [-1, 1], atol=1e-14)


def test_eig_above_jacobi_range_uses_lapack(rng):
    a = random_hermitian(20, rng)
    w, v = eig_hermitian(a)
    assert np.allclose(a @ v, v * w, atol=1e-10)


@given(d=st.integers(1, 7), seed=st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_eig_reconstruction_property(d, seed):
    a = random_hermitian(d, np.random.default_rng(seed), scale=3.0)
    w, v = eig_hermitian(a)
    norm = np.abs(w).max() + 1e-300
    assert np.all(np.diff(w) >= -1e-12)
    assert np.linalg.norm(v * w @ v.conj().T - a) <= 1e-9 * norm
    assert np.abs(v.conj().T @ v - np.eye(d)).max() <= 1e-10
    assert np.linalg.norm(a @ v - v * w, axis=0).max() <= 1e-10 * norm


def test_hermitian_symmetrizes_and_rejects():
    a = np.array([[1, 1e-13], [0, 1]], dtype=complex)
    assert np.allclose(hermitian(a), hermitian(a).conj().T)
    with pytest.raises(ValidationError):
        hermitian(np.array([[1, 1], [0, 1]]), tol=1e-9)


def test_is_psd_examples():
    assert is_psd(np.eye(2), tol=0.0)
    assert not is_psd(np.diag([1.0, -0.1]), tol=1e-9)
    plus = np.full((2, 2), 0.5)
    assert is_psd(plus, tol=1e-9)


def test_haar_d1_is_phase():
    u = sample_haar_unitary(1, np.random.default_rng(1))
    assert u.shape == (1, 1) and abs(abs(u[0, 0]) - 1) < 1e-14


def test_haar_unitarity_fixed_seed():
    u = sample_haar_unitary(3, np.random.default_rng(7))
    assert np.linalg.norm(u.conj().T @ u - np.eye(3)) <= 1e-10


def test_haar_second_moment():
    us = sample_haar_unitaries(2, 10**5, np.random.default_rng(11))
    x = np.abs(us[:, 0, 0]) ** 2
    sigma = x.std() / np.sqrt(len(x))
    assert abs(x.mean() - 0.5) <= 3 * sigma
    assert abs(np.abs(sample_haar_unitaries(2, 10**4, np.random.default_rng(3))[:, 0, 0]).__pow__(2).mean()
               - 0.5) <= 5 / np.sqrt(10**4)


def test_haar_fourth_moment_distinguishes_from_plain_qr():
    # E|U_00|^4 = 2 / (d (d + 1)) under the Haar measure
    us = sample_haar_unitaries(3, 10**5, np.random.default_rng(5))
    x = np.abs(us[:, 0, 0]) ** 4
    assert abs(x.mean() - 2 / 12) <= 4 * x.std() / np.sqrt(len(x))


def test_haar_batches_are_nested():
    a = sample_haar_unitaries(3, 10, np.random.default_rng(2))
    b = sample_haar_unitaries(3, 4, np.random.default_rng(2))
    assert np.allclose(a[:4], b)


def test_vec_map_examples():
    assert np.allclose(hermitian_to_real_vector(np.eye(2)), [1, 1, 0, 0])
    assert np.allclose(hermitian_to_real_vector(SX), [0, 0, np.sqrt(2), 0])
    sy = np.array([[0, -1j], [1j, 0]])
    assert np.allclose(hermitian_to_real_vector(sy), [0, 0, 0, -np.sqrt(2)])


@given(d=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_vec_map_isometry_and_roundtrip(d, seed):
    rng = np.random.default_rng(seed)
    a, b = random_hermitian(d, rng), random_hermitian(d, rng)
    va, vb = hermitian_to_real_vector(a), hermitian_to_real_vector(b)
    assert va.shape == (d * d,)
    assert abs(np.real(np.trace(a @ b)) - va @ vb) <= 1e-12
    assert np.abs(real_vector_to_hermitian(va) - a).max() <= 1e-14


@given(hnp.arrays(float, 3, elements=st.floats(-1, 1)))
@settings(max_examples=30, deadline=None)
def test_lambda_max_of_bloch_operator(n):
    op = n[0] * SX + n[2] * SZ + n[1] * np.array([[0, -1j], [1j, 0]])
    assert lambda_max(op) == pytest.approx(np.linalg.norm(n), abs=1e-12)


def test_sqrtm_and_trace_distance():
    rho = np.diag([0.75, 0.25])
    s = sqrtm_psd(rho)
    assert np.allclose(s @ s, rho)
    assert trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(1.0)
