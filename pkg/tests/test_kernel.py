import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from stablentk.kernel import (
    decompose,
    frobenius_distance,
    max_eigenvalue,
    min_eigenvalue,
    ntk,
    parameter_gradients,
    rescaled_ntk,
    symmetrize,
)
from stablentk.network import NetworkWeights, init_weights, kernel_rescaling


def jacobi_eigenvalues(A, sweeps=100, tol=1e-15):
    """Cyclic Jacobi rotations; independent of LAPACK."""
    A = np.array(A, dtype=float)
    n = A.shape[0]
    scale = max(1.0, np.linalg.norm(A))
    for _ in range(sweeps):
        off = float(np.linalg.norm(A - np.diag(np.diag(A))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) <= 1e-18 * scale:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                A = J.T @ A @ J
    return np.sort(np.diag(A))


def hand_weights():
    # m = 2, second neuron inactive at x = e1
    return NetworkWeights(np.array([[2.0], [-1.0]]), np.array([1.0, 3.0]), 1.0)


def test_hand_example_ntk():
    H = ntk(hand_weights(), [[1.0]])
    assert H[0, 0] == pytest.approx((2 * math.log(2)) ** -2 * (4 + 1))
    assert rescaled_ntk(hand_weights(), [[1.0]])[0, 0] == pytest.approx(5 / 4)


def test_hand_example_decomposition():
    kp = decompose(hand_weights(), [[1.0]])
    c = 2 ** -2.0
    assert kp.h1[0, 0] == pytest.approx(c * 1.0)
    assert kp.h2[0, 0] == pytest.approx(c * 4.0)


def test_all_inactive_gives_zero():
    W = NetworkWeights(np.array([[-1.0], [-2.0]]), np.array([1.0, 3.0]), 1.3)
    kp = decompose(W, [[1.0]])
    assert kp.h1[0, 0] == 0 and kp.h2[0, 0] == 0


def test_zero_weights_zero_kernel():
    W = NetworkWeights(np.zeros((3, 2)), np.zeros(3), 1.0)
    assert np.all(rescaled_ntk(W, np.eye(2)) == 0)


def test_duplicated_input_rank_deficient():
    W = init_weights(50, 3, 1.2, np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=3)
    X = np.column_stack([x, x])
    H = rescaled_ntk(W, X)
    assert abs(min_eigenvalue(H)) <= 1e-10 * max_eigenvalue(H)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.3, 2.0), st.integers(2, 40), st.integers(1, 5), st.integers(1, 4))
def test_decomposition_identity_and_psd(seed, a, m, d, k):
    rng = np.random.default_rng(seed)
    W = init_weights(m, d, a, rng)
    X = rng.normal(size=(d, k))
    kp = decompose(W, X)
    full = kernel_rescaling(m, a) * ntk(W, X)
    scale = max(1.0, float(np.max(np.abs(full))))
    assert np.max(np.abs(kp.total - full)) <= 1e-10 * scale
    for M in (kp.h1, kp.h2):
        assert np.max(np.abs(M - M.T)) <= 1e-10 * scale
        assert min_eigenvalue(M) >= -1e-10 * scale


def test_scaling_outer_weights():
    W = init_weights(20, 3, 1.4, np.random.default_rng(2))
    X = np.random.default_rng(3).normal(size=(3, 2))
    c = 2.5
    a, b = decompose(W, X), decompose(W.replace(outer=c * W.outer), X)
    assert np.allclose(b.h1, c**2 * a.h1)
    assert np.allclose(b.h2, a.h2)


def test_permutation_invariance():
    W = init_weights(30, 4, 0.9, np.random.default_rng(4))
    X = np.random.default_rng(5).normal(size=(4, 3))
    p = np.random.default_rng(6).permutation(30)
    assert np.allclose(ntk(W, X), ntk(NetworkWeights(W.inner[p], W.outer[p], W.alpha), X))


def test_parameter_gradient_layout():
    W = init_weights(5, 3, 1.0, np.random.default_rng(7))
    G = parameter_gradients(W, np.eye(3)[:, :2])
    assert G.shape == (2, 5 * 3 + 5)


# ---------------------------------------------------------------- eigenvalues


def test_min_eigenvalue_examples():
    assert min_eigenvalue(np.eye(3)) == pytest.approx(1.0)
    assert min_eigenvalue(np.diag([2.0, 5.0, 0.1])) == pytest.approx(0.1)
    v = np.array([1.0, -2.0, 0.5])
    assert abs(min_eigenvalue(np.outer(v, v))) <= 1e-10


def test_non_symmetric_rejected():
    with pytest.raises(ValueError):
        min_eigenvalue(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        symmetrize(np.ones((2, 3)))


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(np.float64, (6, 6), elements=st.floats(-10, 10)))
def test_eigenvalues_match_jacobi(B):
    M = B + B.T
    ev = jacobi_eigenvalues(M)
    scale = max(1.0, np.linalg.norm(M, 2))
    assert abs(min_eigenvalue(M) - ev[0]) <= 1e-10 * scale
    assert abs(max_eigenvalue(M) - ev[-1]) <= 1e-10 * scale


def test_jacobi_on_kernel_sizes():
    rng = np.random.default_rng(8)
    for k in (2, 8, 32):
        B = rng.normal(size=(k, k))
        M = B @ B.T
        assert abs(min_eigenvalue(M) - jacobi_eigenvalues(M)[0]) <= 1e-10 * np.linalg.norm(M, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 8))
def test_weyl_inequality(seed, k):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(2, k, k))
    A, B = A @ A.T, B @ B.T
    assert min_eigenvalue(A + B) >= min_eigenvalue(A) + min_eigenvalue(B) - 1e-10 * (1 + np.linalg.norm(A + B))


def test_frobenius_examples():
    A = np.arange(4.0).reshape(2, 2)
    assert frobenius_distance(A, A) == 0
    assert frobenius_distance(np.eye(2), np.zeros((2, 2))) == pytest.approx(math.sqrt(2))
    u, v = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    # |u v^T|_F = |u| |v| = sqrt(5) sqrt(10)
    assert frobenius_distance(np.outer(u, v), 0 * A) == pytest.approx(math.sqrt(50))
