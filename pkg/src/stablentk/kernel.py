"""Finite-width neural tangent kernel and small symmetric-matrix utilities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (
    NetworkWeights,
    as_columns,
    grad_inner,
    grad_outer,
    kernel_rescaling,
    preactivations,
)

_SYM_TOL = 1e-8


@dataclass(frozen=True)
class KernelPair:
    """Rescaled kernel split into its inner-weight part ``h1`` and outer-weight part ``h2``."""

    h1: np.ndarray
    h2: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.h1 + self.h2


def parameter_gradients(W: NetworkWeights, X) -> np.ndarray:
    """k x (m*d + m) matrix of full gradients, inner block first."""
    x = as_columns(X)
    rows = [np.concatenate([grad_inner(W, x[:, j]).ravel(), grad_outer(W, x[:, j])]) for j in range(x.shape[1])]
    return np.vstack(rows)


def ntk(W: NetworkWeights, X) -> np.ndarray:
    """Gram matrix of full parameter gradients of the rescaled output."""
    g = parameter_gradients(W, X)
    return g @ g.T


def rescaled_ntk(W: NetworkWeights, X) -> np.ndarray:
    return kernel_rescaling(W.width, W.alpha) * ntk(W, X)


def decompose(W: NetworkWeights, X) -> KernelPair:
    """Closed-form ``(h1, h2)`` with prefactor ``m**(-2/alpha)``.

    ``h1[j, j'] = m**(-2/alpha) sum_i w_i**2 <x_j, x_j'> I_ij I_ij'`` and
    ``h2[j, j'] = m**(-2/alpha) sum_i ReLU(<w0_i, x_j>) ReLU(<w0_i, x_j'>)``.
    """
    x = as_columns(X)
    pre = preactivations(W, x)
    act = (pre > 0).astype(float)
    relu = pre * act
    c = W.width ** (-2.0 / W.alpha)
    h1 = c * (x.T @ x) * ((act * W.outer[:, None] ** 2).T @ act)
    h2 = c * (relu.T @ relu)
    return KernelPair(h1, h2)


def symmetrize(M, tol: float = _SYM_TOL) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > tol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def min_eigenvalue(M) -> float:
    return float(np.linalg.eigvalsh(symmetrize(M))[0])


def max_eigenvalue(M) -> float:
    return float(np.linalg.eigvalsh(symmetrize(M))[-1])


def frobenius_distance(A, B) -> float:
    return float(np.linalg.norm(np.asarray(A, dtype=float) - np.asarray(B, dtype=float)))
