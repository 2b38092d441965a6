"""Shallow ReLU network with stable-initialized weights.

``f_m(W, x) = sum_i w_i <w0_i, x> I(<w0_i, x> > 0)``, rescaled by
``(m log m)**(-1/alpha)`` (natural log) for ``alpha < 2`` and by ``m**(-1/2)``
in the Gaussian baseline ``alpha = 2``.  The ReLU derivative at 0 is 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .stable import StableParams, sample_stable

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class NetworkWeights:
    """Inner weights ``inner`` (m x d, rows w0_i) and outer weights ``outer`` (m,)."""

    inner: np.ndarray
    outer: np.ndarray
    alpha: float

    def __post_init__(self) -> None:
        inner = np.asarray(self.inner, dtype=float)
        outer = np.asarray(self.outer, dtype=float).reshape(-1)
        if inner.ndim != 2:
            raise ValueError("inner weights must be an m x d matrix")
        if inner.shape[0] != outer.shape[0]:
            raise ValueError("inner and outer weights disagree on the width")
        if not (np.all(np.isfinite(inner)) and np.all(np.isfinite(outer))):
            raise ValueError("weights must be finite")
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        object.__setattr__(self, "inner", inner)
        object.__setattr__(self, "outer", outer)

    @property
    def width(self) -> int:
        return self.inner.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inner.shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.inner.ravel(), self.outer])

    def replace(self, inner=None, outer=None) -> "NetworkWeights":
        return NetworkWeights(
            self.inner if inner is None else inner,
            self.outer if outer is None else outer,
            self.alpha,
        )


class InputSet:
    """``d x k`` matrix whose columns are the inputs ``x_j``."""

    def __init__(self, columns, unit_norm: bool = False):
        x = np.asarray(columns, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.size == 0:
            raise ValueError("inputs must form a non-empty d x k matrix")
        if unit_norm and np.any(np.abs(np.linalg.norm(x, axis=0) - 1.0) > _UNIT_TOL):
            raise ValueError("unit_norm set but some input column is not unit norm")
        self.columns = x
        self.unit_norm = unit_norm

    def __repr__(self) -> str:
        return f"InputSet(d={self.d}, k={self.k}, unit_norm={self.unit_norm})"

    @property
    def d(self) -> int:
        return self.columns.shape[0]

    @property
    def k(self) -> int:
        return self.columns.shape[1]

    def is_independent(self) -> bool:
        return self.k <= self.d and np.linalg.matrix_rank(self.columns) == self.k

    def require_independent_unit(self) -> None:
        """Guard for statements that need linearly independent unit-norm inputs."""
        if np.any(np.abs(np.linalg.norm(self.columns, axis=0) - 1.0) > _UNIT_TOL):
            raise ValueError("inputs must have unit norm")
        if self.k > self.d:
            raise ValueError(f"k={self.k} inputs in dimension d={self.d} cannot be linearly independent")
        if not self.is_independent():
            raise ValueError("inputs are linearly dependent")


def as_columns(X) -> np.ndarray:
    return X.columns if isinstance(X, InputSet) else InputSet(X).columns


def random_unit_sphere(d: int, k: int, rng: np.random.Generator) -> InputSet:
    x = rng.standard_normal((d, k))
    return InputSet(x / np.linalg.norm(x, axis=0), unit_norm=True)


def orthonormal(d: int, k: int, rng: np.random.Generator) -> InputSet:
    if k > d:
        raise ValueError("cannot draw more than d orthonormal inputs")
    q, r = np.linalg.qr(rng.standard_normal((d, k)))
    q = q * np.sign(np.diag(r))
    q = q / np.linalg.norm(q, axis=0)
    return InputSet(q, unit_norm=True)


def axis_aligned(d: int, k: int) -> InputSet:
    if k > d:
        raise ValueError("cannot place more than d axis-aligned inputs")
    return InputSet(np.eye(d)[:, :k], unit_norm=True)


def init_weights(m: int, d: int, alpha: float, rng: np.random.Generator) -> NetworkWeights:
    """I.i.d. ``St(alpha, 1)`` inner then outer weights."""
    if m < 2:
        raise ValueError(f"width must be at least 2, got {m}")
    if d < 1:
        raise ValueError("input dimension must be at least 1")
    law = StableParams(alpha)
    inner = sample_stable(law, rng, (m, d))
    outer = sample_stable(law, rng, m)
    return NetworkWeights(inner, outer, alpha)


def output_scale(m: int, alpha: float) -> float:
    """Multiplier turning ``f_m`` into the rescaled output."""
    if m < 2:
        raise ValueError(f"rescaling needs width >= 2, got {m}")
    if alpha == 2.0:
        return m**-0.5
    return (m * math.log(m)) ** (-1.0 / alpha)


def kernel_rescaling(m: int, alpha: float) -> float:
    """``(log m)**(2/alpha)``; 1 in the Gaussian baseline."""
    if m < 2:
        raise ValueError(f"rescaling needs width >= 2, got {m}")
    if alpha == 2.0:
        return 1.0
    return math.log(m) ** (2.0 / alpha)


def preactivations(W: NetworkWeights, X) -> np.ndarray:
    x = as_columns(X)
    if x.shape[0] != W.input_dim:
        raise ValueError(f"input dimension {x.shape[0]} does not match weights ({W.input_dim})")
    return W.inner @ x


def forward_raw(W: NetworkWeights, X) -> np.ndarray:
    return W.outer @ np.maximum(preactivations(W, X), 0.0)


def forward_rescaled(W: NetworkWeights, X) -> np.ndarray:
    return output_scale(W.width, W.alpha) * forward_raw(W, X)


def _single(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    return x


def grad_outer(W: NetworkWeights, x) -> np.ndarray:
    """Derivative of the rescaled output at ``x`` with respect to the outer weights."""
    x = _single(x)
    pre = preactivations(W, x[:, None])[:, 0]
    return output_scale(W.width, W.alpha) * np.where(pre > 0, pre, 0.0)


def grad_inner(W: NetworkWeights, x) -> np.ndarray:
    """Derivative of the rescaled output at ``x`` with respect to the inner weights (m x d)."""
    x = _single(x)
    pre = preactivations(W, x[:, None])[:, 0]
    coef = output_scale(W.width, W.alpha) * W.outer * (pre > 0)
    return np.outer(coef, x)


def forward_bounded(W: NetworkWeights, X) -> np.ndarray:
    """``m**(-1/alpha) * sum_i w_i tanh(<w0_i, x>)`` for each input column."""
    return W.outer @ np.tanh(preactivations(W, X)) / W.width ** (1.0 / W.alpha)


def gaussian_baseline_covariance(X) -> np.ndarray:
    """Limit covariance of ``m**(-1/2) f_m`` for ``alpha = 2`` (weights with variance 2).

    Entry ``[r, s] = 2 E[ReLU(<g, x_r>) ReLU(<g, x_s>)]`` with ``g ~ N(0, 2 I)``,
    the degree-1 arc-cosine kernel.
    """
    x = as_columns(X)
    gram = 2.0 * x.T @ x
    sd = np.sqrt(np.diag(gram))
    denom = np.outer(sd, sd)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.clip(np.where(denom > 0, gram / np.where(denom > 0, denom, 1.0), 0.0), -1.0, 1.0)
    theta = np.arccos(cos)
    return 2.0 * denom / (2.0 * math.pi) * (np.sin(theta) + (math.pi - theta) * cos)
