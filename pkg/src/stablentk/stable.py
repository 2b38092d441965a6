"""Stable laws with discrete spectral measures.

Conventions
-----------
* ``St(alpha, sigma)`` has characteristic function ``exp(-sigma**alpha * |z|**alpha)``.
  For ``alpha = 2`` this is a Gaussian with variance ``2 * sigma**2``.
* Skewed laws use the exponent
  ``-sigma**alpha |z|**alpha (1 - i beta sign(z) tan(pi alpha / 2))`` for
  ``alpha != 1`` and
  ``-sigma |z| (1 + i beta (2/pi) sign(z) log|z|)`` for ``alpha == 1``.
* A discrete spectral measure ``sum_i gamma_i delta(s_i)`` gives the vector
  exponent ``-sum_i gamma_i |<z, s_i>|**alpha (1 - i sign<z, s_i> tan(pi alpha/2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

_UNIT_TOL = 1e-12
_CLAMP = 1e-15


def c_alpha(alpha: float) -> float:
    """Tail constant ``C_alpha`` linking the spectral measure to the tail.

    ``r**alpha P(|S| > r, S/|S| in B) -> C_alpha Gamma(B)``.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    if alpha == 1.0:
        return 2.0 / math.pi
    return (1.0 - alpha) / (math.gamma(2.0 - alpha) * math.cos(math.pi * alpha / 2.0))


@dataclass(frozen=True)
class StableParams:
    alpha: float
    beta: float = 0.0
    sigma: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if abs(self.beta) > 1.0:
            raise ValueError(f"beta must lie in [-1, 1], got {self.beta}")
        if not self.sigma > 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


def _uniform_angle(rng: np.random.Generator, size) -> np.ndarray:
    u = np.clip(rng.random(size), _CLAMP, 1.0 - _CLAMP)
    return math.pi * (u - 0.5)


def _exponential(rng: np.random.Generator, size) -> np.ndarray:
    u = np.clip(rng.random(size), _CLAMP, 1.0 - _CLAMP)
    return -np.log(u)


def sample_stable(params: StableParams, rng: np.random.Generator, size=None):
    """Draw stable variates by the Chambers-Mallows-Stuck transform.

    Returns a float when ``size`` is None, otherwise an array of shape ``size``.
    """
    a, b, s = params.alpha, params.beta, params.sigma
    v = _uniform_angle(rng, size)
    w = _exponential(rng, size)
    if a == 1.0:
        half_pi = math.pi / 2.0
        x = (2.0 / math.pi) * (
            (half_pi + b * v) * np.tan(v)
            - b * np.log(half_pi * w * np.cos(v) / (half_pi + b * v))
        )
        x = s * x + (2.0 / math.pi) * b * s * math.log(s)
    elif b == 0.0:
        x = s * (
            np.sin(a * v)
            / np.cos(v) ** (1.0 / a)
            * (np.cos((1.0 - a) * v) / w) ** ((1.0 - a) / a)
        )
    else:
        t = b * math.tan(math.pi * a / 2.0)
        shift = math.atan(t) / a
        scale = (1.0 + t * t) ** (1.0 / (2.0 * a))
        x = s * scale * (
            np.sin(a * (v + shift))
            / np.cos(v) ** (1.0 / a)
            * (np.cos(v - a * (v + shift)) / w) ** ((1.0 - a) / a)
        )
    if size is None:
        return float(x)
    return x


def unit_and_norm(v) -> tuple[np.ndarray, float]:
    """``(v / |v|, |v|)`` for a nonzero ``v``, scaled first so tiny or huge entries neither underflow nor overflow."""
    v = np.asarray(v, dtype=float)
    top = float(np.abs(v).max())
    if top == 0.0:
        return v, 0.0
    v = v / top
    n = float(np.linalg.norm(v))
    return v / n, top * n


class DiscreteSpectralMeasure:
    """Finite measure ``sum_i weights[i] * delta(directions[i])`` on a unit sphere.

    Zero-weight and zero-norm atoms are dropped at construction.  Remaining
    directions must have unit Euclidean norm.  ``shape`` optionally records a
    matrix shape when the ambient space is a flattened matrix space.
    """

    def __init__(self, directions, weights, dim: int | None = None, shape: tuple[int, ...] | None = None):
        d = np.asarray(directions, dtype=float)
        g = np.asarray(weights, dtype=float).reshape(-1)
        if dim is None:
            if d.ndim != 2:
                raise ValueError("dim is required when there are no atoms")
            dim = d.shape[1]
        d = d.reshape(-1, dim)
        if d.shape[0] != g.shape[0]:
            raise ValueError("directions and weights differ in length")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("weights must be finite and non-negative")
        norms = np.linalg.norm(d, axis=1)
        keep = (g > 0) & (norms > 0)
        d, g, norms = d[keep], g[keep], norms[keep]
        if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
            raise ValueError("atom directions must have unit norm")
        if shape is not None and math.prod(shape) != dim:
            raise ValueError(f"shape {shape} incompatible with dim {dim}")
        self.directions = d
        self.weights = g
        self.dim = int(dim)
        self.shape = tuple(shape) if shape is not None else None

    @classmethod
    def from_vectors(cls, vectors, weights, dim: int | None = None, shape=None) -> "DiscreteSpectralMeasure":
        """Build from unnormalized vectors; zero vectors are dropped."""
        v = np.asarray(vectors, dtype=float)
        if dim is None:
            dim = v.shape[-1]
        v = v.reshape(-1, dim)
        return cls(np.array([unit_and_norm(row)[0] for row in v]).reshape(-1, dim), weights, dim=dim, shape=shape)

    @classmethod
    def empty(cls, dim: int, shape=None) -> "DiscreteSpectralMeasure":
        return cls(np.zeros((0, dim)), np.zeros(0), dim=dim, shape=shape)

    def __len__(self) -> int:
        return self.weights.shape[0]

    def __repr__(self) -> str:
        return f"DiscreteSpectralMeasure(dim={self.dim}, atoms={len(self)}, mass={self.total_mass:.6g})"

    def __add__(self, other: "DiscreteSpectralMeasure") -> "DiscreteSpectralMeasure":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return DiscreteSpectralMeasure(
            np.vstack([self.directions, other.directions]),
            np.concatenate([self.weights, other.weights]),
            dim=self.dim,
            shape=self.shape or other.shape,
        )

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def scaled(self, c: float) -> "DiscreteSpectralMeasure":
        if c < 0:
            raise ValueError("scale factor must be non-negative")
        return DiscreteSpectralMeasure(self.directions, c * self.weights, self.dim, self.shape)

    def negated(self) -> "DiscreteSpectralMeasure":
        return DiscreteSpectralMeasure(-self.directions, self.weights, self.dim, self.shape)

    def merged(self, tol: float = 1e-12) -> "DiscreteSpectralMeasure":
        """Combine atoms whose directions coincide within ``tol`` (max-norm)."""
        dirs: list[np.ndarray] = []
        wts: list[float] = []
        for s, g in zip(self.directions, self.weights):
            for j, t in enumerate(dirs):
                if np.max(np.abs(s - t)) <= tol:
                    wts[j] += g
                    break
            else:
                dirs.append(s)
                wts.append(float(g))
        return DiscreteSpectralMeasure(np.reshape(dirs, (-1, self.dim)), wts, self.dim, self.shape)

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        """True when the atom multiset is invariant under direction negation."""
        a = self.merged(tol)
        b = self.negated().merged(tol)
        if len(a) != len(b):
            return False
        for s, g in zip(a.directions, a.weights):
            hit = np.max(np.abs(b.directions - s), axis=1) <= tol
            if not hit.any() or abs(b.weights[hit].sum() - g) > tol * max(1.0, g):
                return False
        return True

    def mass(self, indicator: Callable[[np.ndarray], np.ndarray]) -> float:
        """Measure of the set ``{s : indicator(s)}``; ``indicator`` is vectorized over rows."""
        if len(self) == 0:
            return 0.0
        return float(self.weights[np.asarray(indicator(self.directions), dtype=bool)].sum())

    def direction_matrices(self) -> np.ndarray:
        if self.shape is None:
            raise ValueError("measure has no matrix shape")
        return self.directions.reshape((-1,) + self.shape)


def _projections(z, gamma: DiscreteSpectralMeasure) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=float)
    single = z.ndim <= 1
    z2 = np.atleast_2d(z.reshape(-1)) if single else z
    if z2.shape[-1] != gamma.dim:
        raise ValueError(f"dimension mismatch: z has {z2.shape[-1]}, measure has {gamma.dim}")
    return z2 @ gamma.directions.T, single


@dataclass(frozen=True)
class CharacteristicExponent:
    """``psi`` with ``E exp(i<z, S>) = exp(psi(z))`` for a discrete spectral measure."""

    alpha: float
    measure: DiscreteSpectralMeasure
    skew_mode: Literal["symmetric", "one_sided"] = "symmetric"

    def __call__(self, z):
        t, single = _projections(z, self.measure)
        g = self.measure.weights
        a = self.alpha
        at = np.abs(t)
        if self.skew_mode == "symmetric":
            psi = -(at**a) @ g + 0j
        elif a == 1.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                tlog = np.where(at > 0, t * np.log(np.where(at > 0, at, 1.0)), 0.0)
            psi = -(at @ g) - 1j * (2.0 / math.pi) * (tlog @ g)
        else:
            psi = -(at**a) @ g + 1j * math.tan(math.pi * a / 2.0) * ((np.sign(t) * at**a) @ g)
        return complex(psi[0]) if single else psi


def cf_symmetric(z, gamma: DiscreteSpectralMeasure, alpha: float):
    """``exp(-sum_i gamma_i |<z, s_i>|**alpha)`` at a point or a batch of points (rows)."""
    return np.exp(CharacteristicExponent(alpha, gamma, "symmetric")(z))


def cf_skewed(z, gamma: DiscreteSpectralMeasure, alpha: float):
    """Characteristic function with the one-sided skew term (``alpha == 1`` uses the log branch)."""
    return np.exp(CharacteristicExponent(alpha, gamma, "one_sided")(z))


def projection_scale(gamma: DiscreteSpectralMeasure, alpha: float, r: int) -> float:
    """Scale of the ``r``-th coordinate (1-based) of ``St_k(alpha, gamma)``."""
    if not 1 <= r <= gamma.dim:
        raise ValueError(f"coordinate index {r} outside 1..{gamma.dim}")
    return float((np.abs(gamma.directions[:, r - 1]) ** alpha @ gamma.weights) ** (1.0 / alpha))


def sample_discrete_spectral(gamma: DiscreteSpectralMeasure, alpha: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Sample the stable vector with spectral measure ``gamma`` atom by atom.

    Each atom contributes ``gamma_i**(1/alpha) * zeta_i * s_i`` with independent
    one-sided standard stable ``zeta_i``; for ``alpha == 1`` the coefficient is
    ``gamma_i * zeta_i + (2/pi) gamma_i log gamma_i``.  The resulting exponent is
    exactly ``CharacteristicExponent(alpha, gamma, "one_sided")``.

    Returns shape ``(dim,)`` for ``size=None`` else ``(size, dim)``.
    """
    if not 0.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    n = 1 if size is None else int(size)
    if len(gamma) == 0:
        out = np.zeros((n, gamma.dim))
    else:
        zeta = sample_stable(StableParams(alpha, 1.0, 1.0), rng, (n, len(gamma)))
        g = gamma.weights
        if alpha == 1.0:
            coef = g * zeta + (2.0 / math.pi) * g * np.log(g)
        else:
            coef = g ** (1.0 / alpha) * zeta
        out = coef @ gamma.directions
    return out[0] if size is None else out
