"""Closed-form infinite-width limits of the output and of the kernel.

The output limit is ``St_k(alpha, Gamma_X)``; the kernel limit is the sum of two
independent ``(alpha/2)``-stable PSD matrices with spectral measures
``Gamma*_1`` (inner-weight part) and ``Gamma*_2`` (outer-weight part).

Two prefactor conventions are available for ``Gamma*_1`` / ``Gamma*_2``:

``paper_literal``
    ``C_{alpha/2}`` in front of both measures, as printed.
``tail_consistent``
    ``C_alpha / C_{alpha/2}`` for ``Gamma*_1`` and ``C_alpha / (2 C_{alpha/2})``
    for ``Gamma*_2``.  These follow from matching the tail of one summand of the
    finite-width kernel (``r**(alpha/2) P(w**2 > r) -> C_alpha``; each signed
    axis ``+-e_i`` carries mass 1/2 in the spectral measure of a weight row)
    with ``C_{alpha/2}`` times the limit spectral mass.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .network import as_columns
from .stable import (
    DiscreteSpectralMeasure,
    StableParams,
    c_alpha,
    sample_discrete_spectral,
    sample_stable,
    unit_and_norm,
)

PrefactorMode = Literal["paper_literal", "tail_consistent"]
PREFACTOR_MODES: tuple[str, ...] = ("paper_literal", "tail_consistent")
RegionIndex = tuple[int, ...]


def all_regions(k: int) -> list[RegionIndex]:
    return [tuple(u) for u in itertools.product((0, 1), repeat=k)]


def region_of(v, X) -> RegionIndex:
    """Activation pattern ``u_j = 1`` iff ``<v, x_j> > 0``."""
    x = as_columns(X)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != x.shape[0]:
        raise ValueError("dimension mismatch between v and inputs")
    return tuple(int(p > 0) for p in v @ x)


def _region_codes(pre: np.ndarray) -> np.ndarray:
    k = pre.shape[1]
    weights = 1 << np.arange(k - 1, -1, -1)
    return (pre > 0).astype(np.int64) @ weights


def orthant_probs(X, alpha: float, N: int, rng: np.random.Generator) -> dict[RegionIndex, tuple[float, float]]:
    """Monte Carlo ``P(w0 in B_u)`` for every ``u``, from one shared sample.

    Returns ``{u: (estimate, binomial standard error)}``; estimates sum to 1.
    """
    if N < 10_000:
        raise ValueError("orthant probabilities need N >= 10^4 samples")
    x = as_columns(X)
    d, k = x.shape
    v = sample_stable(StableParams(alpha), rng, (N, d))
    counts = np.bincount(_region_codes(v @ x), minlength=2**k)
    out = {}
    for code, u in enumerate(all_regions(k)):
        p = counts[code] / N
        out[u] = (float(p), float(np.sqrt(p * (1.0 - p) / N)))
    return out


def orthant_prob(X, u, alpha: float, N: int, rng: np.random.Generator) -> tuple[float, float]:
    u = tuple(int(b) for b in u)
    return orthant_probs(X, alpha, N, rng)[u]


def is_axis_aligned(X) -> bool:
    """Each column is a nonzero multiple of a distinct coordinate axis."""
    x = as_columns(X)
    nz = x != 0
    if not np.all(nz.sum(axis=0) == 1):
        return False
    axes = np.argmax(nz, axis=0)
    return len(set(axes.tolist())) == x.shape[1]


def exact_orthant_probs(X) -> dict[RegionIndex, tuple[float, float]]:
    if not is_axis_aligned(X):
        raise ValueError("exact orthant probabilities need axis-aligned inputs on distinct axes")
    k = as_columns(X).shape[1]
    return {u: (2.0**-k, 0.0) for u in all_regions(k)}


def spectral_gamma_X(X, alpha: float) -> DiscreteSpectralMeasure:
    """Spectral measure of the output limit; terms with a vanishing part are omitted."""
    x = as_columns(X)
    if not np.any(x):
        raise ValueError("inputs are all zero")
    c = c_alpha(alpha) / 4.0
    vecs, wts = [], []
    for i in range(x.shape[0]):
        row = x[i]
        for part in (np.where(row > 0, row, 0.0), np.where(row < 0, row, 0.0)):
            unit, norm = unit_and_norm(part)
            if norm > 0:
                w = c * norm**alpha
                vecs += [unit, -unit]
                wts += [w, w]
    return DiscreteSpectralMeasure(np.array(vecs), np.array(wts), dim=x.shape[1])


def prefactors(alpha: float, mode: PrefactorMode = "tail_consistent") -> tuple[float, float]:
    """``(prefactor for Gamma*_1, prefactor for Gamma*_2)``."""
    ch = c_alpha(alpha / 2.0)
    if mode == "paper_literal":
        return ch, ch
    if mode == "tail_consistent":
        ca = c_alpha(alpha)
        return ca / ch, ca / (2.0 * ch)
    raise ValueError(f"unknown prefactor mode {mode!r}")


def gamma_star_1(X, alpha: float, orthant_probs: dict, mode: PrefactorMode = "tail_consistent") -> DiscreteSpectralMeasure:
    """Spectral measure of the inner-weight kernel limit over flattened k x k matrices."""
    x = as_columns(X)
    k = x.shape[1]
    gram = x.T @ x
    pref = prefactors(alpha, mode)[0]
    dirs, wts = [], []
    for u in all_regions(k):
        if not any(u):
            continue
        if u not in orthant_probs:
            raise ValueError(f"missing orthant probability for region {u}")
        p = orthant_probs[u][0] if isinstance(orthant_probs[u], tuple) else orthant_probs[u]
        unit, nrm = unit_and_norm(gram * np.outer(u, u))
        if nrm <= 0 or p <= 0:
            continue
        dirs.append(unit.ravel())
        wts.append(pref * p * nrm ** (alpha / 2.0))
    return DiscreteSpectralMeasure(np.reshape(dirs, (-1, k * k)), wts, dim=k * k, shape=(k, k))


def gamma_star_2(X, alpha: float, mode: PrefactorMode = "tail_consistent") -> DiscreteSpectralMeasure:
    """Spectral measure of the outer-weight kernel limit over flattened k x k matrices.

    One atom per signed axis ``+-e_i``: with ``u`` the region containing it,
    direction ``v v^T / |v|**2`` for ``v = [x_ji u_j]_j`` and weight
    ``prefactor * |v|**alpha``.
    """
    x = as_columns(X)
    d, k = x.shape
    pref = prefactors(alpha, mode)[1]
    dirs, wts = [], []
    for i in range(d):
        for sign in (1.0, -1.0):
            u = np.array(region_of(sign * np.eye(d)[i], x), dtype=float)
            unit, nrm = unit_and_norm(x[i] * u)
            if nrm <= 0:
                continue
            dirs.append(np.outer(unit, unit).ravel())
            wts.append(pref * nrm**alpha)
    return DiscreteSpectralMeasure(np.reshape(dirs, (-1, k * k)), wts, dim=k * k, shape=(k, k))


@dataclass(frozen=True)
class LimitKernelLaw:
    alpha_half: float
    gamma1: DiscreteSpectralMeasure
    gamma2: DiscreteSpectralMeasure
    prefactor_mode: str
    k: int

    @property
    def total(self) -> DiscreteSpectralMeasure:
        return self.gamma1 + self.gamma2


def limit_kernel_law(
    X,
    alpha: float,
    mode: PrefactorMode = "tail_consistent",
    probs: dict | None = None,
    rng: np.random.Generator | None = None,
    N: int = 200_000,
) -> LimitKernelLaw:
    """Assemble the kernel limit law.

    Orthant probabilities are exact for axis-aligned inputs, otherwise taken
    from ``probs`` or estimated with ``N`` Monte Carlo draws from ``rng``.
    """
    x = as_columns(X)
    if probs is None:
        if is_axis_aligned(x):
            probs = exact_orthant_probs(x)
        elif rng is None:
            raise ValueError("non-axis-aligned inputs need orthant probabilities or an rng")
        else:
            probs = orthant_probs(x, alpha, N, rng)
    return LimitKernelLaw(
        alpha_half=alpha / 2.0,
        gamma1=gamma_star_1(x, alpha, probs, mode),
        gamma2=gamma_star_2(x, alpha, mode),
        prefactor_mode=mode,
        k=x.shape[1],
    )


def sample_limit_process(gamma_X: DiscreteSpectralMeasure, alpha: float, rng: np.random.Generator, size=None) -> np.ndarray:
    return sample_discrete_spectral(gamma_X, alpha, rng, size)


def sample_limit_kernel_parts(law: LimitKernelLaw, rng: np.random.Generator, size=None) -> tuple[np.ndarray, np.ndarray]:
    """Independent draws of the two limit matrices, shape ``(k, k)`` or ``(size, k, k)``."""
    k = law.k
    shape = (k, k) if size is None else (int(size), k, k)
    h1 = sample_discrete_spectral(law.gamma1, law.alpha_half, rng, size).reshape(shape)
    h2 = sample_discrete_spectral(law.gamma2, law.alpha_half, rng, size).reshape(shape)
    return h1, h2


def sample_limit_kernel(law: LimitKernelLaw, rng: np.random.Generator, size=None) -> np.ndarray:
    h1, h2 = sample_limit_kernel_parts(law, rng, size)
    return h1 + h2

