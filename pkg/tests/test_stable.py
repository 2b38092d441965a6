import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablentk.stable import (
    CharacteristicExponent,
    DiscreteSpectralMeasure,
    StableParams,
    c_alpha,
    cf_skewed,
    cf_symmetric,
    projection_scale,
    sample_discrete_spectral,
    sample_stable,
)
from stablentk.verify import ecf

GRID = np.linspace(-3, 3, 61)


def rng(i=0):
    return np.random.default_rng(1000 + i)


def c_alpha_oracle(a):
    # independent evaluation with mpmath
    a = mpmath.mpf(a)
    return float((1 - a) / (mpmath.gamma(2 - a) * mpmath.cos(mpmath.pi * a / 2)))


def sym_pair(dim=1, w=0.5):
    e = np.eye(dim)[0]
    return DiscreteSpectralMeasure(np.array([e, -e]), [w, w], dim=dim)


# ------------------------------------------------------------------ c_alpha


def test_c_alpha_at_one():
    assert c_alpha(1.0) == pytest.approx(2 / math.pi, abs=1e-15)
    assert c_alpha(1.0) == pytest.approx(0.636619, abs=1e-6)


@pytest.mark.parametrize("a", [1 - 1e-4, 1 + 1e-4])
def test_c_alpha_continuous_at_one(a):
    assert c_alpha_oracle(a) == pytest.approx(2 / math.pi, abs=1e-4)
    assert abs(c_alpha(a) - 2 / math.pi) < 1e-4
    assert c_alpha(a) == pytest.approx(c_alpha_oracle(a), rel=1e-12)


def test_c_alpha_half():
    assert c_alpha(0.5) == pytest.approx(0.79788, abs=1e-5)
    assert c_alpha(0.5) == pytest.approx(c_alpha_oracle(0.5), rel=1e-12)


@given(st.floats(0.01, 1.99).filter(lambda a: abs(a - 1) > 1e-6))
def test_c_alpha_matches_oracle(a):
    assert c_alpha(a) == pytest.approx(c_alpha_oracle(a), rel=1e-10)
    assert c_alpha(a) > 0


@pytest.mark.parametrize("a", [0.0, 2.0, -1.0, 2.5])
def test_c_alpha_rejects(a):
    with pytest.raises(ValueError):
        c_alpha(a)


# ------------------------------------------------------------------ params / sampler


@pytest.mark.parametrize("kw", [dict(alpha=0), dict(alpha=2.1), dict(alpha=1, beta=1.5), dict(alpha=1, sigma=0)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        StableParams(**kw)


def test_cf_at_origin_is_one():
    x = sample_stable(StableParams(2.0, 0, 3.0), rng(), 1000)
    assert ecf(x, [[0.0]]).empirical[0] == 1.0


def test_cauchy_cf_at_one():
    x = sample_stable(StableParams(1.0), rng(1), 100_000)
    assert abs(ecf(x, [[1.0]]).empirical[0] - math.exp(-1)) < 0.02


def test_one_sided_positive():
    x = sample_stable(StableParams(0.75, 1.0, 1.0), rng(2), 100_000)
    assert np.all(x > 0)


@pytest.mark.parametrize("a", [0.5, 1.0, 1.5, 2.0])
def test_symmetric_ecf_within_4_over_sqrt_n(a):
    n = 10_000
    sigma = 1.3
    x = sample_stable(StableParams(a, 0, sigma), rng(3), n)
    rep = ecf(x, GRID, np.exp(-(sigma**a) * np.abs(GRID) ** a))
    assert rep.distance < 4 / math.sqrt(n)


@pytest.mark.parametrize("a", [0.5, 0.8, 1.0, 1.3, 1.7])
@pytest.mark.parametrize("beta", [1.0, -0.6])
def test_skewed_ecf_matches_exponent(a, beta):
    n = 100_000
    sigma = 0.7
    x = sample_stable(StableParams(a, beta, sigma), rng(4), n)
    z = GRID
    if a == 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(z != 0, np.log(np.abs(z)), 0.0)
        psi = -sigma * np.abs(z) * (1 + 1j * beta * (2 / math.pi) * np.sign(z) * lg)
    else:
        psi = -(sigma**a) * np.abs(z) ** a * (1 - 1j * beta * np.sign(z) * math.tan(math.pi * a / 2))
    assert ecf(x, z, np.exp(psi)).distance < 4 / math.sqrt(n)


def test_gaussian_variance_is_two_sigma_squared():
    sigma = 1.5
    x = sample_stable(StableParams(2.0, 0, sigma), rng(5), 200_000)
    assert np.var(x) == pytest.approx(2 * sigma**2, rel=0.02)


def test_scalar_draw():
    assert isinstance(sample_stable(StableParams(1.2), rng()), float)


# ------------------------------------------------------------------ spectral measures


def test_measure_drops_zero_atoms_and_checks_norms():
    g = DiscreteSpectralMeasure(np.array([[1.0, 0], [0, 1.0], [0, 0]]), [0.0, 2.0, 3.0], dim=2)
    assert len(g) == 1 and g.total_mass == 2.0
    with pytest.raises(ValueError):
        DiscreteSpectralMeasure(np.array([[1.0, 1.0]]), [1.0])
    with pytest.raises(ValueError):
        DiscreteSpectralMeasure(np.array([[1.0, 0.0]]), [-1.0])


def test_measure_symmetry_detection():
    assert sym_pair().is_symmetric()
    g = DiscreteSpectralMeasure(np.array([[1.0], [-1.0]]), [1.0, 2.0])
    assert not g.is_symmetric()


def test_cf_symmetric_examples():
    g = sym_pair()
    assert cf_symmetric([0.0], g, 1.3) == 1.0
    assert cf_symmetric([2.0], g, 1.0) == pytest.approx(math.exp(-2))


@given(st.floats(0.1, 2.0), st.floats(0.01, 5.0), st.floats(-3, 3), st.floats(-3, 3))
def test_cf_symmetric_homogeneity(a, c, z1, z2):
    g = DiscreteSpectralMeasure.from_vectors(np.array([[1.0, 2.0], [-1.0, -2.0], [0.5, -1.0], [-0.5, 1.0]]), [0.3, 0.3, 0.7, 0.7])
    z = np.array([z1, z2])
    lhs = cf_symmetric(c * z, g, a)
    rhs = cf_symmetric(z, g, a) ** (c**a)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-300)


def test_cf_skewed_examples():
    g1 = DiscreteSpectralMeasure(np.array([[1.0]]), [1.0])
    assert cf_skewed([0.0], g1, 0.5) == 1.0
    assert cf_skewed([1.0], g1, 0.5) == pytest.approx(np.exp(-1 + 1j), abs=1e-12)


@given(
    st.floats(0.1, 1.95).filter(lambda a: abs(a - 1) > 1e-3) | st.just(1.0),
    st.lists(st.floats(-3, 3), min_size=2, max_size=2),
)
def test_skewed_equals_symmetric_on_paired(a, z):
    g = DiscreteSpectralMeasure.from_vectors(np.array([[1.0, 2.0], [-1.0, -2.0], [0.0, 1.0], [0.0, -1.0]]), [0.3, 0.3, 0.9, 0.9])
    psi = CharacteristicExponent(a, g, "one_sided")(z)
    assert abs(psi.imag) < 1e-12
    assert cf_skewed(z, g, a) == pytest.approx(cf_symmetric(z, g, a), abs=1e-12)


@given(st.floats(0.1, 2.0), st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.sampled_from(["symmetric", "one_sided"]))
def test_exponent_real_part_nonpositive(a, z, mode):
    g = DiscreteSpectralMeasure.from_vectors(np.array([[1.0, 0, 1], [0.2, -1, 0], [0, 0, 1]]), [0.4, 1.1, 0.2])
    psi = CharacteristicExponent(a, g, mode)
    assert psi(z).real <= 0
    assert psi([0, 0, 0]) == 0


def test_exponent_batch_matches_pointwise():
    g = DiscreteSpectralMeasure.from_vectors(np.array([[1.0, 0.5], [0.3, -1]]), [0.4, 1.1])
    Z = np.random.default_rng(0).normal(size=(7, 2))
    psi = CharacteristicExponent(0.9, g, "one_sided")
    assert np.allclose(psi(Z), [psi(z) for z in Z])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        cf_symmetric([1.0, 2.0], sym_pair(), 1.0)


def test_projection_scale_examples():
    g = sym_pair(dim=2)
    assert projection_scale(g, 1.4, 1) == pytest.approx(1.0)
    assert projection_scale(g, 1.4, 2) == 0.0
    w = 0.37
    g1 = DiscreteSpectralMeasure(np.array([[1.0, 0.0]]), [w])
    assert projection_scale(g1, 0.8, 1) == pytest.approx(w ** (1 / 0.8))
    with pytest.raises(ValueError):
        projection_scale(g, 1.0, 3)


@given(st.floats(0.1, 2.0), st.floats(0.01, 100.0))
def test_projection_scale_homogeneous(a, c):
    g = DiscreteSpectralMeasure.from_vectors(np.array([[1.0, 2.0], [0.3, -1.0]]), [0.4, 1.1])
    assert projection_scale(g.scaled(c), a, 2) == pytest.approx(c ** (1 / a) * projection_scale(g, a, 2), rel=1e-10)


def test_discrete_sampler_empty_measure():
    g = DiscreteSpectralMeasure.empty(3)
    assert np.array_equal(sample_discrete_spectral(g, 1.2, rng(), 5), np.zeros((5, 3)))
    assert sample_discrete_spectral(g, 1.2, rng()).shape == (3,)


@pytest.mark.parametrize("a", [0.5, 1.0, 1.5])
def test_discrete_sampler_symmetric_pair(a):
    x = sample_discrete_spectral(sym_pair(), a, rng(6), 100_000)
    assert ecf(x, GRID, np.exp(-np.abs(GRID) ** a)).distance < 4 / math.sqrt(100_000)


@pytest.mark.parametrize("a", [0.6, 1.0, 1.4])
def test_discrete_sampler_matches_cf_skewed(a):
    g = DiscreteSpectralMeasure.from_vectors(np.array([[1.0, 0.0], [0.6, 0.8], [-1.0, 1.0]]), [0.5, 0.25, 1.3])
    x = sample_discrete_spectral(g, a, rng(7), 100_000)
    ax = np.linspace(-2, 2, 9)
    grid = np.array([[u, v] for u in ax for v in ax])
    assert ecf(x, grid, lambda z: cf_skewed(z, g, a)).distance < 4 / math.sqrt(100_000)


def test_discrete_sampler_psd_direction():
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    g = DiscreteSpectralMeasure.from_vectors(M.ravel()[None, :], [np.linalg.norm(M) ** 0.7], shape=(2, 2))
    draws = sample_discrete_spectral(g, 0.7, rng(8), 2000).reshape(-1, 2, 2)
    assert np.all(np.linalg.eigvalsh(draws) >= -1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.3, 1.9))
def test_discrete_sampler_is_deterministic(seed, a):
    g = DiscreteSpectralMeasure.from_vectors(np.array([[1.0, 2.0], [-1.0, 0.0]]), [0.5, 0.25])
    a1 = sample_discrete_spectral(g, a, np.random.default_rng(seed), 10)
    a2 = sample_discrete_spectral(g, a, np.random.default_rng(seed), 10)
    assert np.array_equal(a1, a2)
