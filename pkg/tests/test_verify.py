import math

import numpy as np
import pytest

from stablentk.limits import limit_kernel_law
from stablentk.network import InputSet, orthonormal
from stablentk.stable import DiscreteSpectralMeasure, StableParams, c_alpha, sample_stable
from stablentk.verify import (
    SweepResult,
    calibrate_prefactor,
    calibration_self_test,
    default_grid,
    ecf,
    hill_tail_index,
    ks_noise,
    ks_two_sample,
    levy_tail_check,
    log_slope,
    measure_sampler,
    output_reference,
    simulate_initialization,
    spherical_cap,
    theorem1_sweep,
    theorem2_sweep,
    theorem3_quantile,
    training_batch,
)
from stablentk.training import TrainConfig


def rng(i=0):
    return np.random.default_rng(900 + i)


# ---------------------------------------------------------------- ECF


def test_ecf_constant_sample():
    rep = ecf(np.zeros(200), [[0.0], [1.0], [2.5]], np.ones(3))
    assert rep.distance == 0.0 and np.all(rep.empirical == 1)


def test_ecf_symmetric_sample_is_real():
    x = np.r_[np.linspace(0.1, 3, 100), -np.linspace(0.1, 3, 100)]
    rep = ecf(x, default_grid(1))
    assert np.max(np.abs(rep.empirical.imag)) < 1e-12


def test_ecf_validation():
    with pytest.raises(ValueError):
        ecf(np.zeros(99), [[1.0]])
    with pytest.raises(ValueError):
        ecf(np.zeros((200, 2)), [[1.0]])
    with pytest.raises(ValueError):
        ecf(np.zeros(200), [[1.0]], np.ones(2))


def test_default_grid_sizes():
    assert default_grid(1).shape == (61, 1)
    assert default_grid(2).shape == (196, 2)
    assert default_grid(3).shape[0] <= 200
    with pytest.raises(ValueError):
        default_grid(0)


# ---------------------------------------------------------------- Hill


def test_hill_on_pareto():
    a = 1.3
    x = rng(1).uniform(size=200_000) ** (-1 / a)
    h = hill_tail_index(x)
    assert abs(h.alpha - a) <= 3 * h.stderr
    assert h.tail_points == 4000 and h.within(a, 0.1)


def test_hill_one_sided_half_stable():
    x = sample_stable(StableParams(0.5, 1.0), rng(2), 200_000)
    h = hill_tail_index(x, 0.01)
    assert abs(h.alpha - 0.5) <= 3 * h.stderr + 0.02


def test_hill_scale_invariant():
    x = sample_stable(StableParams(1.1), rng(3), 20_000)
    assert hill_tail_index(7.5 * x).alpha == pytest.approx(hill_tail_index(x).alpha, rel=1e-12)


def test_hill_validation():
    with pytest.raises(ValueError):
        hill_tail_index(np.ones(9_999))
    with pytest.raises(ValueError):
        hill_tail_index(np.ones(20_000), 0.1)
    with pytest.raises(ValueError):
        hill_tail_index(np.zeros(20_000))


# ---------------------------------------------------------------- KS and sweeps


def test_ks_cases():
    a = rng(4).normal(size=1000)
    assert ks_two_sample(a, a) == (0.0, 1.0)
    assert ks_two_sample(a, a + 100)[0] == 1.0
    b = rng(5).normal(size=5000)
    assert ks_two_sample(a, b)[0] < ks_noise(1000, 5000) * 1.5
    assert ks_noise(100, 100) == pytest.approx(1.358 * math.sqrt(0.02))


def test_sweep_result():
    w = [10, 100, 1000]
    s = SweepResult("d", w, [v**-0.5 for v in w], stderr=[0.1] * 3, extra={"z": [1, 2, 3]})
    assert s.slope == pytest.approx(-0.5) and s.decreasing
    assert s.columns() == ["width", "d", "stderr", "z"]
    assert s.rows()[1] == [100, 0.1, 0.1, 2]
    assert s.summary()["slope"] == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        SweepResult("d", [100, 10], [1.0, 2.0])
    assert math.isnan(SweepResult("d", [4], [1.0]).slope)
    assert log_slope([1, 10], [1, 100]) == pytest.approx(2.0)


# ---------------------------------------------------------------- Lévy tails


def test_levy_zero_mass_set():
    g = DiscreteSpectralMeasure(np.array([[1.0, 0.0], [-1.0, 0.0]]), [0.5, 0.5])
    res = levy_tail_check(measure_sampler(g, 1.2), 1.2, spherical_cap([0.0, 1.0], 0.9), [10, 100], 100_000, 1, 0.0)
    assert res.target == 0 and res.estimate == [0.0, 0.0] and res.within()


def test_levy_network_summand_grows_like_log():
    # w ReLU(w0) has P(|.| > t) ~ (alpha/2) C^2 t^-alpha log t, so n P(|.| > n^(1/alpha)) gains (C^2/2) ln 10 per decade
    a = 1.5

    def summand(g, n):
        w, w0 = sample_stable(StableParams(a), g, (2, n))
        return w * np.maximum(w0, 0)

    res = levy_tail_check(summand, a, lambda s: np.ones(len(s), bool), [10, 100, 1000], 1_000_000, 2, 1.0)
    step = 0.5 * c_alpha(a) ** 2 * math.log(10)
    inc = np.diff(res.estimate)
    assert np.all(inc > 0.5 * step) and np.all(inc < 1.5 * step)


def test_levy_stable_vector_hits_target():
    a = 0.8
    g = DiscreteSpectralMeasure.from_vectors(np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]]), [0.25] * 4)
    cap = spherical_cap([1.0, 1.0], 0.99)
    res = levy_tail_check(measure_sampler(g, a), a, cap, [300, 1000], 1_000_000, 3, 0.25)
    assert res.within(3.0), res.z_scores()


# ---------------------------------------------------------------- limit checks


def test_gaussian_baseline_reference():
    ref = output_reference(np.ones((1, 1)), 2.0)
    z = default_grid(1)
    assert np.allclose(ref(z), np.exp(-z[:, 0] ** 2))


def test_gaussian_width_sweep_small():
    X = np.ones((1, 1))
    sweep, reps = theorem1_sweep(X, 2.0, [512], 4000, 11)
    assert sweep.statistic[0] < 4 / math.sqrt(4000) + 0.02


def test_theorem2_small_sweep():
    X = np.eye(2)
    law = limit_kernel_law(X, 1.5)
    res = theorem2_sweep(X, 1.5, [4, 64], 200, 12, law, n_reference=2000)
    assert res.hill == {} and set(res.spearman) == {4, 64}
    assert len(res.ks.extra["ks_entries"][0].split(";")) == 3


def test_theorem3_guard_and_scalar():
    with pytest.raises(ValueError):
        theorem3_quantile(np.array([[1.0, 1.0], [0.0, 0.0]]), 1.5, 64, 4, 0)
    res = theorem3_quantile(np.ones((1, 1)), 1.5, 64, 20, 0)
    assert np.all(res.lambda_min >= 0)
    assert np.allclose(res.lambda_min, res.h1_min + res.h2_min)


def test_calibration_self_tests_recover_mode():
    X = np.ones((1, 1))
    for mode in ("paper_literal", "tail_consistent"):
        r = calibration_self_test(X, 1.5, mode, 2000, 20_000, 13, 0)
        assert r.selected == mode and not r.inconclusive
        assert mode in r.report()


def test_calibration_needs_large_width():
    with pytest.raises(ValueError):
        calibrate_prefactor(np.ones((1, 1)), 1.0, 2**15, 100, 0)


# ---------------------------------------------------------------- determinism


def test_worker_count_does_not_change_draws():
    X = orthonormal(4, 2, rng(6)).columns
    a = simulate_initialization(X, 1.2, 32, 24, 14, workers=1)
    b = simulate_initialization(X, 1.2, 32, 24, 14, workers=2)
    for f in ("outputs", "h1", "h2"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = simulate_initialization(X, 1.2, 32, 30, 14)
    assert np.array_equal(a.outputs, c.outputs[:24])


def test_different_widths_use_different_streams():
    X = np.ones((1, 1))
    a = simulate_initialization(X, 1.2, 32, 5, 14)
    b = simulate_initialization(X, 1.2, 33, 5, 14)
    assert not np.allclose(a.outputs, b.outputs)


# ---------------------------------------------------------------- training batches


def test_training_batch_records_divergence():
    X = InputSet(orthonormal(4, 2, rng(7)).columns).columns
    out = training_batch(X, 1.5, 256, 3, 15, TrainConfig(dt=50.0, t_max=100.0))
    assert [o.status for o in out] == ["diverged"] * 3
    assert all("dt" in o.message for o in out)


def test_training_batch_initial_output_targets():
    X = orthonormal(4, 2, rng(8)).columns
    out = training_batch(X, 1.5, 128, 2, 16, TrainConfig(t_max=0.5), targets="initial-output", keep_trajectories=True)
    for o in out:
        assert o.status == "ok" and o.final_residual == 0 and o.max_weight_drift == 0
        assert o.trajectory is not None and o.decay_ok and o.certificate
    with pytest.raises(ValueError):
        training_batch(X, 1.5, 128, 1, 16, targets="other")


def test_training_batch_worker_invariant():
    X = orthonormal(4, 2, rng(9)).columns
    cfg = TrainConfig(t_max=0.5)
    a = training_batch(X, 1.5, 128, 4, 17, cfg, workers=1)
    b = training_batch(X, 1.5, 128, 4, 17, cfg, workers=2)
    assert [o.final_residual for o in a] == [o.final_residual for o in b]
