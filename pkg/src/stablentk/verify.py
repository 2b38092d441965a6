"""Monte Carlo machinery for checking the weak limits at desk scale.

Every experiment draws replicate ``i`` from ``replicate_rng(seed, stream, i)``
so results do not depend on the number of worker processes.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .kernel import decompose
from .limits import (
    PREFACTOR_MODES,
    LimitKernelLaw,
    limit_kernel_law,
    sample_limit_kernel,
    spectral_gamma_X,
)
from .network import (
    InputSet,
    as_columns,
    forward_rescaled,
    gaussian_baseline_covariance,
    init_weights,
)
from .seeding import map_replicates, replicate_rng
from .stable import DiscreteSpectralMeasure, c_alpha, cf_symmetric
from .training import DivergenceError, TrainConfig, decay_check, measured_lambda0, network_output, theorem5_certificate, train

CF_HALF_WIDTH = 3.0
CF_POINTS_1D = 61
CF_MAX_POINTS = 200


# --------------------------------------------------------------------------- ECF


@dataclass(frozen=True)
class EcfReport:
    grid: np.ndarray
    empirical: np.ndarray
    reference: np.ndarray | None
    distance: float
    n_samples: int


def default_grid(k: int) -> np.ndarray:
    """61 points on [-3, 3] for k = 1; a tensor grid of at most 200 points otherwise."""
    if k < 1:
        raise ValueError("k must be positive")
    if k == 1:
        return np.linspace(-CF_HALF_WIDTH, CF_HALF_WIDTH, CF_POINTS_1D)[:, None]
    per_axis = int(math.floor(CF_MAX_POINTS ** (1.0 / k) + 1e-9))
    if per_axis < 2:
        raise ValueError(f"no tensor grid with at least 2 points per axis fits {CF_MAX_POINTS} points for k={k}")
    axis = np.linspace(-CF_HALF_WIDTH, CF_HALF_WIDTH, per_axis)
    mesh = np.meshgrid(*([axis] * k), indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


def ecf(samples, grid, reference=None) -> EcfReport:
    """Empirical characteristic function of ``samples`` (rows) on ``grid`` (rows).

    ``reference`` may be an array of values on the grid or a callable taking the
    grid; the distance is the sup over the grid, or 0 without a reference.
    """
    s = np.asarray(samples, dtype=float)
    if s.size == 0:
        raise ValueError("no samples")
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[0] < 100:
        raise ValueError(f"ECF needs at least 100 samples, got {s.shape[0]}")
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.shape[1] != s.shape[1]:
        raise ValueError("grid and samples differ in dimension")
    emp = np.empty(g.shape[0], dtype=complex)
    step = max(1, 2_000_000 // max(1, g.shape[0]))
    acc = np.zeros(g.shape[0], dtype=complex)
    for lo in range(0, s.shape[0], step):
        acc += np.exp(1j * (s[lo : lo + step] @ g.T)).sum(axis=0)
    emp[:] = acc / s.shape[0]
    ref = None
    dist = 0.0
    if reference is not None:
        ref = np.asarray(reference(g) if callable(reference) else reference, dtype=complex).reshape(-1)
        if ref.shape[0] != g.shape[0]:
            raise ValueError("reference values do not match the grid")
        dist = float(np.max(np.abs(emp - ref)))
    return EcfReport(g, emp, ref, dist, int(s.shape[0]))


# -------------------------------------------------------------------------- Hill


@dataclass(frozen=True)
class HillEstimate:
    alpha: float
    stderr: float
    tail_points: int

    def within(self, target: float, tol: float) -> bool:
        return abs(self.alpha - target) <= tol


def hill_tail_index(samples, tail_fraction: float = 0.02) -> HillEstimate:
    """Hill estimator on the largest ``tail_fraction`` of ``|samples|``."""
    x = np.abs(np.asarray(samples, dtype=float).reshape(-1))
    if x.shape[0] < 10_000:
        raise ValueError(f"Hill estimator needs at least 10^4 samples, got {x.shape[0]}")
    if not 0.0 < tail_fraction <= 0.05:
        raise ValueError("tail_fraction must lie in (0, 0.05]")
    k = int(math.floor(tail_fraction * x.shape[0]))
    top = -np.sort(-x)[: k + 1]
    if k < 10 or top[k] <= 0:
        raise ValueError("insufficient non-zero tail points for the Hill estimator")
    a = k / float(np.sum(np.log(top[:k] / top[k])))
    return HillEstimate(a, a / math.sqrt(k), k)


# ------------------------------------------------------------------- KS, sweeps


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov distance and p-value."""
    r = stats.ks_2samp(np.asarray(a, dtype=float).ravel(), np.asarray(b, dtype=float).ravel())
    return float(r.statistic), float(r.pvalue)


def log_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x = np.log(np.asarray(x, dtype=float))
    y = np.log(np.maximum(np.asarray(y, dtype=float), 1e-300))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class SweepResult:
    name: str
    widths: list[int]
    statistic: list[float]
    stderr: list[float] | None = None
    reference: float | None = None
    extra: dict[str, list] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.widths, self.widths[1:])):
            raise ValueError("widths must be strictly increasing")
        if len(self.statistic) != len(self.widths):
            raise ValueError("one statistic per width is required")

    @property
    def slope(self) -> float:
        if len(self.widths) < 2:
            return float("nan")
        return log_slope(self.widths, self.statistic)

    @property
    def decreasing(self) -> bool:
        return self.slope < 0

    def columns(self) -> list[str]:
        cols = ["width", self.name]
        if self.stderr is not None:
            cols.append("stderr")
        return cols + sorted(self.extra)

    def rows(self) -> list[list]:
        out = []
        for i, m in enumerate(self.widths):
            row = [m, self.statistic[i]]
            if self.stderr is not None:
                row.append(self.stderr[i])
            row += [self.extra[k][i] for k in sorted(self.extra)]
            out.append(row)
        return out

    def summary(self) -> dict:
        d = {
            "name": self.name,
            "widths": list(self.widths),
            "statistic": list(self.statistic),
            "slope": self.slope,
        }
        if self.stderr is not None:
            d["stderr"] = list(self.stderr)
        if self.reference is not None:
            d["reference"] = self.reference
        for k in sorted(self.extra):
            d[k] = list(self.extra[k])
        return d


# --------------------------------------------------------- finite-width draws


@dataclass(frozen=True)
class InitSamples:
    """Per replicate: rescaled outputs ``(N, k)`` and kernel parts ``(N, k, k)``."""

    width: int
    outputs: np.ndarray
    h1: np.ndarray
    h2: np.ndarray

    @property
    def kernel(self) -> np.ndarray:
        return self.h1 + self.h2


def _init_replicate(i: int, x: np.ndarray, alpha: float, m: int, seed: int, stream: str):
    rng = replicate_rng(seed, f"{stream}/alpha={alpha!r}/d={x.shape[0]}/k={x.shape[1]}/m={m}", i)
    W = init_weights(m, x.shape[0], alpha, rng)
    kp = decompose(W, x)
    return forward_rescaled(W, x), kp.h1, kp.h2


def simulate_initialization(X, alpha: float, m: int, N: int, seed: int, stream: str = "init", workers: int = 1) -> InitSamples:
    """``N`` independent networks of width ``m`` evaluated at ``X``."""
    x = as_columns(X)
    fn = functools.partial(_init_replicate, x=x, alpha=alpha, m=m, seed=seed, stream=stream)
    res = map_replicates(fn, N, workers=workers)
    return InitSamples(
        m,
        np.array([r[0] for r in res]),
        np.array([r[1] for r in res]),
        np.array([r[2] for r in res]),
    )


def simulate_widths(X, alpha, widths, N, seed, stream="init", workers=1) -> dict[int, InitSamples]:
    return {int(m): simulate_initialization(X, alpha, int(m), N, seed, stream, workers) for m in widths}


def _check_widths(widths) -> list[int]:
    w = [int(m) for m in widths]
    if any(m < 2 for m in w):
        raise ValueError("widths must be at least 2")
    return w


# ------------------------------------------------------------ output limit


def output_reference(X, alpha: float) -> Callable[[np.ndarray], np.ndarray]:
    """Limit CF of the rescaled output: stable with ``Gamma_X``, or Gaussian at ``alpha = 2``."""
    if alpha == 2.0:
        cov = gaussian_baseline_covariance(X)
        return lambda g: np.exp(-0.5 * np.einsum("ij,jk,ik->i", g, cov, g)) + 0j
    gamma = spectral_gamma_X(X, alpha)
    return lambda g: cf_symmetric(g, gamma, alpha)


def theorem1_sweep(
    X,
    alpha: float,
    widths: Sequence[int],
    N: int,
    seed: int,
    workers: int = 1,
    grid=None,
    samples: Mapping[int, InitSamples] | None = None,
) -> tuple[SweepResult, dict[int, EcfReport]]:
    """ECF sup distance of rescaled outputs to the limit CF at each width."""
    widths = _check_widths(widths)
    x = as_columns(X)
    grid = default_grid(x.shape[1]) if grid is None else np.asarray(grid, dtype=float)
    ref = output_reference(x, alpha)(grid if grid.ndim == 2 else grid[:, None])
    reports = {}
    for m in widths:
        s = samples[m] if samples is not None and m in samples else simulate_initialization(x, alpha, m, N, seed, "init", workers)
        reports[m] = ecf(s.outputs, grid, ref)
    sweep = SweepResult("ecf_distance", widths, [reports[m].distance for m in widths])
    return sweep, reports


# ------------------------------------------------------------ kernel limit


def _upper_entries(k: int) -> list[tuple[int, int]]:
    return [(a, b) for a in range(k) for b in range(a, k)]


def limit_kernel_draws(law: LimitKernelLaw, n: int, seed: int, stream: str = "limit-kernel") -> np.ndarray:
    return sample_limit_kernel(law, replicate_rng(seed, stream, 0), n)


def max_entry_ks(kernels: np.ndarray, reference: np.ndarray) -> tuple[float, list[float]]:
    k = kernels.shape[1]
    per = [ks_two_sample(kernels[:, a, b], reference[:, a, b])[0] for a, b in _upper_entries(k)]
    return max(per), per


@dataclass
class Theorem2Result:
    ks: SweepResult
    hill: dict[int, list[HillEstimate]]
    spearman: dict[int, float]

    def summary(self) -> dict:
        return {
            "ks": self.ks.summary(),
            "hill": {str(m): [[h.alpha, h.stderr] for h in hs] for m, hs in self.hill.items()},
            "spearman_h1_h2": {str(m): v for m, v in self.spearman.items()},
        }


def theorem2_sweep(
    X,
    alpha: float,
    widths: Sequence[int],
    N: int,
    seed: int,
    law: LimitKernelLaw,
    workers: int = 1,
    n_reference: int = 100_000,
    samples: Mapping[int, InitSamples] | None = None,
    tail_fraction: float = 0.02,
) -> Theorem2Result:
    """Entry-wise KS to limit draws, Hill index of diagonal entries, and h1/h2 rank correlation."""
    widths = _check_widths(widths)
    x = as_columns(X)
    ref = limit_kernel_draws(law, n_reference, seed)
    stat, per_entry, hill, rho = [], [], {}, {}
    for m in widths:
        s = samples[m] if samples is not None and m in samples else simulate_initialization(x, alpha, m, N, seed, "init", workers)
        K = s.kernel
        d, per = max_entry_ks(K, ref)
        stat.append(d)
        per_entry.append(per)
        if K.shape[0] >= 10_000:
            hill[m] = [hill_tail_index(K[:, j, j], tail_fraction) for j in range(K.shape[1])]
        tr1 = np.trace(s.h1, axis1=1, axis2=2)
        tr2 = np.trace(s.h2, axis1=1, axis2=2)
        rho[m] = float(stats.spearmanr(tr1, tr2).statistic)
    sweep = SweepResult("ks_distance", widths, stat, extra={"ks_entries": [";".join(repr(v) for v in p) for p in per_entry]})
    return Theorem2Result(sweep, hill, rho)


# ------------------------------------------------------- prefactor calibration


@dataclass(frozen=True)
class CalibrationReport:
    selected: str
    distances: dict[str, float]
    noise: float
    inconclusive: bool
    n_samples: int
    n_reference: int

    def report(self) -> str:
        parts = ", ".join(f"{k}={v:.5f}" for k, v in sorted(self.distances.items()))
        verdict = "INCONCLUSIVE (defaulting to tail_consistent)" if self.inconclusive else "conclusive"
        return f"prefactor calibration: selected {self.selected}; KS distances {parts}; noise scale {self.noise:.5f}; {verdict}"


def ks_noise(n: int, n_ref: int) -> float:
    """5% two-sample KS critical value for sample sizes ``n`` and ``n_ref``."""
    return 1.358 * math.sqrt((n + n_ref) / (n * n_ref))


def select_prefactor(kernels: np.ndarray, X, alpha: float, n_reference: int, rng: np.random.Generator, probs=None) -> CalibrationReport:
    """Compare finite-width (or synthetic) kernels with both conventions; pick the closer one."""
    kernels = np.asarray(kernels, dtype=float)
    dist = {}
    for mode in PREFACTOR_MODES:
        law = limit_kernel_law(X, alpha, mode, probs=probs, rng=rng)
        ref = sample_limit_kernel(law, rng, n_reference)
        dist[mode] = max_entry_ks(kernels, ref)[0]
    noise = ks_noise(kernels.shape[0], n_reference)
    gap = abs(dist["paper_literal"] - dist["tail_consistent"])
    inconclusive = gap < noise
    selected = "tail_consistent" if inconclusive else min(dist, key=dist.get)
    return CalibrationReport(selected, dist, noise, inconclusive, kernels.shape[0], n_reference)


def calibrate_prefactor(
    X,
    alpha: float,
    m_large: int,
    N: int,
    seed: int,
    workers: int = 1,
    n_reference: int = 100_000,
    samples: InitSamples | None = None,
) -> CalibrationReport:
    """Select the prefactor convention against finite-width kernels at ``m_large >= 2**16``."""
    if m_large < 2**16:
        raise ValueError(f"calibration needs m_large >= 2^16, got {m_large}")
    x = as_columns(X)
    if samples is None or samples.width != m_large:
        samples = simulate_initialization(x, alpha, m_large, N, seed, "init", workers)
    return select_prefactor(samples.kernel, x, alpha, n_reference, replicate_rng(seed, "calibrate", 0))


def calibration_self_test(X, alpha: float, mode: str, N: int, n_reference: int, seed: int, rep: int) -> CalibrationReport:
    """Run the selection on synthetic draws from the ``mode`` law."""
    rng = replicate_rng(seed, f"calibration-self-test/{mode}", rep)
    law = limit_kernel_law(X, alpha, mode, rng=rng)
    synthetic = sample_limit_kernel(law, rng, N)
    return select_prefactor(synthetic, X, alpha, n_reference, rng)


# ------------------------------------------------------ minimum eigenvalue


@dataclass(frozen=True)
class Theorem3Result:
    lambda_min: np.ndarray
    h1_min: np.ndarray
    h2_min: np.ndarray
    quantile: float
    q: float

    @property
    def psd_floor(self) -> float:
        return float(min(self.h1_min.min(), self.h2_min.min()))


def _lambda_replicate(i, x, alpha, m, seed):
    W = init_weights(m, x.shape[0], alpha, replicate_rng(seed, f"theorem3/alpha={alpha!r}/m={m}", i))
    kp = decompose(W, x)
    ev = [float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]) for M in (kp.total, kp.h1, kp.h2)]
    return ev


def theorem3_quantile(X, alpha: float, m: int, seeds: int, seed: int, workers: int = 1, q: float = 0.05) -> Theorem3Result:
    """Empirical distribution of ``lambda_min(H~(W(0), X))`` over ``seeds`` networks."""
    inputs = X if isinstance(X, InputSet) else InputSet(X)
    inputs.require_independent_unit()
    fn = functools.partial(_lambda_replicate, x=inputs.columns, alpha=alpha, m=m, seed=seed)
    ev = np.array(map_replicates(fn, seeds, workers=workers))
    lam = ev[:, 0]
    return Theorem3Result(lam, ev[:, 1], ev[:, 2], float(np.quantile(lam, q)), q)


# ---------------------------------------------------------------- Lévy tails


@dataclass(frozen=True)
class LevyTailResult:
    n_grid: list[float]
    estimate: list[float]
    stderr: list[float]
    target: float

    def z_scores(self) -> np.ndarray:
        se = np.maximum(np.asarray(self.stderr), 1e-300)
        return (np.asarray(self.estimate) - self.target) / se

    def within(self, z: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.z_scores()) <= z))

    @property
    def relative_error(self) -> list[float]:
        if self.target == 0:
            return list(self.estimate)
        return [e / self.target - 1.0 for e in self.estimate]


def levy_tail_check(
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    alpha: float,
    indicator: Callable[[np.ndarray], np.ndarray],
    n_grid: Sequence[float],
    N: int,
    seed: int,
    gamma_A: float,
    stream: str = "levy",
) -> LevyTailResult:
    """Estimate ``n P(|xi| > n**(1/alpha), xi/|xi| in A)`` on ``n_grid``; target ``C_alpha Gamma(A)``.

    ``sampler(rng, N)`` returns ``N`` draws as rows; one fresh batch per grid point.
    """
    est, se = [], []
    for j, n in enumerate(n_grid):
        xi = np.asarray(sampler(replicate_rng(seed, stream, j), N), dtype=float)
        if xi.ndim == 1:
            xi = xi[:, None]
        r = np.linalg.norm(xi, axis=1)
        big = r > n ** (1.0 / alpha)
        hit = np.zeros(N, dtype=bool)
        if big.any():
            hit[big] = np.asarray(indicator(xi[big] / r[big, None]), dtype=bool)
        p = hit.mean()
        est.append(float(n * p))
        se.append(float(n * math.sqrt(max(p * (1 - p), 1.0 / N**2) / N)))
    return LevyTailResult([float(n) for n in n_grid], est, se, c_alpha(alpha) * gamma_A)


def spherical_cap(center, cos_min: float) -> Callable[[np.ndarray], np.ndarray]:
    """Indicator of ``{s : <s, center> > cos_min}``."""
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    return lambda s: s @ c > cos_min


def measure_sampler(gamma: DiscreteSpectralMeasure, alpha: float) -> Callable[[np.random.Generator, int], np.ndarray]:
    from .stable import sample_discrete_spectral

    return lambda rng, n: sample_discrete_spectral(gamma, alpha, rng, n)


# -------------------------------------------------------------- training


@dataclass
class TrainingOutcome:
    index: int
    status: str
    message: str = ""
    trajectory: object | None = None
    initial_residual: float = float("nan")
    final_residual: float = float("nan")
    max_weight_drift: float = float("nan")
    final_h2_drift: float = float("nan")
    lambda0: float = float("nan")
    certificate: bool = False
    decay_ok: bool = False


def _targets(kind: str, rng: np.random.Generator, W, x) -> np.ndarray:
    if kind == "random":
        return rng.uniform(-1.0, 1.0, x.shape[1])
    if kind == "initial-output":
        return network_output(W, x)
    raise ValueError(f"unknown target kind {kind!r}")


def _train_replicate(i, x, alpha, m, seed, cfg: TrainConfig, targets: str, decay_slack: float, decay_atol: float, keep: bool):
    rng = replicate_rng(seed, f"train/alpha={alpha!r}/m={m}", i)
    W0 = init_weights(m, x.shape[0], alpha, rng)
    Y = _targets(targets, rng, W0, x)
    try:
        traj = train(W0, x, Y, cfg)
    except DivergenceError as exc:
        return TrainingOutcome(i, "diverged", str(exc))
    lam0 = measured_lambda0(traj)
    cert = theorem5_certificate(traj, lam0, slack=decay_slack)
    ok = decay_check(traj, slack=decay_slack, atol=decay_atol)
    traj.final = None
    return TrainingOutcome(
        i,
        "ok",
        cert.report(),
        traj if keep else None,
        float(traj.residual[0]),
        float(traj.residual[-1]),
        float(traj.weight_drift.max()),
        float(traj.h2_drift[-1]),
        lam0,
        cert.holds,
        bool(np.all(ok)),
    )


def training_batch(
    X,
    alpha: float,
    m: int,
    seeds: int,
    seed: int,
    cfg: TrainConfig | None = None,
    targets: str = "random",
    workers: int = 1,
    decay_slack: float = 1.05,
    decay_atol: float = 0.0,
    keep_trajectories: bool = False,
) -> list[TrainingOutcome]:
    """Train ``seeds`` independent networks; divergence is recorded per seed, never raised."""
    x = as_columns(X)
    fn = functools.partial(
        _train_replicate,
        x=x,
        alpha=alpha,
        m=m,
        seed=seed,
        cfg=cfg or TrainConfig(),
        targets=targets,
        decay_slack=decay_slack,
        decay_atol=decay_atol,
        keep=keep_trajectories,
    )
    return map_replicates(fn, seeds, workers=workers)
