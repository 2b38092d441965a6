"""Explicit-Euler integration of the gradient flow on the squared-error loss.

``dW/dt = -eta * grad_W (1/2) sum_j (f~(x_j) - y_j)**2`` with the default
learning rate ``eta = (log m)**(2/alpha)``.  Along the flow
``d/dt |f~ - Y|**2 = -2 (eta / kappa) (f~ - Y) H~ (f~ - Y)^T`` where
``kappa = (log m)**(2/alpha)`` is the kernel rescaling, so with the default
``eta`` the residual decays at least like ``exp(-2 lambda_min(H~) t)``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from numba import njit

from .kernel import decompose
from .network import NetworkWeights, as_columns, forward_rescaled, kernel_rescaling, output_scale, preactivations

DIVERGENCE_FACTOR = 10.0


class DivergenceError(RuntimeError):
    """Raised when an Euler step blows up the residual."""

    def __init__(self, message: str, step: int | None = None, stability_ratio: float | None = None):
        super().__init__(message)
        self.step = step
        self.stability_ratio = stability_ratio


@dataclass
class TrainConfig:
    dt: float | None = None
    t_max: float = 20.0
    record_every: int = 1
    eta_mode: Literal["paper", "custom"] = "paper"
    eta: float | None = None
    adaptive: bool = False

    def __post_init__(self) -> None:
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.eta_mode == "custom" and (self.eta is None or not self.eta > 0):
            raise ValueError("custom eta_mode needs a positive eta")
        if self.eta_mode not in ("paper", "custom"):
            raise ValueError(f"unknown eta_mode {self.eta_mode!r}")
        if self.dt is not None and self.t_max < self.dt:
            raise ValueError("t_max must be at least dt")


@dataclass
class Trajectory:
    times: np.ndarray
    residual: np.ndarray
    lambda_min: np.ndarray
    weight_drift: np.ndarray
    h1_drift: np.ndarray
    h2_drift: np.ndarray
    outer_grad_drift: np.ndarray
    eta: float
    kappa: float
    dt: float
    steps: int
    final: NetworkWeights = field(repr=False)

    @property
    def loss(self) -> np.ndarray:
        return 0.5 * self.residual

    def columns(self) -> list[str]:
        k = self.outer_grad_drift.shape[1]
        return [
            "time",
            "residual_sq",
            "loss",
            "lambda_min",
            "weight_drift",
            "h1_drift",
            "h2_drift",
        ] + [f"outer_grad_drift_{j + 1}" for j in range(k)]

    def to_text(self, header: str = "") -> str:
        buf = io.StringIO()
        if header:
            for line in header.splitlines():
                buf.write(f"# {line}\n")
        buf.write(",".join(self.columns()) + "\n")
        rows = np.column_stack(
            [
                self.times,
                self.residual,
                self.loss,
                self.lambda_min,
                self.weight_drift,
                self.h1_drift,
                self.h2_drift,
                self.outer_grad_drift,
            ]
        )
        for row in rows:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def residual_sq(W: NetworkWeights, X, Y) -> float:
    """``|Y - f~(W, X)|_2**2``."""
    r = forward_rescaled(W, X) - np.asarray(Y, dtype=float)
    return float(r @ r)


def loss(W: NetworkWeights, X, Y) -> float:
    """``(1/2) sum_j (f~(x_j) - y_j)**2``, i.e. half of :func:`residual_sq`."""
    return 0.5 * residual_sq(W, X, Y)


def paper_eta(m: int, alpha: float) -> float:
    return kernel_rescaling(m, alpha)


@njit(cache=True, fastmath={"reassoc", "contract"})
def _sweep(pre0, gram, relu0, outer0, cur, new, push, out, moved, w):
    """One pass over the neurons: an Euler update followed by every diagnostic at the new point.

    A point is a tuple ``(coef, outer, relu, act_outer)``: ``k x m`` arrays
    except ``outer``. Neuron ``i`` has pre-activations
    ``pre0[:, i] + gram @ coef[:, i]``, and ``relu`` and ``act_outer`` cache
    ``ReLU(pre)`` and ``1{pre > 0} * outer`` at that point. The update moves
    ``coef[j]`` by ``-push[j] * act_outer[j]`` and ``outer`` by
    ``-sum_j push[j] * relu[j]``, which is the Euler step when ``push`` is
    ``dt * eta * s * (f~ - Y)``. ``new`` may be ``cur`` itself.

    ``out`` receives, in order, the raw outputs (k), the raw kernel sums for h1
    and h2 (k*k each), the squared ReLU drift per input (k), and the squared
    drifts of the inner and outer weights.

    Every inner loop runs over neurons with unit stride so that it vectorizes.
    Sums may be reassociated, which changes rounding but not determinism.
    """
    coef, outer, relu, act_outer = cur
    new_coef, new_outer, new_relu, new_act_outer = new
    k, m = coef.shape
    out[:] = 0.0
    for i in range(m):
        w[i] = outer[i]
    for j in range(k):
        q = push[j]
        rj = relu[j]
        for i in range(m):
            w[i] -= q * rj[i]
    for j in range(k):
        q = push[j]
        aj = act_outer[j]
        cj = coef[j]
        nj = new_coef[j]
        for i in range(m):
            nj[i] = cj[i] - q * aj[i]
    outer_sq = 0.0
    for i in range(m):
        new_outer[i] = w[i]
        dw = w[i] - outer0[i]
        outer_sq += dw * dw
    inner_sq = 0.0
    for j in range(k):
        mj = moved[j]
        for i in range(m):
            mj[i] = 0.0
        for l in range(k):
            g = gram[j, l]
            nl = new_coef[l]
            for i in range(m):
                mj[i] += g * nl[i]
        nj = new_coef[j]
        pj = pre0[j]
        rj = new_relu[j]
        aj = new_act_outer[j]
        acc = 0.0
        for i in range(m):
            acc += nj[i] * mj[i]
            p = pj[i] + mj[i]
            aj[i] = (p > 0.0) * w[i]
            rj[i] = max(p, 0.0)
        inner_sq += acc
    g1 = out[k : k + k * k]
    g2 = out[k + k * k : k + 2 * k * k]
    for j in range(k):
        rj = new_relu[j]
        r0 = relu0[j]
        aj = new_act_outer[j]
        acc = 0.0
        drift = 0.0
        for i in range(m):
            acc += rj[i] * w[i]
            r = rj[i] - r0[i]
            drift += r * r
        out[j] = acc
        out[k + 2 * k * k + j] = drift
        for l in range(j + 1):
            rl = new_relu[l]
            al = new_act_outer[l]
            a1 = 0.0
            a2 = 0.0
            for i in range(m):
                a1 += aj[i] * al[i]
                a2 += rj[i] * rl[i]
            g1[j * k + l] = a1
            g1[l * k + j] = a1
            g2[j * k + l] = a2
            g2[l * k + j] = a2
    out[2 * k + 2 * k * k] = inner_sq
    out[2 * k + 2 * k * k + 1] = outer_sq


class _Flow:
    """Gradient flow state for one (W, X, Y) problem.

    Every inner-weight gradient is a combination of the inputs, so the inner
    weights stay of the form ``W0.inner + (x @ coef)^T`` with ``k x m``
    coefficients. Pre-activations are then ``pre0 + gram @ coef`` and the
    squared inner drift is ``<coef, gram @ coef>``; nothing ``m x d`` is
    touched after the start.
    """

    def __init__(self, W: NetworkWeights, X, Y):
        self.x = as_columns(X)
        if self.x.shape[0] != W.input_dim:
            raise ValueError(f"input dimension {self.x.shape[0]} does not match weights ({W.input_dim})")
        self.y = np.asarray(Y, dtype=float).reshape(-1)
        if self.y.shape[0] != self.x.shape[1]:
            raise ValueError("Y must have one target per input column")
        self.W0 = W
        self.m = W.width
        self.k = k = self.x.shape[1]
        self.s = output_scale(self.m, W.alpha)
        self.kappa = kernel_rescaling(self.m, W.alpha)
        self.c = self.m ** (-2.0 / W.alpha)
        self.gram = self.x.T @ self.x
        self.pre0 = np.ascontiguousarray(preactivations(W, self.x).T)
        self.relu0 = np.maximum(self.pre0, 0.0)
        self.out = np.empty(2 * k + 2 * k * k + 2)
        self.moved = np.empty((k, self.m))
        self.w = np.empty(self.m)

    def point(self) -> tuple:
        """A fresh point at ``W0``; its cached activations are filled by :meth:`evaluate`."""
        k, m = self.k, self.m
        return (np.zeros((k, m)), self.W0.outer.copy(), np.zeros((k, m)), np.zeros((k, m)))

    def advance(self, cur: tuple, new: tuple, push: np.ndarray) -> np.ndarray:
        """Move by ``push`` (see :func:`_sweep`) and return the rescaled outputs at the new point."""
        _sweep(self.pre0, self.gram, self.relu0, self.W0.outer, cur, new, push, self.out, self.moved, self.w)
        return self.s * self.out[: self.k]

    def evaluate(self, pt: tuple) -> np.ndarray:
        return self.advance(pt, pt, np.zeros(self.k))

    def push(self, f: np.ndarray, dt: float, eta: float) -> np.ndarray:
        return (dt * eta * self.s) * (f - self.y)

    def kernels(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.k
        g1 = self.out[k : k + k * k].reshape(k, k)
        g2 = self.out[k + k * k : k + 2 * k * k].reshape(k, k)
        return self.c * self.gram * g1, self.c * g2

    def weight_drift(self) -> float:
        return math.sqrt(max(self.out[-2], 0.0) + self.out[-1])

    def outer_grad_drift(self) -> np.ndarray:
        k = self.k
        return self.kappa * self.s**2 * self.out[k + 2 * k * k : 2 * k + 2 * k * k]

    def weights(self, pt: tuple) -> NetworkWeights:
        coef, outer = pt[0], pt[1]
        return self.W0.replace(inner=self.W0.inner + (self.x @ coef).T, outer=outer.copy())


def network_output(W: NetworkWeights, X) -> np.ndarray:
    """``f~(W, X)`` evaluated exactly as :func:`train` evaluates it.

    Agrees with :func:`forward_rescaled` up to summation order. Targets built from
    this function give trajectories that are flat to the last bit.
    """
    x = as_columns(X)
    flow = _Flow(W, x, np.zeros(x.shape[1]))
    return flow.evaluate(flow.point())


def step(W: NetworkWeights, X, Y, dt: float, eta: float) -> NetworkWeights:
    """One explicit Euler step of the gradient flow.

    Raises :class:`DivergenceError` if the residual grows by more than a factor 10.
    """
    x = as_columns(X)
    y = np.asarray(Y, dtype=float).reshape(-1)
    s = output_scale(W.width, W.alpha)
    pre = preactivations(W, x)
    relu = np.maximum(pre, 0.0)
    e = s * (W.outer @ relu) - y
    g_outer = s * (relu @ e)
    g_inner = s * ((pre > 0) * W.outer[:, None] * e) @ x.T
    new = W.replace(inner=W.inner - dt * eta * g_inner, outer=W.outer - dt * eta * g_outer)
    before = float(e @ e)
    after = residual_sq(new, x, y)
    if after > DIVERGENCE_FACTOR * before and after > 0:
        raise DivergenceError(
            f"residual grew from {before:.3e} to {after:.3e} in one step of dt={dt:g}; reduce dt",
        )
    return new


def _lambda_max(W: NetworkWeights, X) -> tuple[float, float]:
    return float(np.linalg.eigvalsh(decompose(W, X).total)[-1]), kernel_rescaling(W.width, W.alpha)


def default_dt(W: NetworkWeights, X, eta: float) -> float:
    """``0.1 / (eta * lambda_max(H~(0)) / kappa + 1)``."""
    lmax, kappa = _lambda_max(W, X)
    return 0.1 / (eta * lmax / kappa + 1.0)


def stability_ratio(W: NetworkWeights, X, dt: float, eta: float) -> float:
    """``eta * dt * lambda_max(H~) / kappa``; explicit Euler needs this below 2."""
    lmax, kappa = _lambda_max(W, X)
    return eta * dt * lmax / kappa


def train(W0: NetworkWeights, X, Y, cfg: TrainConfig | None = None) -> Trajectory:
    """Integrate the flow from ``W0`` to ``cfg.t_max`` and record diagnostics.

    Recorded at step 0, every ``cfg.record_every`` steps, and at the end:
    residual ``|Y - f~|**2``, ``lambda_min(H~(t))``, ``|W(t) - W(0)|_F``,
    Frobenius drift of both kernel parts, and per input
    ``kappa * |df~/dw(t) - df~/dw(0)|**2``.
    """
    cfg = cfg or TrainConfig()
    flow = _Flow(W0, X, Y)
    eta = paper_eta(flow.m, W0.alpha) if cfg.eta_mode == "paper" else float(cfg.eta)
    dt_nominal = cfg.dt if cfg.dt is not None else default_dt(W0, flow.x, eta)
    n_steps = max(1, math.ceil(cfg.t_max / dt_nominal - 1e-9))
    dt = cfg.t_max / n_steps

    ratio = stability_ratio(W0, flow.x, dt, eta)
    if ratio >= 2.0 and not cfg.adaptive:
        raise DivergenceError(
            f"explicit Euler unstable at t=0: eta*dt*lambda_max/kappa = {ratio:.3g} >= 2 (dt={dt:g})",
            step=0,
            stability_ratio=ratio,
        )

    pt = flow.point()
    cand = flow.point()
    f = flow.evaluate(pt)
    h1_0, h2_0 = flow.kernels()

    rec: dict[str, list] = {k: [] for k in ("t", "res", "lmin", "wd", "d1", "d2", "gd")}

    def record(t, f):
        h1, h2 = flow.kernels()
        e = f - flow.y
        rec["t"].append(t)
        rec["res"].append(float(e @ e))
        rec["lmin"].append(float(np.linalg.eigvalsh(h1 + h2)[0]))
        rec["wd"].append(flow.weight_drift())
        # Frobenius distances, written out because the norm wrapper costs more than the arithmetic
        d1, d2 = h1 - h1_0, h2 - h2_0
        rec["d1"].append(math.sqrt(np.vdot(d1, d1)))
        rec["d2"].append(math.sqrt(np.vdot(d2, d2)))
        rec["gd"].append(flow.outer_grad_drift())

    record(0.0, f)
    t = 0.0
    n = 0
    sub = dt
    while n < n_steps:
        e = f - flow.y
        before = float(e @ e)
        if cfg.adaptive:
            h = sub
            while True:
                c_f = flow.advance(pt, cand, flow.push(f, h, eta))
                ce = c_f - flow.y
                if float(ce @ ce) <= before or h <= dt * 2.0**-30:
                    break
                h *= 0.5
            pt, cand = cand, pt
            f = c_f
            t += h
            sub = min(dt, 2.0 * h)
            done = t >= cfg.t_max - 1e-12
            n = n_steps if done else n + (1 if h == dt else 0)
        else:
            f = flow.advance(pt, pt, flow.push(f, dt, eta))
            n += 1
            t = n * dt
            done = n == n_steps
        e = f - flow.y
        after = float(e @ e)
        if not np.isfinite(after) or (after > DIVERGENCE_FACTOR * before and after > 0):
            raise DivergenceError(
                f"residual grew from {before:.3e} to {after:.3e} at t={t:.4g}; "
                f"eta*dt*lambda_max/kappa was {ratio:.3g} at t=0",
                step=n,
                stability_ratio=ratio,
            )
        if done or cfg.adaptive or n % cfg.record_every == 0:
            record(t, f)

    return Trajectory(
        times=np.array(rec["t"]),
        residual=np.array(rec["res"]),
        lambda_min=np.array(rec["lmin"]),
        weight_drift=np.array(rec["wd"]),
        h1_drift=np.array(rec["d1"]),
        h2_drift=np.array(rec["d2"]),
        outer_grad_drift=np.vstack(rec["gd"]),
        eta=eta,
        kappa=flow.kappa,
        dt=dt,
        steps=n,
        final=flow.weights(pt),
    )


@dataclass(frozen=True)
class Certificate:
    holds: bool
    lambda0: float
    worst_ratio: float
    worst_time: float
    slack: float

    def report(self) -> str:
        verdict = "holds" if self.holds else "fails"
        return (
            f"linear-rate bound with lambda0={self.lambda0:.6g} {verdict}: "
            f"max residual(t) / (exp(-lambda0 t) residual(0)) = {self.worst_ratio:.6g} at t={self.worst_time:.6g}"
        )


def theorem5_certificate(traj: Trajectory, lambda0: float, slack: float = 1.0) -> Certificate:
    """Check ``residual(t) <= slack * exp(-lambda0 t) residual(0)`` at every recorded time."""
    r0 = traj.residual[0]
    bound = np.exp(-lambda0 * traj.times) * r0
    if r0 == 0.0:
        ratios = np.where(traj.residual > 0, np.inf, 0.0)
    else:
        ratios = traj.residual / bound
    i = int(np.argmax(ratios))
    worst = float(ratios[i])
    return Certificate(bool(worst <= slack), float(lambda0), worst, float(traj.times[i]), slack)


def measured_lambda0(traj: Trajectory) -> float:
    """``min_t 2 lambda_min(H~(t)) * eta / kappa``, the decay rate the flow guarantees."""
    return float(2.0 * np.min(traj.lambda_min) * traj.eta / traj.kappa)


def decay_check(traj: Trajectory, slack: float = 1.05, atol: float = 0.0) -> np.ndarray:
    """Per recorded interval: ``res(t') <= res(t) exp(-2 lambda_min(t) (eta/kappa)(t'-t)) * slack + atol``.

    ``atol`` absorbs round-off once the residual reaches the float noise floor.
    """
    dt = np.diff(traj.times)
    bound = traj.residual[:-1] * np.exp(-2.0 * traj.lambda_min[:-1] * traj.eta / traj.kappa * dt) * slack
    return traj.residual[1:] <= bound + atol
