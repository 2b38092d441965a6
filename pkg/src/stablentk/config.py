"""Experiment configuration.

Values are resolved in increasing precedence:

1. field defaults of :class:`ExperimentConfig`,
2. the preset of the chosen experiment (:data:`PRESETS`),
3. the config file (YAML or JSON),
4. environment variables ``STABLENTK_<KEY>`` (nested keys joined by ``__``,
   e.g. ``STABLENTK_TRAIN__DT=0.01``; values are parsed as YAML scalars),
5. command-line flags.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path
from typing import Any, Literal, Mapping

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .network import InputSet, axis_aligned, orthonormal, random_unit_sphere
from .seeding import replicate_rng

ENV_PREFIX = "STABLENTK_"
EXPERIMENTS = ("limit-dist", "ntk-limit", "train", "paths", "calibrate")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class InputSpec(_Strict):
    """Input columns: given explicitly or produced by a generator."""

    kind: Literal["explicit", "random-unit-sphere", "orthonormal", "axis-aligned"] = Field(
        "axis-aligned", description="how the d x k input matrix is produced"
    )
    d: int = Field(1, ge=1, description="input dimension")
    k: int = Field(1, ge=1, description="number of inputs")
    columns: list[list[float]] | None = Field(None, description="explicit inputs, one list per column")
    unit_norm: bool = Field(False, description="require unit-norm explicit columns")

    @model_validator(mode="after")
    def _explicit_columns(self):
        if self.kind == "explicit":
            if not self.columns:
                raise ValueError("explicit inputs need 'columns'")
            lengths = {len(c) for c in self.columns}
            if len(lengths) != 1:
                raise ValueError("explicit columns must share one length")
        return self

    def build(self, seed: int) -> InputSet:
        if self.kind == "explicit":
            return InputSet(np.array(self.columns, dtype=float).T, unit_norm=self.unit_norm)
        if self.kind == "axis-aligned":
            return axis_aligned(self.d, self.k)
        rng = replicate_rng(seed, "inputs", 0)
        if self.kind == "orthonormal":
            return orthonormal(self.d, self.k, rng)
        return random_unit_sphere(self.d, self.k, rng)


class TrainSection(_Strict):
    width: int = Field(4096, ge=2, description="network width for the per-seed runs")
    seeds: int = Field(50, ge=1, description="number of independent seeds")
    dt: float | None = Field(None, gt=0, description="Euler step; default 0.1/(eta*lambda_max/kappa + 1)")
    t_max: float = Field(20.0, gt=0, description="time horizon")
    record_every: int = Field(1, ge=1, description="steps between recorded diagnostics")
    eta_mode: Literal["paper", "custom"] = Field("paper", description="paper: eta = (log m)^(2/alpha)")
    eta: float | None = Field(None, gt=0, description="learning rate when eta_mode is custom")
    adaptive: bool = Field(False, description="halve the step while the residual increases")
    targets: Literal["random", "initial-output"] = Field("random", description="Y uniform in [-1,1] or Y = f~(W(0))")
    residual_ratio: float = Field(1e-6, gt=0, description="required final/initial residual ratio")
    decay_slack: float = Field(1.05, ge=1, description="per-step decay slack")
    decay_atol: float = Field(1e-24, ge=0, description="absolute floor for the per-step decay check")
    pass_rate: float = Field(0.9, ge=0, le=1, description="fraction of seeds that must pass")
    drift_widths: list[int] = Field([1024, 4096, 16384], description="widths for the kernel drift trend")
    drift_seeds: int = Field(20, ge=1, description="seeds per width for the drift trend")


class PathsSection(_Strict):
    alphas: list[float] = Field([2.0, 1.5, 1.0, 0.5], description="stability indices of the surfaces")
    width: int = Field(1024, ge=2, description="network width")
    grid: int = Field(32, ge=1, description="grid points per axis on [0,1]")

    @field_validator("alphas")
    @classmethod
    def _alphas(cls, v):
        if not v or any(not 0 < a <= 2 for a in v):
            raise ValueError("alphas must lie in (0, 2]")
        return v


class ExperimentConfig(_Strict):
    experiment: Literal["limit-dist", "ntk-limit", "train", "paths", "calibrate"] = Field(
        "limit-dist", description="which experiment to run"
    )
    alpha: float = Field(1.0, gt=0, le=2, description="stability index")
    widths: list[int] = Field([1024, 8192, 65536], description="width sweep, strictly increasing")
    samples: int = Field(10_000, ge=100, description="Monte Carlo networks per width")
    reference_samples: int = Field(100_000, ge=100, description="draws from the limit law per comparison")
    inputs: InputSpec = Field(default_factory=InputSpec)
    prefactor_mode: Literal["calibrated", "paper_literal", "tail_consistent"] = Field(
        "calibrated", description="kernel-limit prefactor, or select it by calibration"
    )
    kernel_seeds: int = Field(200, ge=1, description="networks for the minimum-eigenvalue quantile")
    kernel_width: int = Field(4096, ge=2, description="width for the minimum-eigenvalue quantile")
    quantile: float = Field(0.05, gt=0, lt=1, description="reported quantile of lambda_min")
    self_test_reps: int = Field(100, ge=1, description="calibration self-test repetitions per convention")
    self_test_samples: int = Field(2000, ge=100, description="synthetic draws per self-test")
    self_test_accuracy: float = Field(0.95, ge=0, le=1, description="required self-test selection rate")
    ecf_tolerance: float | None = Field(None, gt=0, description="optional bound on the largest-width ECF distance")
    train: TrainSection = Field(default_factory=TrainSection)
    paths: PathsSection = Field(default_factory=PathsSection)
    seed: int = Field(20260417, ge=0, lt=2**64, description="master seed")
    out: str = Field("results", description="output directory")
    workers: int = Field(1, ge=1, description="worker processes")

    @field_validator("widths")
    @classmethod
    def _widths(cls, v):
        if not v:
            raise ValueError("widths must be non-empty")
        if any(m < 2 for m in v):
            raise ValueError("widths must be at least 2")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("widths must be strictly increasing")
        return v

    def digest(self) -> str:
        """SHA-256 of the canonical JSON of every field except ``out`` and ``workers``."""
        data = self.model_dump(exclude={"out", "workers"})
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


PRESETS: dict[str, dict[str, Any]] = {
    "limit-dist": {"alpha": 1.0, "widths": [1024, 8192, 65536]},
    "ntk-limit": {"alpha": 1.0, "widths": [4, 16, 64, 256, 1024, 8192, 65536]},
    "calibrate": {"alpha": 1.0, "widths": [65536]},
    "train": {"alpha": 1.5, "inputs": {"kind": "orthonormal", "d": 8, "k": 4}},
    "paths": {},
}


def deep_merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_file(path) -> dict:
    text = Path(path).read_text()
    data = yaml.safe_load(text) if text.strip() else {}
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a mapping")
    return data


def _set_path(d: dict, keys: list[str], value) -> None:
    for k in keys[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ValueError(f"cannot override nested key under scalar {k!r}")
    d[keys[-1]] = value


def env_overrides(environ: Mapping[str, str] | None = None) -> dict:
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name in sorted(environ):
        if name.startswith(ENV_PREFIX):
            keys = name[len(ENV_PREFIX):].lower().split("__")
            _set_path(out, keys, yaml.safe_load(environ[name]))
    return out


def parse_assignments(items) -> dict:
    """``["a.b=1", "c=[2, 3]"]`` to a nested mapping; values parsed as YAML."""
    out: dict = {}
    for item in items or ():
        if "=" not in item:
            raise ValueError(f"override {item!r} is not KEY=VALUE")
        key, val = item.split("=", 1)
        _set_path(out, key.strip().split("."), yaml.safe_load(val))
    return out


def resolve(
    experiment: str,
    path=None,
    environ: Mapping[str, str] | None = None,
    overrides: Mapping | None = None,
) -> ExperimentConfig:
    """Merge defaults, preset, file, environment, and flag overrides; then validate."""
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}")
    data = deep_merge({"experiment": experiment}, PRESETS[experiment])
    if path is not None:
        data = deep_merge(data, load_file(path))
    data = deep_merge(data, env_overrides(environ))
    data = deep_merge(data, overrides or {})
    data["experiment"] = experiment
    return ExperimentConfig.model_validate(data)
