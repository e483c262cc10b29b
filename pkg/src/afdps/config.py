"""Run-configuration loading, validation, and defaulting.

The JSON schema is strict: unknown keys anywhere are fatal, so typos
cannot silently fall back to defaults in the middle of an experiment.
Every default that gets materialized is recorded so run metadata can
state which parameters the user actually chose.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import CorrectorConfig, DynamicsConfig
from .errors import ConfigError
from .likelihood import LinearGaussianLikelihood, TanhLinearLikelihood
from .mixture import GaussianMixture, ScoreModel
from .oracle import GridSpec
from .resampling import ResamplePolicy
from .schedule import NoiseSchedule
from .stage1 import MalaConfig, Stage1Config

_SCHEDULE_DEFAULTS = {
    "sigma_max": 8.0,
    "sigma_min": 0.01,
    "rho_grid": 7.0,
    "num_steps": 2000,
    "s_kind": "identity",
}
_MALA_DEFAULTS = {"step_size": 0.05, "n_steps": 2000, "burn_in": 500, "mode": "chains"}
_STAGE1_DEFAULTS = {"method": "exact-gmm", "rho": None, "mala": _MALA_DEFAULTS}
_CORRECTOR_DEFAULTS = {"n_c": 4, "tau_c": 0.1}
_RESAMPLE_DEFAULTS = {"threshold": 0.5, "scheme": "multinomial"}
_DYNAMICS_DEFAULTS = {
    "mode": "sde",
    "eta": 1.0,
    "n_particles": 10,
    "corrector": _CORRECTOR_DEFAULTS,
    "resample": _RESAMPLE_DEFAULTS,
    "estimator": "weighted-ensemble",
    "log_weight_clamp": 700.0,
}
_SCORE_DEFAULTS = {"error_eps": 0.0, "error_kind": "none", "error_seed": 0}
_METRICS_DEFAULTS = {"grid": None, "n_projections": 64, "n_reference_samples": 10000}

_LIKELIHOOD_KEYS = {
    "linear-gaussian": {"kind", "A", "Sigma", "y"},
    "tanh-linear": {"kind", "A", "Sigma", "y", "laplacian_mode", "fd_step"},
}
_TOP_KEYS = {
    "master_seed",
    "output_dir",
    "prior",
    "likelihood",
    "schedule",
    "stage1",
    "dynamics",
    "score",
    "metrics",
}


@dataclass(frozen=True)
class MetricsConfig:
    grid: GridSpec | None = None
    n_projections: int = 64
    n_reference_samples: int = 10000

    def __post_init__(self):
        if self.n_projections < 1:
            raise ConfigError(
                f"metrics.n_projections must be >= 1, got {self.n_projections}"
            )
        if self.n_reference_samples < 1:
            raise ConfigError(
                f"metrics.n_reference_samples must be >= 1, got {self.n_reference_samples}"
            )


def _check_keys(section: dict, allowed: set, path: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected an object, got {type(section).__name__}")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(
            f"{path}: unknown key(s) {sorted(unknown)}; allowed: {sorted(allowed)}"
        )


def _merged(section: dict | None, defaults: dict, path: str, defaulted: list) -> dict:
    section = {} if section is None else dict(section)
    _check_keys(section, set(defaults), path)
    out = {}
    for key, default in defaults.items():
        if key in section:
            value = section[key]
            if isinstance(default, dict) and default is not None:
                value = _merged(value, default, f"{path}.{key}", defaulted)
            out[key] = value
        else:
            if isinstance(default, dict):
                out[key] = _merged({}, default, f"{path}.{key}", defaulted)
            else:
                out[key] = default
                defaulted.append(f"{path}.{key}")
    return out


def _build(path: str, ctor, *args, **kwargs):
    try:
        return ctor(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    """Materialized experiment description with built components."""

    prior: GaussianMixture
    likelihood: LinearGaussianLikelihood | TanhLinearLikelihood
    schedule: NoiseSchedule
    stage1: Stage1Config
    dynamics: DynamicsConfig
    score_model: ScoreModel
    metrics: MetricsConfig
    master_seed: int
    output_dir: str | None
    raw: dict
    defaulted_fields: tuple[str, ...]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        _check_keys(data, _TOP_KEYS, "config")
        defaulted: list[str] = []

        if "prior" not in data:
            raise ConfigError("config: missing required section 'prior'")
        if "likelihood" not in data:
            raise ConfigError("config: missing required section 'likelihood'")

        prior_raw = data["prior"]
        _check_keys(prior_raw, {"weights", "means", "covariances"}, "prior")
        for key in ("weights", "means", "covariances"):
            if key not in prior_raw:
                raise ConfigError(f"prior: missing required key {key!r}")
        prior = _build(
            "prior",
            GaussianMixture,
            weights=np.asarray(prior_raw["weights"], dtype=float),
            means=np.asarray(prior_raw["means"], dtype=float),
            covariances=np.asarray(prior_raw["covariances"], dtype=float),
        )

        lik_raw = dict(data["likelihood"])
        kind = lik_raw.get("kind", "linear-gaussian")
        if "kind" not in lik_raw:
            defaulted.append("likelihood.kind")
        if kind not in _LIKELIHOOD_KEYS:
            raise ConfigError(f"likelihood.kind: unknown tag {kind!r}")
        _check_keys(lik_raw, _LIKELIHOOD_KEYS[kind], "likelihood")
        for key in ("A", "Sigma", "y"):
            if key not in lik_raw:
                raise ConfigError(f"likelihood: missing required key {key!r}")
        if kind == "linear-gaussian":
            likelihood = _build(
                "likelihood",
                LinearGaussianLikelihood,
                lik_raw["A"],
                lik_raw["Sigma"],
                lik_raw["y"],
            )
        else:
            likelihood = _build(
                "likelihood",
                TanhLinearLikelihood,
                lik_raw["A"],
                lik_raw["Sigma"],
                lik_raw["y"],
                laplacian_mode=lik_raw.get("laplacian_mode", "analytic"),
                fd_step=lik_raw.get("fd_step", 1e-5),
            )
        if prior.dim != likelihood.dim_x:
            raise ConfigError(
                f"prior.means and likelihood.A disagree on dimension: "
                f"prior is {prior.dim}-d, likelihood expects {likelihood.dim_x}-d"
            )

        sched_raw = _merged(data.get("schedule"), _SCHEDULE_DEFAULTS, "schedule", defaulted)
        schedule = _build("schedule", NoiseSchedule, **sched_raw)

        stage1_raw = _merged(data.get("stage1"), _STAGE1_DEFAULTS, "stage1", defaulted)
        stage1 = _build(
            "stage1",
            Stage1Config,
            method=stage1_raw["method"],
            rho=stage1_raw["rho"],
            mala=_build("stage1.mala", MalaConfig, **stage1_raw["mala"]),
        )
        if stage1.method in ("exact-gaussian", "exact-gmm") and not isinstance(
            likelihood, LinearGaussianLikelihood
        ):
            raise ConfigError(
                f"stage1.method {stage1.method!r} requires likelihood.kind "
                f"'linear-gaussian'; use 'mala' for nonlinear forward models"
            )

        dyn_raw = _merged(data.get("dynamics"), _DYNAMICS_DEFAULTS, "dynamics", defaulted)
        threshold = dyn_raw["resample"]["threshold"]
        if threshold == "never":
            threshold = None
        dynamics = _build(
            "dynamics",
            DynamicsConfig,
            mode=dyn_raw["mode"],
            eta=dyn_raw["eta"],
            n_particles=dyn_raw["n_particles"],
            corrector=_build("dynamics.corrector", CorrectorConfig, **dyn_raw["corrector"]),
            resample=_build(
                "dynamics.resample",
                ResamplePolicy,
                threshold=threshold,
                scheme=dyn_raw["resample"]["scheme"],
            ),
            estimator=dyn_raw["estimator"],
            log_weight_clamp=dyn_raw["log_weight_clamp"],
        )

        score_raw = _merged(data.get("score"), _SCORE_DEFAULTS, "score", defaulted)
        score_model = _build(
            "score",
            ScoreModel,
            base=prior,
            error_eps=score_raw["error_eps"],
            error_kind=score_raw["error_kind"],
            error_seed=score_raw["error_seed"],
        )

        metrics_raw = _merged(data.get("metrics"), _METRICS_DEFAULTS, "metrics", defaulted)
        grid = None
        if metrics_raw["grid"] is not None:
            grid_raw = metrics_raw["grid"]
            _check_keys(grid_raw, {"lower", "upper", "cells"}, "metrics.grid")
            for key in ("lower", "upper", "cells"):
                if key not in grid_raw:
                    raise ConfigError(f"metrics.grid: missing required key {key!r}")
            grid = _build(
                "metrics.grid",
                GridSpec,
                lower=grid_raw["lower"],
                upper=grid_raw["upper"],
                cells=grid_raw["cells"],
            )
            if grid.dim != prior.dim:
                raise ConfigError(
                    f"metrics.grid and prior.means disagree on dimension: "
                    f"grid is {grid.dim}-d, prior is {prior.dim}-d"
                )
        metrics = _build(
            "metrics",
            MetricsConfig,
            grid=grid,
            n_projections=metrics_raw["n_projections"],
            n_reference_samples=metrics_raw["n_reference_samples"],
        )

        if "master_seed" not in data:
            defaulted.append("config.master_seed")
        master_seed = data.get("master_seed", 0)
        if not isinstance(master_seed, int) or master_seed < 0:
            raise ConfigError(
                f"master_seed must be a non-negative integer, got {master_seed!r}"
            )
        output_dir = data.get("output_dir")
        if output_dir is not None and not isinstance(output_dir, str):
            raise ConfigError("output_dir must be a string path")

        raw = {
            "master_seed": master_seed,
            "output_dir": output_dir,
            "prior": {
                "weights": np.asarray(prior_raw["weights"], dtype=float).tolist(),
                "means": np.asarray(prior_raw["means"], dtype=float).tolist(),
                "covariances": np.asarray(prior_raw["covariances"], dtype=float).tolist(),
            },
            "likelihood": {
                "kind": kind,
                "A": np.asarray(lik_raw["A"], dtype=float).tolist(),
                "Sigma": np.asarray(lik_raw["Sigma"], dtype=float).tolist(),
                "y": np.asarray(lik_raw["y"], dtype=float).tolist(),
            },
            "schedule": sched_raw,
            "stage1": stage1_raw,
            "dynamics": {**dyn_raw, "resample": dict(dyn_raw["resample"])},
            "score": score_raw,
            "metrics": {
                **metrics_raw,
                "grid": None
                if grid is None
                else {
                    "lower": grid.lower.tolist(),
                    "upper": grid.upper.tolist(),
                    "cells": grid.cells.tolist(),
                },
            },
        }
        if kind == "tanh-linear":
            raw["likelihood"]["laplacian_mode"] = likelihood.laplacian_mode
            raw["likelihood"]["fd_step"] = likelihood.fd_step

        return cls(
            prior=prior,
            likelihood=likelihood,
            schedule=schedule,
            stage1=stage1,
            dynamics=dynamics,
            score_model=score_model,
            metrics=metrics,
            master_seed=master_seed,
            output_dir=output_dir,
            raw=raw,
            defaulted_fields=tuple(defaulted),
        )


def load_config(path) -> RunConfig:
    """Load and validate a JSON run configuration from disk."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return RunConfig.from_dict(data)
