"""Quantitative comparison of ensembles against exact ground truth.

Distances are self-normalized in the weights (invariant under a global
shift of log weights). In one dimension Wasserstein metrics use exact
CDF/quantile couplings; in higher dimension the squared 2-Wasserstein
distance is approximated by slicing over random unit directions.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .dynamics import RunResult, run_sampler
from .ensemble import WeightedEnsemble
from .errors import ConfigError, DegeneracyError
from .likelihood import LinearGaussianLikelihood
from .oracle import bin_ensemble, exact_posterior_gmm, grid_density, grid_tv
from .rng import derive_seed, substream


def weighted_moments(ensemble: WeightedEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Self-normalized mean vector and covariance matrix of the ensemble."""
    w = ensemble.normalized_weights()
    if not np.all(np.isfinite(w)):
        raise DegeneracyError()
    return ensemble.weighted_mean(), ensemble.weighted_cov()


def _as_weighted(x, w) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty sample set")
    if w is None:
        w = np.full(x.shape[0], 1.0 / x.shape[0])
    else:
        w = np.asarray(w, dtype=float)
        w = w / w.sum()
    return x, w


def wasserstein1_1d(xa, xb, weights_a=None, weights_b=None) -> float:
    """W1 between weighted 1-d samples: integral of |CDF_A - CDF_B|."""
    xa, wa = _as_weighted(np.ravel(xa), weights_a)
    xb, wb = _as_weighted(np.ravel(xb), weights_b)
    ia = np.argsort(xa, kind="stable")
    ib = np.argsort(xb, kind="stable")
    xa, wa = xa[ia], wa[ia]
    xb, wb = xb[ib], wb[ib]
    support = np.sort(np.concatenate([xa, xb]), kind="stable")
    ca = np.concatenate([[0.0], np.cumsum(wa)])
    cb = np.concatenate([[0.0], np.cumsum(wb)])
    fa = ca[np.searchsorted(xa, support[:-1], side="right")]
    fb = cb[np.searchsorted(xb, support[:-1], side="right")]
    return float(np.sum(np.abs(fa - fb) * np.diff(support)))


def w2_1d_squared(xa, xb, weights_a=None, weights_b=None) -> float:
    """Squared W2 between weighted 1-d samples via quantile coupling."""
    xa, wa = _as_weighted(np.ravel(xa), weights_a)
    xb, wb = _as_weighted(np.ravel(xb), weights_b)
    ia = np.argsort(xa, kind="stable")
    ib = np.argsort(xb, kind="stable")
    xa, wa = xa[ia], wa[ia]
    xb, wb = xb[ib], wb[ib]
    ca = np.cumsum(wa)
    cb = np.cumsum(wb)
    ca[-1] = cb[-1] = 1.0
    cuts = np.union1d(ca, cb)
    qa = xa[np.minimum(np.searchsorted(ca, cuts, side="left"), xa.size - 1)]
    qb = xb[np.minimum(np.searchsorted(cb, cuts, side="left"), xb.size - 1)]
    lengths = np.diff(np.concatenate([[0.0], cuts]))
    return float(np.sum(lengths * (qa - qb) ** 2))


def sliced_w2(
    xa,
    xb,
    n_projections: int,
    rng: np.random.Generator,
    weights_a=None,
    weights_b=None,
) -> float:
    """Root-mean of squared 1-d W2 over random unit projection directions."""
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    if xa.shape[1] != xb.shape[1]:
        raise ValueError(
            f"sample dimensions differ: {xa.shape[1]} vs {xb.shape[1]}"
        )
    if n_projections < 1:
        raise ValueError(f"n_projections must be >= 1, got {n_projections}")
    dirs = rng.standard_normal((n_projections, xa.shape[1]))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pa = xa @ dirs.T
    pb = xb @ dirs.T
    sq = [
        w2_1d_squared(pa[:, p], pb[:, p], weights_a, weights_b)
        for p in range(n_projections)
    ]
    return float(np.sqrt(np.mean(sq)))


@dataclass(frozen=True)
class MetricsReport:
    """Per-run diagnostics serialized to metrics.json."""

    weighted_mean: np.ndarray
    weighted_cov: np.ndarray
    ess_min: float
    ess_mean: float
    resample_count: int
    runtime_seconds: float
    final_tv: float | None = None
    w_dist: float | None = None
    w_kind: str | None = None
    mode_masses: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "weighted_mean": self.weighted_mean.tolist(),
            "weighted_cov": self.weighted_cov.tolist(),
            "ess_min": self.ess_min,
            "ess_mean": self.ess_mean,
            "resample_count": self.resample_count,
            "runtime_seconds": self.runtime_seconds,
            "final_tv": self.final_tv,
            "w_dist": self.w_dist,
            "w_kind": self.w_kind,
            "mode_masses": None if self.mode_masses is None else self.mode_masses.tolist(),
        }


def exact_posterior_target(config):
    """The sigma=0 conjugate posterior, or None for nonlinear likelihoods."""
    if isinstance(config.likelihood, LinearGaussianLikelihood):
        return exact_posterior_gmm(config.prior, config.likelihood, 0.0)
    return None


def posterior_grid_table(config):
    """Grid table of the exact posterior density, or None without a grid.

    Linear-Gaussian problems use the conjugate mixture; otherwise the
    pointwise form prior-density times likelihood factor is gridded.
    """
    grid = config.metrics.grid
    if grid is None:
        return None
    target = exact_posterior_target(config)
    if target is not None:
        return grid_density(target.log_density, grid)
    return grid_density(
        lambda x: config.prior.log_density(x) - config.likelihood.mu(x), grid
    )


def mode_masses(ensemble: WeightedEnsemble, posterior) -> np.ndarray:
    """Ensemble mass per oracle component, by posterior responsibility."""
    r = posterior.responsibilities(ensemble.positions)
    return ensemble.normalized_weights() @ r


def evaluate_run(result: RunResult, config, runtime_seconds: float) -> MetricsReport:
    """Assemble the MetricsReport for one finished run."""
    mean, cov = weighted_moments(result.final)
    ess_values = np.array([row.ess for row in result.trace])
    final_tv = None
    masses = None
    w_dist = None
    w_kind = None

    truth_table = posterior_grid_table(config)
    if truth_table is not None:
        final_tv = grid_tv(bin_ensemble(result.final, config.metrics.grid), truth_table)

    posterior = exact_posterior_target(config)
    if posterior is not None:
        masses = mode_masses(result.final, posterior)
        ref_rng = substream(config.master_seed, "metrics-reference")
        reference = posterior.sample(config.metrics.n_reference_samples, ref_rng)
        w = result.final.normalized_weights()
        if result.final.dim == 1:
            w_dist = wasserstein1_1d(
                result.final.positions[:, 0], reference[:, 0], weights_a=w
            )
            w_kind = "w1_1d"
        else:
            w_dist = sliced_w2(
                result.final.positions,
                reference,
                config.metrics.n_projections,
                substream(config.master_seed, "metrics-slices"),
                weights_a=w,
            )
            w_kind = "sliced_w2"

    return MetricsReport(
        weighted_mean=mean,
        weighted_cov=cov,
        ess_min=float(ess_values.min()),
        ess_mean=float(ess_values.mean()),
        resample_count=result.resample_count,
        runtime_seconds=runtime_seconds,
        final_tv=final_tv,
        w_dist=w_dist,
        w_kind=w_kind,
        mode_masses=masses,
    )


@dataclass(frozen=True)
class TrendRow:
    value: float
    mean: float
    stderr: float
    samples: tuple[float, ...]


def _config_with(config, updates: dict):
    # circular-import-free rebuild through the materialized dict
    from .config import RunConfig

    raw = copy.deepcopy(config.raw)
    for dotted, value in updates.items():
        node = raw
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node[p]
        node[leaf] = value
    return RunConfig.from_dict(raw)


def final_tv_of_run(config) -> float:
    """Run the sampler and return the grid TV to the exact posterior."""
    truth_table = posterior_grid_table(config)
    if truth_table is None:
        raise ConfigError("a metrics grid is required to compute the final TV")
    result = run_sampler(config)
    return grid_tv(bin_ensemble(result.final, config.metrics.grid), truth_table)


def theorem1_trend(config, eps_list, repeats: int) -> list[TrendRow]:
    """Mean final TV as the injected score error grows.

    Each (eps, repeat) pair runs with its own derived master seed; the
    table is deterministic given the base config.
    """
    if list(eps_list) != sorted(eps_list):
        raise ValueError("eps_list must be sorted ascending")
    rows = []
    for i, eps in enumerate(eps_list):
        tvs = []
        for r in range(repeats):
            cfg = _config_with(
                config,
                {
                    "score.error_eps": float(eps),
                    "master_seed": derive_seed(config.master_seed, "theorem1", i, r),
                },
            )
            tvs.append(final_tv_of_run(cfg))
        tvs = np.asarray(tvs)
        rows.append(
            TrendRow(
                value=float(eps),
                mean=float(tvs.mean()),
                stderr=float(tvs.std(ddof=1) / np.sqrt(len(tvs))) if len(tvs) > 1 else 0.0,
                samples=tuple(float(t) for t in tvs),
            )
        )
    return rows


def theorem2_trend(config, n_list, repeats: int, n_reference: int = 10_000) -> list[TrendRow]:
    """Mean squared W distance to exact posterior samples as N grows.

    The reference sample is drawn once and shared by every run so the
    comparison floor is common across ensemble sizes.
    """
    posterior = exact_posterior_target(config)
    if posterior is None:
        raise ConfigError("theorem2_trend requires a linear-Gaussian likelihood")
    reference = posterior.sample(
        n_reference, substream(config.master_seed, "theorem2-reference")
    )
    rows = []
    for i, n in enumerate(n_list):
        vals = []
        for r in range(repeats):
            cfg = _config_with(
                config,
                {
                    "dynamics.n_particles": int(n),
                    "master_seed": derive_seed(config.master_seed, "theorem2", i, r),
                },
            )
            result = run_sampler(cfg)
            w = result.final.normalized_weights()
            if result.final.dim == 1:
                dist_sq = w2_1d_squared(
                    result.final.positions[:, 0], reference[:, 0], weights_a=w
                )
            else:
                dist_sq = (
                    sliced_w2(
                        result.final.positions,
                        reference,
                        cfg.metrics.n_projections,
                        substream(cfg.master_seed, "theorem2-slices"),
                        weights_a=w,
                    )
                    ** 2
                )
            vals.append(dist_sq)
        vals = np.asarray(vals)
        rows.append(
            TrendRow(
                value=float(n),
                mean=float(vals.mean()),
                stderr=float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0,
                samples=tuple(float(v) for v in vals),
            )
        )
    return rows
