"""Exact and brute-force ground truth.

For a Gaussian-mixture prior and a linear-Gaussian likelihood the tilted
density p_sigma(x) * exp(-mu_y(x)) is again a Gaussian mixture in closed
form, at every noise level. Grid evaluation (dimension <= 2) provides an
independent brute-force check and the total-variation metric.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .ensemble import WeightedEnsemble
from .errors import ConfigError
from .likelihood import LinearGaussianLikelihood
from .mixture import GaussianMixture

_LOG_2PI = float(np.log(2.0 * np.pi))


def exact_posterior_gmm(
    prior: GaussianMixture,
    likelihood: LinearGaussianLikelihood,
    sigma: float,
) -> GaussianMixture:
    """Conjugate mixture posterior proportional to p_sigma * exp(-mu_y).

    Per component i with S_i = C_i + sigma^2 I:
      cov_i  = (A^T Sigma^{-1} A + S_i^{-1})^{-1}
      mean_i = cov_i (A^T Sigma^{-1} y + S_i^{-1} m_i)
      w_i   propto w_i * N(y; A m_i, Sigma + A S_i A^T)
    Weights are normalized in log space.
    """
    if not isinstance(likelihood, LinearGaussianLikelihood):
        raise ConfigError("exact posterior requires a linear-Gaussian likelihood")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if prior.dim != likelihood.dim_x:
        raise ValueError(
            f"prior dimension {prior.dim} does not match likelihood dimension "
            f"{likelihood.dim_x}"
        )
    noised = prior.noised(sigma)
    m_obs = likelihood.dim_y
    new_means = np.empty_like(noised.means)
    new_covs = np.empty_like(noised.covariances)
    log_w = np.empty(noised.n_components)
    with np.errstate(divide="ignore"):
        log_prior_w = np.log(noised.weights)
    for i in range(noised.n_components):
        s_i = noised.covariances[i]
        s_inv = np.linalg.inv(s_i)
        prec = likelihood.At_Sinv_A + s_inv
        cov_i = np.linalg.inv(prec)
        cov_i = 0.5 * (cov_i + cov_i.T)
        new_covs[i] = cov_i
        new_means[i] = cov_i @ (likelihood.At_Sinv_y + s_inv @ noised.means[i])
        # marginal likelihood of y under component i
        marg_cov = likelihood.Sigma + likelihood.A @ s_i @ likelihood.A.T
        resid = likelihood.y - likelihood.A @ noised.means[i]
        chol = np.linalg.cholesky(marg_cov)
        z = np.linalg.solve(chol, resid)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        log_w[i] = log_prior_w[i] - 0.5 * (m_obs * _LOG_2PI + logdet + z @ z)
    log_w -= logsumexp(log_w)
    return GaussianMixture(weights=np.exp(log_w), means=new_means, covariances=new_covs)


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned box with a fixed number of cells per axis (dim <= 2)."""

    lower: np.ndarray
    upper: np.ndarray
    cells: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        cells = np.atleast_1d(np.asarray(self.cells, dtype=int))
        if not (lower.shape == upper.shape == cells.shape) or lower.ndim != 1:
            raise ConfigError("grid: lower, upper, cells must be 1-d and equal length")
        if lower.shape[0] > 2:
            raise ConfigError("grid: only dimensions 1 and 2 are supported")
        if np.any(upper <= lower):
            raise ConfigError("grid: upper must exceed lower on every axis")
        if np.any(cells < 2):
            raise ConfigError("grid: need at least 2 cells per axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "cells", cells)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @cached_property
    def edges(self) -> list[np.ndarray]:
        return [
            np.linspace(self.lower[d], self.upper[d], self.cells[d] + 1)
            for d in range(self.dim)
        ]

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centers, shape (prod(cells), dim); row-major over axes."""
        axes = [0.5 * (e[:-1] + e[1:]) for e in self.edges]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod((self.upper - self.lower) / self.cells))


@dataclass(frozen=True)
class GridTable:
    """Normalized cell probabilities on a grid, plus any out-of-box mass."""

    grid: GridSpec
    probs: np.ndarray
    overflow: float = 0.0


def grid_density(
    log_density_fn,
    grid: GridSpec,
    leak_tolerance: float = 1e-3,
) -> GridTable:
    """Evaluate an unnormalized log density at cell centers and normalize.

    Emits a coverage warning when the summed boundary-cell mass exceeds
    leak_tolerance, signalling that the box is probably too small.
    """
    logp = np.asarray(log_density_fn(grid.centers), dtype=float).reshape(
        tuple(grid.cells)
    )
    flat = logp.ravel()
    probs = np.exp(flat - flat.max())
    probs /= probs.sum()
    probs = probs.reshape(tuple(grid.cells))
    boundary = np.ones_like(probs, dtype=bool)
    if grid.dim == 1:
        boundary[1:-1] = False
    else:
        boundary[1:-1, 1:-1] = False
    boundary_mass = float(probs[boundary].sum())
    if boundary_mass > leak_tolerance:
        warnings.warn(
            f"grid box may be too small: boundary cells hold {boundary_mass:.3e} "
            f"of the mass (tolerance {leak_tolerance:.1e})",
            RuntimeWarning,
            stacklevel=2,
        )
    return GridTable(grid=grid, probs=probs.ravel())


def grid_tv(table_a: GridTable, table_b: GridTable) -> float:
    """Total variation 0.5 * sum |a - b| between two tables on one grid."""
    ga, gb = table_a.grid, table_b.grid
    if (
        ga.dim != gb.dim
        or not np.array_equal(ga.cells, gb.cells)
        or not np.allclose(ga.lower, gb.lower)
        or not np.allclose(ga.upper, gb.upper)
    ):
        raise ValueError("grid_tv requires tables on the identical grid")
    return float(
        0.5
        * (
            np.abs(table_a.probs - table_b.probs).sum()
            + abs(table_a.overflow - table_b.overflow)
        )
    )


def bin_ensemble(ensemble: WeightedEnsemble, grid: GridSpec) -> GridTable:
    """Histogram the ensemble's normalized weights into grid cells.

    Mass falling outside the box is accumulated into the overflow bucket
    rather than silently dropped.
    """
    if ensemble.dim != grid.dim:
        raise ValueError(
            f"ensemble dimension {ensemble.dim} does not match grid dimension {grid.dim}"
        )
    w = ensemble.normalized_weights()
    pos = ensemble.positions
    idx = np.empty((ensemble.n_particles, grid.dim), dtype=int)
    inside = np.ones(ensemble.n_particles, dtype=bool)
    for d in range(grid.dim):
        edges = grid.edges[d]
        j = np.searchsorted(edges, pos[:, d], side="right") - 1
        # points exactly on the upper edge belong to the last cell
        j = np.where(pos[:, d] == edges[-1], grid.cells[d] - 1, j)
        inside &= (j >= 0) & (j < grid.cells[d])
        idx[:, d] = np.clip(j, 0, grid.cells[d] - 1)
    flat_idx = idx[:, 0] if grid.dim == 1 else idx[:, 0] * grid.cells[1] + idx[:, 1]
    probs = np.bincount(
        flat_idx[inside], weights=w[inside], minlength=int(np.prod(grid.cells))
    )
    return GridTable(grid=grid, probs=probs, overflow=float(w[~inside].sum()))


def average_tables(tables: list[GridTable]) -> GridTable:
    """Equal-weight average of tables on a common grid (pooled ensembles)."""
    if not tables:
        raise ValueError("no tables to average")
    base = tables[0]
    probs = np.mean([t.probs for t in tables], axis=0)
    overflow = float(np.mean([t.overflow for t in tables]))
    return GridTable(grid=base.grid, probs=probs, overflow=overflow)
