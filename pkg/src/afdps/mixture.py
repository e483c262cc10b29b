"""Gaussian-mixture prior with closed-form noised density and score.

The mixture serves three roles: the prior p0, the noised prior at any
noise level sigma (componentwise covariance C_i + sigma^2 I), and the
building block of the exact posterior oracle. All densities and
responsibilities are computed in log space; mixtures become extremely
peaked at small sigma and would underflow otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture with weights (M,), means (M, n), covariances (M, n, n)."""

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        c = np.asarray(self.covariances, dtype=float)
        if w.ndim != 1 or m.ndim != 2 or c.ndim != 3:
            raise ConfigError(
                "mixture: weights must be (M,), means (M, n), covariances (M, n, n)"
            )
        if not (w.shape[0] == m.shape[0] == c.shape[0]):
            raise ConfigError("mixture: component counts disagree across fields")
        if c.shape[1] != m.shape[1] or c.shape[2] != m.shape[1]:
            raise ConfigError("mixture: covariance shape does not match mean dimension")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(
                f"mixture: weights must be non-negative and sum to 1, sum={w.sum()!r}"
            )
        if not np.allclose(c, np.swapaxes(c, 1, 2), atol=1e-12):
            raise ConfigError("mixture: covariances must be symmetric")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covariances", c)
        self._chols  # fail fast on non-PD covariances

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @cached_property
    def _chols(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.covariances)
        except np.linalg.LinAlgError as exc:
            raise ConfigError("mixture: covariance is not positive definite") from exc

    @cached_property
    def _log_norm(self) -> np.ndarray:
        # log of the Gaussian normalizer per component
        logdet = 2.0 * np.sum(np.log(np.diagonal(self._chols, axis1=1, axis2=2)), axis=1)
        return -0.5 * (self.dim * _LOG_2PI + logdet)

    def _check_points(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(
                f"point dimension {x.shape[-1]} does not match mixture dimension {self.dim}"
            )
        return x

    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        """Per-component log w_i + log N(x; m_i, C_i), shape (..., M)."""
        x = self._check_points(x)
        batch = x.shape[:-1]
        diff = x.reshape(-1, self.dim)[:, None, :] - self.means  # (B, M, n)
        # Solve L z = diff per component for the Mahalanobis term.
        z = np.linalg.solve(self._chols[None, ...], diff[..., None])[..., 0]
        maha = np.sum(z * z, axis=-1)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return (logw + self._log_norm - 0.5 * maha).reshape(*batch, self.n_components)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log mixture density, computed with a max-shifted log-sum-exp."""
        return logsumexp(self.component_log_densities(x), axis=-1)

    def responsibilities(self, x: np.ndarray) -> np.ndarray:
        """Posterior component probabilities at x, shape (..., M)."""
        comp = self.component_log_densities(x)
        comp = comp - comp.max(axis=-1, keepdims=True)
        r = np.exp(comp)
        return r / r.sum(axis=-1, keepdims=True)

    def score(self, x: np.ndarray) -> np.ndarray:
        """Gradient of log_density: sum_i r_i(x) * (-C_i^{-1} (x - m_i))."""
        x = self._check_points(x)
        batch = x.shape[:-1]
        diff = x.reshape(-1, self.dim)[:, None, :] - self.means  # (B, M, n)
        solved = np.linalg.solve(self.covariances[None, ...], diff[..., None])[..., 0]
        r = self.responsibilities(x.reshape(-1, self.dim))
        out = -np.sum(r[..., None] * solved, axis=-2)
        return out.reshape(*batch, self.dim)

    def noised(self, sigma: float) -> "GaussianMixture":
        """Mixture convolved with N(0, sigma^2 I): covariances C_i + sigma^2 I."""
        return noised_mixture(self, sigma)

    def sample(self, n_samples: int, rng: np.random.Generator) -> np.ndarray:
        """i.i.d. draws (n_samples, n): categorical component, then Cholesky."""
        return sample_prior(self, n_samples, rng)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        mu = self.mean()
        second = np.einsum("i,ijk->jk", self.weights, self.covariances)
        spread = np.einsum("i,ij,ik->jk", self.weights, self.means - mu, self.means - mu)
        return second + spread


def noised_mixture(prior: GaussianMixture, sigma: float) -> GaussianMixture:
    """Convolve the mixture with isotropic noise of standard deviation sigma."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0.0:
        return prior
    eye = np.eye(prior.dim)
    return GaussianMixture(
        weights=prior.weights,
        means=prior.means,
        covariances=prior.covariances + sigma**2 * eye,
    )


def log_density(mixture: GaussianMixture, x: np.ndarray) -> np.ndarray:
    return mixture.log_density(x)


def sample_prior(
    mixture: GaussianMixture, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    comps = rng.choice(mixture.n_components, size=n_samples, p=mixture.weights)
    normals = rng.standard_normal((n_samples, mixture.dim))
    chols = mixture._chols[comps]
    return mixture.means[comps] + np.einsum("ijk,ik->ij", chols, normals)


@dataclass(frozen=True)
class ScoreModel:
    """Score of the noised mixture, optionally with a bounded error field.

    With error_eps = 0 the output equals the analytic gradient of
    log p_sigma. With error_eps > 0 a deterministic perturbation
    eps * u(x) is added, where ||u(x)|| <= sqrt(n) everywhere:

    - "fixed-direction": u is a constant unit vector drawn once from
      error_seed.
    - "sinusoidal": u(x) = sin(W x + b) componentwise, W and b drawn
      once from error_seed.
    """

    base: GaussianMixture
    error_eps: float = 0.0
    error_kind: str = "none"
    error_seed: int = 0

    def __post_init__(self):
        if self.error_eps < 0:
            raise ConfigError(f"score.error_eps must be >= 0, got {self.error_eps}")
        if self.error_kind not in ("none", "fixed-direction", "sinusoidal"):
            raise ConfigError(f"score.error_kind: unknown tag {self.error_kind!r}")
        if self.error_eps > 0 and self.error_kind == "none":
            raise ConfigError("score.error_kind must be set when error_eps > 0")

    @cached_property
    def _direction(self) -> np.ndarray:
        g = np.random.default_rng(self.error_seed).standard_normal(self.base.dim)
        return g / np.linalg.norm(g)

    @cached_property
    def _sin_params(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.random.default_rng(self.error_seed)
        w = r.standard_normal((self.base.dim, self.base.dim))
        b = r.uniform(0.0, 2.0 * np.pi, self.base.dim)
        return w, b

    def perturbation(self, x: np.ndarray) -> np.ndarray:
        """The bounded field u(x); zero for error_kind='none'."""
        x = np.asarray(x, dtype=float)
        if self.error_kind == "none":
            return np.zeros_like(x)
        if self.error_kind == "fixed-direction":
            return np.broadcast_to(self._direction, x.shape).copy()
        w, b = self._sin_params
        return np.sin(x @ w.T + b)

    def __call__(self, x: np.ndarray, sigma: float) -> np.ndarray:
        if sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {sigma}")
        exact = self.base.noised(sigma).score(x)
        if self.error_eps == 0.0:
            return exact
        return exact + self.error_eps * self.perturbation(x)


def score(model: ScoreModel, x: np.ndarray, sigma: float) -> np.ndarray:
    return model(x, sigma)
