"""Initial-ensemble sampling at the largest noise level.

The ensemble starts from the tilted distribution proportional to
p(., sigma_max) * exp(-mu_y). Three interchangeable samplers:

- "exact-gmm": exact conjugate draw using the analytic mixture posterior
  at sigma_max (default; self-consistent with the oracle).
- "exact-gaussian": exact draw under the isotropic Gaussian surrogate
  N(0, rho^2 I) for the noised prior, which collapses the target to a
  single Gaussian N(gamma, Lambda^{-1}).
- "mala": Metropolis-adjusted Langevin chains on the tilted log density,
  for nonlinear likelihoods where no conjugate form exists.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import WeightedEnsemble
from .errors import AfdpsError, ConfigError
from .likelihood import LinearGaussianLikelihood
from .mixture import GaussianMixture
from .oracle import exact_posterior_gmm

_METHODS = ("exact-gmm", "exact-gaussian", "mala")


@dataclass(frozen=True)
class MalaConfig:
    step_size: float = 0.05
    n_steps: int = 2000
    burn_in: int = 500
    mode: str = "chains"  # "chains": one chain per particle; "single-chain": thinned

    def __post_init__(self):
        if self.step_size <= 0:
            raise ConfigError(f"stage1.mala.step_size must be positive, got {self.step_size}")
        if self.n_steps < 1 or self.burn_in < 0 or self.burn_in >= self.n_steps:
            raise ConfigError(
                f"stage1.mala: need 0 <= burn_in < n_steps, got "
                f"burn_in={self.burn_in}, n_steps={self.n_steps}"
            )
        if self.mode not in ("chains", "single-chain"):
            raise ConfigError(f"stage1.mala.mode: unknown tag {self.mode!r}")


@dataclass(frozen=True)
class Stage1Config:
    method: str = "exact-gmm"
    rho: float | None = None  # default: sigma_max
    mala: MalaConfig = field(default_factory=MalaConfig)

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ConfigError(f"stage1.method: unknown tag {self.method!r}")
        if self.rho is not None and self.rho <= 0:
            raise ConfigError(f"stage1.rho must be positive, got {self.rho}")


def sample_exact_gaussian(
    likelihood: LinearGaussianLikelihood,
    rho: float,
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exact draws from N(gamma, Lambda^{-1}) with
    Lambda = A^T Sigma^{-1} A + rho^{-2} I and gamma = Lambda^{-1} A^T Sigma^{-1} y.
    """
    if not isinstance(likelihood, LinearGaussianLikelihood):
        raise ConfigError("exact-gaussian initialization requires a linear-Gaussian likelihood")
    if rho <= 0:
        raise ValueError(f"rho must be positive, got {rho}")
    n = likelihood.dim_x
    lam = likelihood.At_Sinv_A + np.eye(n) / rho**2
    cov = np.linalg.inv(lam)
    cov = 0.5 * (cov + cov.T)
    gamma = cov @ likelihood.At_Sinv_y
    chol = np.linalg.cholesky(cov)
    return gamma + rng.standard_normal((n_samples, n)) @ chol.T


def sample_exact_gmm(
    prior: GaussianMixture,
    likelihood: LinearGaussianLikelihood,
    sigma_max: float,
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exact draws from the conjugate mixture posterior at noise level sigma_max."""
    posterior = exact_posterior_gmm(prior, likelihood, sigma_max)
    return posterior.sample(n_samples, rng)


def sample_mala(
    log_density_and_grad,
    x0: np.ndarray,
    config: MalaConfig,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, float]:
    """MALA draws from an unnormalized log density.

    log_density_and_grad maps (B, n) positions to (logp (B,), grad (B, n)).
    In "chains" mode n_samples chains run in parallel and the final state
    of each is returned; in "single-chain" mode one chain runs and the
    post-burn-in states are thinned down to n_samples. Returns (samples,
    mean acceptance rate).
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n_chains = n_samples if config.mode == "chains" else 1
    x = np.broadcast_to(x0, (n_chains, x0.shape[-1])).copy()
    logp, grad = log_density_and_grad(x)
    if not np.all(np.isfinite(logp)):
        raise AfdpsError("MALA initialization point has non-finite log density")

    h = config.step_size
    kept = []
    n_accept = 0
    for step in range(config.n_steps):
        noise = rng.standard_normal(x.shape)
        prop = x + h * grad + np.sqrt(2.0 * h) * noise
        logp_prop, grad_prop = log_density_and_grad(prop)
        # proposal asymmetry: q(x | x') vs q(x' | x)
        fwd = -np.sum((prop - x - h * grad) ** 2, axis=-1) / (4.0 * h)
        rev = -np.sum((x - prop - h * grad_prop) ** 2, axis=-1) / (4.0 * h)
        log_alpha = logp_prop - logp + rev - fwd
        accept = np.log(rng.random(x.shape[0])) < log_alpha
        x = np.where(accept[:, None], prop, x)
        logp = np.where(accept, logp_prop, logp)
        grad = np.where(accept[:, None], grad_prop, grad)
        n_accept += int(accept.sum())
        if config.mode == "single-chain" and step >= config.burn_in:
            kept.append(x[0].copy())
    accept_rate = n_accept / (config.n_steps * x.shape[0])
    if config.mode == "single-chain":
        kept = np.asarray(kept)
        take = np.linspace(0, len(kept) - 1, n_samples).round().astype(int)
        return kept[take], accept_rate
    return x, accept_rate


def initialize_ensemble(
    prior: GaussianMixture,
    likelihood,
    schedule,
    config: Stage1Config,
    n_particles: int,
    rng: np.random.Generator,
) -> WeightedEnsemble:
    """Draw the Stage-I ensemble at sigma_max with uniform weights."""
    sigma_max = schedule.sigma_max
    rho = config.rho if config.rho is not None else sigma_max
    if config.method == "exact-gaussian":
        positions = sample_exact_gaussian(likelihood, rho, n_particles, rng)
    elif config.method == "exact-gmm":
        positions = sample_exact_gmm(prior, likelihood, sigma_max, n_particles, rng)
    else:
        noised = prior.noised(sigma_max)

        def target(x):
            logp = noised.log_density(x) - likelihood.mu(x)
            grad = noised.score(x) - likelihood.grad_mu(x)
            return logp, grad

        if isinstance(likelihood, LinearGaussianLikelihood):
            x0 = likelihood.least_squares_point()
        else:
            x0 = np.zeros(prior.dim)
        positions, _ = sample_mala(target, x0, config.mala, n_particles, rng)
    return WeightedEnsemble(
        positions=positions,
        log_weights=np.zeros(n_particles),
        sigma_current=float(sigma_max),
        step_index=0,
    )
