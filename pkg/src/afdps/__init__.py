"""Weighted-particle diffusion posterior sampling with exact oracles.

A library and CLI for Bayesian inverse problems: a Gaussian-mixture
prior evolves along a decreasing noise-level grid while particle weights
absorb the likelihood, so the final weighted ensemble approximates the
posterior. Priors, noised densities, scores, and linear-Gaussian
posteriors are all available in closed form, which makes every sampler
output checkable against exact ground truth.
"""

__version__ = "0.1.0"

from .config import MetricsConfig, RunConfig, load_config
from .dynamics import (
    CorrectorConfig,
    DynamicsConfig,
    RunResult,
    drift,
    log_weight_increment,
    ode_corrector_step,
    quantity_I,
    quantity_U,
    run_sampler,
    sde_step,
)
from .ensemble import WeightedEnsemble
from .errors import (
    AfdpsError,
    ConfigError,
    DegeneracyError,
    NumericalDivergenceError,
)
from .likelihood import LinearGaussianLikelihood, TanhLinearLikelihood
from .metrics import (
    MetricsReport,
    evaluate_run,
    sliced_w2,
    theorem1_trend,
    theorem2_trend,
    wasserstein1_1d,
    weighted_moments,
)
from .mixture import GaussianMixture, ScoreModel, noised_mixture, sample_prior
from .oracle import (
    GridSpec,
    GridTable,
    bin_ensemble,
    exact_posterior_gmm,
    grid_density,
    grid_tv,
)
from .resampling import ResamplePolicy, ess, maybe_resample
from .schedule import NoiseSchedule, diffusion_coeff, make_grid
from .stage1 import (
    MalaConfig,
    Stage1Config,
    initialize_ensemble,
    sample_exact_gaussian,
    sample_exact_gmm,
    sample_mala,
)

__all__ = [
    "AfdpsError",
    "ConfigError",
    "CorrectorConfig",
    "DegeneracyError",
    "DynamicsConfig",
    "GaussianMixture",
    "GridSpec",
    "GridTable",
    "LinearGaussianLikelihood",
    "MalaConfig",
    "MetricsConfig",
    "MetricsReport",
    "NoiseSchedule",
    "NumericalDivergenceError",
    "ResamplePolicy",
    "RunConfig",
    "RunResult",
    "ScoreModel",
    "Stage1Config",
    "TanhLinearLikelihood",
    "WeightedEnsemble",
    "bin_ensemble",
    "diffusion_coeff",
    "drift",
    "ess",
    "evaluate_run",
    "exact_posterior_gmm",
    "grid_density",
    "grid_tv",
    "initialize_ensemble",
    "load_config",
    "log_weight_increment",
    "make_grid",
    "maybe_resample",
    "noised_mixture",
    "ode_corrector_step",
    "quantity_I",
    "quantity_U",
    "run_sampler",
    "sample_exact_gaussian",
    "sample_exact_gmm",
    "sample_mala",
    "sample_prior",
    "sde_step",
    "sliced_w2",
    "theorem1_trend",
    "theorem2_trend",
    "wasserstein1_1d",
    "weighted_moments",
]
