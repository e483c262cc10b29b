"""Weighted-particle evolution along the decreasing noise grid.

Everything is parameterized by the current noise level sigma. With
identity scaling the per-step effective squared noise is 2*sigma*h
(h = sigma_k - sigma_{k+1}), the position drift per unit noise decrement
is 2*sigma*(score - eta*grad_mu), and the log-weight increment is

    (eta - 1/2) * 2*sigma*h * (||grad_mu||^2 - laplacian_mu)
    - eta * 2*sigma*h * score . grad_mu

evaluated at the pre-step position. eta=1 is the gradient-guided
sampler; eta=0 drops the likelihood gradient from the drift and flips
the sign of the quadratic reweighting term (the Feynman-Kac corrector
family). The stochastic stepper is Euler-Maruyama; the deterministic
variant follows the probability-flow update (half the drift
coefficient) plus unadjusted Langevin corrector sweeps at the new noise
level.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .ensemble import WeightedEnsemble
from .errors import NumericalDivergenceError
from .resampling import ResamplePolicy, ess, maybe_resample
from .rng import substream
from .schedule import diffusion_coeff
from .stage1 import initialize_ensemble

if TYPE_CHECKING:  # pragma: no cover
    from .config import RunConfig


@dataclass(frozen=True)
class CorrectorConfig:
    """ULA corrector: n_c steps with step size tau_c * sigma^2."""

    n_c: int = 4
    tau_c: float = 0.1

    def __post_init__(self):
        if self.n_c < 0:
            raise ValueError(f"corrector.n_c must be >= 0, got {self.n_c}")
        if self.tau_c <= 0:
            raise ValueError(f"corrector.tau_c must be positive, got {self.tau_c}")


@dataclass(frozen=True)
class DynamicsConfig:
    mode: str = "sde"  # "sde" | "ode-corrector"
    eta: float = 1.0
    n_particles: int = 10
    corrector: CorrectorConfig = field(default_factory=CorrectorConfig)
    resample: ResamplePolicy = field(default_factory=ResamplePolicy)
    estimator: str = "weighted-ensemble"  # "weighted-ensemble" | "max-weight"
    log_weight_clamp: float = 700.0

    def __post_init__(self):
        if self.mode not in ("sde", "ode-corrector"):
            raise ValueError(f"dynamics.mode: unknown tag {self.mode!r}")
        if not (0.0 <= self.eta <= 1.0):
            raise ValueError(f"dynamics.eta must lie in [0, 1], got {self.eta}")
        if self.n_particles < 1:
            raise ValueError(f"dynamics.n_particles must be >= 1, got {self.n_particles}")
        if self.estimator not in ("weighted-ensemble", "max-weight"):
            raise ValueError(f"dynamics.estimator: unknown tag {self.estimator!r}")
        if self.log_weight_clamp <= 0:
            raise ValueError(
                f"dynamics.log_weight_clamp must be positive, got {self.log_weight_clamp}"
            )


def _drift_and_increment(score_model, likelihood, x, sigma, h, eta):
    """Shared evaluation of the drift and the log-weight increment."""
    phi = score_model(x, sigma)
    g = likelihood.grad_mu(x)
    lap = likelihood.laplacian_mu(x)
    drift_term = 2.0 * sigma * (phi - eta * g)
    v2h = diffusion_coeff(sigma, h) if h is not None else None
    increment = None
    if h is not None:
        quad = np.sum(g * g, axis=-1) - lap
        increment = (eta - 0.5) * v2h * quad - eta * v2h * np.sum(phi * g, axis=-1)
    return drift_term, increment


def drift(score_model, likelihood, x, sigma, eta) -> np.ndarray:
    """Position drift per unit noise decrement: 2*sigma*(score - eta*grad_mu)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    d, _ = _drift_and_increment(score_model, likelihood, x, sigma, None, eta)
    return d


def log_weight_increment(score_model, likelihood, x, sigma, h, eta) -> np.ndarray:
    """Log-weight change for one step of size h, at the pre-step position."""
    if sigma <= 0 or h <= 0:
        raise ValueError(f"need sigma > 0 and h > 0, got sigma={sigma}, h={h}")
    _, inc = _drift_and_increment(score_model, likelihood, x, sigma, h, eta)
    return inc


def quantity_U(likelihood, x, sigma) -> np.ndarray:
    """Reweighting potential sigma * (||grad_mu||^2 - laplacian_mu)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    g = likelihood.grad_mu(x)
    return sigma * (np.sum(g * g, axis=-1) - likelihood.laplacian_mu(x))


def quantity_I(score_model, likelihood, x, sigma) -> np.ndarray:
    """Stability diagnostic ||grad_mu||^2 - laplacian_mu - 2*score.grad_mu."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    g = likelihood.grad_mu(x)
    phi = score_model(x, sigma)
    return (
        np.sum(g * g, axis=-1)
        - likelihood.laplacian_mu(x)
        - 2.0 * np.sum(phi * g, axis=-1)
    )


def _check_finite(positions, log_weights, step_index):
    bad_pos = ~np.all(np.isfinite(positions), axis=-1)
    if np.any(bad_pos):
        raise NumericalDivergenceError(step_index, np.nonzero(bad_pos)[0], "position")
    bad_w = ~np.isfinite(log_weights)
    if np.any(bad_w):
        raise NumericalDivergenceError(step_index, np.nonzero(bad_w)[0], "log weight")


def sde_step(
    ensemble: WeightedEnsemble,
    sigma_next: float,
    score_model,
    likelihood,
    eta: float,
    noise: np.ndarray,
) -> WeightedEnsemble:
    """One Euler-Maruyama step from ensemble.sigma_current down to sigma_next.

    Positions and weights both use the pre-step positions. noise must be
    an (N, n) standard-normal block; row j is particle j's draw.
    """
    sigma = ensemble.sigma_current
    h = sigma - sigma_next
    if h <= 0:
        raise ValueError(
            f"sigma must decrease: current {sigma}, next {sigma_next}"
        )
    x = ensemble.positions
    d, inc = _drift_and_increment(score_model, likelihood, x, sigma, h, eta)
    new_pos = x + h * d + np.sqrt(diffusion_coeff(sigma, h)) * noise
    new_lw = ensemble.log_weights + inc
    _check_finite(new_pos, new_lw, ensemble.step_index)
    return ensemble.with_state(
        positions=new_pos,
        log_weights=new_lw,
        sigma_current=float(sigma_next),
        step_index=ensemble.step_index + 1,
    )


def ula_corrector(
    positions: np.ndarray,
    sigma: float,
    score_model,
    likelihood,
    h_c: float,
    noise: np.ndarray,
) -> np.ndarray:
    """Unadjusted Langevin sweeps targeting the tilted density at fixed sigma.

    noise holds one (N, n) block per sweep, shape (L, N, n).
    """
    x = positions
    root = np.sqrt(2.0 * h_c)
    for step_noise in noise:
        x = x + h_c * (score_model(x, sigma) - likelihood.grad_mu(x)) + root * step_noise
    return x


def ode_corrector_step(
    ensemble: WeightedEnsemble,
    sigma_next: float,
    score_model,
    likelihood,
    corrector: CorrectorConfig,
    noise: np.ndarray | None,
) -> WeightedEnsemble:
    """Probability-flow predictor plus ULA corrector sweeps.

    Predictor: x + h * sigma * score(x, sigma), half the stochastic drift
    coefficient. Corrector: n_c ULA sweeps at sigma_next with step size
    tau_c * sigma_next^2. The weight update -sigma*h*score.grad_mu uses
    the pre-predictor position. noise has shape (n_c, N, n); None is
    allowed when n_c = 0.
    """
    sigma = ensemble.sigma_current
    h = sigma - sigma_next
    if h <= 0:
        raise ValueError(
            f"sigma must decrease: current {sigma}, next {sigma_next}"
        )
    x = ensemble.positions
    phi = score_model(x, sigma)
    g = likelihood.grad_mu(x)
    new_lw = ensemble.log_weights - sigma * h * np.sum(phi * g, axis=-1)
    new_pos = x + h * sigma * phi
    if corrector.n_c > 0:
        if noise is None or noise.shape[0] != corrector.n_c:
            raise ValueError("corrector noise must have shape (n_c, N, n)")
        h_c = corrector.tau_c * sigma_next**2
        new_pos = ula_corrector(new_pos, sigma_next, score_model, likelihood, h_c, noise)
    _check_finite(new_pos, new_lw, ensemble.step_index)
    return ensemble.with_state(
        positions=new_pos,
        log_weights=new_lw,
        sigma_current=float(sigma_next),
        step_index=ensemble.step_index + 1,
    )


@dataclass(frozen=True)
class TraceRow:
    step: int
    sigma: float
    ess: float
    mean: np.ndarray
    var: np.ndarray
    resampled: bool
    max_abs_I: float


@dataclass
class RunResult:
    final: WeightedEnsemble
    trace: list[TraceRow]
    resample_count: int
    clamp_count: int
    estimate: np.ndarray


def _trace_row(ensemble, score_model, likelihood, resampled: bool) -> TraceRow:
    i_vals = quantity_I(score_model, likelihood, ensemble.positions, ensemble.sigma_current)
    return TraceRow(
        step=ensemble.step_index,
        sigma=float(ensemble.sigma_current),
        ess=ess(ensemble.log_weights),
        mean=ensemble.weighted_mean(),
        var=ensemble.weighted_var_diag(),
        resampled=resampled,
        max_abs_I=float(np.max(np.abs(i_vals))),
    )


def run_sampler(config: "RunConfig") -> RunResult:
    """Run Stage I plus the full annealing loop described by the config."""
    dyn = config.dynamics
    seed = config.master_seed
    grid = config.schedule.grid()
    n = dyn.n_particles

    ensemble = initialize_ensemble(
        config.prior,
        config.likelihood,
        config.schedule,
        config.stage1,
        n,
        substream(seed, "stage1"),
    )
    score_model = config.score_model
    likelihood = config.likelihood
    trace = [_trace_row(ensemble, score_model, likelihood, False)]
    resample_count = 0
    clamp_count = 0
    try:
        for k in range(config.schedule.num_steps):
            sigma_next = grid[k + 1]
            if dyn.mode == "sde":
                noise = substream(seed, "sde-noise", k).standard_normal(
                    (n, ensemble.dim)
                )
                ensemble = sde_step(
                    ensemble, sigma_next, score_model, likelihood, dyn.eta, noise
                )
            else:
                cnoise = None
                if dyn.corrector.n_c > 0:
                    cnoise = substream(seed, "corrector-noise", k).standard_normal(
                        (dyn.corrector.n_c, n, ensemble.dim)
                    )
                ensemble = ode_corrector_step(
                    ensemble, sigma_next, score_model, likelihood, dyn.corrector, cnoise
                )
            clamped = np.clip(
                ensemble.log_weights, -dyn.log_weight_clamp, dyn.log_weight_clamp
            )
            n_hit = int(np.sum(clamped != ensemble.log_weights))
            if n_hit:
                clamp_count += n_hit
                ensemble = ensemble.with_state(log_weights=clamped)
            ensemble, resampled = maybe_resample(
                ensemble, dyn.resample, substream(seed, "resample", k)
            )
            resample_count += int(resampled)
            trace.append(_trace_row(ensemble, score_model, likelihood, resampled))
    except NumericalDivergenceError as err:
        err.partial_trace = trace
        raise
    if clamp_count:
        warnings.warn(
            f"log-weight clamp at +/-{dyn.log_weight_clamp} triggered "
            f"{clamp_count} time(s); weights were saturated",
            RuntimeWarning,
            stacklevel=2,
        )
    if dyn.estimator == "max-weight":
        estimate = ensemble.max_weight_position()
    else:
        estimate = ensemble.weighted_mean()
    return RunResult(
        final=ensemble,
        trace=trace,
        resample_count=resample_count,
        clamp_count=clamp_count,
        estimate=estimate,
    )
