"""Noise schedule for the variance-exploding sampler.

Only identity scaling is supported: the state is never rescaled and the
noise level sigma itself is the clock. Samplers walk a strictly
decreasing grid sigma_0 = sigma_max > ... > sigma_K = sigma_min produced
by a rho-warped interpolation (rho=7 default, rho=1 gives uniform
spacing).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class NoiseSchedule:
    """Grid parameters; immutable and safe to share."""

    sigma_min: float = 0.01
    sigma_max: float = 8.0
    rho_grid: float = 7.0
    num_steps: int = 2000
    s_kind: str = "identity"

    def __post_init__(self):
        if self.s_kind != "identity":
            raise ConfigError(
                f"schedule.s_kind: only 'identity' scaling is implemented, "
                f"got {self.s_kind!r}"
            )
        if not (self.sigma_max > self.sigma_min > 0):
            raise ConfigError(
                f"schedule: need sigma_max > sigma_min > 0, "
                f"got sigma_max={self.sigma_max}, sigma_min={self.sigma_min}"
            )
        if self.rho_grid <= 0:
            raise ConfigError(f"schedule.rho_grid must be positive, got {self.rho_grid}")
        if int(self.num_steps) != self.num_steps or self.num_steps < 1:
            raise ConfigError(f"schedule.num_steps must be a positive integer, got {self.num_steps}")

    def grid(self) -> np.ndarray:
        """Return the noise levels sigma_0..sigma_K (length num_steps + 1)."""
        return make_grid(self)


def make_grid(schedule: NoiseSchedule) -> np.ndarray:
    """Build the decreasing noise-level grid.

    sigma_k = (sigma_max^(1/rho) + (k/K) * (sigma_min^(1/rho) - sigma_max^(1/rho)))^rho

    Endpoints are pinned exactly to sigma_max and sigma_min.
    """
    rho = schedule.rho_grid
    k = np.arange(schedule.num_steps + 1, dtype=float)
    u = k / schedule.num_steps
    hi = schedule.sigma_max ** (1.0 / rho)
    lo = schedule.sigma_min ** (1.0 / rho)
    grid = (hi + u * (lo - hi)) ** rho
    grid[0] = schedule.sigma_max
    grid[-1] = schedule.sigma_min
    if not np.all(np.diff(grid) < 0):
        raise ConfigError(
            "schedule: generated grid is not strictly decreasing "
            "(num_steps too large for the sigma range?)"
        )
    return grid


def diffusion_coeff(sigma: float, h: float) -> float:
    """Effective squared-noise increment 2*sigma*h for one step.

    Used by both the position update (noise variance) and the weight
    update so the dynamics and the reweighting stay consistent.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if h <= 0:
        raise ValueError(f"step h must be positive, got {h}")
    return 2.0 * sigma * h
