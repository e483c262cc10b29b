"""ESS-triggered resampling with replacement.

Multinomial is the faithful default; systematic resampling is shipped as
a lower-variance extension. Post-resample weights are reset to uniform
(log weight 0), so post-resample ESS is exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import WeightedEnsemble
from .errors import ConfigError, DegeneracyError

_SCHEMES = ("multinomial", "systematic")


@dataclass(frozen=True)
class ResamplePolicy:
    """Threshold c in (0, 1), a per-step sequence of such, or None (never)."""

    threshold: float | Sequence[float] | None = 0.5
    scheme: str = "multinomial"

    def __post_init__(self):
        if self.scheme not in _SCHEMES:
            raise ConfigError(f"resample.scheme: unknown tag {self.scheme!r}")
        t = self.threshold
        if t is None:
            return
        values = t if isinstance(t, (list, tuple, np.ndarray)) else [t]
        for c in values:
            if not (0.0 < float(c) < 1.0):
                raise ConfigError(
                    f"resample.threshold entries must lie in (0, 1), got {c}"
                )

    def threshold_at(self, step_index: int) -> float | None:
        if self.threshold is None:
            return None
        if isinstance(self.threshold, (list, tuple, np.ndarray)):
            seq = self.threshold
            return float(seq[min(step_index, len(seq) - 1)])
        return float(self.threshold)


def ess(log_weights: np.ndarray) -> float:
    """Normalized effective sample size (mean beta)^2 / mean(beta^2) in [1/N, 1].

    Computed on max-shifted exponentials, so it is invariant under adding
    a constant to every log weight.
    """
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0:
        raise ValueError("ess of an empty ensemble is undefined")
    beta = np.exp(lw - lw.max())
    return float(np.mean(beta) ** 2 / np.mean(beta**2))


def resample_indices(
    norm_weights: np.ndarray, scheme: str, rng: np.random.Generator
) -> np.ndarray:
    n = norm_weights.shape[0]
    if scheme == "multinomial":
        return rng.choice(n, size=n, replace=True, p=norm_weights)
    # systematic: one stratified uniform inverted through the weight CDF
    points = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(norm_weights), points)


def maybe_resample(
    ensemble: WeightedEnsemble,
    policy: ResamplePolicy,
    rng: np.random.Generator,
) -> tuple[WeightedEnsemble, bool]:
    """Resample with replacement when ESS drops below the step threshold."""
    c = policy.threshold_at(ensemble.step_index)
    if c is None or ess(ensemble.log_weights) >= c:
        return ensemble, False
    beta = np.exp(ensemble.log_weights - ensemble.log_weights.max())
    total = beta.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegeneracyError(step_index=ensemble.step_index)
    idx = resample_indices(beta / total, policy.scheme, rng)
    return (
        ensemble.with_state(
            positions=ensemble.positions[idx].copy(),
            log_weights=np.zeros(ensemble.n_particles),
        ),
        True,
    )
