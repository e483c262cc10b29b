"""Weighted particle ensemble: the SMC state."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class WeightedEnsemble:
    """N particle positions (N, n) with unnormalized log weights (N,)."""

    positions: np.ndarray
    log_weights: np.ndarray
    sigma_current: float
    step_index: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        lw = np.asarray(self.log_weights, dtype=float)
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ValueError("positions must be a (N, n) array with N >= 1")
        if lw.shape != (pos.shape[0],):
            raise ValueError("log_weights must be (N,) matching positions")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "log_weights", lw)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def normalized_weights(self) -> np.ndarray:
        """Weights beta_i / sum beta_j with beta_i = exp(lw_i - max lw)."""
        beta = np.exp(self.log_weights - self.log_weights.max())
        return beta / beta.sum()

    def weighted_mean(self) -> np.ndarray:
        return self.normalized_weights() @ self.positions

    def weighted_cov(self) -> np.ndarray:
        w = self.normalized_weights()
        centered = self.positions - w @ self.positions
        return np.einsum("i,ij,ik->jk", w, centered, centered)

    def weighted_var_diag(self) -> np.ndarray:
        w = self.normalized_weights()
        centered = self.positions - w @ self.positions
        return w @ centered**2

    def max_weight_position(self) -> np.ndarray:
        return self.positions[int(np.argmax(self.log_weights))].copy()

    def with_state(self, **changes) -> "WeightedEnsemble":
        return replace(self, **changes)
