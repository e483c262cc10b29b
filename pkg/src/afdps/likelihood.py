"""Negative log-likelihoods with gradient and Laplacian.

Two forward models ship with the package: linear-Gaussian
(y = A x + noise) and tanh-linear (y = tanh(A x) + noise). Both drop the
additive Gaussian normalization constant, so mu is reported up to a
constant and is bounded below by 0. The weight dynamics only ever use
mu differences, grad_mu, and laplacian_mu, so the dropped constant is
unobservable there.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError


class LinearGaussianLikelihood:
    """mu(x) = 0.5 * (A x - y)^T Sigma^{-1} (A x - y)."""

    def __init__(self, A, Sigma, y):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
        self.y = np.atleast_1d(np.asarray(y, dtype=float))
        m, n = self.A.shape
        if self.Sigma.shape != (m, m):
            raise ConfigError(
                f"likelihood: Sigma shape {self.Sigma.shape} does not match A rows {m}"
            )
        if self.y.shape != (m,):
            raise ConfigError(
                f"likelihood: y shape {self.y.shape} does not match A rows {m}"
            )
        if not np.allclose(self.Sigma, self.Sigma.T, atol=1e-12):
            raise ConfigError("likelihood: Sigma must be symmetric")
        try:
            self._sigma_cho = cho_factor(self.Sigma, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ConfigError("likelihood: Sigma is not positive definite") from exc

    @property
    def dim_x(self) -> int:
        return self.A.shape[1]

    @property
    def dim_y(self) -> int:
        return self.A.shape[0]

    @cached_property
    def sigma_inv(self) -> np.ndarray:
        return cho_solve(self._sigma_cho, np.eye(self.dim_y))

    @cached_property
    def At_Sinv_A(self) -> np.ndarray:
        return self.A.T @ self.sigma_inv @ self.A

    @cached_property
    def At_Sinv_y(self) -> np.ndarray:
        return self.A.T @ (self.sigma_inv @ self.y)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim_x:
            raise ValueError(
                f"point dimension {x.shape[-1]} does not match likelihood dimension {self.dim_x}"
            )
        return x

    def residual(self, x) -> np.ndarray:
        x = self._check(x)
        return x @ self.A.T - self.y

    def mu(self, x) -> np.ndarray:
        r = self.residual(x)
        return 0.5 * np.sum((r @ self.sigma_inv) * r, axis=-1)

    def grad_mu(self, x) -> np.ndarray:
        return self.residual(x) @ self.sigma_inv @ self.A

    def laplacian_mu(self, x) -> np.ndarray:
        x = self._check(x)
        return np.full(x.shape[:-1], float(np.trace(self.At_Sinv_A)))

    def least_squares_point(self) -> np.ndarray:
        """Minimizer of mu; pseudo-inverse solution when A^T Sigma^{-1} A is singular."""
        return np.linalg.lstsq(self.At_Sinv_A, self.At_Sinv_y, rcond=None)[0]


class TanhLinearLikelihood:
    """mu(x) = 0.5 * (tanh(A x) - y)^T Sigma^{-1} (tanh(A x) - y).

    The Laplacian is analytic by default; a finite-difference mode (n
    axis-aligned central second differences) exists so new forward
    models can be prototyped without deriving the second derivatives.
    """

    def __init__(self, A, Sigma, y, laplacian_mode: str = "analytic", fd_step: float = 1e-5):
        self._lin = LinearGaussianLikelihood(A, Sigma, y)
        if laplacian_mode not in ("analytic", "finite-difference"):
            raise ConfigError(
                f"likelihood.laplacian_mode: unknown tag {laplacian_mode!r}"
            )
        if fd_step <= 0:
            raise ConfigError(f"likelihood.fd_step must be positive, got {fd_step}")
        self.laplacian_mode = laplacian_mode
        self.fd_step = float(fd_step)

    @property
    def A(self) -> np.ndarray:
        return self._lin.A

    @property
    def Sigma(self) -> np.ndarray:
        return self._lin.Sigma

    @property
    def y(self) -> np.ndarray:
        return self._lin.y

    @property
    def dim_x(self) -> int:
        return self._lin.dim_x

    @property
    def dim_y(self) -> int:
        return self._lin.dim_y

    def mu(self, x) -> np.ndarray:
        x = self._lin._check(x)
        r = np.tanh(x @ self.A.T) - self.y
        return 0.5 * np.sum((r @ self._lin.sigma_inv) * r, axis=-1)

    def grad_mu(self, x) -> np.ndarray:
        x = self._lin._check(x)
        t = np.tanh(x @ self.A.T)
        w = (t - self.y) @ self._lin.sigma_inv
        return (w * (1.0 - t**2)) @ self.A

    def laplacian_mu(self, x) -> np.ndarray:
        x = self._lin._check(x)
        if self.laplacian_mode == "finite-difference":
            return self._laplacian_fd(x)
        t = np.tanh(x @ self.A.T)  # (..., m)
        w = (t - self.y) @ self._lin.sigma_inv
        d = 1.0 - t**2
        aat = self.A @ self.A.T  # (m, m)
        # sum_ab Sinv_ab d_a d_b (AA^T)_ab - 2 sum_a w_a t_a d_a (AA^T)_aa
        first = np.einsum("...a,ab,ab,...b->...", d, self._lin.sigma_inv, aat, d)
        second = -2.0 * np.sum(w * t * d * np.diag(aat), axis=-1)
        return first + second

    def _laplacian_fd(self, x) -> np.ndarray:
        h = self.fd_step
        out = np.zeros(x.shape[:-1])
        for j in range(self.dim_x):
            step = np.zeros(self.dim_x)
            step[j] = h
            out += (self.mu(x + step) - 2.0 * self.mu(x) + self.mu(x - step)) / h**2
        return out


Likelihood = LinearGaussianLikelihood | TanhLinearLikelihood


def mu(likelihood, x) -> np.ndarray:
    return likelihood.mu(x)


def grad_mu(likelihood, x) -> np.ndarray:
    return likelihood.grad_mu(x)


def laplacian_mu(likelihood, x) -> np.ndarray:
    return likelihood.laplacian_mu(x)
