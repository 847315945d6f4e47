"""Multivariate Gaussian log-densities with per-sample weight scaling.

A sample with weight w is evaluated against covariance Sigma/w, i.e. heavier
samples see a tighter effective covariance. Everything is computed in log
space; the quadratic form is never exponentiated on its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, solve_triangular

LOG_2PI = np.log(2.0 * np.pi)

COVARIANCE_KINDS = ("diag", "full")


@dataclass(frozen=True)
class Covariance:
    """Either a length-d vector of variances ("diag") or a d x d matrix ("full")."""

    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if self.kind == "diag" and values.ndim != 1:
            raise ValueError("diagonal covariance must be a 1-d variance vector")
        if self.kind == "full" and (values.ndim != 2 or values.shape[0] != values.shape[1]):
            raise ValueError("full covariance must be a square matrix")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GaussianComponent:
    mean: np.ndarray
    covariance: Covariance

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        object.__setattr__(self, "mean", mean)
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def validate_component(component: GaussianComponent):
    """Check component invariants; return None if all hold, else a diagnostic string.

    Never raises: intended for pre-flight checks and error reporting.
    """
    cov = component.covariance
    if component.mean.shape[0] != cov.dim:
        return "dimension mismatch between mean and covariance"
    if not np.all(np.isfinite(component.mean)) or not np.all(np.isfinite(cov.values)):
        return "non-finite parameter"
    if cov.kind == "diag":
        if np.any(cov.values <= 0):
            return "non-positive variance"
        return None
    asym = np.abs(cov.values - cov.values.T)
    scale = max(np.abs(cov.values).max(), 1.0)
    if asym.max() > 1e-12 * scale:
        return "not symmetric"
    try:
        cholesky(cov.values, lower=True)
    except np.linalg.LinAlgError:
        return "not positive-definite"
    except ValueError:
        return "not positive-definite"
    return None


def log_density(x: np.ndarray, component: GaussianComponent, weight: float = 1.0) -> float:
    """log N(x; mu, Sigma/weight) for a single point.

    Equals -(d/2) ln(2 pi) + (d/2) ln w - (1/2) ln|Sigma| - (w/2) (x-mu)^T Sigma^-1 (x-mu).
    """
    if weight <= 0:
        raise ValueError("weight must be positive")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != component.dim:
        raise ValueError("dimension mismatch between x and component")
    diagnostic = validate_component(component)
    if diagnostic is not None:
        raise ValueError(f"invalid component: {diagnostic}")

    d = component.dim
    diff = x - component.mean
    cov = component.covariance
    if cov.kind == "diag":
        log_det = float(np.sum(np.log(cov.values)))
        quad = float(np.sum(diff * diff / cov.values))
    else:
        chol = cholesky(cov.values, lower=True)
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        y = solve_triangular(chol, diff, lower=True)
        quad = float(y @ y)
    return -0.5 * d * LOG_2PI + 0.5 * d * np.log(weight) - 0.5 * log_det - 0.5 * weight * quad


def log_density_matrix(points, weights, means, covariances, kind) -> np.ndarray:
    """Weighted Gaussian log-densities for every (sample, component) pair.

    Parameters
    ----------
    points : (N, d) array
    weights : (N,) array of positive sample weights
    means : (K, d) array
    covariances : (K, d) array for kind "diag", (K, d, d) for kind "full"
    kind : "diag" or "full"

    Returns
    -------
    (N, K) array where entry (i, k) is log N(x_i; mu_k, Sigma_k / w_i).
    """
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    n, d = points.shape
    k = means.shape[0]

    if kind == "diag":
        variances = np.asarray(covariances, dtype=float)  # (K, d)
        log_det = np.sum(np.log(variances), axis=1)  # (K,)
        diff = points[:, None, :] - means[None, :, :]  # (N, K, d)
        with np.errstate(over="ignore"):  # inf quad -> -inf density, caught upstream
            quad = np.sum(diff * diff / variances[None, :, :], axis=2)  # (N, K)
    elif kind == "full":
        covs = np.asarray(covariances, dtype=float)  # (K, d, d)
        log_det = np.empty(k)
        quad = np.empty((n, k))
        for j in range(k):
            chol = cholesky(covs[j], lower=True)
            log_det[j] = 2.0 * np.sum(np.log(np.diag(chol)))
            y = solve_triangular(chol, (points - means[j]).T, lower=True)
            quad[:, j] = np.sum(y * y, axis=0)
    else:
        raise ValueError(f"unknown covariance kind {kind!r}")

    base = -0.5 * d * LOG_2PI + 0.5 * d * np.log(weights)  # (N,)
    return base[:, None] - 0.5 * log_det[None, :] - 0.5 * weights[:, None] * quad
