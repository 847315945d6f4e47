"""EM for penalized weighted Gaussian mixtures with component elimination.

The fit starts from an over-provisioned number of components and, each
iteration, shrinks insignificant mixing coefficients to exactly zero; the
surviving count is the estimated number of clusters. Sample weights enter the
model by scaling each component covariance as Sigma/w_i.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .gaussian import (
    COVARIANCE_KINDS,
    Covariance,
    GaussianComponent,
    log_density_matrix,
)


class ConfigError(ValueError):
    """A configuration violates a hard precondition (e.g. the penalty bound)."""


class TotalCollapseError(RuntimeError):
    """Every component was eliminated in one mixing update."""


class OrphanSampleError(RuntimeError):
    """A sample got zero density under every active component."""


def component_free_params(dim: int, covariance_kind: str) -> int:
    """Free parameters of one mixture component (mean, covariance, mixing weight)."""
    if covariance_kind == "full":
        return dim * (dim + 1) // 2 + dim + 1
    if covariance_kind == "diag":
        return 2 * dim + 1
    raise ValueError(f"unknown covariance kind {covariance_kind!r}")


@dataclass(frozen=True)
class WeightedDataset:
    """Observations with positive per-sample weights."""

    points: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2:
            raise ValueError("points must be an (N, d) array")
        if points.shape[0] < 1:
            raise ValueError("dataset must contain at least one point")
        weights = np.asarray(self.weights, dtype=float)
        if weights.shape != (points.shape[0],):
            raise ValueError("weights must be a length-N vector")
        if not np.all(weights > 0):
            raise ValueError("all weights must be positive")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_points(cls, points, weights=None) -> "WeightedDataset":
        points = np.asarray(points, dtype=float)
        if weights is None:
            weights = np.ones(points.shape[0])
        return cls(points, weights)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass
class MixtureModel:
    """A Gaussian mixture; only surviving (pi > 0) components are stored."""

    means: np.ndarray  # (K, d)
    covariances: np.ndarray  # (K, d) for diag, (K, d, d) for full
    mixing: np.ndarray  # (K,)
    covariance_kind: str = "diag"

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.covariances = np.asarray(self.covariances, dtype=float)
        self.mixing = np.asarray(self.mixing, dtype=float)
        if self.covariance_kind not in COVARIANCE_KINDS:
            raise ValueError(f"unknown covariance kind {self.covariance_kind!r}")
        k = self.means.shape[0]
        if k == 0:
            raise ValueError("model must have at least one component")
        if self.mixing.shape != (k,):
            raise ValueError("mixing must have one entry per component")
        if np.any(self.mixing <= 0):
            raise ValueError("stored components must have positive mixing coefficients")
        if abs(self.mixing.sum() - 1.0) > 1e-8:
            raise ValueError("mixing coefficients must sum to 1")

    @property
    def active_k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def components(self) -> list[GaussianComponent]:
        return [
            GaussianComponent(self.means[k], Covariance(self.covariance_kind, self.covariances[k]))
            for k in range(self.active_k)
        ]

    def to_json(self) -> str:
        doc = {
            "dim": self.dim,
            "covariance_kind": self.covariance_kind,
            "components": [
                {
                    "pi": float(self.mixing[k]),
                    "mean": [float(v) for v in self.means[k]],
                    "cov": [float(v) for v in np.ravel(self.covariances[k])],
                }
                for k in range(self.active_k)
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MixtureModel":
        doc = json.loads(text)
        d = int(doc["dim"])
        kind = doc["covariance_kind"]
        comps = doc["components"]
        means = np.array([c["mean"] for c in comps], dtype=float)
        mixing = np.array([c["pi"] for c in comps], dtype=float)
        if kind == "full":
            covs = np.array([np.reshape(c["cov"], (d, d)) for c in comps], dtype=float)
        else:
            covs = np.array([c["cov"] for c in comps], dtype=float)
        return cls(means, covs, mixing, kind)


@dataclass(frozen=True)
class PwgConfig:
    """Knobs of one penalized weighted mixture fit.

    lam is the penalty strength; it must satisfy 0 <= lam < 1/(k_max * D_f)
    where D_f = component_free_params(d, covariance_kind). epsilon is the
    penalty offset (any value much smaller than the expected mixing
    coefficients works). elimination_floor is the responsibility mass below
    which a component counts as degenerate and is dropped regardless of lam.
    """

    k_max: int
    lam: float = 0.0
    epsilon: float = 1e-6
    covariance_kind: str = "diag"
    max_iterations: int = 200
    tolerance: float = 1e-6
    elimination_floor: float = 1e-12
    covariance_floor: float = 1e-6
    covariance_denominator: str = "as-printed"  # or "weighted"
    rng_seed: int = 0
    lambda_bound_policy: str = "error"  # or "warn"

    def __post_init__(self):
        if self.k_max < 1:
            raise ConfigError("k_max must be at least 1")
        if self.lam < 0:
            raise ConfigError("lam must be non-negative")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if self.covariance_kind not in COVARIANCE_KINDS:
            raise ConfigError(f"unknown covariance kind {self.covariance_kind!r}")
        if self.covariance_denominator not in ("as-printed", "weighted"):
            raise ConfigError("covariance_denominator must be 'as-printed' or 'weighted'")
        if self.lambda_bound_policy not in ("error", "warn"):
            raise ConfigError("lambda_bound_policy must be 'error' or 'warn'")


@dataclass
class FitResult:
    model: MixtureModel
    iterations: int
    penalized_loglik_trace: np.ndarray
    converged: bool
    bic: float
    elimination_iterations: list[int] = field(default_factory=list)


def _check_lambda_bound(config: PwgConfig, dim: int):
    d_f = component_free_params(dim, config.covariance_kind)
    bound = 1.0 / (config.k_max * d_f)
    if config.lam >= bound:
        msg = (
            f"lam={config.lam} violates the feasibility bound "
            f"{bound:.6g} = 1/(k_max * D_f) for k_max={config.k_max}, D_f={d_f}"
        )
        if config.lambda_bound_policy == "error":
            raise ConfigError(msg)
        warnings.warn(msg + "; proceeding (elimination will be aggressive)")
    return d_f


def loglik(model: MixtureModel, data: WeightedDataset) -> float:
    """Unpenalized weighted mixture log-likelihood."""
    if model.dim != data.dim:
        raise ValueError("dimension mismatch between model and data")
    log_probs = log_density_matrix(
        data.points, data.weights, model.means, model.covariances, model.covariance_kind
    )
    weighted = log_probs + np.log(model.mixing)[None, :]
    row_max = np.max(weighted, axis=1)
    if not np.all(np.isfinite(row_max)):
        bad = int(np.flatnonzero(~np.isfinite(row_max))[0])
        raise OrphanSampleError(f"orphan sample {bad}: zero density under every component")
    return float(np.sum(row_max + np.log(np.sum(np.exp(weighted - row_max[:, None]), axis=1))))


def penalty_term(mixing: np.ndarray, n: int, lam: float, d_f: int, epsilon: float) -> float:
    """N * lam * D_f * sum_k [ln(eps + pi_k) - ln eps] over active components."""
    return float(n * lam * d_f * np.sum(np.log(epsilon + mixing) - np.log(epsilon)))


def penalized_loglik(model: MixtureModel, data: WeightedDataset, lam: float, epsilon: float) -> float:
    """Weighted mixture log-likelihood minus the mixing-coefficient penalty."""
    d_f = component_free_params(data.dim, model.covariance_kind)
    return loglik(model, data) - penalty_term(model.mixing, data.n, lam, d_f, epsilon)


def e_step(model: MixtureModel, data: WeightedDataset) -> np.ndarray:
    """Posterior responsibilities, one row per sample; rows sum to 1.

    Computed in log space with per-row max subtraction before normalizing.
    """
    if model.active_k < 1:
        raise ValueError("model has no active components")
    if model.dim != data.dim:
        raise ValueError("dimension mismatch between model and data")
    log_probs = log_density_matrix(
        data.points, data.weights, model.means, model.covariances, model.covariance_kind
    )
    weighted = log_probs + np.log(model.mixing)[None, :]
    row_max = np.max(weighted, axis=1)
    if not np.all(np.isfinite(row_max)):
        bad = int(np.flatnonzero(~np.isfinite(row_max))[0])
        raise OrphanSampleError(f"orphan sample {bad}: zero density under every component")
    resp = np.exp(weighted - row_max[:, None])
    resp /= np.sum(resp, axis=1, keepdims=True)
    return resp


def m_step_means(data: WeightedDataset, resp: np.ndarray) -> np.ndarray:
    """Weight- and responsibility-weighted means, one row per component.

    Columns whose weighted responsibility mass is ~0 yield an arbitrary finite
    mean; the caller is expected to flag such components as degenerate and
    eliminate them.
    """
    wr = data.weights[:, None] * resp  # (N, K)
    mass = wr.sum(axis=0)  # (K,)
    safe = np.maximum(mass, np.finfo(float).tiny)
    return (wr.T @ data.points) / safe[:, None]


def m_step_covariances(
    data: WeightedDataset,
    resp: np.ndarray,
    means: np.ndarray,
    covariance_kind: str,
    floor: float = 1e-6,
    denominator: str = "as-printed",
) -> np.ndarray:
    """Per-component covariances around the freshly updated means.

    The numerator carries the sample weights; the denominator is the plain
    responsibility sum ("as-printed"), which is the exact maximizer under the
    Sigma/w covariance-scaling model. denominator="weighted" switches to the
    sample-replication convention (sum of w_i * eta_ik) instead. A floor is
    added to diagonal entries to keep degenerate clusters invertible.
    """
    n, d = data.points.shape
    k = means.shape[0]
    wr = data.weights[:, None] * resp
    if denominator == "as-printed":
        denom = resp.sum(axis=0)
    elif denominator == "weighted":
        denom = wr.sum(axis=0)
    else:
        raise ValueError(f"unknown covariance denominator {denominator!r}")
    denom = np.maximum(denom, np.finfo(float).tiny)

    if covariance_kind == "diag":
        out = np.empty((k, d))
        for j in range(k):
            diff = data.points - means[j]
            out[j] = (wr[:, j] @ (diff * diff)) / denom[j]
        out += floor
        return out
    out = np.empty((k, d, d))
    for j in range(k):
        diff = data.points - means[j]
        out[j] = (diff * wr[:, j : j + 1]).T @ diff / denom[j]
        out[j] = 0.5 * (out[j] + out[j].T)
        out[j][np.diag_indices(d)] += floor
    return out


def m_step_mixing(resp: np.ndarray, lam: float, d_f: int) -> np.ndarray:
    """Clipped-and-renormalized mixing update; zero entries mean elimination.

    pi_k = max(0, (avg_k - lam*D_f) / (1 - K*lam*D_f)) with avg_k the mean
    responsibility of component k and K the active count entering this step;
    survivors are renormalized to sum exactly to 1.
    """
    n, k = resp.shape
    avg = resp.sum(axis=0) / n
    denom = 1.0 - k * lam * d_f
    if denom == 0.0:
        denom = np.finfo(float).tiny  # lam exactly at the feasibility boundary
    raw = np.maximum(0.0, (avg - lam * d_f) / denom)
    total = raw.sum()
    if total <= 0.0:
        raise TotalCollapseError("total collapse: every component was eliminated")
    return raw / total


def _distinct_rows(points: np.ndarray) -> np.ndarray:
    """Rows that differ by more than fp noise (1e-9 of the coordinate span).

    Starting several components on numerically identical values creates
    symmetric duplicates that can never be told apart, so initialization
    samples from genuinely distinct values only.
    """
    span = float(np.max(np.ptp(points, axis=0)))
    if not np.isfinite(span) or span <= 0.0:
        return np.unique(points, axis=0)
    quantized = np.round(points / (span * 1e-9))
    _, idx = np.unique(quantized, axis=0, return_index=True)
    return points[np.sort(idx)]


def _initial_model(data: WeightedDataset, config: PwgConfig, rng: np.random.Generator) -> MixtureModel:
    """Means from distinct data values, shared global covariance, uniform mixing."""
    unique_points = _distinct_rows(data.points)
    k0 = min(config.k_max, unique_points.shape[0])
    idx = rng.choice(unique_points.shape[0], size=k0, replace=False)
    means = unique_points[np.sort(idx)]

    centered = data.points - data.points.mean(axis=0)
    if config.covariance_kind == "diag":
        var = centered.var(axis=0) + config.covariance_floor
        covs = np.tile(var, (k0, 1))
    else:
        cov = centered.T @ centered / data.n
        cov[np.diag_indices(data.dim)] += config.covariance_floor
        covs = np.tile(cov, (k0, 1, 1))
    mixing = np.full(k0, 1.0 / k0)
    return MixtureModel(means, covs, mixing, config.covariance_kind)


def bic_score(model: MixtureModel, data: WeightedDataset) -> float:
    """-2 * loglik + p * ln N with p = K * D_f - 1 free parameters."""
    d_f = component_free_params(data.dim, model.covariance_kind)
    p = model.active_k * d_f - 1
    return -2.0 * loglik(model, data) + p * np.log(data.n)


def fit(
    data: WeightedDataset,
    config: PwgConfig,
    init_model: MixtureModel | None = None,
    iteration_hook=None,
) -> FitResult:
    """Run penalized weighted EM until the penalized log-likelihood stabilizes.

    Each iteration: E-step, then mean, covariance and mixing updates from the
    same responsibilities; components whose mixing coefficient clips to zero
    (or whose responsibility mass collapses) are removed immediately.
    Convergence is declared when the penalized log-likelihood changes by less
    than tolerance * max(1, |previous|) on an iteration without eliminations.
    A total collapse triggers one restart with a fresh initialization.

    iteration_hook, when given, is called as iteration_hook(model, iteration)
    after every completed iteration.
    """
    d_f = _check_lambda_bound(config, data.dim)
    if data.n < config.k_max:
        warnings.warn(f"dataset has {data.n} points but k_max={config.k_max}")
    if init_model is not None:
        if init_model.covariance_kind != config.covariance_kind:
            raise ConfigError("init_model covariance kind differs from the configuration")
        if init_model.dim != data.dim:
            raise ValueError("dimension mismatch between init_model and data")
    rng = np.random.default_rng(config.rng_seed)

    last_error = None
    for attempt in range(2):
        if init_model is not None and attempt == 0:
            model = init_model
        else:
            model = _initial_model(data, config, rng)
        try:
            return _fit_once(data, config, model, d_f, iteration_hook)
        except TotalCollapseError as err:
            last_error = err
    raise last_error


def _fit_once(data, config, model, d_f, iteration_hook) -> FitResult:
    trace = []
    eliminations = []
    previous = None
    converged = False
    iterations = 0

    for it in range(1, config.max_iterations + 1):
        resp = e_step(model, data)
        mass = (data.weights[:, None] * resp).sum(axis=0)

        means = m_step_means(data, resp)
        covs = m_step_covariances(
            data,
            resp,
            means,
            config.covariance_kind,
            floor=config.covariance_floor,
            denominator=config.covariance_denominator,
        )
        mixing = m_step_mixing(resp, config.lam, d_f)

        degenerate = mass < config.elimination_floor
        if degenerate.any():
            mixing = mixing.copy()
            mixing[degenerate] = 0.0
            total = mixing.sum()
            if total <= 0.0:
                raise TotalCollapseError("total collapse: every component was eliminated")
            mixing = mixing / total

        keep = mixing > 0.0
        eliminated = not keep.all()
        if eliminated:
            means, covs, mixing = means[keep], covs[keep], mixing[keep]
            eliminations.append(it)

        model = MixtureModel(means, covs, mixing, config.covariance_kind)
        value = penalized_loglik(model, data, config.lam, config.epsilon)
        trace.append(value)
        iterations = it
        if iteration_hook is not None:
            iteration_hook(model, it)

        if previous is not None and not eliminated:
            if abs(value - previous) <= config.tolerance * max(1.0, abs(previous)):
                converged = True
                break
        previous = value

    return FitResult(
        model=model,
        iterations=iterations,
        penalized_loglik_trace=np.asarray(trace),
        converged=converged,
        bic=bic_score(model, data),
        elimination_iterations=eliminations,
    )
