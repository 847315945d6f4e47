"""Penalty-strength feasibility bound and BIC-driven grid selection."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .em import ConfigError, FitResult, PwgConfig, WeightedDataset, component_free_params, fit


def lambda_bound(k_max: int, dim: int, covariance_kind: str) -> float:
    """Exclusive upper bound 1/(k_max * D_f) on the penalty strength."""
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if dim < 1:
        raise ValueError("dim must be at least 1")
    return 1.0 / (k_max * component_free_params(dim, covariance_kind))


@dataclass(frozen=True)
class LambdaChoice:
    lam: float
    result: FitResult
    evaluated: tuple[tuple[float, float], ...]  # (lam, bic) per candidate


def select_lambda(
    data: WeightedDataset,
    config: PwgConfig,
    grid,
    enforce_bound: bool = True,
) -> LambdaChoice:
    """Fit once per candidate penalty strength and keep the BIC minimizer.

    All candidates share the configuration (including the RNG seed) so BIC
    differences reflect the penalty alone. Ties within 1e-12 go to the larger
    candidate, preferring fewer components.
    """
    grid = [float(g) for g in grid]
    if not grid:
        raise ConfigError("empty lambda grid")
    bound = lambda_bound(config.k_max, data.dim, config.covariance_kind)
    if enforce_bound:
        for lam in grid:
            if not 0.0 <= lam < bound:
                raise ConfigError(
                    f"grid value {lam} outside the feasible range [0, {bound:.6g})"
                )

    results = []
    for lam in grid:
        candidate = replace(config, lam=lam)
        results.append((lam, fit(data, candidate)))

    best_bic = min(r.bic for _, r in results)
    winner_lam, winner = max(
        ((lam, r) for lam, r in results if r.bic <= best_bic + 1e-12),
        key=lambda pair: pair[0],
    )
    return LambdaChoice(
        lam=winner_lam,
        result=winner,
        evaluated=tuple((lam, r.bic) for lam, r in results),
    )
