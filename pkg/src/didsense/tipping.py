"""Tipping-point analysis: sweep the long-run deviation mean.

For each grid value of the long-run mean, the deviation regime is pinned
to that value and composed into the same parallel-trends posterior; the
tipping point is where the chosen 95% interval bound of the accumulated
effect crosses zero. The parallel-trends draws and the deviation
innovations are shared across the whole grid (common random numbers), so
the sweep isolates the effect of the mean shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .calibration import EbEstimate, FixedValue, PriorRegime, RegimeKind
from .effects import (
    AttPosterior,
    att_parallel_trends,
    att_with_violation,
    fit_twfe,
    fold_change,
    volume_interpretation,
)
from .errors import RegimeError
from .panel import PanelDataset
from .sampler import SamplerConfig

DEFAULT_GRID_POINTS = 41


@dataclass(frozen=True)
class TippingResult:
    """Sweep output: interval bounds per grid point and the crossing."""

    eta_grid: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)
    lower95: np.ndarray = field(repr=False)
    upper95: np.ndarray = field(repr=False)
    means_se: np.ndarray = field(repr=False)
    eta_star: float | None = None
    fold_change_at_star: float | None = None
    ounces_at_star: float | None = None
    cans_at_star: float | None = None
    crossing_bound: str = "upper95"
    baseline_ounces: float = 1.0

    def __post_init__(self):
        if np.any(self.lower95 > self.means) or np.any(self.means > self.upper95):
            raise ValueError("interval bounds must bracket the means at every grid point")
        if self.eta_star is not None and not (
            self.eta_grid[0] <= self.eta_star <= self.eta_grid[-1]
        ):
            raise ValueError("eta_star must lie inside the grid range")


def default_grid(low: float, high: float, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Equally spaced sweep grid over a user-supplied range."""
    if not low < high:
        raise ValueError(f"need low < high, got ({low}, {high})")
    if points < 2:
        raise ValueError("need at least 2 grid points")
    return np.linspace(low, high, points)


def _sweepable(regime: PriorRegime, eb: EbEstimate | None) -> PriorRegime:
    """Resolve an EB template into fixed rho/sigma so the mean can be swept."""
    if regime.kind is not RegimeKind.EMPIRICAL_BAYES:
        return regime
    if eb is None:
        raise RegimeError(f"{regime.name}: sweeping an EB template needs an EbEstimate")
    mult = {"rho": 1.0, "sigma": 1.0, **dict(regime.scale_multipliers)}
    return PriorRegime(
        name=regime.name,
        kind=RegimeKind.FIXED,
        eta_spec=FixedValue(0.0),  # replaced per grid point
        rho_spec=FixedValue(eb.rho_hat * mult["rho"]),
        sigma_spec=FixedValue(eb.sigma_hat * mult["sigma"]),
    )


def _pin_eta(regime: PriorRegime, eta: float) -> PriorRegime:
    """Replace the regime's long-run mean with a point mass at eta."""
    return dc_replace(regime, name=f"{regime.name}@eta={eta:g}", eta_spec=FixedValue(eta))


def _crossing(eta_grid: np.ndarray, bound: np.ndarray) -> float | None:
    """Most-negative crossing of the bound through zero, linearly interpolated."""
    for i in range(eta_grid.size - 1):
        b0, b1 = bound[i], bound[i + 1]
        if b0 == 0.0:
            return float(eta_grid[i])
        if (b0 < 0.0 <= b1) or (b0 > 0.0 >= b1):
            return float(eta_grid[i] + (0.0 - b0) * (eta_grid[i + 1] - eta_grid[i]) / (b1 - b0))
    if bound[-1] == 0.0:
        return float(eta_grid[-1])
    return None


def sweep(
    panel: PanelDataset,
    regime_template: PriorRegime,
    eta_grid: np.ndarray,
    config: SamplerConfig,
    baseline_ounces: float,
    stratum: str | None = None,
    eb: EbEstimate | None = None,
    crossing_bound: str = "upper95",
    coefficient_prior_sd: float = 10.0,
    noise_prior_scale: float = 1.0,
    noise_sd_fixed: float | None = None,
    threads: int = 1,
    base: AttPosterior | None = None,
) -> TippingResult:
    """Sweep the long-run mean over the grid and locate the tipping point.

    ``crossing_bound`` is "upper95" (default, matching negative effects
    attenuating toward zero) or "lower95" for positive-effect uses. A
    precomputed parallel-trends posterior can be passed as ``base`` to
    share one fit across several sweeps.
    """
    eta_grid = np.asarray(eta_grid, dtype=float)
    if eta_grid.size < 2:
        raise ValueError("need a grid of at least 2 points")
    if np.any(np.diff(eta_grid) <= 0):
        raise ValueError("eta grid must be sorted strictly ascending")
    if crossing_bound not in ("upper95", "lower95"):
        raise ValueError("crossing_bound must be 'upper95' or 'lower95'")
    if baseline_ounces <= 0:
        raise ValueError("baseline_ounces must be positive")
    template = _sweepable(regime_template, eb)

    if base is None:
        fit = fit_twfe(
            panel,
            config,
            stratum=stratum,
            coefficient_prior_sd=coefficient_prior_sd,
            noise_prior_scale=noise_prior_scale,
            noise_sd_fixed=noise_sd_fixed,
            threads=threads,
        )
        base = att_parallel_trends(panel, fit.draws, stratum=stratum)

    means = np.empty(eta_grid.size)
    lower = np.empty(eta_grid.size)
    upper = np.empty(eta_grid.size)
    se = np.empty(eta_grid.size)
    for i, eta in enumerate(eta_grid):
        shifted = att_with_violation(base, _pin_eta(template, float(eta)), config=config)
        total = shifted.total_violation
        means[i] = total.mean()
        lower[i], upper[i] = np.percentile(total, [2.5, 97.5])
        se[i] = total.std(ddof=1) / np.sqrt(total.size)

    bound = upper if crossing_bound == "upper95" else lower
    eta_star = _crossing(eta_grid, bound)
    if eta_star is None:
        return TippingResult(
            eta_grid=eta_grid, means=means, lower95=lower, upper95=upper, means_se=se,
            crossing_bound=crossing_bound, baseline_ounces=baseline_ounces,
        )
    ounces, cans = volume_interpretation(eta_star, baseline_ounces)
    return TippingResult(
        eta_grid=eta_grid,
        means=means,
        lower95=lower,
        upper95=upper,
        means_se=se,
        eta_star=eta_star,
        fold_change_at_star=fold_change(eta_star),
        ounces_at_star=ounces,
        cans_at_star=cans,
        crossing_bound=crossing_bound,
        baseline_ounces=baseline_ounces,
    )


def monotonicity_check(result: TippingResult, se_tolerance: float = 2.0) -> bool:
    """Sanity gate for near-deterministic sweeps.

    True when the mean effect moves in the direction the cumulative
    deviation implies: non-increasing as the long-run mean increases
    along the grid, within ``se_tolerance`` combined Monte Carlo
    standard errors per adjacent pair. Vacuously true on a single-point
    grid.
    """
    for i in range(result.eta_grid.size - 1):
        slack = se_tolerance * float(
            np.hypot(result.means_se[i], result.means_se[i + 1])
        )
        if result.means[i + 1] > result.means[i] + slack:
            return False
    return True
