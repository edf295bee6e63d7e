"""Counterfactual trends and the treatment-effect posterior.

Under parallel trends, the per-period effect is the four-mean contrast of
model-implied group-period means anchored at the last pre-treatment
period; with the pooled regression this reduces to the treated-post
coefficient, and it is exactly zero at the anchor period. Deviations are
composed in afterwards: the deviation path is unidentified by
post-treatment data (it is collinear with the effect), so its law stays
the prior, and each posterior draw is paired with one simulated path.
Draw-wise, effect-under-violation = effect-under-parallel-trends minus
the path's cumulative sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .ar1 import simulate_paths
from .calibration import EbEstimate, PriorRegime, draw_hyperparameters, realize_regime
from .design import NOISE_PARAM, LinearModelSpec, TwfeDesign, build_design, twfe_model
from .errors import MismatchError
from .panel import PanelDataset, group_means
from .sampler import PosteriorDraws, SamplerConfig, sample

# Substream tag for the deviation-path innovations (hyperparameter tags
# live in calibration).
XI_NOISE_STREAM = 14

OUNCES_PER_CAN = 12.0


@dataclass(frozen=True)
class TwfeFit:
    """A design and the posterior draws sampled from it."""

    design: TwfeDesign
    draws: PosteriorDraws


def fit_twfe(
    data: PanelDataset,
    config: SamplerConfig,
    stratum: str | None = None,
    coefficient_prior_sd: float = 10.0,
    noise_prior_scale: float = 1.0,
    noise_sd_fixed: float | None = None,
    threads: int = 1,
) -> TwfeFit:
    """Build the fixed-effects design and sample its posterior."""
    design = build_design(data, stratum=stratum)
    spec = LinearModelSpec(
        design=design,
        coefficient_prior_sd=coefficient_prior_sd,
        noise_prior_scale=noise_prior_scale,
    )
    logp_and_grad, transforms, names = twfe_model(spec, noise_sd_fixed=noise_sd_fixed)
    draws = sample(logp_and_grad, transforms, config, parameter_names=names, threads=threads)
    return TwfeFit(design=design, draws=draws)


@dataclass(frozen=True)
class TrendSet:
    """Observed, counterfactual, and deviation-modified outcome trends.

    Observed series are data group means over all periods; the
    counterfactual and modified series are per-draw arrays over the post
    periods. ``modified - counterfactual`` equals the cumulative
    deviation path for every draw by construction.
    """

    periods: np.ndarray = field(repr=False)
    observed_treated: np.ndarray = field(repr=False)
    observed_control: np.ndarray = field(repr=False)
    post_periods: np.ndarray = field(repr=False)
    counterfactual_pt: np.ndarray = field(repr=False)  # (draws, post)
    modified: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class AttPosterior:
    """Per-period and accumulated treatment-effect draws.

    ``total_*`` is the final-period accumulated effect. Violation
    fields are None until a deviation regime is composed in; then
    ``per_period_violation = per_period_pt - xi_cumulative`` holds
    draw-wise and exactly.
    """

    onset_period: int
    num_periods: int
    post_periods: np.ndarray = field(repr=False)
    pooled: np.ndarray = field(repr=False)  # treated-post coefficient draws
    per_period_pt: np.ndarray = field(repr=False)  # (draws, post)
    total_pt: np.ndarray = field(repr=False)
    per_period_violation: np.ndarray | None = field(default=None, repr=False)
    total_violation: np.ndarray | None = field(default=None, repr=False)
    xi_cumulative: np.ndarray | None = field(default=None, repr=False)
    hyper_draws: dict[str, np.ndarray] | None = field(default=None, repr=False)
    regime_name: str | None = None
    nonstationary_fraction: float = 0.0

    @property
    def num_draws(self) -> int:
        return self.total_pt.size

    def summary(self) -> dict:
        out = {
            "total_pt": _summarize(self.total_pt),
            "per_period_pt": [
                {"period": int(t), **_summarize(self.per_period_pt[:, k])}
                for k, t in enumerate(self.post_periods)
            ],
        }
        if self.total_violation is not None:
            out["total_violation"] = _summarize(self.total_violation)
            out["per_period_violation"] = [
                {"period": int(t), **_summarize(self.per_period_violation[:, k])}
                for k, t in enumerate(self.post_periods)
            ]
        return out


def _summarize(draws: np.ndarray) -> dict[str, float]:
    lo, hi = np.percentile(draws, [2.5, 97.5])
    return {
        "mean": float(draws.mean()),
        "lower95": float(lo),
        "upper95": float(hi),
    }


def _coefficient_draws(
    data: PanelDataset, draws: PosteriorDraws, stratum: str | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, TwfeDesign]:
    """Flat (intercept, theta, gamma, beta) draws checked against the panel."""
    design = build_design(data, stratum=stratum)
    expected = set(design.column_labels)
    got = set(draws.parameter_names) - {NOISE_PARAM}
    if expected != got:
        raise MismatchError(
            f"draws do not match this panel's design: missing {sorted(expected - got)}, "
            f"unexpected {sorted(got - expected)}"
        )
    T = design.num_periods
    intercept = draws.flat("intercept")
    n = intercept.size
    theta = np.zeros((n, T))
    for t in range(2, T + 1):
        theta[:, t - 1] = draws.flat(f"period_{t}")
    gamma = draws.flat("group")
    beta = draws.flat("treated_post")
    return intercept, theta, gamma, beta, design


def att_parallel_trends(
    data: PanelDataset, twfe_draws: PosteriorDraws, stratum: str | None = None
) -> AttPosterior:
    """Treatment-effect posterior under parallel trends.

    Per-period draws apply the anchored four-mean contrast to the
    model-implied group-period means; the contrast at the anchor period
    (one before onset) is identically zero, and at post periods it
    collapses to the treated-post coefficient. Pooled draws are that
    coefficient directly.
    """
    intercept, theta, gamma, beta, design = _coefficient_draws(data, twfe_draws, stratum)
    g, T = design.onset_period, design.num_periods
    post = np.arange(g, T + 1)
    per_period = np.empty((beta.size, post.size))
    for k, t in enumerate(post):
        per_period[:, k] = _psi_plug_in(intercept, theta, gamma, beta, t, g)
    return AttPosterior(
        onset_period=g,
        num_periods=T,
        post_periods=post,
        pooled=beta,
        per_period_pt=per_period,
        total_pt=per_period[:, -1],
    )


def _psi_plug_in(intercept, theta, gamma, beta, t: int, g: int) -> np.ndarray:
    """Four-mean contrast at period t anchored at period g-1, per draw."""
    def mean(group: int, period: int) -> np.ndarray:
        m = intercept + theta[:, period - 1] + gamma * group
        if group == 1 and period >= g:
            m = m + beta
        return m

    return (mean(1, t) - mean(1, g - 1)) - (mean(0, t) - mean(0, g - 1))


def psi_parallel_trends_at(
    data: PanelDataset, twfe_draws: PosteriorDraws, period: int, stratum: str | None = None
) -> np.ndarray:
    """Per-draw anchored contrast at any period from onset-1 to T."""
    intercept, theta, gamma, beta, design = _coefficient_draws(data, twfe_draws, stratum)
    g = design.onset_period
    if not g - 1 <= period <= design.num_periods:
        raise MismatchError(f"period {period} outside [{g - 1}, {design.num_periods}]")
    return _psi_plug_in(intercept, theta, gamma, beta, period, g)


def att_with_violation(
    base: AttPosterior,
    regime: PriorRegime,
    eb: EbEstimate | None = None,
    config: SamplerConfig | None = None,
    noise: np.ndarray | None = None,
) -> AttPosterior:
    """Compose a deviation regime into a parallel-trends posterior.

    For each posterior draw, one (eta, rho, sigma) triple is realized
    from the regime (point values for fixed and EB regimes, one prior
    draw for fully Bayesian ones), one deviation path is simulated from
    anchor zero over the post periods, and the cumulative path is
    subtracted from the per-period draws. The deviation law is never
    updated by post-treatment data.

    Hyperparameter and innovation streams derive from the config seed,
    so repeated calls with the same seed (e.g. across a grid of
    long-run means) reuse identical randomness.
    """
    if config is None:
        config = SamplerConfig()
    n = base.num_draws
    horizon = base.post_periods.size
    if noise is not None:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != (n, horizon):
            raise MismatchError(
                f"deviation noise shape {noise.shape} does not match "
                f"(draws, post periods) = ({n}, {horizon})"
            )
    realized = realize_regime(regime, eb=eb)
    hyper = draw_hyperparameters(realized, n, config.seed)
    if noise is None:
        rng = np.random.default_rng([config.seed, XI_NOISE_STREAM])
        noise = rng.standard_normal((n, horizon))
    _, cumulative, _ = simulate_paths(
        hyper["eta"], hyper["rho"], hyper["sigma"], horizon, noise=noise, anchor=0.0
    )
    per_period_violation = base.per_period_pt - cumulative
    return replace(
        base,
        per_period_violation=per_period_violation,
        total_violation=per_period_violation[:, -1],
        xi_cumulative=cumulative,
        hyper_draws=hyper,
        regime_name=regime.name,
        nonstationary_fraction=float(np.mean(np.abs(hyper["rho"]) >= 1.0)),
    )


def build_trend_set(
    data: PanelDataset,
    twfe_draws: PosteriorDraws,
    stratum: str | None = None,
    xi_cumulative: np.ndarray | None = None,
) -> TrendSet:
    """Observed group means plus per-draw counterfactual (and modified) trends."""
    intercept, theta, gamma, _, design = _coefficient_draws(data, twfe_draws, stratum)
    g, T = design.onset_period, design.num_periods
    control, treated = group_means(data, stratum=stratum)
    post = np.arange(g, T + 1)
    counterfactual = intercept[:, None] + theta[:, g - 1 :] + gamma[:, None]
    modified = None
    if xi_cumulative is not None:
        xi_cumulative = np.asarray(xi_cumulative, dtype=float)
        if xi_cumulative.shape != counterfactual.shape:
            raise MismatchError(
                f"cumulative deviation shape {xi_cumulative.shape} does not match "
                f"counterfactual shape {counterfactual.shape}"
            )
        modified = counterfactual + xi_cumulative
    return TrendSet(
        periods=np.arange(1, T + 1),
        observed_treated=treated.values,
        observed_control=control.values,
        post_periods=post,
        counterfactual_pt=counterfactual,
        modified=modified,
    )


def fold_change(eta: float) -> float:
    """Multiplicative change in untreated outcome volume implied by eta.

    Deviations act additively on the log scale, so exponentiating the
    absolute shift gives the fold change relative to parallel trends.
    """
    return math.exp(abs(eta))


def volume_interpretation(eta: float, baseline_ounces: float) -> tuple[float, float]:
    """(extra ounces, extra 12-oz cans) implied at the tipping shift eta."""
    if baseline_ounces <= 0:
        raise ValueError("baseline_ounces must be positive")
    extra_ounces = baseline_ounces * (fold_change(eta) - 1.0)
    return extra_ounces, extra_ounces / OUNCES_PER_CAN
