"""Two-way fixed-effects regression design and its Bayesian linear model.

The design regresses the outcome on an intercept, period indicators for
periods 2..T (period 1 is the reference), a treated-group indicator, and
a treated-post indicator that switches on for the treated group from the
onset period. The coefficient on the treated-post column is the pooled
treatment effect on the treated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import IdentifiabilityError
from .panel import PanelDataset
from .sampler import Identity, Positive

NOISE_PARAM = "noise_sd"


@dataclass(frozen=True)
class TwfeDesign:
    """Design matrix, response, and column bookkeeping for one panel."""

    matrix: np.ndarray = field(repr=False)
    response: np.ndarray = field(repr=False)
    column_labels: tuple[str, ...] = ()
    att_column: int = -1
    onset_period: int = 2
    num_periods: int = 2

    @property
    def num_columns(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class TwfeCoefficients:
    """Structured view of one coefficient vector.

    ``theta`` has one entry per period with the first pinned to zero
    (the period-1 effect is absorbed into the intercept).
    """

    intercept: float
    theta: np.ndarray = field(repr=False)
    gamma: float = 0.0
    beta: float = 0.0
    noise_sd: float | None = None

    @classmethod
    def from_vector(cls, labels: tuple[str, ...], vector: np.ndarray) -> "TwfeCoefficients":
        by_name = dict(zip(labels, vector))
        periods = [name for name in labels if name.startswith("period_")]
        theta = np.zeros(len(periods) + 1)
        for name in periods:
            theta[int(name.split("_")[1]) - 1] = by_name[name]
        return cls(
            intercept=float(by_name["intercept"]),
            theta=theta,
            gamma=float(by_name["group"]),
            beta=float(by_name["treated_post"]),
            noise_sd=float(by_name[NOISE_PARAM]) if NOISE_PARAM in by_name else None,
        )


@dataclass(frozen=True)
class LinearModelSpec:
    """Priors for the Gaussian linear model on the (log) outcome scale.

    Coefficients get independent zero-mean normal priors with a common
    sd (weakly informative at the default of 10 on a log scale); the
    observation noise sd gets a half-normal prior.
    """

    design: TwfeDesign
    coefficient_prior_sd: float = 10.0
    noise_prior_scale: float = 1.0

    def __post_init__(self):
        if self.coefficient_prior_sd <= 0 or self.noise_prior_scale <= 0:
            raise ValueError("prior scales must be positive")


def build_design(data: PanelDataset, stratum: str | None = None) -> TwfeDesign:
    """Assemble the regression design in observation row order."""
    rows = [
        obs
        for obs in data.observations
        if stratum is None or obs.stratum == stratum
    ]
    if not rows:
        raise IdentifiabilityError(f"no observations in stratum {stratum!r}")
    T, g = data.num_periods, data.onset_period
    labels = (
        ["intercept"]
        + [f"period_{t}" for t in range(2, T + 1)]
        + ["group", "treated_post"]
    )
    n, p = len(rows), len(labels)
    matrix = np.zeros((n, p))
    response = np.empty(n)
    for i, obs in enumerate(rows):
        matrix[i, 0] = 1.0
        if obs.period >= 2:
            matrix[i, obs.period - 1] = 1.0
        matrix[i, p - 2] = obs.group
        matrix[i, p - 1] = float(obs.group == 1 and obs.period >= g)
        response[i] = obs.outcome

    rank = np.linalg.matrix_rank(matrix)
    if rank < p:
        dependent = _dependent_columns(matrix, labels)
        raise IdentifiabilityError(
            f"design is rank deficient (rank {rank} < {p} columns); "
            f"dependent columns: {dependent}"
        )
    return TwfeDesign(
        matrix=matrix,
        response=response,
        column_labels=tuple(labels),
        att_column=p - 1,
        onset_period=g,
        num_periods=T,
    )


def _dependent_columns(matrix: np.ndarray, labels: list[str]) -> list[str]:
    """Columns that add nothing to the span of the columns before them."""
    dependent = []
    kept: list[int] = []
    for j in range(matrix.shape[1]):
        candidate = matrix[:, kept + [j]]
        if np.linalg.matrix_rank(candidate) == len(kept):
            dependent.append(labels[j])
        else:
            kept.append(j)
    return dependent


def analytic_posterior_oracle(
    spec: LinearModelSpec, noise_sd_fixed: float
) -> tuple[np.ndarray, np.ndarray]:
    """Exact conjugate posterior of the coefficients with the noise sd held fixed.

    With design X, response y, prior sd s and noise sd v:
    covariance = (X'X / v^2 + I / s^2)^(-1), mean = covariance @ X'y / v^2.
    This is the independent reference the sampler is validated against.
    """
    if noise_sd_fixed <= 0:
        raise ValueError("noise_sd_fixed must be positive")
    X, y = spec.design.matrix, spec.design.response
    if X.shape[0] == 0:
        raise IdentifiabilityError("empty design: no rows")
    precision = X.T @ X / noise_sd_fixed**2 + np.eye(X.shape[1]) / spec.coefficient_prior_sd**2
    try:
        np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as exc:
        raise IdentifiabilityError("singular posterior precision") from exc
    covariance = np.linalg.inv(precision)
    mean = covariance @ (X.T @ y) / noise_sd_fixed**2
    return mean, covariance


def twfe_model(
    spec: LinearModelSpec, noise_sd_fixed: float | None = None
) -> tuple[Callable, list, tuple[str, ...]]:
    """Log-posterior, transforms, and parameter names for the sampler.

    When ``noise_sd_fixed`` is None the noise sd is sampled (half-normal
    prior, exponential constraint map) as the last parameter; otherwise
    the parameter vector is the coefficients alone.
    """
    X = spec.design.matrix
    y = spec.design.response
    n, p = X.shape
    prior_var = spec.coefficient_prior_sd**2
    hn_scale2 = spec.noise_prior_scale**2
    log2pi = math.log(2.0 * math.pi)
    # Half-normal log-normalizer: log 2 - log(k) - 0.5*log(2*pi) + ... constants
    # kept so reported log-densities are comparable across runs.
    hn_const = 0.5 * math.log(2.0 / math.pi) - math.log(spec.noise_prior_scale)

    if noise_sd_fixed is not None:
        if noise_sd_fixed <= 0:
            raise ValueError("noise_sd_fixed must be positive")
        inv_var = 1.0 / noise_sd_fixed**2
        log_noise = math.log(noise_sd_fixed)

        def logp_and_grad(params: np.ndarray) -> tuple[float, np.ndarray]:
            w = params
            resid = y - X @ w
            logp = (
                -0.5 * n * log2pi
                - n * log_noise
                - 0.5 * inv_var * float(resid @ resid)
                - 0.5 * float(w @ w) / prior_var
                - 0.5 * p * math.log(2.0 * math.pi * prior_var)
            )
            grad = X.T @ resid * inv_var - w / prior_var
            return logp, grad

        return logp_and_grad, [Identity() for _ in range(p)], spec.design.column_labels

    def logp_and_grad(params: np.ndarray) -> tuple[float, np.ndarray]:
        w = params[:p]
        noise = params[p]
        resid = y - X @ w
        rss = float(resid @ resid)
        inv_var = 1.0 / noise**2
        logp = (
            -0.5 * n * log2pi
            - n * math.log(noise)
            - 0.5 * inv_var * rss
            - 0.5 * float(w @ w) / prior_var
            - 0.5 * p * math.log(2.0 * math.pi * prior_var)
            + hn_const
            - 0.5 * noise**2 / hn_scale2
        )
        grad = np.empty(p + 1)
        grad[:p] = X.T @ resid * inv_var - w / prior_var
        grad[p] = -n / noise + rss / noise**3 - noise / hn_scale2
        return logp, grad

    transforms = [Identity() for _ in range(p)] + [Positive()]
    names = spec.design.column_labels + (NOISE_PARAM,)
    return logp_and_grad, transforms, names
