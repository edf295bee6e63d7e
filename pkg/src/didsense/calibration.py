"""Prior regimes for the deviation process and their empirical-Bayes calibration.

Three regime families are built in. Fixed regimes pin the AR coefficient
at 0.95 and sweep the innovation sd over {0.001, 1, 5}. Fully Bayesian
regimes put Beta(2,2) on the AR coefficient and half-normal priors with
scale {1, 2, 5} on the innovation sd. EB regimes plug in point estimates
fitted from the pre-treatment deviation series by ordinary least squares,
with optional per-parameter multipliers for robustness variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np

from .errors import CollinearityError, InsufficientDataError, RegimeError

# Substream tags: hyperparameter draws must be reproducible per field so
# that regimes sharing a seed share their draws (coupled comparisons).
ETA_STREAM = 11
RHO_STREAM = 12
SIGMA_STREAM = 13

# |1 - rho| below this leaves the long-run mean c / (1 - rho) undefined.
ETA_SINGULARITY_TOL = 1e-6


class RegimeKind(str, Enum):
    FIXED = "fixed"
    FULLY_BAYESIAN = "fully_bayesian"
    EMPIRICAL_BAYES = "empirical_bayes"


@dataclass(frozen=True)
class FixedValue:
    value: float


@dataclass(frozen=True)
class UniformPrior:
    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise RegimeError(f"uniform bounds need low < high, got ({self.low}, {self.high})")


@dataclass(frozen=True)
class BetaPrior:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise RegimeError("Beta shapes must be positive")


@dataclass(frozen=True)
class HalfNormalPrior:
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise RegimeError("half-normal scale must be positive")


HyperSpec = FixedValue | UniformPrior | BetaPrior | HalfNormalPrior


@dataclass(frozen=True)
class PriorRegime:
    """Hyperparameter strategy for (eta, rho, sigma).

    EB regimes leave the specs as None; they are filled from an
    EbEstimate at realization time, after applying ``scale_multipliers``
    (positive factors keyed by "eta", "rho", "sigma") to the point
    estimates.
    """

    name: str
    kind: RegimeKind
    eta_spec: FixedValue | UniformPrior | None = None
    rho_spec: FixedValue | BetaPrior | None = None
    sigma_spec: FixedValue | HalfNormalPrior | None = None
    scale_multipliers: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for key, mult in self.scale_multipliers.items():
            if key not in ("eta", "rho", "sigma"):
                raise RegimeError(f"unknown multiplier target {key!r}")
            if mult <= 0:
                raise RegimeError(f"multiplier for {key} must be positive, got {mult}")
        if self.kind is not RegimeKind.EMPIRICAL_BAYES:
            for label, spec in (
                ("eta_spec", self.eta_spec),
                ("rho_spec", self.rho_spec),
                ("sigma_spec", self.sigma_spec),
            ):
                if spec is None:
                    raise RegimeError(f"{self.name}: {label} required for {self.kind.value}")


@dataclass(frozen=True)
class EbEstimate:
    """Least-squares fit of the deviation recursion to a pre-treatment series.

    ``eta_hat`` is None when |1 - rho_hat| falls inside the singularity
    tolerance. A nonstationary rho_hat is reported as-is with
    ``stationary`` False; treat that as a diagnostic, not a prior.
    """

    c: float
    rho_hat: float
    eta_hat: float | None
    sigma_hat: float
    n_used: int
    stationary: bool


@dataclass(frozen=True)
class RealizedRegime:
    """Concrete hyperparameter specification ready for drawing."""

    name: str
    eta: HyperSpec
    rho: HyperSpec
    sigma: HyperSpec


def builtin_regimes() -> dict[str, PriorRegime]:
    """The nine standard regimes plus the sigma-scaled EB variants.

    EB-2 and EB-3 scale the AR coefficient by 2 and 3; EB-2s and EB-3s
    scale the innovation sd by 2 and 5 instead, for users who prefer to
    stress the noise scale rather than the persistence.
    """
    eta_u = UniformPrior(0.1, 0.9)
    regimes: dict[str, PriorRegime] = {}
    for i, sigma in enumerate((0.001, 1.0, 5.0), start=1):
        regimes[f"Fixed-{i}"] = PriorRegime(
            name=f"Fixed-{i}",
            kind=RegimeKind.FIXED,
            eta_spec=eta_u,
            rho_spec=FixedValue(0.95),
            sigma_spec=FixedValue(sigma),
        )
    for i, scale in enumerate((1.0, 2.0, 5.0), start=1):
        regimes[f"Fully-{i}"] = PriorRegime(
            name=f"Fully-{i}",
            kind=RegimeKind.FULLY_BAYESIAN,
            eta_spec=eta_u,
            rho_spec=BetaPrior(2.0, 2.0),
            sigma_spec=HalfNormalPrior(scale),
        )
    regimes["EB-1"] = PriorRegime(name="EB-1", kind=RegimeKind.EMPIRICAL_BAYES)
    regimes["EB-2"] = PriorRegime(
        name="EB-2", kind=RegimeKind.EMPIRICAL_BAYES, scale_multipliers={"rho": 2.0}
    )
    regimes["EB-3"] = PriorRegime(
        name="EB-3", kind=RegimeKind.EMPIRICAL_BAYES, scale_multipliers={"rho": 3.0}
    )
    regimes["EB-2s"] = PriorRegime(
        name="EB-2s", kind=RegimeKind.EMPIRICAL_BAYES, scale_multipliers={"sigma": 2.0}
    )
    regimes["EB-3s"] = PriorRegime(
        name="EB-3s", kind=RegimeKind.EMPIRICAL_BAYES, scale_multipliers={"sigma": 5.0}
    )
    return regimes


def fit_eb(series: np.ndarray) -> EbEstimate:
    """OLS fit of each term on (1, previous term) over the deviation series.

    The intercept c and slope rho_hat come from the normal equations; the
    long-run mean is c / (1 - rho_hat); the innovation sd is the residual
    sum of squares divided by (n - 2), square-rooted, for a series of
    length n.
    """
    series = np.asarray(series, dtype=float)
    n = series.size
    if n < 3:
        raise InsufficientDataError(
            f"need a deviation series of length >= 3 to fit, got {n}"
        )
    lagged = series[:-1]
    current = series[1:]
    Z = np.column_stack([np.ones(n - 1), lagged])
    if np.linalg.matrix_rank(Z) < 2:
        raise CollinearityError(
            "lagged column is constant: intercept and lag are collinear"
        )
    coef, *_ = np.linalg.lstsq(Z, current, rcond=None)
    c, rho_hat = float(coef[0]), float(coef[1])
    resid = current - Z @ coef
    sigma_hat = math.sqrt(float(resid @ resid) / (n - 2))
    eta_hat = c / (1.0 - rho_hat) if abs(1.0 - rho_hat) > ETA_SINGULARITY_TOL else None
    return EbEstimate(
        c=c,
        rho_hat=rho_hat,
        eta_hat=eta_hat,
        sigma_hat=sigma_hat,
        n_used=n - 1,
        stationary=abs(rho_hat) < 1.0,
    )


def _scaled(spec: HyperSpec, mult: float, field_name: str) -> HyperSpec:
    if mult == 1.0:
        return spec
    if isinstance(spec, FixedValue):
        return FixedValue(spec.value * mult)
    raise RegimeError(
        f"scale multiplier for {field_name} applies to point estimates only, "
        f"got {type(spec).__name__}"
    )


def realize_regime(regime: PriorRegime, eb: EbEstimate | None = None) -> RealizedRegime:
    """Resolve a regime into concrete hyperparameter specs.

    Fixed values become point masses, distributions are carried through
    symbolically, and EB regimes substitute (and scale) the point
    estimates. EB regimes without an estimate are an error, as is an EB
    estimate whose long-run mean is undefined.
    """
    mult = {"eta": 1.0, "rho": 1.0, "sigma": 1.0, **dict(regime.scale_multipliers)}
    if regime.kind is RegimeKind.EMPIRICAL_BAYES:
        if eb is None:
            raise RegimeError(f"{regime.name}: EB regime needs an EbEstimate")
        if eb.eta_hat is None:
            raise RegimeError(
                f"{regime.name}: EB long-run mean undefined (rho_hat = {eb.rho_hat})"
            )
        return RealizedRegime(
            name=regime.name,
            eta=FixedValue(eb.eta_hat * mult["eta"]),
            rho=FixedValue(eb.rho_hat * mult["rho"]),
            sigma=FixedValue(eb.sigma_hat * mult["sigma"]),
        )
    return RealizedRegime(
        name=regime.name,
        eta=_scaled(regime.eta_spec, mult["eta"], "eta"),
        rho=_scaled(regime.rho_spec, mult["rho"], "rho"),
        sigma=_scaled(regime.sigma_spec, mult["sigma"], "sigma"),
    )


def _draw(spec: HyperSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, FixedValue):
        return np.full(n, spec.value)
    if isinstance(spec, UniformPrior):
        return rng.uniform(spec.low, spec.high, n)
    if isinstance(spec, BetaPrior):
        return rng.beta(spec.alpha, spec.beta, n)
    if isinstance(spec, HalfNormalPrior):
        return spec.scale * np.abs(rng.standard_normal(n))
    raise RegimeError(f"cannot draw from {spec!r}")


def draw_hyperparameters(
    realized: RealizedRegime, n: int, seed: int
) -> dict[str, np.ndarray]:
    """One (eta, rho, sigma) triple per posterior draw.

    Each field uses its own substream of the seed, so two regimes
    sharing a seed see identical draws wherever their specs agree and
    coupled draws where only a scale differs.
    """
    return {
        "eta": _draw(realized.eta, n, np.random.default_rng([seed, ETA_STREAM])),
        "rho": _draw(realized.rho, n, np.random.default_rng([seed, RHO_STREAM])),
        "sigma": _draw(realized.sigma, n, np.random.default_rng([seed, SIGMA_STREAM])),
    }


def _spec_to_dict(spec: HyperSpec | None) -> dict | None:
    if spec is None:
        return None
    if isinstance(spec, FixedValue):
        return {"fixed": spec.value}
    if isinstance(spec, UniformPrior):
        return {"uniform": [spec.low, spec.high]}
    if isinstance(spec, BetaPrior):
        return {"beta": [spec.alpha, spec.beta]}
    if isinstance(spec, HalfNormalPrior):
        return {"half_normal": spec.scale}
    raise RegimeError(f"cannot serialize {spec!r}")


def _spec_from_dict(d: dict | None, field_name: str) -> HyperSpec | None:
    if d is None:
        return None
    if not isinstance(d, dict) or len(d) != 1:
        raise RegimeError(f"{field_name}: expected one of fixed/uniform/beta/half_normal")
    key, value = next(iter(d.items()))
    try:
        if key == "fixed":
            return FixedValue(float(value))
        if key == "uniform":
            return UniformPrior(float(value[0]), float(value[1]))
        if key == "beta":
            return BetaPrior(float(value[0]), float(value[1]))
        if key == "half_normal":
            return HalfNormalPrior(float(value))
    except (TypeError, ValueError, IndexError) as exc:
        raise RegimeError(f"{field_name}: malformed spec {d!r}") from exc
    raise RegimeError(f"{field_name}: unknown spec kind {key!r}")


def regime_to_dict(regime: PriorRegime) -> dict:
    return {
        "name": regime.name,
        "kind": regime.kind.value,
        "eta_spec": _spec_to_dict(regime.eta_spec),
        "rho_spec": _spec_to_dict(regime.rho_spec),
        "sigma_spec": _spec_to_dict(regime.sigma_spec),
        "scale_multipliers": dict(regime.scale_multipliers),
    }


def regime_from_dict(d: dict) -> PriorRegime:
    """Parse a regime from config-file form (field names match PriorRegime)."""
    try:
        kind = RegimeKind(d["kind"])
    except (KeyError, ValueError) as exc:
        raise RegimeError(f"regime config needs a valid 'kind': {exc}") from exc
    return PriorRegime(
        name=str(d.get("name", "custom")),
        kind=kind,
        eta_spec=_spec_from_dict(d.get("eta_spec"), "eta_spec"),
        rho_spec=_spec_from_dict(d.get("rho_spec"), "rho_spec"),
        sigma_spec=_spec_from_dict(d.get("sigma_spec"), "sigma_spec"),
        scale_multipliers={str(k): float(v) for k, v in d.get("scale_multipliers", {}).items()},
    )
