"""Mean-shifted AR(1) deviation process: simulation, moments, log-density.

The process is ``xi[s] = eta * (1 - rho) + rho * xi[s-1] + sigma * eps[s]``
with iid standard-normal innovations. Its long-run mean is ``eta`` and,
for |rho| < 1, its stationary variance is ``sigma**2 / (1 - rho**2)``.
Cumulative sums of a path are what shift a counterfactual trend.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDensityError, NonstationaryError, NonstationaryRhoWarning


@dataclass(frozen=True)
class Ar1Params:
    """Triple (eta, rho, sigma): long-run mean, AR coefficient, innovation sd."""

    eta: float
    rho: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def stationary(self) -> bool:
        return abs(self.rho) < 1.0


@dataclass(frozen=True)
class DeviationTrajectory:
    """One sampled deviation path with its prefix sums and raw noise.

    ``noise`` retains the standard-normal draws so the path can be
    replayed bit-for-bit; ``anchor`` is the realized value the recursion
    started from (one step before the first entry of ``xi``).
    """

    xi: np.ndarray = field(repr=False)
    cumulative: np.ndarray = field(repr=False)
    noise: np.ndarray = field(repr=False)
    anchor: float = 0.0


def _recurse(
    eta: np.ndarray, rho: np.ndarray, sigma: np.ndarray, noise: np.ndarray, anchor: np.ndarray
) -> np.ndarray:
    """Run the AR recursion over the last axis of ``noise``."""
    n_paths, horizon = noise.shape
    xi = np.empty((n_paths, horizon))
    drift = eta * (1.0 - rho)
    prev = np.broadcast_to(anchor, (n_paths,)).astype(float)
    for k in range(horizon):
        prev = drift + rho * prev + sigma * noise[:, k]
        xi[:, k] = prev
    return xi


def simulate_paths(
    eta,
    rho,
    sigma,
    horizon: int,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
    anchor=0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate many deviation paths at once.

    ``eta``, ``rho``, ``sigma`` and ``anchor`` may be scalars or arrays of
    length n_paths. Either ``rng`` (noise is drawn) or ``noise`` of shape
    (n_paths, horizon) must be given. Returns (xi, cumulative, noise),
    each of shape (n_paths, horizon). Paths with |rho| >= 1 are permitted
    but emit a NonstationaryRhoWarning.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    n_paths = max(eta.size, rho.size, sigma.size)
    if noise is None:
        if rng is None:
            raise ValueError("supply either rng or noise")
        noise = rng.standard_normal((n_paths, horizon))
    else:
        noise = np.asarray(noise, dtype=float)
        if noise.shape != (n_paths, horizon):
            raise ValueError(
                f"noise shape {noise.shape} does not match ({n_paths}, {horizon})"
            )
    n_bad = int(np.count_nonzero(np.abs(rho) >= 1.0))
    if n_bad:
        warnings.warn(
            f"{n_bad} of {n_paths} deviation path(s) use |rho| >= 1 and are nonstationary",
            NonstationaryRhoWarning,
            stacklevel=2,
        )
    xi = _recurse(eta, rho, sigma, noise, np.asarray(anchor, dtype=float))
    return xi, np.cumsum(xi, axis=1), noise


def simulate(
    params: Ar1Params,
    horizon: int,
    rng: np.random.Generator,
    anchor: float = 0.0,
    stationary_init: bool = False,
) -> DeviationTrajectory:
    """Sample one deviation path of the given length.

    The recursion starts from ``anchor`` (zero by default: no deviation at
    the last pre-treatment period). With ``stationary_init`` the starting
    value is drawn from the stationary law instead, which requires
    |rho| < 1; the extra normal draw is consumed before the path noise.
    """
    start = float(anchor)
    if stationary_init:
        mean, var = stationary_moments(params)
        start = mean + math.sqrt(var) * rng.standard_normal()
    noise = rng.standard_normal((1, horizon))
    xi, cumulative, _ = simulate_paths(
        params.eta, params.rho, params.sigma, horizon, noise=noise, anchor=start
    )
    return DeviationTrajectory(
        xi=xi[0], cumulative=cumulative[0], noise=noise[0], anchor=start
    )


def replay(params: Ar1Params, noise: np.ndarray, anchor: float = 0.0) -> DeviationTrajectory:
    """Rebuild the trajectory a given noise sequence produces, bit-for-bit."""
    noise = np.asarray(noise, dtype=float).reshape(1, -1)
    xi, cumulative, _ = simulate_paths(
        params.eta, params.rho, params.sigma, noise.shape[1], noise=noise, anchor=anchor
    )
    return DeviationTrajectory(
        xi=xi[0], cumulative=cumulative[0], noise=noise[0], anchor=float(anchor)
    )


def stationary_moments(params: Ar1Params) -> tuple[float, float]:
    """Stationary (mean, variance) = (eta, sigma^2 / (1 - rho^2)).

    Raises NonstationaryError when |rho| >= 1: the process then has no
    stationary law, and any estimate implying it should be treated as a
    diagnostic red flag rather than fed onward.
    """
    if not params.stationary:
        raise NonstationaryError(
            f"|rho| = {abs(params.rho)} >= 1: process is nonstationary"
        )
    return params.eta, params.sigma**2 / (1.0 - params.rho**2)


def log_density(xi: np.ndarray, params: Ar1Params, anchor: float = 0.0) -> float:
    """Log-density of a path under the chained Gaussian transition kernel."""
    if params.sigma == 0:
        raise DegenerateDensityError("sigma = 0 gives a degenerate transition density")
    xi = np.asarray(xi, dtype=float)
    prev = np.concatenate(([anchor], xi[:-1]))
    mean = params.eta * (1.0 - params.rho) + params.rho * prev
    z = (xi - mean) / params.sigma
    return float(
        -0.5 * xi.size * math.log(2.0 * math.pi)
        - xi.size * math.log(params.sigma)
        - 0.5 * np.dot(z, z)
    )
