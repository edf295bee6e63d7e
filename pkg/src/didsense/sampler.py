"""Gradient-based Hamiltonian posterior sampler with adaptive step size.

The transition kernel is the dynamic no-U-turn variant of HMC (Hoffman &
Gelman, 2014, Algorithm 6): trajectories double in length until the path
turns back on itself, a slice variable selects the proposal, and the step
size is tuned during warmup by dual averaging toward a target acceptance
statistic. The mass matrix is the identity.

Models supply a log-density and gradient over the *constrained* parameter
vector plus one transform per parameter; sampling happens in unconstrained
space with the log-Jacobian corrections applied here. Determinism contract:
(seed, config, model) fully determine the draws, chain by chain.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .diagnostics import all_converged, summarize_chains
from .errors import SamplingError

# Energy-error threshold beyond which a leapfrog state counts as divergent.
_DELTA_MAX = 1000.0

LogDensityFn = Callable[[np.ndarray], tuple[float, np.ndarray]]


# ---------------------------------------------------------------------------
# Constraint transforms (unconstrained z -> constrained x, elementwise)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Identity:
    """x = z, for unconstrained parameters."""


@dataclass(frozen=True)
class Positive:
    """x = exp(z), for scale parameters."""


@dataclass(frozen=True)
class Interval:
    """x = low + (high - low) * logistic(z), for bounded parameters."""

    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"need low < high, got ({self.low}, {self.high})")


def unit_interval() -> Interval:
    return Interval(0.0, 1.0)


def _expit(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class TransformSet:
    """Per-parameter bijections applied as one vectorized map."""

    def __init__(self, transforms: Sequence[Identity | Positive | Interval]):
        self.transforms = tuple(transforms)
        id_idx, exp_idx, int_idx, lows, widths = [], [], [], [], []
        for i, tr in enumerate(self.transforms):
            if isinstance(tr, Identity):
                id_idx.append(i)
            elif isinstance(tr, Positive):
                exp_idx.append(i)
            elif isinstance(tr, Interval):
                int_idx.append(i)
                lows.append(tr.low)
                widths.append(tr.high - tr.low)
            else:
                raise TypeError(f"unknown transform {tr!r}")
        self._exp_idx = np.asarray(exp_idx, dtype=int)
        self._int_idx = np.asarray(int_idx, dtype=int)
        self._low = np.asarray(lows, dtype=float)
        self._width = np.asarray(widths, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.transforms)

    def forward(self, z: np.ndarray) -> np.ndarray:
        """Map unconstrained values to the constrained space (any leading shape)."""
        x = np.array(z, dtype=float, copy=True)
        if self._exp_idx.size:
            x[..., self._exp_idx] = np.exp(z[..., self._exp_idx])
        if self._int_idx.size:
            s = _expit(np.asarray(z[..., self._int_idx], dtype=float))
            x[..., self._int_idx] = self._low + self._width * s
        return x

    def value_and_grad(
        self, logp_and_grad: LogDensityFn, z: np.ndarray
    ) -> tuple[float, np.ndarray, np.ndarray]:
        """Log-density plus log-Jacobian at z, with its gradient in z-space."""
        x = self.forward(z)
        logp, grad_x = logp_and_grad(x)
        factor = np.ones(self.dim)
        djac = np.zeros(self.dim)
        log_jac = 0.0
        if self._exp_idx.size:
            xe = x[self._exp_idx]
            factor[self._exp_idx] = xe
            djac[self._exp_idx] = 1.0
            log_jac += float(np.sum(z[self._exp_idx]))
        if self._int_idx.size:
            s = (x[self._int_idx] - self._low) / self._width
            factor[self._int_idx] = self._width * s * (1.0 - s)
            djac[self._int_idx] = 1.0 - 2.0 * s
            with np.errstate(divide="ignore"):
                log_jac += float(np.sum(np.log(self._width) + np.log(s) + np.log1p(-s)))
        value = logp + log_jac
        grad_z = np.asarray(grad_x, dtype=float) * factor + djac
        return value, grad_z, x


# ---------------------------------------------------------------------------
# Configuration and result containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SamplerConfig:
    """Knobs for one sampling run."""

    chains: int = 4
    warmup: int = 1000
    draws: int = 1000
    seed: int = 0
    target_acceptance: float = 0.8
    max_tree_depth: int = 10

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("need >= 2 chains for split R-hat")
        if self.warmup < 1 or self.draws < 1:
            raise ValueError("warmup and draws must both be >= 1")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError("target_acceptance must lie in (0, 1)")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")


@dataclass(frozen=True)
class PosteriorDraws:
    """Post-warmup draws plus per-parameter convergence diagnostics."""

    parameter_names: tuple[str, ...]
    values: np.ndarray = field(repr=False)  # (chains, draws, params), constrained
    diagnostics: dict[str, dict[str, float | str]] = field(repr=False)
    divergence_count: int = 0

    def index(self, name: str) -> int:
        return self.parameter_names.index(name)

    def flat(self, name: str) -> np.ndarray:
        """All draws of one parameter, chains concatenated in chain order."""
        return self.values[:, :, self.index(name)].reshape(-1)

    @property
    def num_chains(self) -> int:
        return self.values.shape[0]

    @property
    def num_draws(self) -> int:
        return self.values.shape[1]

    @property
    def converged(self) -> bool:
        return all_converged(self.diagnostics)

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for j, name in enumerate(self.parameter_names):
            flat = self.values[:, :, j].reshape(-1)
            lo, hi = np.percentile(flat, [2.5, 97.5])
            out[name] = {
                "mean": float(flat.mean()),
                "sd": float(flat.std(ddof=1)),
                "lower95": float(lo),
                "upper95": float(hi),
            }
        return out


# ---------------------------------------------------------------------------
# No-U-turn transition
# ---------------------------------------------------------------------------


class _Tree(NamedTuple):
    z_minus: np.ndarray
    r_minus: np.ndarray
    g_minus: np.ndarray
    z_plus: np.ndarray
    r_plus: np.ndarray
    g_plus: np.ndarray
    z_prop: np.ndarray
    f_prop: float
    g_prop: np.ndarray
    n_valid: int
    keep_going: bool
    alpha_sum: float
    n_alpha: int
    divergent: bool


def _leapfrog(value_and_grad, z, r, grad, eps):
    r_half = r + 0.5 * eps * grad
    z_new = z + eps * r_half
    f_new, g_new, _ = value_and_grad(z_new)
    r_new = r_half + 0.5 * eps * g_new
    return z_new, r_new, f_new, g_new


def _uturn(z_minus, z_plus, r_minus, r_plus) -> bool:
    dz = z_plus - z_minus
    return bool(np.dot(dz, r_minus) < 0.0 or np.dot(dz, r_plus) < 0.0)


def _build_tree(value_and_grad, z, r, grad, log_u, direction, depth, eps, joint0, rng) -> _Tree:
    if depth == 0:
        z1, r1, f1, g1 = _leapfrog(value_and_grad, z, r, grad, direction * eps)
        joint = f1 - 0.5 * float(np.dot(r1, r1))
        if not math.isfinite(joint):
            return _Tree(z1, r1, g1, z1, r1, g1, z1, f1, g1, 0, False, 0.0, 1, True)
        n_valid = int(log_u <= joint)
        divergent = log_u >= joint + _DELTA_MAX
        alpha = min(1.0, math.exp(min(0.0, joint - joint0)))
        return _Tree(
            z1, r1, g1, z1, r1, g1, z1, f1, g1, n_valid, not divergent, alpha, 1, divergent
        )

    left = _build_tree(value_and_grad, z, r, grad, log_u, direction, depth - 1, eps, joint0, rng)
    if not left.keep_going:
        return left
    if direction == -1:
        right = _build_tree(
            value_and_grad, left.z_minus, left.r_minus, left.g_minus,
            log_u, direction, depth - 1, eps, joint0, rng,
        )
        z_minus, r_minus, g_minus = right.z_minus, right.r_minus, right.g_minus
        z_plus, r_plus, g_plus = left.z_plus, left.r_plus, left.g_plus
    else:
        right = _build_tree(
            value_and_grad, left.z_plus, left.r_plus, left.g_plus,
            log_u, direction, depth - 1, eps, joint0, rng,
        )
        z_minus, r_minus, g_minus = left.z_minus, left.r_minus, left.g_minus
        z_plus, r_plus, g_plus = right.z_plus, right.r_plus, right.g_plus

    n_total = left.n_valid + right.n_valid
    z_prop, f_prop, g_prop = left.z_prop, left.f_prop, left.g_prop
    if n_total > 0 and rng.uniform() < right.n_valid / n_total:
        z_prop, f_prop, g_prop = right.z_prop, right.f_prop, right.g_prop
    keep = (
        right.keep_going
        and not right.divergent
        and not _uturn(z_minus, z_plus, r_minus, r_plus)
    )
    return _Tree(
        z_minus, r_minus, g_minus, z_plus, r_plus, g_plus,
        z_prop, f_prop, g_prop, n_total, keep,
        left.alpha_sum + right.alpha_sum, left.n_alpha + right.n_alpha,
        left.divergent or right.divergent,
    )


def _transition(value_and_grad, z, f, grad, eps, max_depth, rng):
    """One no-U-turn update from (z, f, grad); returns the new state."""
    r0 = rng.standard_normal(z.size)
    joint0 = f - 0.5 * float(np.dot(r0, r0))
    log_u = joint0 + math.log(rng.uniform())

    z_minus = z_plus = z
    r_minus = r_plus = r0
    g_minus = g_plus = grad
    z_new, f_new, g_new = z, f, grad
    n_valid, keep, depth = 1, True, 0
    alpha_sum, n_alpha = 0.0, 0
    divergent = False

    while keep and depth < max_depth:
        direction = 1 if rng.uniform() < 0.5 else -1
        if direction == -1:
            tree = _build_tree(
                value_and_grad, z_minus, r_minus, g_minus,
                log_u, direction, depth, eps, joint0, rng,
            )
            z_minus, r_minus, g_minus = tree.z_minus, tree.r_minus, tree.g_minus
        else:
            tree = _build_tree(
                value_and_grad, z_plus, r_plus, g_plus,
                log_u, direction, depth, eps, joint0, rng,
            )
            z_plus, r_plus, g_plus = tree.z_plus, tree.r_plus, tree.g_plus

        if tree.keep_going and tree.n_valid > 0:
            if rng.uniform() < min(1.0, tree.n_valid / n_valid):
                z_new, f_new, g_new = tree.z_prop, tree.f_prop, tree.g_prop
        n_valid += tree.n_valid
        alpha_sum += tree.alpha_sum
        n_alpha += tree.n_alpha
        divergent = divergent or tree.divergent
        keep = tree.keep_going and not _uturn(z_minus, z_plus, r_minus, r_plus)
        depth += 1

    accept_stat = alpha_sum / max(n_alpha, 1)
    return z_new, f_new, g_new, accept_stat, divergent


class _DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, eps0: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * eps0)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.h_bar = 0.0
        self.t = 0

    def update(self, accept_stat: float) -> float:
        self.t += 1
        frac = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t ** (-self.kappa)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    def final(self) -> float:
        return math.exp(self.log_eps_bar)


def _find_initial_step(value_and_grad, z, f, grad, rng) -> float:
    """Doubling/halving heuristic for a workable starting step size."""
    eps = 1.0
    r = rng.standard_normal(z.size)
    joint = f - 0.5 * float(np.dot(r, r))
    _, r1, f1, _ = _leapfrog(value_and_grad, z, r, grad, eps)
    joint1 = f1 - 0.5 * float(np.dot(r1, r1))
    log_p = joint1 - joint if math.isfinite(joint1) else -math.inf
    direction = 1.0 if log_p > math.log(0.5) else -1.0
    for _ in range(100):
        if direction * log_p <= -direction * math.log(2.0):
            break
        eps *= 2.0**direction
        if not 1e-10 < eps < 1e10:
            break
        _, r1, f1, _ = _leapfrog(value_and_grad, z, r, grad, eps)
        joint1 = f1 - 0.5 * float(np.dot(r1, r1))
        log_p = joint1 - joint if math.isfinite(joint1) else -math.inf
    return min(max(eps, 1e-10), 1e10)


def _run_chain(chain_index, logp_and_grad, tset, config):
    rng = np.random.default_rng([config.seed, chain_index])
    z = rng.uniform(-1.0, 1.0, tset.dim)

    def value_and_grad(zz):
        return tset.value_and_grad(logp_and_grad, zz)

    f, grad, _ = value_and_grad(z)
    if not (math.isfinite(f) and np.all(np.isfinite(grad))):
        raise SamplingError(
            f"non-finite log posterior or gradient at initialization (chain {chain_index})",
            details={"chain": chain_index, "position": z.tolist()},
        )

    eps = _find_initial_step(value_and_grad, z, f, grad, rng)
    adapt = _DualAveraging(eps, config.target_acceptance)
    warmup_divergences = 0
    for _ in range(config.warmup):
        z, f, grad, accept_stat, divergent = _transition(
            value_and_grad, z, f, grad, eps, config.max_tree_depth, rng
        )
        warmup_divergences += int(divergent)
        eps = adapt.update(accept_stat)
    if warmup_divergences == config.warmup:
        raise SamplingError(
            f"every warmup iteration diverged (chain {chain_index})",
            details={
                "chain": chain_index,
                "warmup_divergences": warmup_divergences,
                "step_size": eps,
            },
        )

    eps = adapt.final()
    draws = np.empty((config.draws, tset.dim))
    divergences = 0
    for m in range(config.draws):
        z, f, grad, _, divergent = _transition(
            value_and_grad, z, f, grad, eps, config.max_tree_depth, rng
        )
        draws[m] = z
        divergences += int(divergent)
    return draws, divergences


def sample(
    logp_and_grad: LogDensityFn,
    transforms: Sequence[Identity | Positive | Interval] | TransformSet,
    config: SamplerConfig,
    parameter_names: Sequence[str] | None = None,
    threads: int = 1,
) -> PosteriorDraws:
    """Draw from a posterior given its constrained-space log-density.

    ``logp_and_grad`` maps a constrained parameter vector to
    (log-density, gradient); ``transforms`` supplies one constraint map
    per parameter. Chains run independently on streams derived from
    (seed, chain index), so the result is reproducible regardless of
    ``threads``. Warmup draws are discarded.
    """
    tset = transforms if isinstance(transforms, TransformSet) else TransformSet(transforms)
    if parameter_names is None:
        parameter_names = tuple(f"p{i}" for i in range(tset.dim))
    parameter_names = tuple(parameter_names)
    if len(parameter_names) != tset.dim:
        raise ValueError("parameter_names length must match transform count")

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(
                    lambda c: _run_chain(c, logp_and_grad, tset, config),
                    range(config.chains),
                )
            )
    else:
        results = [_run_chain(c, logp_and_grad, tset, config) for c in range(config.chains)]

    unconstrained = np.stack([draws for draws, _ in results])
    divergence_count = sum(d for _, d in results)
    values = tset.forward(unconstrained)
    diagnostics = summarize_chains(values, parameter_names)
    return PosteriorDraws(
        parameter_names=parameter_names,
        values=values,
        diagnostics=diagnostics,
        divergence_count=divergence_count,
    )
