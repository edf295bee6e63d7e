"""Chain convergence diagnostics: split R-hat and effective sample size.

Both operate on a (chains, draws) array for a single parameter. Constant
chains have zero within-chain variance, for which neither statistic is
defined; that case is reported as the string ``"degenerate"`` rather
than raised, so it can flow into report files as a diagnostic value.
"""

from __future__ import annotations

import numpy as np

DEGENERATE = "degenerate"


def _split_halves(values: np.ndarray) -> np.ndarray:
    """Split each chain into two halves, dropping one draw if odd."""
    n_half = values.shape[1] // 2
    return np.vstack([values[:, :n_half], values[:, -n_half:]])


def split_rhat(values: np.ndarray) -> float | str:
    """Split R-hat over half-chains.

    Each chain is halved; with within-half variance W and between-half
    variance B over the 2m half-sequences of length n,

        rhat = sqrt((n - 1) / n + B / (n * W)).

    Values below 1.01 are consistent with convergence to approximate
    stationarity.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] < 2:
        raise ValueError("need a (chains, draws) array with >= 2 chains")
    if values.shape[1] < 4:
        raise ValueError("need >= 4 draws per chain for a split estimate")
    halves = _split_halves(values)
    n = halves.shape[1]
    within = float(np.mean(np.var(halves, axis=1, ddof=1)))
    if within == 0.0:
        return DEGENERATE
    between = n * float(np.var(np.mean(halves, axis=1), ddof=1))
    return float(np.sqrt((n - 1) / n + between / (n * within)))


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance at all lags via FFT (normalized by n)."""
    n = x.size
    centered = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n - 1)))
    freq = np.fft.rfft(centered, size)
    acov = np.fft.irfft(freq * np.conj(freq), size)[:n].real
    return acov / n

def effective_sample_size(values: np.ndarray) -> float | str:
    """Effective sample size from summed autocorrelations.

    Uses the multi-chain autocorrelation estimate with Geyer's initial
    positive sequence rule: consecutive lag pairs are accumulated while
    their sum stays positive, then the series is truncated.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] < 1:
        raise ValueError("need a (chains, draws) array")
    m, n = values.shape
    if n < 4:
        raise ValueError("need >= 4 draws per chain")
    if np.all(values == values[0, 0]):
        return DEGENERATE
    acov = np.stack([_autocovariance(values[c]) for c in range(m)])
    chain_means = values.mean(axis=1)
    mean_var = float(np.mean(acov[:, 0])) * n / (n - 1)
    if mean_var == 0.0:
        return DEGENERATE
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += float(np.var(chain_means, ddof=1))

    rho = np.zeros(n)
    rho[0] = 1.0
    rho[1] = 1.0 - (mean_var - float(np.mean(acov[:, 1]))) / var_plus
    t = 1
    rho_even, rho_odd = rho[0], rho[1]
    while t < n - 2 and (rho_even + rho_odd) >= 0.0:
        rho_even = 1.0 - (mean_var - float(np.mean(acov[:, t + 1]))) / var_plus
        rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, t + 2]))) / var_plus
        if (rho_even + rho_odd) >= 0.0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2

    tau = -1.0 + 2.0 * float(np.sum(rho[:t]))
    tau = max(tau, 1.0 / np.finfo(float).max)
    return float(m * n / tau)


def summarize_chains(values: np.ndarray, parameter_names) -> dict[str, dict[str, float | str]]:
    """Per-parameter split R-hat and ESS for a (chains, draws, params) array."""
    values = np.asarray(values, dtype=float)
    out: dict[str, dict[str, float | str]] = {}
    for j, name in enumerate(parameter_names):
        out[name] = {
            "split_rhat": split_rhat(values[:, :, j]),
            "ess": effective_sample_size(values[:, :, j]),
        }
    return out


def all_converged(diagnostics: dict[str, dict[str, float | str]], threshold: float = 1.01) -> bool:
    """True when every numeric split R-hat is below the threshold.

    Degenerate (constant) parameters are skipped: a constant chain says
    nothing about mixing.
    """
    for stats in diagnostics.values():
        rhat = stats["split_rhat"]
        if isinstance(rhat, str):
            continue
        if not np.isfinite(rhat) or rhat >= threshold:
            return False
    return True
