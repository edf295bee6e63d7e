"""Synthetic two-group panel generator with exact ground truth.

Control outcomes follow a supplied trend; treated outcomes add a group
offset, optional pre-treatment trend deviations, an optional realized
AR(1) deviation path after onset, and an additive treatment effect.
The generator records everything it injected, so end-to-end tests can
check estimates against exact truth instead of approximations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ar1 import Ar1Params, simulate
from .panel import PanelDataset, PanelObservation


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one synthetic panel.

    ``pre_deviations`` are injected into the treated group's pre-period
    first differences (length onset-2, aligned with the pre-treatment
    deviation series recovered by the panel module). ``post_xi_params``
    draws one true deviation path for the post periods; its cumulative
    sum shifts the treated outcomes, mimicking a genuine violation.
    """

    num_periods: int
    onset_period: int
    true_att: float = 0.0
    control_trend: tuple[float, ...] | None = None
    group_offset: float = 0.0
    pre_deviations: tuple[float, ...] | None = None
    post_xi_params: Ar1Params | None = None
    cell_noise_sd: float = 0.0
    units_per_group: int = 1
    seed: int = 0
    stratum: str = "synthetic"

    def __post_init__(self):
        if not 2 <= self.onset_period <= self.num_periods:
            raise ValueError(
                f"need 2 <= onset_period <= num_periods, got "
                f"{self.onset_period}, {self.num_periods}"
            )
        if self.units_per_group < 1:
            raise ValueError("units_per_group must be >= 1")
        if self.cell_noise_sd < 0:
            raise ValueError("cell_noise_sd must be >= 0")
        if self.control_trend is not None and len(self.control_trend) != self.num_periods:
            raise ValueError(
                f"control_trend length {len(self.control_trend)} != num_periods "
                f"{self.num_periods}"
            )
        if self.pre_deviations is not None and len(self.pre_deviations) != self.onset_period - 2:
            raise ValueError(
                f"pre_deviations length must be onset_period - 2 = "
                f"{self.onset_period - 2}, got {len(self.pre_deviations)}"
            )


@dataclass(frozen=True)
class GroundTruth:
    """Exact quantities the generator injected (never estimated)."""

    cell_means: np.ndarray = field(repr=False)  # (2, T): row 0 control, row 1 treated
    pre_deviations: np.ndarray = field(repr=False)
    xi: np.ndarray = field(repr=False)  # realized post-period deviation path
    xi_cumulative: np.ndarray = field(repr=False)
    true_att: float = 0.0


def generate(spec: SynthSpec) -> tuple[PanelDataset, GroundTruth]:
    """Build the panel and its ground truth, deterministically from the seed.

    Draw order is fixed: the post-period deviation path first, then the
    observation-noise matrix, so changing one knob never reshuffles the
    other draws.
    """
    T, g = spec.num_periods, spec.onset_period
    rng = np.random.default_rng(spec.seed)

    n_post = T - g + 1
    if spec.post_xi_params is not None:
        path = simulate(spec.post_xi_params, n_post, rng, anchor=0.0)
        xi, xi_cum = path.xi, path.cumulative
    else:
        xi = np.zeros(n_post)
        xi_cum = np.zeros(n_post)

    control = (
        np.asarray(spec.control_trend, dtype=float)
        if spec.control_trend is not None
        else np.zeros(T)
    )
    delta = (
        np.asarray(spec.pre_deviations, dtype=float)
        if spec.pre_deviations is not None
        else np.zeros(max(g - 2, 0))
    )

    # Pre-period deviations accumulate into a level shift that persists:
    # level[t] = sum of injected first-difference deviations up to t.
    level = np.zeros(T)
    if delta.size:
        level[1 : g - 1] = np.cumsum(delta)
        level[g - 1 :] = level[g - 2]

    treated = control + spec.group_offset + level
    treated[g - 1 :] += xi_cum + spec.true_att
    cell_means = np.stack([control, treated])

    noise = rng.standard_normal((2, spec.units_per_group, T)) * spec.cell_noise_sd
    observations = []
    for group in (0, 1):
        for unit in range(spec.units_per_group):
            for t in range(T):
                observations.append(
                    PanelObservation(
                        unit_id=f"g{group}u{unit}",
                        group=group,
                        stratum=spec.stratum,
                        period=t + 1,
                        outcome=float(cell_means[group, t] + noise[group, unit, t]),
                    )
                )

    data = PanelDataset(
        observations=tuple(observations),
        onset_period=g,
        num_periods=T,
        log_scale=False,
    )
    truth = GroundTruth(
        cell_means=cell_means,
        pre_deviations=delta,
        xi=xi,
        xi_cumulative=xi_cum,
        true_att=spec.true_att,
    )
    return data, truth


def to_csv(data: PanelDataset, path: str | Path) -> None:
    """Write a panel in the ingestion format (load with log_transform=False)."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "group", "stratum", "period", "outcome"])
        for obs in data.observations:
            writer.writerow([obs.unit_id, obs.group, obs.stratum, obs.period, repr(obs.outcome)])
