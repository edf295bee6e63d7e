"""Panel data model and CSV ingestion for two-group, multi-period designs.

A panel holds outcomes for a treated group (1) and a control group (0)
observed over periods 1..T, with treatment switching on at the onset
period and staying on. Group-period means and the pre-treatment
trend-deviation series derived here feed every downstream estimator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientDataError, PanelDataError


@dataclass(frozen=True)
class ColumnMapping:
    """Maps panel fields to CSV column names."""

    unit_id: str = "unit_id"
    group: str = "group"
    stratum: str = "stratum"
    period: str = "period"
    outcome: str = "outcome"

    def required(self) -> tuple[str, ...]:
        return (self.unit_id, self.group, self.stratum, self.period, self.outcome)


@dataclass(frozen=True)
class PanelObservation:
    """One outcome for one unit in one period."""

    unit_id: str
    group: int
    stratum: str
    period: int
    outcome: float

    def __post_init__(self):
        if self.group not in (0, 1):
            raise PanelDataError(f"group must be 0 or 1, got {self.group!r}")
        if self.period < 1:
            raise PanelDataError(f"period must be >= 1, got {self.period}")
        if not math.isfinite(self.outcome):
            raise PanelDataError(f"outcome must be finite, got {self.outcome!r}")


@dataclass(frozen=True)
class PanelDataset:
    """Immutable two-group panel with a single treatment onset period.

    Safe for shared read access: construction validates once, and all
    derived quantities are computed from copies.
    """

    observations: tuple[PanelObservation, ...]
    onset_period: int
    num_periods: int
    log_scale: bool = True

    def __post_init__(self):
        if not self.observations:
            raise PanelDataError("panel has no observations")
        if not 2 <= self.onset_period <= self.num_periods:
            raise PanelDataError(
                f"onset_period must satisfy 2 <= onset <= num_periods, "
                f"got onset={self.onset_period}, num_periods={self.num_periods}"
            )
        for obs in self.observations:
            if obs.period > self.num_periods:
                raise PanelDataError(
                    f"observation at period {obs.period} exceeds num_periods={self.num_periods}"
                )

    @property
    def strata(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for obs in self.observations:
            seen.setdefault(obs.stratum, None)
        return tuple(seen)

    @property
    def post_periods(self) -> range:
        return range(self.onset_period, self.num_periods + 1)


@dataclass(frozen=True)
class GroupMeanSeries:
    """Per-period mean outcomes for one group, indexed 0 <-> period 1."""

    group: int
    values: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)


def load_panel(
    path: str | Path,
    onset_period: int,
    schema: ColumnMapping | None = None,
    log_transform: bool = True,
    allowed_strata: Sequence[str] | None = None,
) -> PanelDataset:
    """Read a long-format panel CSV into a validated PanelDataset.

    The file must be UTF-8 with a header row. Row order is irrelevant.
    When ``log_transform`` is set (the default), raw outcomes must be
    strictly positive and are stored as natural logs. Rows whose stratum
    is not in ``allowed_strata`` (when given) are rejected by row number.
    """
    path = Path(path)
    if not path.is_file():
        raise PanelDataError(f"panel file not found: {path}")
    schema = schema or ColumnMapping()

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [col for col in schema.required() if col not in header]
        if missing:
            raise PanelDataError(f"missing column(s) {missing} in {path} (header: {header})")

        observations: list[PanelObservation] = []
        unknown_rows: list[int] = []
        allowed = set(allowed_strata) if allowed_strata is not None else None
        for lineno, row in enumerate(reader, start=2):
            stratum = (row[schema.stratum] or "").strip()
            if allowed is not None and stratum not in allowed:
                unknown_rows.append(lineno)
                continue
            try:
                group = int(row[schema.group])
                period = int(row[schema.period])
                outcome = float(row[schema.outcome])
            except (TypeError, ValueError) as exc:
                raise PanelDataError(f"row {lineno}: cannot parse {exc}") from exc
            if log_transform:
                if outcome <= 0:
                    raise PanelDataError(
                        f"row {lineno}: outcome {outcome} must be > 0 under log transform"
                    )
                outcome = math.log(outcome)
            try:
                observations.append(
                    PanelObservation(
                        unit_id=str(row[schema.unit_id]),
                        group=group,
                        stratum=stratum,
                        period=period,
                        outcome=outcome,
                    )
                )
            except PanelDataError as exc:
                raise PanelDataError(f"row {lineno}: {exc}") from exc

    if unknown_rows:
        raise PanelDataError(
            f"rows with unknown strata (allowed {sorted(allowed)}): {unknown_rows}"
        )
    if not observations:
        raise PanelDataError(f"no usable rows in {path}")

    num_periods = max(obs.period for obs in observations)
    data = PanelDataset(
        observations=tuple(observations),
        onset_period=onset_period,
        num_periods=num_periods,
        log_scale=log_transform,
    )
    _check_cells(data.observations, num_periods)
    return data


def _check_cells(observations: Iterable[PanelObservation], num_periods: int) -> None:
    counts = np.zeros((2, num_periods), dtype=int)
    for obs in observations:
        counts[obs.group, obs.period - 1] += 1
    for group in (0, 1):
        for t in range(num_periods):
            if counts[group, t] == 0:
                raise PanelDataError(f"empty group-period cell: group={group}, period={t + 1}")


def group_means(
    data: PanelDataset, stratum: str | None = None
) -> tuple[GroupMeanSeries, GroupMeanSeries]:
    """Mean outcome per (group, period), optionally within one stratum.

    Returns the (control, treated) pair. Any empty group-period cell
    under the stratum filter is an error naming the offending cell.
    """
    T = data.num_periods
    sums = np.zeros((2, T))
    counts = np.zeros((2, T), dtype=int)
    for obs in data.observations:
        if stratum is not None and obs.stratum != stratum:
            continue
        sums[obs.group, obs.period - 1] += obs.outcome
        counts[obs.group, obs.period - 1] += 1
    for group in (0, 1):
        for t in range(T):
            if counts[group, t] == 0:
                where = f" in stratum {stratum!r}" if stratum is not None else ""
                raise PanelDataError(
                    f"empty group-period cell{where}: group={group}, period={t + 1}"
                )
    values = sums / counts
    return (
        GroupMeanSeries(group=0, values=values[0], counts=counts[0]),
        GroupMeanSeries(group=1, values=values[1], counts=counts[1]),
    )


def pre_violation_series(data: PanelDataset, stratum: str | None = None) -> np.ndarray:
    """Difference-in-first-differences of group means over pre-treatment periods.

    Entry t-2 (0-based) is
    ``(m1[t] - m1[t-1]) - (m0[t] - m0[t-1])`` for t = 2..onset-1, where
    ``m_a`` is the group-a mean series. Length is always onset - 2. Any
    constant level offset between the groups differences away exactly.
    """
    g = data.onset_period
    if g < 4:
        raise InsufficientDataError(
            f"need onset_period >= 4 for a usable pre-treatment deviation series, got {g}"
        )
    control, treated = group_means(data, stratum=stratum)
    pre_treated = treated.values[: g - 1]
    pre_control = control.values[: g - 1]
    return np.diff(pre_treated) - np.diff(pre_control)
