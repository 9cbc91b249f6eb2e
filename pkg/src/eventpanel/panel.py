"""Long-format panel container: loading, validation, cohorts, switcher counts.

A :class:`Panel` is an immutable dense view of unit x period observations
with an absorbing (staggered) treatment path.  Periods are plain integers;
missing cells are absent rows in the file and NaN in the dense matrices.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np
import pandas as pd

from .errors import (
    BaselineMissingEverywhere,
    DuplicateCell,
    NonAbsorbingTreatment,
    NonFiniteOutcome,
    NonPositiveOutcome,
    PanelFormatError,
)

PANEL_COLUMNS = ("unit", "period", "outcome", "treated")

#: Placeholder switch period for never-treated units.
NEVER = math.inf


@dataclass(frozen=True)
class Observation:
    """One unit-period row."""

    unit: str
    period: int
    outcome: float
    treated: bool


@dataclass(frozen=True)
class CohortMap:
    """First-switch periods and never-treated set for one panel.

    ``first_switch`` maps each ever-treated unit to the period of its first
    treated observation.  Units treated already at their first observed
    period are additionally listed in ``always_treated``: their true switch
    date is left-censored, so they are excluded from switcher estimands.
    """

    first_switch: Mapping[str, int]
    never_treated: frozenset[str]
    always_treated: frozenset[str]

    @property
    def switchers(self) -> tuple[str, ...]:
        return tuple(u for u in self.first_switch if u not in self.always_treated)

    def event_time(self, unit: str, period: int) -> int:
        """Periods elapsed since ``unit``'s first switch (switchers only)."""
        return period - self.first_switch[unit]


@dataclass(frozen=True)
class SwitcherCounts:
    """Number of switchers identifying each estimand cell.

    Keys use the cell convention: ``ell >= 0`` are dynamic horizons,
    ``ell < 0`` are long-difference placebo horizons ``|ell|`` (a placebo
    of horizon k appears at event time ``-1 - k`` in series output).
    """

    per_event_time: Mapping[int, int]

    def to_frame(self) -> pd.DataFrame:
        items = sorted(self.per_event_time.items())
        return pd.DataFrame(items, columns=["event_time", "n_switchers"])


class Panel:
    """Validated long-format panel in dense matrix form.

    Attributes
    ----------
    units : ndarray of str, sorted unit labels.
    period_range : (int, int), inclusive bounds of the period axis.
    outcome : (n_units, n_periods) float matrix, NaN where unobserved.
    observed : boolean matrix of the same shape.
    treated : int8 matrix, 1/0 where observed and -1 where not.
    balanced : True when every unit is observed at every period in range.

    Instances are immutable; all transforms return new panels.
    """

    def __init__(
        self,
        units: np.ndarray,
        period_start: int,
        period_end: int,
        outcome: np.ndarray,
        observed: np.ndarray,
        nominal_switch: np.ndarray,
        meta: dict | None = None,
        extras: dict[str, np.ndarray] | None = None,
    ):
        self.units = np.asarray(units, dtype=object)
        self.period_start = int(period_start)
        self.period_end = int(period_end)
        self.periods = np.arange(self.period_start, self.period_end + 1, dtype=np.int64)
        self.outcome = np.asarray(outcome, dtype=np.float64)
        self.observed = np.asarray(observed, dtype=bool)
        #: Nominal first-switch period per unit (inf = never treated).  Kept
        #: separately from observations so that repeated treatment shifts
        #: compose exactly even across observation gaps.
        self.nominal_switch = np.asarray(nominal_switch, dtype=np.float64)
        self.meta = dict(meta or {})
        self.extras = {k: np.asarray(v, dtype=np.float64) for k, v in (extras or {}).items()}

        n, p = self.outcome.shape
        if self.observed.shape != (n, p) or len(self.units) != n:
            raise PanelFormatError("panel matrix shapes are inconsistent")

        self.treated = np.where(
            self.observed,
            (self.periods[None, :] >= self.nominal_switch[:, None]).astype(np.int8),
            np.int8(-1),
        )
        has_obs = self.observed.any(axis=1)
        if not has_obs.all():
            raise PanelFormatError("panel contains units without observations")
        first_obs_idx = np.argmax(self.observed, axis=1)
        self.first_obs_period = self.periods[first_obs_idx]

        treated_cols = np.where(self.treated == 1, self.periods[None, :], np.inf)
        self.first_switch_period = treated_cols.min(axis=1)  # inf if never observed treated
        self.always_treated = self.treated[np.arange(n), first_obs_idx] == 1
        self.is_switcher = np.isfinite(self.first_switch_period) & ~self.always_treated
        self.balanced = bool(self.observed.all())

        for arr in (self.units, self.periods, self.outcome, self.observed,
                    self.treated, self.nominal_switch, self.first_obs_period,
                    self.first_switch_period, self.always_treated, self.is_switcher):
            arr.flags.writeable = False
        for arr in self.extras.values():
            arr.flags.writeable = False

    # -- basic views ---------------------------------------------------

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def period_range(self) -> tuple[int, int]:
        return (self.period_start, self.period_end)

    def period_index(self, period: int) -> int | None:
        """Column index of ``period``, or None when outside the range."""
        if period < self.period_start or period > self.period_end:
            return None
        return int(period - self.period_start)

    def unit_row(self, unit: str) -> int:
        idx = np.searchsorted(self.units.astype(str), str(unit))
        if idx >= self.n_units or self.units[idx] != unit:
            raise KeyError(f"unknown unit {unit!r}")
        return int(idx)

    def unit_periods(self, unit: str) -> np.ndarray:
        """Sorted periods at which ``unit`` is observed."""
        return self.periods[self.observed[self.unit_row(unit)]]

    def value(self, unit: str, period: int) -> float:
        row, col = self.unit_row(unit), self.period_index(period)
        if col is None or not self.observed[row, col]:
            raise KeyError(f"unit {unit!r} not observed at period {period}")
        return float(self.outcome[row, col])

    def observations(self) -> Iterator[Observation]:
        rows, cols = np.nonzero(self.observed)
        for r, c in zip(rows, cols):
            yield Observation(
                unit=str(self.units[r]),
                period=int(self.periods[c]),
                outcome=float(self.outcome[r, c]),
                treated=bool(self.treated[r, c]),
            )

    def unit_weight(self, column: str) -> np.ndarray:
        """Per-unit weight from an extra column (must be constant within unit)."""
        if column not in self.extras:
            raise PanelFormatError(f"panel has no column {column!r}")
        mat = self.extras[column]
        lo = np.nanmin(np.where(self.observed, mat, np.nan), axis=1)
        hi = np.nanmax(np.where(self.observed, mat, np.nan), axis=1)
        if np.any(~np.isfinite(lo)) or np.any(hi - lo > 0):
            raise PanelFormatError(f"weight column {column!r} must be finite and constant within unit")
        return lo

    # -- conversion -----------------------------------------------------

    def to_frame(self) -> pd.DataFrame:
        """Long-format frame sorted by (unit, period)."""
        rows, cols = np.nonzero(self.observed)
        data = {
            "unit": self.units[rows].astype(str),
            "period": self.periods[cols],
            "outcome": self.outcome[rows, cols],
            "treated": self.treated[rows, cols].astype(np.int64),
        }
        for name, mat in self.extras.items():
            data[name] = mat[rows, cols]
        return pd.DataFrame(data)

    def write_csv(self, path, manifest: str | None = None) -> None:
        """Serialize to delimited text; outcome floats round-trip bitwise."""
        frame = self.to_frame()
        with open(path, "w", newline="") as fh:
            if manifest is not None:
                fh.write(f"# manifest: {manifest}\n")
            frame.to_csv(fh, index=False)

    def with_outcome(self, outcome: np.ndarray, meta: dict | None = None) -> "Panel":
        return Panel(
            self.units, self.period_start, self.period_end,
            outcome, self.observed, self.nominal_switch,
            meta={**self.meta, **(meta or {})}, extras=self.extras,
        )

    def restrict_units(self, keep_rows: np.ndarray, relabel: bool = False) -> "Panel":
        """Panel over a subset (or resample) of unit rows."""
        keep_rows = np.asarray(keep_rows)
        units = self.units[keep_rows]
        if relabel:
            units = np.array([f"b{i:06d}" for i in range(len(keep_rows))], dtype=object)
        extras = {k: v[keep_rows] for k, v in self.extras.items()}
        return Panel(
            units, self.period_start, self.period_end,
            self.outcome[keep_rows], self.observed[keep_rows],
            self.nominal_switch[keep_rows], meta=dict(self.meta), extras=extras,
        )

    def resample_units(self, row_indices: np.ndarray) -> "Panel":
        """Bootstrap resample: duplicated rows become distinct relabeled units."""
        return self.restrict_units(np.asarray(row_indices), relabel=True)


# ---------------------------------------------------------------------------
# loading / validation
# ---------------------------------------------------------------------------


def load_panel(source) -> Panel:
    """Build a validated :class:`Panel` from long-format records.

    ``source`` may be a CSV path, a pandas DataFrame, or an iterable of
    mappings with ``unit, period, outcome, treated`` fields.  Extra numeric
    columns (e.g. a weight column) are carried along.

    Raises
    ------
    DuplicateCell, NonAbsorbingTreatment, NonFiniteOutcome, PanelFormatError
    """
    if isinstance(source, Panel):
        return source
    if isinstance(source, pd.DataFrame):
        frame = source.copy()
    elif isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        frame = pd.read_csv(source, comment="#", dtype={"unit": str})
    elif isinstance(source, io.IOBase):
        frame = pd.read_csv(source, comment="#", dtype={"unit": str})
    else:
        frame = pd.DataFrame(list(source))

    missing = [c for c in PANEL_COLUMNS if c not in frame.columns]
    if missing:
        raise PanelFormatError(f"panel input lacks columns: {missing}")

    units_raw = frame["unit"].astype(str).to_numpy()
    periods_raw = frame["period"].to_numpy()
    if not np.issubdtype(np.asarray(periods_raw).dtype, np.number):
        raise PanelFormatError("period column must be integer")
    periods_f = np.asarray(periods_raw, dtype=np.float64)
    if np.any(periods_f != np.round(periods_f)):
        raise PanelFormatError("period column must be integer")
    periods_raw = periods_f.astype(np.int64)
    try:
        outcome_raw = np.asarray(frame["outcome"].to_numpy(), dtype=np.float64)
        treated_raw = np.asarray(frame["treated"].to_numpy())
    except (TypeError, ValueError) as err:
        raise PanelFormatError(f"non-numeric outcome or treated column: {err}") from err
    bad_treated = ~np.isin(treated_raw, (0, 1))
    if bad_treated.any():
        i = int(np.argmax(bad_treated))
        raise PanelFormatError(
            f"treated must be 0 or 1; got {treated_raw[i]!r} for unit {units_raw[i]!r}"
        )
    treated_raw = treated_raw.astype(np.int8)

    extra_cols = [c for c in frame.columns if c not in PANEL_COLUMNS]

    order = np.lexsort((periods_raw, units_raw))
    units_s, periods_s = units_raw[order], periods_raw[order]
    outcome_s, treated_s = outcome_raw[order], treated_raw[order]

    same = (units_s[1:] == units_s[:-1]) & (periods_s[1:] == periods_s[:-1])
    if same.any():
        i = int(np.argmax(same)) + 1
        raise DuplicateCell(str(units_s[i]), int(periods_s[i]))

    bad = ~np.isfinite(outcome_s)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteOutcome(str(units_s[i]), int(periods_s[i]))

    units, unit_codes = np.unique(units_s, return_inverse=True)
    p0, p1 = int(periods_s.min()), int(periods_s.max())
    n, p = len(units), p1 - p0 + 1
    col = periods_s - p0

    outcome = np.full((n, p), np.nan)
    observed = np.zeros((n, p), dtype=bool)
    treated = np.full((n, p), -1, dtype=np.int8)
    outcome[unit_codes, col] = outcome_s
    observed[unit_codes, col] = True
    treated[unit_codes, col] = treated_s

    # absorbing check: within each unit, treated never drops from 1 to 0
    for r in range(n):
        cols = np.nonzero(observed[r])[0]
        path = treated[r, cols]
        drop = np.nonzero(np.diff(path) < 0)[0]
        if drop.size:
            raise NonAbsorbingTreatment(str(units[r]), int(cols[drop[0] + 1] + p0))

    treated_periods = np.where(treated == 1, np.arange(p0, p1 + 1)[None, :], np.inf)
    nominal = treated_periods.min(axis=1)

    extras = {}
    for name in extra_cols:
        try:
            vals = np.asarray(frame[name].to_numpy(), dtype=np.float64)[order]
        except (TypeError, ValueError) as err:
            raise PanelFormatError(f"extra column {name!r} is not numeric: {err}") from err
        mat = np.full((n, p), np.nan)
        mat[unit_codes, col] = vals
        extras[name] = mat

    return Panel(units.astype(object), p0, p1, outcome, observed, nominal, extras=extras)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def shift_treatment(panel: Panel, lead: int) -> Panel:
    """Move every unit's switch ``lead`` periods earlier.

    Redefines treatment from opening to construction start.  A switch
    shifted to (or past) a unit's first observed period makes the unit
    always-treated within the window; such units are listed in the result's
    ``meta['shift_made_always_treated']``.
    """
    if lead < 0:
        raise ValueError("lead must be non-negative")
    new_nominal = panel.nominal_switch - float(lead)
    was_always = panel.always_treated
    becomes_always = (
        np.isfinite(new_nominal) & (new_nominal <= panel.first_obs_period) & ~was_always
    )
    meta = {
        "treatment_shift": panel.meta.get("treatment_shift", 0) + int(lead),
        "shift_made_always_treated": sorted(
            set(panel.meta.get("shift_made_always_treated", ()))
            | set(map(str, panel.units[becomes_always]))
        ),
    }
    return Panel(
        panel.units, panel.period_start, panel.period_end,
        panel.outcome, panel.observed, new_nominal,
        meta={**panel.meta, **meta}, extras=panel.extras,
    )


def log_transform(panel: Panel) -> Panel:
    """Replace outcomes by their natural log; non-positive values error out."""
    bad = panel.observed & ~(panel.outcome > 0)
    if bad.any():
        r, c = np.unravel_index(int(np.argmax(bad)), bad.shape)
        raise NonPositiveOutcome(
            str(panel.units[r]), int(panel.periods[c]), float(panel.outcome[r, c])
        )
    out = np.where(panel.observed, np.log(np.where(panel.observed, panel.outcome, 1.0)), np.nan)
    return panel.with_outcome(out, meta={"log_outcome": True})


def cohorts(panel: Panel) -> CohortMap:
    """Deterministic cohort assignment from first treated observations."""
    first_switch = {}
    never = []
    always = []
    for i, u in enumerate(panel.units):
        if np.isfinite(panel.first_switch_period[i]):
            first_switch[str(u)] = int(panel.first_switch_period[i])
            if panel.always_treated[i]:
                always.append(str(u))
        else:
            never.append(str(u))
    return CohortMap(first_switch, frozenset(never), frozenset(always))


def percent_change(log_points: float) -> float:
    """Convert a log-point effect to a proportional change, exp(b) - 1."""
    return math.exp(log_points) - 1.0


def baseline_values(panel: Panel, baseline_period: int) -> tuple[np.ndarray, np.ndarray]:
    """Outcome at ``baseline_period`` per unit plus an availability mask."""
    col = panel.period_index(baseline_period)
    if col is None:
        raise BaselineMissingEverywhere(f"period {baseline_period} is outside the panel range")
    avail = panel.observed[:, col]
    if not avail.any():
        raise BaselineMissingEverywhere(f"no unit observed at period {baseline_period}")
    return panel.outcome[:, col], avail


# ---------------------------------------------------------------------------
# switcher counts
# ---------------------------------------------------------------------------


def _cell_columns(panel: Panel, switch_period: int, event_time: int):
    """Column indices (far, base) for a cell, or None when out of range.

    Dynamic cells (ell >= 0) span {t-1, t+ell}; placebo cells (ell < 0)
    span {t-1+ell, t-1}.
    """
    base = panel.period_index(switch_period - 1)
    if event_time >= 0:
        far = panel.period_index(switch_period + event_time)
    else:
        far = panel.period_index(switch_period - 1 + event_time)
    if base is None or far is None:
        return None
    return far, base


def _control_cutoff(switch_period: int, event_time: int) -> int:
    """Latest switch period excluded from the control pool of a cell.

    Controls must be not-yet-treated at the dynamic cell's later period
    ``t + ell``; a placebo of horizon k mirrors the dynamic effect of the
    same window length and requires ``first_switch > t - 1 + k``.
    """
    if event_time >= 0:
        return switch_period + event_time
    return switch_period - 1 - event_time


def switcher_counts(
    panel: Panel,
    dynamic_horizon: int,
    placebo_horizon: int,
    control_rule: str = "not-yet",
) -> SwitcherCounts:
    """Per-event-time counts of switchers with an identified estimand cell.

    For each ``ell`` in ``[-placebo_horizon, dynamic_horizon]`` a switcher is
    counted when both cell periods are observed for it and at least one
    eligible control is observed at the same periods.
    """
    if dynamic_horizon < 0 or placebo_horizon < 0:
        raise ValueError("horizons must be non-negative")
    fsw = panel.first_switch_period
    counts: dict[int, int] = {}
    switch_rows = np.nonzero(panel.is_switcher)[0]
    for ell in range(-placebo_horizon, dynamic_horizon + 1):
        total = 0
        for r in switch_rows:
            t = int(fsw[r])
            cols = _cell_columns(panel, t, ell)
            if cols is None:
                continue
            far, base = cols
            if not (panel.observed[r, far] and panel.observed[r, base]):
                continue
            cutoff = _control_cutoff(t, ell)
            if control_rule == "never":
                eligible = ~np.isfinite(fsw)
            else:
                eligible = fsw > cutoff
            eligible = eligible & panel.observed[:, far] & panel.observed[:, base]
            eligible[r] = False
            if eligible.any():
                total += 1
        counts[ell] = total
    return SwitcherCounts(counts)
