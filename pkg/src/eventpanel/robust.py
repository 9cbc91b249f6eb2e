"""Heterogeneity-robust staggered DID estimator.

Instantaneous and dynamic effects compare each switcher's outcome evolution
from its last untreated period t-1 to t+ell against the mean evolution of
units not yet treated at t+ell.  Long-difference placebos mirror that
comparison over pre-treatment windows of the same length: the placebo of
horizon k measures the deviation of t-1-k relative to t-1 among units not
yet treated at t-1+k, and is reported at event time -1-k so that series
plot directly against TWFE lead coefficients.

Every horizon is estimated independently: deleting data beyond one
horizon's cells never changes the others.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, NoSwitchers
from .panel import CohortMap, Panel, _cell_columns, _control_cutoff
from .series import CellDid, EstimateSeries

CONTROL_RULES = ("not-yet", "never")


def _first_switch_array(panel: Panel, cohort_map: CohortMap | None) -> tuple[np.ndarray, np.ndarray]:
    """(first_switch, always_treated) arrays aligned to panel rows."""
    if cohort_map is None:
        return panel.first_switch_period, panel.always_treated
    fsw = np.full(panel.n_units, np.inf)
    always = np.zeros(panel.n_units, dtype=bool)
    for i, u in enumerate(panel.units):
        u = str(u)
        if u in cohort_map.first_switch:
            fsw[i] = cohort_map.first_switch[u]
            always[i] = u in cohort_map.always_treated
    return fsw, always


def _unit_weights(panel: Panel, weighting: str) -> np.ndarray:
    if weighting in (None, "equal"):
        return np.ones(panel.n_units)
    if isinstance(weighting, str) and weighting.startswith(("column=", "column:")):
        return panel.unit_weight(weighting[7:])
    raise InvalidConfig(f"unknown weighting rule {weighting!r}")


@dataclass
class _HorizonData:
    """Precomputed cell structure for one event time (cell convention)."""

    event: int
    cohort_periods: np.ndarray   # (C,) switch periods with an identifiable window
    ctrl_w: np.ndarray           # (n, C) 1.0 where the unit is an eligible control
    ctrl_diff: np.ndarray        # (n, C) outcome evolution, 0 where ineligible
    sw_rows: np.ndarray          # (S,) panel row of each switcher cell candidate
    sw_diff: np.ndarray          # (S,)
    sw_cohort: np.ndarray        # (S,) column index into cohort_periods


class BoundEstimator:
    """Robust estimator bound to one panel, reusable across bootstrap draws."""

    def __init__(
        self,
        panel: Panel,
        cohort_map: CohortMap | None = None,
        *,
        lags: int = 30,
        leads: int = 25,
        weighting: str = "equal",
        control_rule: str = "not-yet",
    ):
        if lags < 0 or leads < 0:
            raise InvalidConfig("horizons must be non-negative")
        if control_rule not in CONTROL_RULES:
            raise InvalidConfig(f"control rule must be one of {CONTROL_RULES}")
        self.panel = panel
        self.lags, self.leads = int(lags), int(leads)
        self.control_rule = control_rule
        self.weights = _unit_weights(panel, weighting)
        self.fsw, self.always = _first_switch_array(panel, cohort_map)
        self.is_switcher = np.isfinite(self.fsw) & ~self.always
        if not self.is_switcher.any():
            raise NoSwitchers("panel contains no switcher units")
        # cell events: placebos -leads..-1, dynamics 0..lags
        self.cell_events = list(range(-self.leads, self.lags + 1))
        self.horizons = {e: self._build_horizon(e) for e in self.cell_events}
        # series axis: placebo k at -1-k, reference at -1, dynamics at e
        self.series_events = np.array(
            sorted([-1 - k for k in range(1, self.leads + 1)] + [-1] + list(range(self.lags + 1))),
            dtype=np.int64,
        )

    # -- construction ----------------------------------------------------

    def _build_horizon(self, event: int) -> _HorizonData:
        panel, fsw = self.panel, self.fsw
        n = panel.n_units
        obs = panel.observed
        cohort_periods, ctrl_w_cols, ctrl_diff_cols = [], [], []
        sw_rows, sw_diff, sw_cohort = [], [], []
        switch_values = np.unique(fsw[self.is_switcher])
        for t in switch_values:
            t = int(t)
            cols = _cell_columns(panel, t, event)
            if cols is None:
                continue
            far, base = cols
            both = obs[:, far] & obs[:, base]
            cutoff = _control_cutoff(t, event)
            if self.control_rule == "never":
                eligible = ~np.isfinite(fsw) & both
            else:
                eligible = (fsw > cutoff) & both
            eligible &= ~self.always
            if not eligible.any():
                continue
            diff = panel.outcome[:, far] - panel.outcome[:, base]
            members = np.nonzero(self.is_switcher & (fsw == t) & both)[0]
            if members.size == 0:
                continue
            c = len(cohort_periods)
            cohort_periods.append(t)
            ctrl_w_cols.append(np.where(eligible, 1.0, 0.0))
            ctrl_diff_cols.append(np.where(eligible, diff, 0.0))
            sw_rows.extend(members.tolist())
            sw_diff.extend(diff[members].tolist())
            sw_cohort.extend([c] * members.size)
        if cohort_periods:
            ctrl_w = np.column_stack(ctrl_w_cols)
            ctrl_diff = np.column_stack(ctrl_diff_cols)
        else:
            ctrl_w = np.zeros((n, 0))
            ctrl_diff = np.zeros((n, 0))
        return _HorizonData(
            event=event,
            cohort_periods=np.asarray(cohort_periods, dtype=np.int64),
            ctrl_w=ctrl_w,
            ctrl_diff=ctrl_diff,
            sw_rows=np.asarray(sw_rows, dtype=np.intp),
            sw_diff=np.asarray(sw_diff, dtype=np.float64),
            sw_cohort=np.asarray(sw_cohort, dtype=np.intp),
        )

    # -- estimation -------------------------------------------------------

    def _horizon_estimate(self, hd: _HorizonData, m: np.ndarray | None):
        """(estimate, n_cells) for one horizon under unit multiplicities m."""
        if hd.cohort_periods.size == 0:
            return np.nan, 0
        if m is None:
            cw = hd.ctrl_w.sum(axis=0)
            csum = hd.ctrl_diff.sum(axis=0)
            mw_sw = self.weights[hd.sw_rows]
        else:
            cw = hd.ctrl_w.T @ m
            csum = hd.ctrl_diff.T @ m
            mw_sw = (self.weights * m)[hd.sw_rows]
        with np.errstate(invalid="ignore", divide="ignore"):
            cm = np.where(cw > 0, csum / np.where(cw > 0, cw, 1.0), np.nan)
        valid = (cw[hd.sw_cohort] > 0) & (mw_sw > 0)
        denom = mw_sw[valid].sum()
        if denom <= 0:
            return np.nan, 0
        values = hd.sw_diff[valid] - cm[hd.sw_cohort[valid]]
        est = float((mw_sw[valid] * values).sum() / denom)
        return est, int(np.count_nonzero(valid))

    def _collect_cells(self, hd: _HorizonData) -> list[CellDid]:
        cells = []
        cw = hd.ctrl_w.sum(axis=0)
        csum = hd.ctrl_diff.sum(axis=0)
        for i in range(hd.sw_rows.size):
            c = hd.sw_cohort[i]
            if cw[c] <= 0:
                continue
            cells.append(CellDid(
                switcher=str(self.panel.units[hd.sw_rows[i]]),
                switch_period=int(hd.cohort_periods[c]),
                event_time=hd.event,
                value=float(hd.sw_diff[i] - csum[c] / cw[c]),
                control_count=int(cw[c]),
            ))
        return cells

    def point_series(self, collect_cells: bool = False) -> EstimateSeries:
        """Full event-study series: placebos, reference point, dynamics."""
        h = len(self.series_events)
        est = np.zeros(h)
        nsw = np.zeros(h, dtype=np.int64)
        identified = np.zeros(h, dtype=bool)
        cells: dict[int, list[CellDid]] | None = {} if collect_cells else None
        for i, se_event in enumerate(self.series_events):
            if se_event == -1:
                est[i], identified[i] = 0.0, True
                continue
            cell_event = se_event if se_event >= 0 else -(-se_event - 1)
            hd = self.horizons[cell_event]
            est[i], nsw[i] = self._horizon_estimate(hd, None)
            identified[i] = nsw[i] > 0
            if not identified[i]:
                est[i] = np.nan
            if cells is not None:
                cells[int(se_event)] = self._collect_cells(hd)
        nan = np.full(h, np.nan)
        return EstimateSeries(
            event_time=self.series_events.copy(),
            estimate=est,
            se=nan.copy(),
            ci_low=nan.copy(),
            ci_high=nan.copy(),
            n_switchers=nsw,
            identified=identified,
            label="robust",
            cells=cells,
        )

    def estimates_for_multiplicity(self, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Series estimates under a unit-multiplicity vector (bootstrap path)."""
        h = len(self.series_events)
        est = np.full(h, np.nan)
        identified = np.zeros(h, dtype=bool)
        for i, se_event in enumerate(self.series_events):
            if se_event == -1:
                est[i], identified[i] = 0.0, True
                continue
            cell_event = se_event if se_event >= 0 else -(-se_event - 1)
            value, ncells = self._horizon_estimate(self.horizons[cell_event], m)
            if ncells > 0:
                est[i], identified[i] = value, True
        return est, identified


class RobustEstimator:
    """Reusable estimator handle: configuration without a panel.

    Calling the handle estimates the full series on a panel; ``bind``
    exposes the precomputed form used by the cluster bootstrap.
    """

    def __init__(self, *, lags: int = 30, leads: int = 25,
                 weighting: str = "equal", control_rule: str = "not-yet"):
        self.lags, self.leads = lags, leads
        self.weighting, self.control_rule = weighting, control_rule

    def bind(self, panel: Panel, cohort_map: CohortMap | None = None) -> BoundEstimator:
        return BoundEstimator(
            panel, cohort_map, lags=self.lags, leads=self.leads,
            weighting=self.weighting, control_rule=self.control_rule,
        )

    def __call__(self, panel: Panel) -> EstimateSeries:
        return self.bind(panel).point_series()


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def cell_did(
    panel: Panel,
    cohort_map: CohortMap,
    switcher: str,
    event_time: int,
    control_rule: str = "not-yet",
) -> CellDid | None:
    """One simple DID cell for a switcher, or None when unidentified.

    ``event_time`` follows the cell convention: non-negative horizons use
    periods {t-1, t+ell}; negative ones use {t-1+ell, t-1} and measure the
    earlier period's deviation relative to t-1.
    """
    if switcher not in cohort_map.first_switch or switcher in cohort_map.always_treated:
        raise NoSwitchers(f"unit {switcher!r} is not a switcher")
    t = cohort_map.first_switch[switcher]
    cols = _cell_columns(panel, t, event_time)
    if cols is None:
        return None
    far, base = cols
    row = panel.unit_row(switcher)
    if not (panel.observed[row, far] and panel.observed[row, base]):
        return None
    fsw, always = _first_switch_array(panel, cohort_map)
    cutoff = _control_cutoff(t, event_time)
    if control_rule == "never":
        eligible = ~np.isfinite(fsw)
    elif control_rule == "not-yet":
        eligible = fsw > cutoff
    else:
        raise InvalidConfig(f"control rule must be one of {CONTROL_RULES}")
    eligible = eligible & panel.observed[:, far] & panel.observed[:, base] & ~always
    eligible[row] = False
    count = int(eligible.sum())
    if count == 0:
        return None
    own = panel.outcome[row, far] - panel.outcome[row, base]
    ctrl = panel.outcome[eligible, far] - panel.outcome[eligible, base]
    return CellDid(
        switcher=switcher,
        switch_period=int(t),
        event_time=int(event_time),
        value=float(own - ctrl.mean()),
        control_count=count,
    )


def dynamic_effects(
    panel: Panel,
    cohort_map: CohortMap | None = None,
    horizon: int = 30,
    *,
    weighting: str = "equal",
    control_rule: str = "not-yet",
    collect_cells: bool = False,
) -> EstimateSeries:
    """Instantaneous and dynamic effects for event times 0..horizon."""
    bound = BoundEstimator(
        panel, cohort_map, lags=horizon, leads=0,
        weighting=weighting, control_rule=control_rule,
    )
    full = bound.point_series(collect_cells=collect_cells)
    return _slice_series(full, full.event_time >= 0, "robust-dynamic")


def placebo_effects(
    panel: Panel,
    cohort_map: CohortMap | None = None,
    horizon: int = 25,
    *,
    weighting: str = "equal",
    control_rule: str = "not-yet",
    collect_cells: bool = False,
) -> EstimateSeries:
    """Long-difference placebos for horizons 1..horizon.

    Reported at event times -1-k; values are oriented as in event-study
    figures (deviation of the pre-period relative to the t-1 reference).
    """
    if horizon < 1:
        raise InvalidConfig("placebo horizon must be at least 1")
    bound = BoundEstimator(
        panel, cohort_map, lags=0, leads=horizon,
        weighting=weighting, control_rule=control_rule,
    )
    full = bound.point_series(collect_cells=collect_cells)
    return _slice_series(full, full.event_time <= -2, "robust-placebo")


def event_study(
    panel: Panel,
    cohort_map: CohortMap | None = None,
    *,
    lags: int = 30,
    leads: int = 25,
    weighting: str = "equal",
    control_rule: str = "not-yet",
    inference=None,
    collect_cells: bool = False,
    return_bootstrap: bool = False,
):
    """Full event-study series (-1-leads .. lags) with optional bootstrap.

    ``inference`` is a :class:`eventpanel.inference.BootstrapConfig`; when
    given, unit-level bootstrap standard errors and percentile confidence
    intervals are attached to the series.
    """
    bound = BoundEstimator(
        panel, cohort_map, lags=lags, leads=leads,
        weighting=weighting, control_rule=control_rule,
    )
    series = bound.point_series(collect_cells=collect_cells)
    boot = None
    if inference is not None:
        from .inference import bootstrap_bound

        boot = bootstrap_bound(bound, series, inference)
        series = boot.apply_to(series)
    if return_bootstrap:
        return series, boot
    return series


def _slice_series(series: EstimateSeries, mask: np.ndarray, label: str) -> EstimateSeries:
    cells = None
    if series.cells is not None:
        kept = set(series.event_time[mask].tolist())
        cells = {t: c for t, c in series.cells.items() if t in kept}
    return EstimateSeries(
        event_time=series.event_time[mask],
        estimate=series.estimate[mask],
        se=series.se[mask],
        ci_low=series.ci_low[mask],
        ci_high=series.ci_high[mask],
        n_switchers=series.n_switchers[mask],
        identified=series.identified[mask],
        label=label,
        cells=cells,
        extras={k: np.asarray(v)[mask] for k, v in series.extras.items()},
    )
