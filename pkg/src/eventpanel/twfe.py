"""Classical two-way fixed-effects estimators and their bias diagnostics.

The static regression projects outcome and treatment on unit and period
effects and regresses residual on residual; the dynamic variant replaces
the single indicator with event-time dummies (optionally endpoint-binned).
``twfe_weights`` reports the implicit weight each treated cell receives in
the static estimand, the source of sign reversals under heterogeneity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.stats

from .errors import InvalidConfig, RankDeficient, Underidentified
from .panel import Panel
from .regress import DesignMatrix, cluster_vcov, demean_two_way, ols
from .series import EstimateSeries


@dataclass(frozen=True)
class TwfeSpec:
    """Dynamic event-study specification (Appendix-style).

    ``leads``/``lags`` bound the included event-time indicators at
    [-leads, -2] and [0, lags] (with ``omitted_lead`` dropped for
    normalization); ``bin_endpoints`` makes the terminal indicators absorb
    all more-extreme event times.
    """

    mode: str = "dynamic"
    leads: int = 25
    lags: int = 30
    bin_endpoints: bool = False
    omitted_lead: int = -1
    trend_controls: str = "none"
    ci_level: float = 0.95

    def __post_init__(self):
        if self.mode not in ("static", "dynamic"):
            raise InvalidConfig("mode must be 'static' or 'dynamic'")
        if self.mode == "dynamic":
            if self.leads < 1 or self.lags < 0:
                raise InvalidConfig("dynamic spec needs leads >= 1 and lags >= 0")
            if not (-self.leads <= self.omitted_lead <= -1):
                raise InvalidConfig("omitted_lead must lie in [-leads, -1]")
        if self.trend_controls not in ("none", "unit-linear"):
            raise InvalidConfig("trend_controls must be 'none' or 'unit-linear'")


@dataclass(frozen=True)
class StaticResult:
    """Static TWFE coefficient with cluster-robust uncertainty."""

    estimate: float
    se: float
    vcov: float
    n_obs: int
    n_units: int
    dof: int

    def formatted(self, digits: int = 3) -> str:
        return f"{self.estimate:.{digits}f} ({self.se:.{digits}f})"


@dataclass(frozen=True)
class TwfeWeightReport:
    """Implicit static-TWFE weights on treated cells.

    Weights are proportional to the two-way-demeaned treatment indicator
    and normalized to sum to one over treated cells; the static estimate
    equals the weight-weighted sum of per-cell effects.
    """

    units: np.ndarray
    periods: np.ndarray
    weights: np.ndarray

    @property
    def share_negative(self) -> float:
        return float(np.mean(self.weights < 0)) if self.weights.size else 0.0

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def min_weight(self) -> float:
        return float(self.weights.min()) if self.weights.size else float("nan")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "unit": self.units.astype(str),
            "period": self.periods,
            "weight": self.weights,
        })

    def to_csv(self, path, manifest: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if manifest is not None:
                fh.write(f"# manifest: {manifest}\n")
            self.to_frame().to_csv(fh, index=False)


def _long_arrays(panel: Panel):
    rows, cols = np.nonzero(panel.observed)
    y = panel.outcome[rows, cols]
    units = rows                       # integer codes are fine as labels
    periods = panel.periods[cols]
    treated = (panel.treated[rows, cols] == 1).astype(np.float64)
    return rows, cols, y, units, periods, treated


def _absorbed_dof(panel: Panel, unit_trends: bool) -> int:
    base = panel.n_units + len(np.unique(np.nonzero(panel.observed)[1])) - 1
    return base + (panel.n_units if unit_trends else 0)


def exclude_always_treated(panel: Panel) -> Panel:
    """Drop units already treated at their first observed period."""
    keep = np.nonzero(~panel.always_treated)[0]
    if keep.size == panel.n_units:
        return panel
    return panel.restrict_units(keep)


def twfe_static(panel: Panel, *, trend_controls: str = "none", ci_level: float = 0.95) -> StaticResult:
    """Static TWFE: outcome on treatment after two-way demeaning.

    Cluster-robust variance at the unit level.  Raises ``RankDeficient``
    when treatment shows no within variation (e.g. an all-untreated panel).
    """
    _, _, y, units, periods, treated = _long_arrays(panel)
    unit_trends = trend_controls == "unit-linear"
    mat = np.column_stack([y, treated])
    dem = demean_two_way(mat, units, periods, unit_trends=unit_trends)
    y_t, d_t = dem[:, 0], dem[:, 1]
    if np.abs(d_t).max() < 1e-10:
        raise RankDeficient(["treated"])
    design = DesignMatrix(("treated",), d_t[:, None], y_t)
    fit = ols(design, absorbed_dof=_absorbed_dof(panel, unit_trends))
    vc = cluster_vcov(fit, design, units)
    se = float(np.sqrt(vc[0, 0]))
    return StaticResult(
        estimate=fit.coefficients["treated"],
        se=se,
        vcov=float(vc[0, 0]),
        n_obs=design.n,
        n_units=panel.n_units,
        dof=fit.dof,
    )


def twfe_event_study(panel: Panel, spec: TwfeSpec) -> EstimateSeries:
    """Unrestricted (or endpoint-binned) dynamic TWFE event study.

    Event-time indicators are zero for never-treated units; the omitted
    lead is reported as an exact zero.  Collinear indicator sets raise
    ``Underidentified`` naming the dependent columns.
    """
    if spec.mode != "dynamic":
        raise InvalidConfig("twfe_event_study requires a dynamic spec")
    _, _, y, units, periods, treated = _long_arrays(panel)
    fsw = panel.first_switch_period
    rows = np.nonzero(panel.observed)[0]
    ever = np.isfinite(fsw[rows])
    event = np.where(ever, periods - fsw[rows], np.nan)

    ks = [k for k in range(-spec.leads, spec.lags + 1) if k != spec.omitted_lead]
    if not ever.any():
        raise RankDeficient(["event indicators"])

    columns = []
    names = []
    n_units_at = {}
    unsupported = []
    for k in ks:
        if spec.bin_endpoints and k == -spec.leads:
            ind = ever & (event <= k)
        elif spec.bin_endpoints and k == spec.lags:
            ind = ever & (event >= k)
        else:
            ind = ever & (event == k)
        n_units_at[k] = int(np.unique(rows[ind]).size)
        if not ind.any():
            unsupported.append(k)  # no such event time in the data
            continue
        columns.append(ind.astype(np.float64))
        names.append(f"event[{k}]")
    if not columns:
        raise RankDeficient(["event indicators"])
    X = np.column_stack(columns)

    unit_trends = spec.trend_controls == "unit-linear"
    mat = np.column_stack([y, X])
    dem = demean_two_way(mat, units, periods, unit_trends=unit_trends)
    design = DesignMatrix(tuple(names), dem[:, 1:], dem[:, 0])
    try:
        fit = ols(design, absorbed_dof=_absorbed_dof(panel, unit_trends))
    except RankDeficient as err:
        raise Underidentified(err.columns) from None
    vc = cluster_vcov(fit, design, units)

    z = scipy.stats.norm.ppf(1.0 - (1.0 - spec.ci_level) / 2.0)
    events_out = np.array(sorted(ks + [spec.omitted_lead]), dtype=np.int64)
    est = np.zeros(len(events_out))
    se = np.zeros(len(events_out))
    nsw = np.zeros(len(events_out), dtype=np.int64)
    identified = np.ones(len(events_out), dtype=bool)
    for i, k in enumerate(events_out):
        if k == spec.omitted_lead:
            continue
        nsw[i] = n_units_at[int(k)]
        if int(k) in unsupported:
            est[i] = se[i] = np.nan
            identified[i] = False
            continue
        j = names.index(f"event[{k}]")
        est[i] = fit.coefficients[names[j]]
        se[i] = float(np.sqrt(vc[j, j]))
    return EstimateSeries(
        event_time=events_out,
        estimate=est,
        se=se,
        ci_low=est - z * se,
        ci_high=est + z * se,
        n_switchers=nsw,
        identified=identified,
        label="twfe",
    )


def twfe_weights(panel: Panel) -> TwfeWeightReport:
    """Implicit static-TWFE weight of every treated (unit, period) cell."""
    rows, cols, _, units, periods, treated = _long_arrays(panel)
    if not (treated == 1).any():
        raise RankDeficient(["treated"])
    d_t = demean_two_way(treated, units, periods)
    on = treated == 1
    total = d_t[on].sum()
    if abs(total) < 1e-12:
        raise RankDeficient(["treated"])
    w = d_t[on] / total
    return TwfeWeightReport(
        units=panel.units[rows[on]],
        periods=periods[on].astype(np.int64),
        weights=w,
    )
