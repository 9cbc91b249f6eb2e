"""Higher-level study designs.

Three pieces: the neighbor-spillover placebo (never-treated units inherit a
synthetic treatment when an adjacent unit gains access), the
initial-condition median split, and stratified cross-sectional
difference-in-means regressions on aggregated plant outcomes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import pandas as pd

from . import robust
from .errors import InvalidConfig, NegativeValue, NoMatches, PanelFormatError
from .panel import CohortMap, Panel, baseline_values, cohorts
from .regress import DesignMatrix, hc1_vcov, ols

PLANT_COLUMNS = ("unit", "sector", "year", "production_value", "employment")
SECTORS = tuple(range(1, 10))


# ---------------------------------------------------------------------------
# adjacency
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdjacencyGraph:
    """Undirected unit adjacency with optional edge distances.

    Edges are stored canonically (sorted pairs, deduplicated) so results
    never depend on input order.
    """

    edges: tuple[tuple[str, str], ...]
    distances: Mapping[tuple[str, str], float] | None = None

    @classmethod
    def from_pairs(cls, pairs, distances: Mapping | None = None) -> "AdjacencyGraph":
        canon = set()
        dist: dict[tuple[str, str], float] = {}
        for pair in pairs:
            a, b = str(pair[0]), str(pair[1])
            if a == b:
                raise InvalidConfig(f"self-edge on unit {a!r}")
            key = (a, b) if a < b else (b, a)
            canon.add(key)
            if distances is not None:
                raw = distances.get((a, b), distances.get((b, a)))
                if raw is not None:
                    d = float(raw)
                    if d < 0:
                        raise InvalidConfig(f"negative distance on edge {key}")
                    dist[key] = d
        edges = tuple(sorted(canon))
        return cls(edges, dist if distances is not None else None)

    @classmethod
    def read_csv(cls, path) -> "AdjacencyGraph":
        frame = pd.read_csv(path, comment="#", dtype={"unit_a": str, "unit_b": str})
        missing = [c for c in ("unit_a", "unit_b") if c not in frame.columns]
        if missing:
            raise PanelFormatError(f"adjacency file lacks columns: {missing}")
        pairs = list(zip(frame["unit_a"], frame["unit_b"]))
        distances = None
        if "distance" in frame.columns:
            distances = {
                (str(a), str(b)): float(d)
                for a, b, d in zip(frame["unit_a"], frame["unit_b"], frame["distance"])
            }
        return cls.from_pairs(pairs, distances)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for a, b in self.edges:
            row = {"unit_a": a, "unit_b": b}
            if self.distances is not None:
                row["distance"] = self.distances.get((a, b), math.nan)
            rows.append(row)
        return pd.DataFrame(rows, columns=["unit_a", "unit_b"] + (
            ["distance"] if self.distances is not None else []))

    def neighbors(self, unit: str) -> tuple[str, ...]:
        unit = str(unit)
        out = [b if a == unit else a for a, b in self.edges if unit in (a, b)]
        return tuple(sorted(out))

    def distance(self, a: str, b: str) -> float | None:
        if self.distances is None:
            return None
        key = (a, b) if a < b else (b, a)
        return self.distances.get(key)


# ---------------------------------------------------------------------------
# neighbor-spillover design
# ---------------------------------------------------------------------------


@dataclass
class SpilloverResult:
    """Spillover panel plus the matching report."""

    panel: Panel
    n_source_never: int
    n_matched: int
    dropped: tuple[str, ...]

    def report(self) -> dict:
        return {
            "never_treated_units": self.n_source_never,
            "matched_units": self.n_matched,
            "dropped_no_treated_neighbor": len(self.dropped),
            "dropped_units": list(self.dropped),
        }


def build_spillover_panel(
    panel: Panel,
    cohort_map: CohortMap | None,
    graph: AdjacencyGraph,
    *,
    mode: str = "adjacency",
    k_nearest: int = 1,
) -> SpilloverResult:
    """Restrict to never-treated units and switch them on via neighbors.

    A unit's synthetic treatment turns on at the earliest first switch
    among its ever-treated neighbors (all adjacent ones by default, the
    ``k_nearest`` by distance in 'nearest' mode).  Never-treated units
    without an ever-treated neighbor are dropped and reported.
    """
    if mode not in ("adjacency", "nearest"):
        raise InvalidConfig("mode must be 'adjacency' or 'nearest'")
    if mode == "nearest" and graph.distances is None:
        raise InvalidConfig("'nearest' matching requires edge distances")
    cm = cohort_map or cohorts(panel)
    never = sorted(cm.never_treated)
    rows, nominal, dropped = [], [], []
    for unit in never:
        treated_neighbors = [
            (v, cm.first_switch[v]) for v in graph.neighbors(unit) if v in cm.first_switch
        ]
        if mode == "nearest" and treated_neighbors:
            treated_neighbors.sort(
                key=lambda item: (
                    math.inf if graph.distance(unit, item[0]) is None else graph.distance(unit, item[0]),
                    item[0],
                )
            )
            treated_neighbors = treated_neighbors[:k_nearest]
        if not treated_neighbors:
            dropped.append(unit)
            continue
        rows.append(panel.unit_row(unit))
        nominal.append(min(fs for _, fs in treated_neighbors))
    if not rows:
        raise NoMatches("no never-treated unit has an ever-treated neighbor")
    rows = np.asarray(rows, dtype=np.intp)
    sub = panel.restrict_units(rows)
    spill = Panel(
        sub.units, sub.period_start, sub.period_end,
        sub.outcome, sub.observed, np.asarray(nominal, dtype=np.float64),
        meta={**sub.meta, "design": "spillover"}, extras=sub.extras,
    )
    return SpilloverResult(
        panel=spill,
        n_source_never=len(never),
        n_matched=len(rows),
        dropped=tuple(dropped),
    )


def spillover_event_study(
    spillover: SpilloverResult | Panel,
    *,
    lags: int = 20,
    leads: int = 15,
    weighting: str = "equal",
    control_rule: str = "not-yet",
    inference=None,
    return_bootstrap: bool = False,
):
    """Event study of the neighbor-exposure placebo (delegates to robust)."""
    panel = spillover.panel if isinstance(spillover, SpilloverResult) else spillover
    out = robust.event_study(
        panel, lags=lags, leads=leads, weighting=weighting,
        control_rule=control_rule, inference=inference,
        return_bootstrap=return_bootstrap,
    )
    if return_bootstrap:
        series, boot = out
        series.label = "spillover"
        return series, boot
    out.label = "spillover"
    return out


# ---------------------------------------------------------------------------
# initial-condition split
# ---------------------------------------------------------------------------


@dataclass
class SplitResult:
    """Median split on the baseline outcome; ties go to the low group."""

    low: Panel
    high: Panel | None
    dropped: tuple[str, ...]
    threshold: float


def split_by_initial(panel: Panel, baseline_period: int) -> SplitResult:
    """Split units at the median outcome of ``baseline_period``.

    Units not observed at the baseline are dropped and reported.  When all
    baseline values are identical the high group is empty and a warning is
    emitted.
    """
    values, avail = baseline_values(panel, baseline_period)
    median = float(np.median(values[avail]))
    low_mask = avail & (values <= median)
    high_mask = avail & (values > median)
    dropped = tuple(str(u) for u in panel.units[~avail])
    low = panel.restrict_units(np.nonzero(low_mask)[0])
    if not high_mask.any():
        warnings.warn(
            f"all baseline values at period {baseline_period} fall at or below the "
            "median; high group is empty",
            stacklevel=2,
        )
        high = None
    else:
        high = panel.restrict_units(np.nonzero(high_mask)[0])
    return SplitResult(low=low, high=high, dropped=dropped, threshold=median)


# ---------------------------------------------------------------------------
# cross-sectional design
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StratumRow:
    """One regression entry of the strata table."""

    group: str
    stratum: str
    estimate: float
    se: float
    n_treated: int
    n_control: int
    available: bool

    @property
    def n_total(self) -> int:
        return self.n_treated + self.n_control

    def formatted(self, digits: int = 2) -> str:
        if not self.available:
            return "n/a"
        return f"{self.estimate:.{digits}f} ({self.se:.{digits}f})"

    def summary_line(self) -> str:
        label = "all sectors" if self.stratum == "all" else f"sector {self.stratum}"
        if not self.available:
            return f"{label}: unavailable (n_treated={self.n_treated}, n_control={self.n_control})"
        return f"{label}: {self.formatted()}, n={self.n_total}"


@dataclass
class StrataTable:
    """Per-stratum difference-in-means regressions (table layout helpers)."""

    rows: list[StratumRow]

    def row(self, group: str, stratum: str) -> StratumRow:
        for r in self.rows:
            if r.group == group and r.stratum == stratum:
                return r
        raise KeyError((group, stratum))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([
            {
                "group": r.group,
                "stratum": r.stratum,
                "estimate": r.estimate,
                "se": r.se,
                "n_treated": r.n_treated,
                "n_control": r.n_control,
                "available": int(r.available),
            }
            for r in self.rows
        ])

    def to_wide_frame(self) -> pd.DataFrame:
        """Paper-style layout: strata as columns, one entry+obs block per group."""
        strata = sorted({r.stratum for r in self.rows}, key=lambda s: (s != "all", s))
        groups = sorted({r.group for r in self.rows}, key=lambda g: (g != "all", g))
        records = []
        for g in groups:
            entry = {"group": g, "row": "railway"}
            obs = {"group": g, "row": "observations"}
            for s in strata:
                try:
                    r = self.row(g, s)
                except KeyError:
                    entry[s], obs[s] = "", ""
                    continue
                entry[s] = r.formatted()
                obs[s] = r.n_total if r.available else 0
            records.append(entry)
            records.append(obs)
        return pd.DataFrame(records, columns=["group", "row"] + strata)

    def to_csv(self, path, manifest: str | None = None, wide: bool = True) -> None:
        frame = self.to_wide_frame() if wide else self.to_frame()
        with open(path, "w", newline="") as fh:
            if manifest is not None:
                fh.write(f"# manifest: {manifest}\n")
            frame.to_csv(fh, index=False)

    def to_json_obj(self, manifest: dict | None = None) -> dict:
        obj = {"rows": [
            {
                "group": r.group,
                "stratum": r.stratum,
                "estimate": None if not np.isfinite(r.estimate) else r.estimate,
                "se": None if not np.isfinite(r.se) else r.se,
                "n_treated": r.n_treated,
                "n_control": r.n_control,
                "available": r.available,
            }
            for r in self.rows
        ]}
        if manifest is not None:
            obj["manifest"] = manifest
        return obj


def difference_in_means(
    outcomes: Mapping[str, float],
    rail: Mapping[str, bool],
    *,
    group: str = "all",
    stratum: str = "all",
) -> StratumRow:
    """OLS of outcome on an intercept and the rail indicator, HC1 errors.

    The slope equals the treated-minus-control mean difference exactly.
    Strata with fewer than two treated or two control units are marked
    unavailable rather than fitted.
    """
    units = sorted(u for u in outcomes if u in rail)
    y = np.array([float(outcomes[u]) for u in units])
    d = np.array([1.0 if rail[u] else 0.0 for u in units])
    n_treated = int(d.sum())
    n_control = len(units) - n_treated
    if n_treated < 2 or n_control < 2:
        return StratumRow(group, stratum, math.nan, math.nan, n_treated, n_control, False)
    design = DesignMatrix(("intercept", "railway"), np.column_stack([np.ones_like(d), d]), y)
    fit = ols(design)
    vc = hc1_vcov(fit, design)
    return StratumRow(
        group=group,
        stratum=stratum,
        estimate=fit.coefficients["railway"],
        se=float(np.sqrt(vc[1, 1])),
        n_treated=n_treated,
        n_control=n_control,
        available=True,
    )


def cross_sectional(
    outcomes: Mapping[str, float],
    rail: Mapping[str, bool],
    strata: Mapping[str, str] | None = None,
) -> StrataTable:
    """One difference-in-means regression per stratum label.

    ``strata`` maps units to disjoint stratum labels; omit it for a single
    'all' stratum.  Understrength strata are flagged, never dropped.
    """
    if strata is None:
        return StrataTable([difference_in_means(outcomes, rail)])
    labels = sorted({str(v) for u, v in strata.items() if u in outcomes})
    rows = []
    for label in labels:
        sub = {u: outcomes[u] for u in outcomes if u in strata and str(strata[u]) == label}
        rows.append(difference_in_means(sub, rail, stratum=label))
    return StrataTable(rows)


# ---------------------------------------------------------------------------
# plant-level aggregation
# ---------------------------------------------------------------------------


def read_plants(path) -> pd.DataFrame:
    frame = pd.read_csv(path, comment="#", dtype={"unit": str})
    missing = [c for c in PLANT_COLUMNS if c not in frame.columns]
    if missing:
        raise PanelFormatError(f"plant file lacks columns: {missing}")
    return frame


def aggregate_plant_outcomes(plants, window: tuple[int, int]) -> pd.DataFrame:
    """Sum plant production and employment per (unit, sector) over a window.

    Sector 'all' rows hold each unit's total across sectors.  Zero sums
    become NaN (absent): the source statistics omit small firms rather
    than recording zeros.
    """
    if not isinstance(plants, pd.DataFrame):
        plants = read_plants(plants)
    frame = plants.copy()
    frame["unit"] = frame["unit"].astype(str)
    sectors = frame["sector"].to_numpy()
    if not np.isin(sectors, SECTORS).all():
        bad = sorted(set(sectors) - set(SECTORS))
        raise PanelFormatError(f"sector codes must be 1..9, got {bad}")
    for col in ("production_value", "employment"):
        vals = frame[col].to_numpy(dtype=np.float64)
        neg = vals < 0
        if neg.any():
            i = int(np.argmax(neg))
            raise NegativeValue(str(frame["unit"].iloc[i]), col, float(vals[i]))
    lo, hi = window
    frame = frame[(frame["year"] >= lo) & (frame["year"] <= hi)]
    by_sector = (
        frame.groupby(["unit", "sector"], as_index=False)[["production_value", "employment"]]
        .sum()
    )
    by_sector["sector"] = by_sector["sector"].astype(str)
    totals = frame.groupby("unit", as_index=False)[["production_value", "employment"]].sum()
    totals.insert(1, "sector", "all")
    out = pd.concat([totals, by_sector], ignore_index=True)
    for col in ("production_value", "employment"):
        out.loc[out[col] == 0, col] = np.nan
    return out.sort_values(["unit", "sector"]).reset_index(drop=True)


def plant_study(
    plants,
    rail: Mapping[str, bool],
    window: tuple[int, int],
    *,
    groups: Mapping[str, str] | None = None,
    outcome: str = "production_value",
) -> StrataTable:
    """Tables-style strata grid: (all + sectors 1..9) x (all + groups).

    The regression outcome is the log of the aggregated sum (not the
    aggregate of logs).  Sector strata overlap across units, so each entry
    is its own regression on the units present in that stratum.
    """
    if outcome not in ("production_value", "employment"):
        raise InvalidConfig("outcome must be production_value or employment")
    agg = aggregate_plant_outcomes(plants, window)
    group_labels = ["all"]
    if groups is not None:
        group_labels += sorted({str(v) for v in groups.values()})
    rows: list[StratumRow] = []
    for stratum in ["all"] + [str(s) for s in SECTORS]:
        sub = agg[(agg["sector"] == stratum) & np.isfinite(agg[outcome])]
        outcomes_all = {
            str(u): math.log(v)
            for u, v in zip(sub["unit"], sub[outcome])
            if str(u) in rail
        }
        for glabel in group_labels:
            if glabel == "all":
                outcomes = outcomes_all
            else:
                outcomes = {
                    u: v for u, v in outcomes_all.items()
                    if groups is not None and str(groups.get(u)) == glabel
                }
            rows.append(difference_in_means(outcomes, rail, group=glabel, stratum=stratum))
    return StrataTable(rows)
