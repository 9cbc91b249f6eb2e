"""Uncertainty quantification: unit-level block bootstrap and pre-trend Wald.

Replication r draws its resample from a counter-based generator keyed by
(seed, r), so results are independent of execution order and identical
across runs for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.stats

from .errors import InvalidConfig
from .panel import Panel
from .series import EstimateSeries


@dataclass(frozen=True)
class BootstrapConfig:
    """Cluster-bootstrap settings; the seed is required, nothing is implicit."""

    seed: int
    replications: int = 999
    ci_level: float = 0.95
    method: str = "percentile"

    def __post_init__(self):
        if self.replications < 1:
            raise InvalidConfig("replications must be at least 1")
        if not (0.0 < self.ci_level < 1.0):
            raise InvalidConfig("ci_level must lie in (0, 1)")
        if self.method != "percentile":
            raise InvalidConfig("only the percentile method is implemented")


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Counter-based generator for one replication, order-independent."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(replication)]))


@dataclass
class BootstrapResult:
    """Replication matrix plus derived standard errors and intervals.

    ``replications`` is (R, H) with NaN where an event time was
    unidentified in that replication; such draws are excluded from the
    event time's distribution and counted in ``n_excluded``.  When every
    replication is unidentified (``all_unidentified``) the CI is marked
    unavailable.
    """

    event_time: np.ndarray
    point: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    ci_low_normal: np.ndarray
    ci_high_normal: np.ndarray
    n_excluded: np.ndarray
    all_unidentified: np.ndarray
    replications: np.ndarray
    config: BootstrapConfig

    def apply_to(self, series: EstimateSeries) -> EstimateSeries:
        """Attach SEs and CIs to a point series sharing the same axis."""
        if not np.array_equal(series.event_time, self.event_time):
            raise InvalidConfig("bootstrap axis does not match the series")
        extras = dict(series.extras)
        extras["ci_low_normal"] = self.ci_low_normal.copy()
        extras["ci_high_normal"] = self.ci_high_normal.copy()
        extras["n_excluded"] = self.n_excluded.copy()
        return EstimateSeries(
            event_time=series.event_time,
            estimate=series.estimate,
            se=self.se.copy(),
            ci_low=self.ci_low.copy(),
            ci_high=self.ci_high.copy(),
            n_switchers=series.n_switchers,
            identified=series.identified,
            label=series.label,
            cells=series.cells,
            extras=extras,
        )


def _summarize(event_time, point, reps, config: BootstrapConfig) -> BootstrapResult:
    n_reps, h = reps.shape
    se = np.full(h, np.nan)
    ci_low = np.full(h, np.nan)
    ci_high = np.full(h, np.nan)
    ci_low_n = np.full(h, np.nan)
    ci_high_n = np.full(h, np.nan)
    excluded = np.zeros(h, dtype=np.int64)
    all_un = np.zeros(h, dtype=bool)
    alpha = 1.0 - config.ci_level
    z = scipy.stats.norm.ppf(1.0 - alpha / 2.0)
    for j in range(h):
        col = reps[:, j]
        vals = col[np.isfinite(col)]
        excluded[j] = n_reps - vals.size
        if vals.size == 0:
            all_un[j] = True
            continue
        if vals.size >= 2:
            se[j] = float(np.std(vals, ddof=1))
            ci_low[j] = float(np.quantile(vals, alpha / 2.0))
            ci_high[j] = float(np.quantile(vals, 1.0 - alpha / 2.0))
            ci_low_n[j] = point[j] - z * se[j]
            ci_high_n[j] = point[j] + z * se[j]
    return BootstrapResult(
        event_time=np.asarray(event_time),
        point=np.asarray(point, dtype=np.float64),
        se=se,
        ci_low=ci_low,
        ci_high=ci_high,
        ci_low_normal=ci_low_n,
        ci_high_normal=ci_high_n,
        n_excluded=excluded,
        all_unidentified=all_un,
        replications=reps,
        config=config,
    )


def bootstrap_bound(bound, point_series: EstimateSeries, config: BootstrapConfig) -> BootstrapResult:
    """Fast path: resample via unit multiplicities on a bound estimator."""
    n = bound.panel.n_units
    h = len(point_series)
    reps = np.full((config.replications, h), np.nan)
    for r in range(config.replications):
        idx = replication_rng(config.seed, r).integers(0, n, size=n)
        m = np.bincount(idx, minlength=n).astype(np.float64)
        est, identified = bound.estimates_for_multiplicity(m)
        reps[r] = np.where(identified, est, np.nan)
    return _summarize(point_series.event_time, point_series.estimate, reps, config)


def bootstrap_series(estimator, panel: Panel, config: BootstrapConfig) -> BootstrapResult:
    """Unit-level cluster bootstrap of a deterministic series estimator.

    ``estimator`` maps a panel to an :class:`EstimateSeries`.  Estimator
    handles exposing ``bind`` (like :class:`eventpanel.robust.RobustEstimator`)
    use the fast multiplicity path; plain callables are re-run on resampled
    panels.  Both paths draw identical unit indices per replication.
    """
    if hasattr(estimator, "bind"):
        bound = estimator.bind(panel)
        return bootstrap_bound(bound, bound.point_series(), config)
    point = estimator(panel)
    h = len(point)
    n = panel.n_units
    reps = np.full((config.replications, h), np.nan)
    for r in range(config.replications):
        idx = replication_rng(config.seed, r).integers(0, n, size=n)
        resampled = panel.resample_units(idx)
        s = estimator(resampled)
        if not np.array_equal(s.event_time, point.event_time):
            raise InvalidConfig("estimator changed its event-time axis across resamples")
        reps[r] = np.where(s.identified, s.estimate, np.nan)
    return _summarize(point.event_time, point.estimate, reps, config)


# ---------------------------------------------------------------------------
# joint pre-trend test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    pvalue: float
    dof: int
    dropped: tuple[int, ...]
    n_replications: int


def pretrend_wald(
    placebo,
    replications,
    *,
    min_replications: int = 30,
    max_condition: float = 1e12,
) -> WaldResult:
    """Joint Wald test that all placebo horizons are zero.

    Uses the bootstrap covariance of the placebo vector against a
    chi-square reference with one degree of freedom per horizon.  Nearly
    singular covariances are repaired by dropping horizons, worst
    conditioning first; dropped event times are reported in the result.

    ``placebo`` may be an :class:`EstimateSeries` (its event times <= -2
    are used) or a plain estimate vector; ``replications`` the matching
    :class:`BootstrapResult` or an (R, K) array.
    """
    if isinstance(placebo, EstimateSeries):
        mask = placebo.event_time <= -2
        events = placebo.event_time[mask]
        theta = placebo.estimate[mask]
        if isinstance(replications, BootstrapResult):
            cols = [int(np.nonzero(replications.event_time == t)[0][0]) for t in events]
            reps = replications.replications[:, cols]
        else:
            reps = np.asarray(replications, dtype=np.float64)
    else:
        theta = np.asarray(placebo, dtype=np.float64)
        events = -2 - np.arange(len(theta))
        reps = replications.replications if isinstance(replications, BootstrapResult) else np.asarray(replications)
    if reps.ndim != 2 or reps.shape[1] != len(theta):
        raise InvalidConfig("replication matrix does not match the placebo vector")

    finite = [i for i in range(len(theta)) if np.isfinite(theta[i])]
    dropped: list[int] = [int(events[i]) for i in range(len(theta)) if i not in finite]
    complete = reps[:, finite]
    complete = complete[np.isfinite(complete).all(axis=1)]
    if complete.shape[0] < min_replications:
        raise InvalidConfig(
            f"pre-trend test needs at least {min_replications} complete replications, "
            f"got {complete.shape[0]}"
        )

    def cond_of(cols):
        sub = np.atleast_2d(np.cov(complete[:, cols], rowvar=False, ddof=1))
        return np.linalg.cond(sub), sub

    active = list(range(len(finite)))  # column positions into `complete`
    cov = None
    while active:
        cond, cov = cond_of(active)
        if np.isfinite(cond) and cond <= max_condition:
            break
        # drop the horizon whose removal improves conditioning the most
        best_j, best_cond = None, np.inf
        for j in active:
            rest = [i for i in active if i != j]
            if not rest:
                continue
            c, _ = cond_of(rest)
            if c < best_cond:
                best_cond, best_j = c, j
        if best_j is None:
            raise InvalidConfig("placebo covariance is singular beyond repair")
        dropped.append(int(events[finite[best_j]]))
        active.remove(best_j)
    if not active:
        raise InvalidConfig("no placebo horizon left after dropping singular directions")

    theta_k = theta[[finite[j] for j in active]]
    stat = float(theta_k @ np.linalg.solve(cov, theta_k))
    dof = len(active)
    pvalue = float(scipy.stats.chi2.sf(stat, dof))
    return WaldResult(stat, pvalue, dof, tuple(dropped), int(complete.shape[0]))
