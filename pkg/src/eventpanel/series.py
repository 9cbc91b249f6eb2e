"""Event-study series container shared by the robust and TWFE estimators.

A series holds, per event time, the point estimate (log-outcome units),
standard error, confidence bounds, and the number of switchers identifying
the cell.  Placebo horizons sit at event times ``-1 - k`` so the series
plots directly: event time -1 is the normalization point, fixed at 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import pandas as pd

SERIES_COLUMNS = ("event_time", "estimate", "se", "ci_low", "ci_high", "n_switchers")


@dataclass(frozen=True)
class CellDid:
    """One switcher-vs-controls 2x2 difference-in-differences cell.

    ``event_time`` uses the cell convention: non-negative for dynamic
    horizons, ``-k`` for the placebo of horizon k.  Dynamic cells measure
    the outcome evolution from t-1 to t+ell; placebo cells measure the
    deviation of t-1-k relative to t-1 (figure orientation), so a steeper
    switcher pre-trend shows up as negative placebo values.
    """

    switcher: str
    switch_period: int
    event_time: int
    value: float
    control_count: int


@dataclass
class EstimateSeries:
    """Point estimates and uncertainty per event time.

    ``estimate`` is NaN at unidentified event times (``identified`` False):
    no switcher had both cell periods observed together with an eligible
    control.  ``cells`` optionally references the underlying CellDid lists,
    keyed by the series event time.
    """

    event_time: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_switchers: np.ndarray
    identified: np.ndarray
    label: str = "series"
    cells: Mapping[int, list[CellDid]] | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.event_time = np.asarray(self.event_time, dtype=np.int64)
        for name in ("estimate", "se", "ci_low", "ci_high"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        self.n_switchers = np.asarray(self.n_switchers, dtype=np.int64)
        self.identified = np.asarray(self.identified, dtype=bool)
        n = len(self.event_time)
        for name in ("estimate", "se", "ci_low", "ci_high", "n_switchers", "identified"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"series field {name} misaligned")

    def __len__(self) -> int:
        return len(self.event_time)

    def at(self, event_time: int) -> dict:
        """All fields for one event time."""
        idx = np.nonzero(self.event_time == event_time)[0]
        if idx.size == 0:
            raise KeyError(f"event time {event_time} not in series")
        i = int(idx[0])
        return {
            "event_time": int(self.event_time[i]),
            "estimate": float(self.estimate[i]),
            "se": float(self.se[i]),
            "ci_low": float(self.ci_low[i]),
            "ci_high": float(self.ci_high[i]),
            "n_switchers": int(self.n_switchers[i]),
            "identified": bool(self.identified[i]),
        }

    def estimates_by_event(self) -> dict[int, float]:
        return {int(t): float(b) for t, b in zip(self.event_time, self.estimate)}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "event_time": self.event_time,
            "estimate": self.estimate,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_switchers": self.n_switchers,
        })

    # -- serialization --------------------------------------------------

    def to_csv(self, path, manifest: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if manifest is not None:
                fh.write(f"# manifest: {manifest}\n")
            self.to_frame().to_csv(fh, index=False)

    def to_json_obj(self, manifest: dict | None = None) -> dict:
        rows = []
        for i in range(len(self)):
            row = {
                "event_time": int(self.event_time[i]),
                "estimate": _jsonable(self.estimate[i]),
                "se": _jsonable(self.se[i]),
                "ci_low": _jsonable(self.ci_low[i]),
                "ci_high": _jsonable(self.ci_high[i]),
                "n_switchers": int(self.n_switchers[i]),
                "identified": bool(self.identified[i]),
            }
            for key in ("ci_low_normal", "ci_high_normal", "n_excluded"):
                if key in self.extras:
                    row[key] = _jsonable(self.extras[key][i])
            rows.append(row)
        obj = {"label": self.label, "rows": rows}
        if manifest is not None:
            obj["manifest"] = manifest
        return obj

    def to_json(self, path, manifest: dict | None = None) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_obj(manifest), fh, sort_keys=True, indent=1)
            fh.write("\n")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, label: str = "series") -> "EstimateSeries":
        est = frame["estimate"].to_numpy(dtype=np.float64)
        return cls(
            event_time=frame["event_time"].to_numpy(dtype=np.int64),
            estimate=est,
            se=frame["se"].to_numpy(dtype=np.float64),
            ci_low=frame["ci_low"].to_numpy(dtype=np.float64),
            ci_high=frame["ci_high"].to_numpy(dtype=np.float64),
            n_switchers=frame["n_switchers"].to_numpy(dtype=np.int64),
            identified=np.isfinite(est),
            label=label,
        )

    @classmethod
    def from_csv(cls, path, label: str | None = None) -> "EstimateSeries":
        frame = pd.read_csv(path, comment="#")
        return cls.from_frame(frame, label=label or str(path))

    @classmethod
    def from_json(cls, path, label: str | None = None) -> "EstimateSeries":
        with open(path) as fh:
            obj = json.load(fh)
        frame = pd.DataFrame(obj["rows"])
        return cls.from_frame(frame, label=label or obj.get("label", str(path)))


def _jsonable(x) -> float | None:
    x = float(x)
    return None if not np.isfinite(x) else x
