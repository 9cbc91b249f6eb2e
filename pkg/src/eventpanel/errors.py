"""Exception hierarchy shared across the toolkit.

Every error carries a short machine-parsable class name (used by the CLI
exit path) plus a human-readable message.
"""

from __future__ import annotations


class EventPanelError(Exception):
    """Base class for all toolkit errors."""


class PanelFormatError(EventPanelError):
    """Input rows are malformed (missing columns, bad treated values, ...)."""


class DuplicateCell(EventPanelError):
    """The same (unit, period) pair appears more than once."""

    def __init__(self, unit: str, period: int):
        self.unit, self.period = unit, period
        super().__init__(f"duplicate observation for unit {unit!r} at period {period}")


class NonAbsorbingTreatment(EventPanelError):
    """A unit's treated indicator switches from 1 back to 0."""

    def __init__(self, unit: str, period: int):
        self.unit, self.period = unit, period
        super().__init__(
            f"treatment for unit {unit!r} reverts to 0 at period {period}; "
            "staggered adoption requires an absorbing treatment path"
        )


class NonFiniteOutcome(EventPanelError):
    """An outcome value is NaN or infinite."""

    def __init__(self, unit: str, period: int):
        self.unit, self.period = unit, period
        super().__init__(f"non-finite outcome for unit {unit!r} at period {period}")


class NonPositiveOutcome(EventPanelError):
    """Log transform requested on an outcome <= 0."""

    def __init__(self, unit: str, period: int, value: float):
        self.unit, self.period, self.value = unit, period, value
        super().__init__(
            f"cannot take log of outcome {value!r} for unit {unit!r} at period {period}"
        )


class NonConvergence(EventPanelError):
    """Alternating projections failed to reach tolerance."""

    def __init__(self, final_change: float, sweeps: int):
        self.final_change, self.sweeps = final_change, sweeps
        super().__init__(
            f"two-way demeaning did not converge after {sweeps} sweeps "
            f"(final max change {final_change:.3e})"
        )


class RankDeficient(EventPanelError):
    """Design matrix columns are linearly dependent."""

    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(f"rank-deficient design; dependent columns: {list(self.columns)}")


class SingleCluster(EventPanelError):
    """Cluster-robust covariance needs at least two clusters."""


class Underidentified(EventPanelError):
    """Event-time indicators are collinear (no never-treated variation)."""

    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__(
            f"event-study design is underidentified; collinear indicators: {list(self.columns)}"
        )


class NoSwitchers(EventPanelError):
    """The panel contains no usable switcher units."""


class NoMatches(EventPanelError):
    """No never-treated unit has an ever-treated neighbor."""


class BaselineMissingEverywhere(EventPanelError):
    """No unit is observed at the requested baseline period."""


class NegativeValue(EventPanelError):
    """Plant-level production or employment value is negative."""

    def __init__(self, unit: str, field: str, value: float):
        self.unit, self.field, self.value = unit, field, value
        super().__init__(f"negative {field} value {value!r} for unit {unit!r}")


class InvalidConfig(EventPanelError):
    """A synthetic-panel or run configuration fails validation."""
