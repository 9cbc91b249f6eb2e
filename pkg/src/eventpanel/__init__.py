"""Panel event-study toolkit for staggered treatment designs.

Heterogeneity-robust DID estimation (instantaneous, dynamic, and
long-difference placebo effects), classical two-way fixed-effects
estimators with weight diagnostics, neighbor-spillover and cross-sectional
designs, cluster-bootstrap inference, and a synthetic-panel oracle.
"""

__version__ = "0.1.0"

from .errors import (
    BaselineMissingEverywhere,
    DuplicateCell,
    EventPanelError,
    InvalidConfig,
    NegativeValue,
    NoMatches,
    NonAbsorbingTreatment,
    NonConvergence,
    NonFiniteOutcome,
    NonPositiveOutcome,
    NoSwitchers,
    PanelFormatError,
    RankDeficient,
    SingleCluster,
    Underidentified,
)
from .panel import (
    CohortMap,
    Observation,
    Panel,
    SwitcherCounts,
    cohorts,
    load_panel,
    log_transform,
    percent_change,
    shift_treatment,
    switcher_counts,
)
from .regress import DesignMatrix, FitResult, cluster_vcov, demean_two_way, hc1_vcov, ols
from .series import CellDid, EstimateSeries
from .robust import (
    RobustEstimator,
    cell_did,
    dynamic_effects,
    event_study,
    placebo_effects,
)
from .twfe import (
    StaticResult,
    TwfeSpec,
    TwfeWeightReport,
    exclude_always_treated,
    twfe_event_study,
    twfe_static,
    twfe_weights,
)
from .inference import BootstrapConfig, BootstrapResult, WaldResult, bootstrap_series, pretrend_wald
from .designs import (
    AdjacencyGraph,
    SpilloverResult,
    SplitResult,
    StrataTable,
    StratumRow,
    aggregate_plant_outcomes,
    build_spillover_panel,
    cross_sectional,
    difference_in_means,
    plant_study,
    spillover_event_study,
    split_by_initial,
)
from .simgen import DgpConfig, DgpTruth, EffectProfile, generate, scenario_library

__all__ = [name for name in dir() if not name.startswith("_")]
