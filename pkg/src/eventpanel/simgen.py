"""Synthetic staggered-adoption panels with exactly known truth.

Outcomes follow an additive structure in log units: unit effect + period
effect + event-time treatment effect + optional anticipation, pre-trend
and neighbor-spillover violations + noise.  The accompanying truth is
computed from the configuration by expectation arithmetic, never by
simulation, so estimator tests compare against closed-form targets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import InvalidConfig
from .panel import Panel

__all__ = [
    "EffectProfile",
    "DgpConfig",
    "DgpTruth",
    "generate",
    "scenario_library",
]


@dataclass(frozen=True)
class EffectProfile:
    """Event-time effect path: constant, linear ramp, or explicit list."""

    kind: str
    values: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("const", "ramp", "list"):
            raise InvalidConfig(f"unknown effect profile kind {self.kind!r}")
        if self.kind in ("const", "ramp") and len(self.values) != 1:
            raise InvalidConfig(f"{self.kind} profile takes exactly one value")
        if self.kind == "list" and not self.values:
            raise InvalidConfig("list profile needs at least one value")

    def at(self, ell: int) -> float:
        """Cumulative effect ``ell`` periods after the switch (ell >= 0)."""
        if ell < 0:
            return 0.0
        if self.kind == "const":
            return self.values[0]
        if self.kind == "ramp":
            return self.values[0] * (ell + 1)
        return self.values[min(ell, len(self.values) - 1)]

    def spec(self) -> str:
        return f"{self.kind}:" + ",".join(repr(v) for v in self.values)

    @classmethod
    def parse(cls, text: str) -> "EffectProfile":
        kind, _, rest = text.partition(":")
        try:
            values = tuple(float(v) for v in rest.split(",") if v != "")
        except ValueError as err:
            raise InvalidConfig(f"bad effect profile {text!r}") from err
        return cls(kind.strip(), values)


ZERO_EFFECT = EffectProfile("const", (0.0,))


@dataclass(frozen=True)
class DgpConfig:
    """Recipe for one synthetic panel; reproducible from (config, seed).

    ``cohorts`` maps switch periods to population shares; a switch at or
    before ``period_start`` produces always-treated-within-window units.
    Shares plus ``never_share`` must sum to one.  ``anticipation`` maps
    negative event-time offsets to additive pre-switch effects;
    ``pretrend_slope`` tilts every ever-treated unit's outcome by
    slope x (period - switch); ``spillover`` adds its value per treated
    neighbor under ``adjacency`` ('none', 'paired', or 'a~b;c~d' pairs).
    """

    n_units: int
    period_start: int
    period_end: int
    cohorts: tuple[tuple[int, float], ...]
    never_share: float
    effect: EffectProfile = ZERO_EFFECT
    cohort_effects: Mapping[int, EffectProfile] = field(default_factory=dict)
    anticipation: Mapping[int, float] = field(default_factory=dict)
    pretrend_slope: float = 0.0
    spillover: float = 0.0
    adjacency: str = "none"
    unit_effect_mean: float = 0.0
    unit_effect_sd: float = 0.0
    period_effect_slope: float = 0.0
    period_effect_sd: float = 0.0
    noise_sd: float = 0.0
    ar1: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_units < 2:
            raise InvalidConfig("need at least two units")
        if self.period_end <= self.period_start:
            raise InvalidConfig("period range must contain at least two periods")
        switches = [s for s, _ in self.cohorts]
        if len(set(switches)) != len(switches):
            raise InvalidConfig("cohort switch periods must be unique")
        for s, share in self.cohorts:
            if share < 0:
                raise InvalidConfig("cohort shares must be non-negative")
            if s > self.period_end:
                raise InvalidConfig(f"cohort switch {s} is outside the panel window")
        total = sum(share for _, share in self.cohorts) + self.never_share
        if self.never_share < 0 or abs(total - 1.0) > 1e-9:
            raise InvalidConfig(f"cohort shares plus never share must sum to 1, got {total}")
        for off in self.anticipation:
            if off >= 0:
                raise InvalidConfig("anticipation offsets must be negative")
        if self.noise_sd < 0 or self.unit_effect_sd < 0 or self.period_effect_sd < 0:
            raise InvalidConfig("standard deviations must be non-negative")
        if not (0.0 <= self.ar1 < 1.0):
            raise InvalidConfig("ar1 must lie in [0, 1)")
        object.__setattr__(self, "cohorts", tuple((int(s), float(sh)) for s, sh in self.cohorts))
        object.__setattr__(self, "cohort_effects", dict(self.cohort_effects))
        object.__setattr__(self, "anticipation", {int(k): float(v) for k, v in self.anticipation.items()})

    # -- derived layout ---------------------------------------------------

    def group_counts(self) -> tuple[list[int], int]:
        """Unit counts per cohort plus the never-treated count (largest remainder)."""
        shares = [sh for _, sh in self.cohorts] + [self.never_share]
        raw = [sh * self.n_units for sh in shares]
        counts = [int(math.floor(r)) for r in raw]
        rem = self.n_units - sum(counts)
        order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
        for i in order[:rem]:
            counts[i] += 1
        return counts[:-1], counts[-1]

    def profile_for(self, switch: int) -> EffectProfile:
        return self.cohort_effects.get(switch, self.effect)

    def unit_layout(self):
        """(unit ids, config switch per unit with inf for never, cohort blocks)."""
        counts, never_n = self.group_counts()
        ids = np.array([f"u{i:05d}" for i in range(self.n_units)], dtype=object)
        switch = np.full(self.n_units, np.inf)
        blocks = {}
        pos = 0
        for (s, _), c in zip(self.cohorts, counts):
            blocks[s] = np.arange(pos, pos + c)
            switch[pos:pos + c] = s
            pos += c
        blocks["never"] = np.arange(pos, pos + never_n)
        return ids, switch, blocks

    def edges(self) -> tuple[tuple[str, str], ...]:
        """Materialize the adjacency rule into unit-id pairs."""
        ids, switch, blocks = self.unit_layout()
        if self.adjacency == "none":
            return ()
        if self.adjacency == "paired":
            switchers = np.nonzero(np.isfinite(switch))[0]
            nevers = blocks["never"]
            k = min(len(switchers), len(nevers))
            return tuple((str(ids[switchers[i]]), str(ids[nevers[i]])) for i in range(k))
        pairs = []
        for part in self.adjacency.split(";"):
            part = part.strip()
            if not part:
                continue
            a, _, b = part.partition("~")
            pairs.append((a.strip(), b.strip()))
        return tuple(pairs)

    # -- plain-text round trip ---------------------------------------------

    def to_text(self) -> str:
        lines = [
            f"n_units = {self.n_units}",
            f"periods = {self.period_start}:{self.period_end}",
            "cohorts = " + ",".join(f"{s}:{sh!r}" for s, sh in self.cohorts),
            f"never_share = {self.never_share!r}",
            f"effect = {self.effect.spec()}",
        ]
        for s in sorted(self.cohort_effects):
            lines.append(f"effect.{s} = {self.cohort_effects[s].spec()}")
        if self.anticipation:
            lines.append("anticipation = " + ",".join(
                f"{k}:{v!r}" for k, v in sorted(self.anticipation.items())))
        lines += [
            f"pretrend_slope = {self.pretrend_slope!r}",
            f"spillover = {self.spillover!r}",
            f"adjacency = {self.adjacency}",
            f"unit_effect_mean = {self.unit_effect_mean!r}",
            f"unit_effect_sd = {self.unit_effect_sd!r}",
            f"period_effect_slope = {self.period_effect_slope!r}",
            f"period_effect_sd = {self.period_effect_sd!r}",
            f"noise_sd = {self.noise_sd!r}",
            f"ar1 = {self.ar1!r}",
            f"seed = {self.seed}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DgpConfig":
        fields: dict[str, str] = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidConfig(f"bad config line {raw!r}")
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        try:
            p0, _, p1 = fields["periods"].partition(":")
            cohorts = []
            if fields.get("cohorts"):
                for part in fields["cohorts"].split(","):
                    s, _, share = part.partition(":")
                    cohorts.append((int(s), float(share)))
            cohort_effects = {
                int(k.split(".", 1)[1]): EffectProfile.parse(v)
                for k, v in fields.items() if k.startswith("effect.")
            }
            anticipation = {}
            if fields.get("anticipation"):
                for part in fields["anticipation"].split(","):
                    k, _, v = part.partition(":")
                    anticipation[int(k)] = float(v)
            return cls(
                n_units=int(fields["n_units"]),
                period_start=int(p0),
                period_end=int(p1),
                cohorts=tuple(cohorts),
                never_share=float(fields.get("never_share", 0.0)),
                effect=EffectProfile.parse(fields.get("effect", "const:0")),
                cohort_effects=cohort_effects,
                anticipation=anticipation,
                pretrend_slope=float(fields.get("pretrend_slope", 0.0)),
                spillover=float(fields.get("spillover", 0.0)),
                adjacency=fields.get("adjacency", "none"),
                unit_effect_mean=float(fields.get("unit_effect_mean", 0.0)),
                unit_effect_sd=float(fields.get("unit_effect_sd", 0.0)),
                period_effect_slope=float(fields.get("period_effect_slope", 0.0)),
                period_effect_sd=float(fields.get("period_effect_sd", 0.0)),
                noise_sd=float(fields.get("noise_sd", 0.0)),
                ar1=float(fields.get("ar1", 0.0)),
                seed=int(fields.get("seed", 0)),
            )
        except (KeyError, ValueError) as err:
            raise InvalidConfig(f"config document is missing or malformed: {err}") from err


@dataclass
class DgpTruth:
    """Exact targets for every estimator run on the generated panel.

    ``event_effects`` averages the configured cohort profiles over the
    switchers identified at each horizon (the estimand).  The expected_*
    fields fold in any configured violations and the realized control
    composition, i.e. the value a correct estimator converges to on
    noiseless data.  Placebos use the figure orientation (deviation of the
    pre-period relative to t-1) and are keyed by placebo horizon k >= 1.
    """

    event_effects: dict[int, float]
    expected_dynamic: dict[int, float]
    expected_placebo: dict[int, float]
    n_identified: dict[int, int]
    n_identified_placebo: dict[int, int]
    per_cell_effects: dict[tuple[str, int], float]
    cohort_sizes: dict[int, int]
    never_count: int

    def to_json_obj(self) -> dict:
        return {
            "event_effects": {str(k): v for k, v in self.event_effects.items()},
            "expected_dynamic": {str(k): v for k, v in self.expected_dynamic.items()},
            "expected_placebo": {str(k): v for k, v in self.expected_placebo.items()},
            "n_identified": {str(k): v for k, v in self.n_identified.items()},
            "n_identified_placebo": {str(k): v for k, v in self.n_identified_placebo.items()},
            "cohort_sizes": {str(k): v for k, v in self.cohort_sizes.items()},
            "never_count": self.never_count,
        }

    def write_json(self, path, manifest: dict | None = None) -> None:
        obj = self.to_json_obj()
        if manifest is not None:
            obj["manifest"] = manifest
        with open(path, "w") as fh:
            json.dump(obj, fh, sort_keys=True, indent=1)
            fh.write("\n")


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _stream(seed: int, label: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed), int(label)]))


def _deviation_matrix(config: DgpConfig, switch: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Deterministic deviation from the two-way structure, per unit-period."""
    periods = np.arange(config.period_start, config.period_end + 1)
    n, p = config.n_units, len(periods)
    dev = np.zeros((n, p))
    for i in range(n):
        s = switch[i]
        if not np.isfinite(s):
            continue
        e = periods - int(s)
        profile = config.profile_for(int(s))
        row = np.array([profile.at(int(k)) if k >= 0 else config.anticipation.get(int(k), 0.0)
                        for k in e])
        row = row + config.pretrend_slope * e
        dev[i] += row
    if config.spillover != 0.0 and config.adjacency != "none":
        idx = {str(u): i for i, u in enumerate(ids)}
        for a, b in config.edges():
            ia, ib = idx[a], idx[b]
            for u, v in ((ia, ib), (ib, ia)):
                sv = switch[v]
                if np.isfinite(sv):
                    dev[u] += config.spillover * (periods >= int(sv))
    return dev


def generate(config: DgpConfig) -> tuple[Panel, DgpTruth]:
    """Generate one panel plus its exact truth.

    Outcome: Y = unit effect + period effect + deviation + noise, on a
    balanced grid.  Identical (config, seed) pairs produce bitwise
    identical panels; randomness comes from counter-based streams keyed by
    the seed.
    """
    ids, switch, _ = config.unit_layout()
    periods = np.arange(config.period_start, config.period_end + 1)
    n, p = config.n_units, len(periods)

    alpha = config.unit_effect_mean + config.unit_effect_sd * _stream(config.seed, 1).standard_normal(n)
    lam = (config.period_effect_slope * (periods - periods[0])
           + config.period_effect_sd * _stream(config.seed, 2).standard_normal(p))
    dev = _deviation_matrix(config, switch, ids)

    y = alpha[:, None] + lam[None, :] + dev
    if config.noise_sd > 0:
        eps = _stream(config.seed, 3).standard_normal((n, p))
        if config.ar1 > 0:
            v = np.empty_like(eps)
            v[:, 0] = eps[:, 0]
            for t in range(1, p):
                v[:, t] = config.ar1 * v[:, t - 1] + eps[:, t]
            eps = v
        y = y + config.noise_sd * eps

    observed = np.ones((n, p), dtype=bool)
    panel = Panel(ids, config.period_start, config.period_end, y, observed, switch,
                  meta={"dgp_seed": config.seed})
    truth = _truth(config, switch, ids, dev)
    return panel, truth


def _truth(config: DgpConfig, switch: np.ndarray, ids: np.ndarray, dev: np.ndarray) -> DgpTruth:
    periods = np.arange(config.period_start, config.period_end + 1)
    p0, p1 = config.period_start, config.period_end
    never_rows = np.nonzero(~np.isfinite(switch))[0]
    switcher_cohorts = sorted({int(s) for s in switch[np.isfinite(switch)] if s > p0})
    cohort_rows = {s: np.nonzero(switch == s)[0] for s in switcher_cohorts}
    cohort_sizes = {s: int(len(r)) for s, r in cohort_rows.items()}

    def col(period: int) -> int:
        return period - p0

    def eligible_rows(cutoff: int) -> np.ndarray:
        parts = [never_rows]
        for s2 in switcher_cohorts:
            if s2 > cutoff:
                parts.append(cohort_rows[s2])
        return np.concatenate(parts) if parts else never_rows

    max_lag = p1 - p0 - 1
    event_effects, expected_dynamic, n_identified = {}, {}, {}
    for ell in range(0, max_lag + 1):
        num_tau = num_exp = denom = 0.0
        for s in switcher_cohorts:
            far, base = s + ell, s - 1
            if far > p1 or base < p0:
                continue
            ctrl = eligible_rows(s + ell)
            if ctrl.size == 0:
                continue
            size = cohort_sizes[s]
            ctrl_mean = float(np.mean(dev[ctrl, col(far)] - dev[ctrl, col(base)]))
            own = dev[cohort_rows[s], col(far)] - dev[cohort_rows[s], col(base)]
            num_exp += float(np.sum(own - ctrl_mean))
            num_tau += size * config.profile_for(s).at(ell)
            denom += size
        if denom > 0:
            event_effects[ell] = num_tau / denom
            expected_dynamic[ell] = num_exp / denom
            n_identified[ell] = int(denom)

    max_pl = p1 - p0 - 1
    expected_placebo, n_identified_placebo = {}, {}
    for k in range(1, max_pl + 1):
        num = denom = 0.0
        for s in switcher_cohorts:
            far, base = s - 1 - k, s - 1
            if far < p0:
                continue
            ctrl = eligible_rows(s - 1 + k)
            if ctrl.size == 0:
                continue
            size = cohort_sizes[s]
            ctrl_mean = float(np.mean(dev[ctrl, col(far)] - dev[ctrl, col(base)]))
            own = dev[cohort_rows[s], col(far)] - dev[cohort_rows[s], col(base)]
            num += float(np.sum(own - ctrl_mean))
            denom += size
        if denom > 0:
            expected_placebo[k] = num / denom
            n_identified_placebo[k] = int(denom)

    per_cell: dict[tuple[str, int], float] = {}
    for i in range(config.n_units):
        s = switch[i]
        if not np.isfinite(s):
            continue
        for t in periods[periods >= s]:
            per_cell[(str(ids[i]), int(t))] = float(dev[i, col(int(t))])

    return DgpTruth(
        event_effects=event_effects,
        expected_dynamic=expected_dynamic,
        expected_placebo=expected_placebo,
        n_identified=n_identified,
        n_identified_placebo=n_identified_placebo,
        per_cell_effects=per_cell,
        cohort_sizes=cohort_sizes,
        never_count=int(len(never_rows)),
    )


# ---------------------------------------------------------------------------
# canned scenarios
# ---------------------------------------------------------------------------


def scenario_library() -> dict[str, DgpConfig]:
    """Named configurations used across the test and demo surface.

    ``parallel-homogeneous``  constant effect, robust and TWFE agree
    ``cohort-heterogeneous``  two cohorts with effects 0.2 vs 1.0
    ``sign-reversal``         heterogeneity strong enough to flip the
                              static TWFE sign against every true effect
    ``pretrend-violation``    switchers on a steeper pre-trend
    ``anticipation-2yr``      transient demand response in the two years
                              preceding the final pre-switch year
    ``neighbor-spillover``    +0.1 per treated neighbor on paired units
    ``paper-scale``           2,400 units x 58 periods performance shape
    """
    lib = {
        "parallel-homogeneous": DgpConfig(
            n_units=200, period_start=1, period_end=40,
            cohorts=((8, 0.175), (14, 0.175), (20, 0.175), (26, 0.175)),
            never_share=0.3,
            effect=EffectProfile("const", (0.3,)),
            seed=101,
        ),
        "cohort-heterogeneous": DgpConfig(
            n_units=120, period_start=1, period_end=16,
            cohorts=((5, 0.4), (11, 0.4)),
            never_share=0.2,
            effect=EffectProfile("const", (0.2,)),
            cohort_effects={5: EffectProfile("const", (1.0,))},
            seed=102,
        ),
        "sign-reversal": DgpConfig(
            n_units=100, period_start=1, period_end=12,
            cohorts=((2, 0.6), (11, 0.35)),
            never_share=0.05,
            effect=EffectProfile("const", (0.05,)),
            cohort_effects={2: EffectProfile("ramp", (0.3,))},
            seed=103,
        ),
        "pretrend-violation": DgpConfig(
            n_units=100, period_start=1, period_end=20,
            cohorts=((12, 0.4),),
            never_share=0.6,
            pretrend_slope=0.1,
            seed=104,
        ),
        "anticipation-2yr": DgpConfig(
            n_units=100, period_start=1, period_end=20,
            cohorts=((10, 0.5),),
            never_share=0.5,
            effect=EffectProfile("const", (0.3,)),
            anticipation={-2: 0.2, -3: 0.2},
            seed=105,
        ),
        "neighbor-spillover": DgpConfig(
            n_units=120, period_start=1, period_end=20,
            cohorts=((6, 0.125), (9, 0.125), (12, 0.125), (15, 0.125)),
            never_share=0.5,
            effect=EffectProfile("const", (0.4,)),
            spillover=0.1,
            adjacency="paired",
            seed=106,
        ),
        "paper-scale": DgpConfig(
            n_units=2400, period_start=1860, period_end=1917,
            cohorts=tuple((1866 + 4 * i, 0.56 / 12) for i in range(12)),
            never_share=1.0 - 0.56,
            effect=EffectProfile("ramp", (0.8 / 31,)),
            unit_effect_sd=0.5,
            period_effect_slope=0.01,
            period_effect_sd=0.05,
            noise_sd=0.1,
            seed=1860,
        ),
    }
    return lib
