"""Panel loading, validation, cohorts, switcher counts."""

import math

import numpy as np
import pandas as pd
import pytest

from eventpanel import (
    DuplicateCell,
    NonAbsorbingTreatment,
    NonFiniteOutcome,
    NonPositiveOutcome,
    PanelFormatError,
    cohorts,
    load_panel,
    log_transform,
    percent_change,
    shift_treatment,
    switcher_counts,
)

from bruteforce import random_panel_records


def rows(*tuples):
    return [
        {"unit": u, "period": p, "outcome": y, "treated": d}
        for (u, p, y, d) in tuples
    ]


TWO_BY_THREE = rows(
    ("A", 1, 1.0, 0), ("A", 2, 2.0, 1), ("A", 3, 4.0, 1),
    ("B", 1, 1.0, 0), ("B", 2, 1.5, 0), ("B", 3, 2.0, 0),
)


class TestLoadPanel:
    def test_all_untreated_panel_has_only_never_treated(self):
        panel = load_panel(rows(
            ("A", 1, 1.0, 0), ("A", 2, 1.0, 0), ("A", 3, 1.0, 0),
            ("B", 1, 2.0, 0), ("B", 2, 2.0, 0), ("B", 3, 2.0, 0),
        ))
        cm = cohorts(panel)
        assert cm.never_treated == {"A", "B"}
        assert cm.first_switch == {}

    def test_first_switch_from_first_treated_observation(self):
        cm = cohorts(load_panel(TWO_BY_THREE))
        assert cm.first_switch == {"A": 2}
        assert cm.never_treated == {"B"}
        assert cm.always_treated == frozenset()

    def test_non_absorbing_treatment_rejected(self):
        with pytest.raises(NonAbsorbingTreatment) as err:
            load_panel(rows(("A", 1, 1.0, 0), ("A", 2, 1.0, 1), ("A", 3, 1.0, 0)))
        assert err.value.unit == "A"
        assert err.value.period == 3

    def test_duplicate_cell_rejected(self):
        with pytest.raises(DuplicateCell):
            load_panel(rows(("A", 1, 1.0, 0), ("A", 1, 2.0, 0)))

    def test_non_finite_outcome_rejected(self):
        with pytest.raises(NonFiniteOutcome):
            load_panel(rows(("A", 1, float("nan"), 0), ("A", 2, 1.0, 0)))

    def test_bad_treated_value_rejected(self):
        with pytest.raises(PanelFormatError):
            load_panel(rows(("A", 1, 1.0, 2)))

    def test_missing_columns_rejected(self):
        with pytest.raises(PanelFormatError):
            load_panel(pd.DataFrame({"unit": ["A"], "period": [1]}))

    def test_unbalanced_panel_accepted(self):
        panel = load_panel(rows(("A", 1, 1.0, 0), ("A", 3, 1.0, 1), ("B", 2, 1.0, 0)))
        assert not panel.balanced
        assert panel.period_range == (1, 3)
        assert list(panel.unit_periods("A")) == [1, 3]

    def test_balanced_flag(self):
        assert load_panel(TWO_BY_THREE).balanced

    def test_always_treated_classification(self):
        panel = load_panel(rows(
            ("Z", 1, 1.0, 1), ("Z", 2, 1.0, 1),
            ("B", 1, 1.0, 0), ("B", 2, 1.0, 0),
        ))
        cm = cohorts(panel)
        assert cm.always_treated == {"Z"}
        assert cm.first_switch == {"Z": 1}
        assert cm.switchers == ()


class TestRoundTrip:
    def test_csv_round_trip_is_bitwise_on_outcomes(self, tmp_path):
        rng = np.random.default_rng(7)
        records = random_panel_records(rng)
        panel = load_panel(records)
        path = tmp_path / "panel.csv"
        panel.write_csv(path, manifest='{"run":1}')
        back = load_panel(str(path))
        assert np.array_equal(panel.units, back.units)
        assert panel.period_range == back.period_range
        assert np.array_equal(panel.observed, back.observed)
        assert np.array_equal(panel.treated, back.treated)
        obs = panel.observed
        assert np.array_equal(panel.outcome[obs], back.outcome[obs])  # bitwise

    def test_extra_columns_round_trip(self, tmp_path):
        records = rows(("A", 1, 1.0, 0), ("A", 2, 1.0, 1))
        for r in records:
            r["population"] = 120.0
        panel = load_panel(records)
        assert panel.unit_weight("population")[0] == 120.0
        path = tmp_path / "panel.csv"
        panel.write_csv(path)
        assert "population" in load_panel(str(path)).extras

    def test_varying_weight_column_rejected(self):
        records = rows(("A", 1, 1.0, 0), ("A", 2, 1.0, 1))
        records[0]["population"] = 120.0
        records[1]["population"] = 130.0
        with pytest.raises(PanelFormatError):
            load_panel(records).unit_weight("population")

    def test_non_numeric_extra_column_rejected(self):
        records = rows(("A", 1, 1.0, 0), ("A", 2, 1.0, 1))
        records[0]["region"] = "north"
        records[1]["region"] = "north"
        with pytest.raises(PanelFormatError):
            load_panel(records)


class TestShiftTreatment:
    def base(self):
        return load_panel([
            {"unit": "A", "period": p, "outcome": 1.0, "treated": int(p >= 1900)}
            for p in range(1890, 1911)
        ] + [
            {"unit": "N", "period": p, "outcome": 1.0, "treated": 0}
            for p in range(1890, 1911)
        ])

    def test_shift_moves_first_switch_earlier(self):
        shifted = shift_treatment(self.base(), 2)
        assert cohorts(shifted).first_switch["A"] == 1898

    def test_zero_shift_is_identity(self):
        panel = self.base()
        shifted = shift_treatment(panel, 0)
        assert np.array_equal(shifted.treated, panel.treated)
        assert cohorts(shifted).first_switch == cohorts(panel).first_switch

    def test_shift_past_window_start_flags_always_treated(self):
        panel = load_panel(rows(
            ("A", 1, 1.0, 0), ("A", 2, 1.0, 1),
            ("B", 1, 1.0, 0), ("B", 2, 1.0, 0),
        ))
        shifted = shift_treatment(panel, 1)
        assert "A" in shifted.meta["shift_made_always_treated"]
        assert cohorts(shifted).always_treated == {"A"}

    def test_shift_composes_on_cohort_maps(self):
        panel = self.base()
        once = shift_treatment(shift_treatment(panel, 2), 3)
        joint = shift_treatment(panel, 5)
        assert cohorts(once).first_switch == cohorts(joint).first_switch
        assert cohorts(once).never_treated == cohorts(joint).never_treated

    def test_shift_composes_across_observation_gaps(self):
        # A observed 1890, 1895, 1900; treated from 1900.  With a gap, a
        # naive re-derivation of the switch from observations would not
        # compose; the nominal switch must.
        records = [
            {"unit": "A", "period": p, "outcome": 1.0, "treated": int(p >= 1900)}
            for p in (1890, 1895, 1900)
        ] + [
            {"unit": "N", "period": p, "outcome": 1.0, "treated": 0}
            for p in (1890, 1895, 1900)
        ]
        panel = load_panel(records)
        chained = shift_treatment(shift_treatment(panel, 2), 4)
        joint = shift_treatment(panel, 6)
        assert cohorts(chained).first_switch == cohorts(joint).first_switch == {"A": 1895}

    def test_negative_lead_rejected(self):
        with pytest.raises(ValueError):
            shift_treatment(self.base(), -1)


class TestLogTransform:
    def test_log_identities(self):
        panel = load_panel(rows(("A", 1, 1.0, 0), ("A", 2, math.e, 0)))
        logged = log_transform(panel)
        assert logged.value("A", 1) == 0.0
        assert logged.value("A", 2) == 1.0

    def test_non_positive_outcome_errors(self):
        panel = load_panel(rows(("A", 1, 0.0, 0), ("A", 2, 1.0, 0)))
        with pytest.raises(NonPositiveOutcome) as err:
            log_transform(panel)
        assert (err.value.unit, err.value.period) == ("A", 1)


class TestCohorts:
    def test_two_single_unit_cohorts(self):
        panel = load_panel(rows(
            ("A", 1, 1.0, 0), ("A", 2, 1.0, 1), ("A", 3, 1.0, 1),
            ("C", 1, 1.0, 0), ("C", 2, 1.0, 0), ("C", 3, 1.0, 1),
        ))
        cm = cohorts(panel)
        assert cm.first_switch == {"A": 2, "C": 3}

    def test_invariant_under_row_permutation(self):
        rng = np.random.default_rng(11)
        records = random_panel_records(rng)
        cm1 = cohorts(load_panel(records))
        shuffled = [records[i] for i in rng.permutation(len(records))]
        cm2 = cohorts(load_panel(shuffled))
        assert cm1.first_switch == cm2.first_switch
        assert cm1.never_treated == cm2.never_treated
        assert cm1.always_treated == cm2.always_treated

    def test_event_time(self):
        cm = cohorts(load_panel(TWO_BY_THREE))
        assert cm.event_time("A", 3) == 1


class TestSwitcherCounts:
    def test_single_switcher_full_window(self):
        panel = load_panel(rows(
            ("A", 1, 1.0, 0), ("A", 2, 1.0, 0), ("A", 3, 1.0, 1), ("A", 4, 1.0, 1),
            ("N", 1, 1.0, 0), ("N", 2, 1.0, 0), ("N", 3, 1.0, 0), ("N", 4, 1.0, 0),
        ))
        counts = switcher_counts(panel, 1, 1).per_event_time
        assert counts == {-1: 1, 0: 1, 1: 1}

    def test_switcher_at_final_period(self):
        panel = load_panel(rows(
            ("A", 1, 1.0, 0), ("A", 2, 1.0, 0), ("A", 3, 1.0, 1),
            ("N", 1, 1.0, 0), ("N", 2, 1.0, 0), ("N", 3, 1.0, 0),
        ))
        counts = switcher_counts(panel, 2, 0).per_event_time
        assert counts[0] == 1
        assert counts[1] == 0
        assert counts[2] == 0

    def test_counts_weakly_fall_with_horizon_depth(self):
        # switch dates spread over the window: deeper horizons lose cells
        records = []
        for i, switch in enumerate([3, 5, 7, 9, 11]):
            for p in range(1, 13):
                records.append({
                    "unit": f"s{i}", "period": p, "outcome": 1.0,
                    "treated": int(p >= switch),
                })
        for j in range(3):
            for p in range(1, 13):
                records.append({"unit": f"n{j}", "period": p, "outcome": 1.0, "treated": 0})
        counts = switcher_counts(load_panel(records), 9, 9).per_event_time
        dyn = [counts[ell] for ell in range(0, 10)]
        pl = [counts[-k] for k in range(1, 10)]
        assert all(a >= b for a, b in zip(dyn, dyn[1:]))
        assert all(a >= b for a, b in zip(pl, pl[1:]))
        assert counts[0] == 5

    def test_counts_bounded_by_switchers_and_match_cells(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            records = random_panel_records(rng)
            panel = load_panel(records)
            n_switchers = int(panel.is_switcher.sum())
            counts = switcher_counts(panel, 3, 3).per_event_time
            assert all(0 <= c <= n_switchers for c in counts.values())


class TestPercentChange:
    def test_paper_arithmetic(self):
        assert percent_change(0.80) == pytest.approx(1.2255, abs=1e-4)
        assert percent_change(0.148) == pytest.approx(0.1595, abs=1e-4)
        assert percent_change(0.0) == 0.0


class TestImmutability:
    def test_matrices_are_read_only(self):
        panel = load_panel(TWO_BY_THREE)
        with pytest.raises(ValueError):
            panel.outcome[0, 0] = 99.0
        with pytest.raises(ValueError):
            panel.treated[0, 0] = 1
