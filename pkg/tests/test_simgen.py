"""Synthetic panel generator and its analytic truth."""

import numpy as np
import pytest

from eventpanel import (
    DgpConfig,
    EffectProfile,
    InvalidConfig,
    cohorts,
    demean_two_way,
    dynamic_effects,
    event_study,
    generate,
    placebo_effects,
    scenario_library,
    twfe_event_study,
    twfe_static,
    TwfeSpec,
)

from bruteforce import brute_force_twfe


def simple_config(**overrides):
    base = dict(
        n_units=40, period_start=1, period_end=10,
        cohorts=((4, 0.5),), never_share=0.5,
        effect=EffectProfile("const", (0.5,)),
        seed=1,
    )
    base.update(overrides)
    return DgpConfig(**base)


class TestEffectProfile:
    def test_const(self):
        assert EffectProfile("const", (0.3,)).at(5) == 0.3

    def test_ramp(self):
        assert EffectProfile("ramp", (0.1,)).at(2) == pytest.approx(0.3)

    def test_list_clamps_to_last(self):
        p = EffectProfile("list", (0.1, 0.4))
        assert p.at(0) == 0.1
        assert p.at(1) == 0.4
        assert p.at(9) == 0.4

    def test_parse_round_trip(self):
        p = EffectProfile.parse("ramp:0.125")
        assert p == EffectProfile.parse(p.spec())


class TestConfigValidation:
    def test_shares_must_sum_to_one(self):
        with pytest.raises(InvalidConfig):
            simple_config(never_share=0.9)

    def test_anticipation_offsets_negative(self):
        with pytest.raises(InvalidConfig):
            simple_config(anticipation={1: 0.2})

    def test_switch_outside_window_rejected(self):
        with pytest.raises(InvalidConfig):
            simple_config(cohorts=((99, 0.5),))

    def test_text_round_trip(self):
        config = simple_config(
            cohort_effects={4: EffectProfile("ramp", (0.2,))},
            anticipation={-2: 0.1},
            pretrend_slope=0.05,
            noise_sd=0.3,
            unit_effect_sd=1.2,
        )
        assert DgpConfig.from_text(config.to_text()) == config

    def test_group_counts_largest_remainder(self):
        config = simple_config(
            n_units=10, cohorts=((4, 0.33), (6, 0.33)), never_share=0.34)
        counts, never = config.group_counts()
        assert sum(counts) + never == 10
        assert counts == [3, 3] and never == 4


class TestGenerate:
    def test_pure_two_way_structure_demeans_to_zero(self):
        config = simple_config(
            effect=EffectProfile("const", (0.0,)),
            unit_effect_sd=2.0, period_effect_sd=1.0, period_effect_slope=0.2,
        )
        panel, _ = generate(config)
        frame = panel.to_frame()
        out = demean_two_way(
            frame["outcome"].to_numpy(), frame["unit"].to_numpy(), frame["period"].to_numpy())
        assert np.abs(out).max() < 1e-10

    def test_truth_constant_effect(self):
        _, truth = generate(simple_config())
        assert set(truth.event_effects) == set(range(0, 7))
        for v in truth.event_effects.values():
            assert v == pytest.approx(0.5, abs=1e-15)

    def test_truth_two_cohorts_equal_shares(self):
        config = simple_config(
            n_units=40, period_start=1, period_end=12,
            cohorts=((4, 0.3), (7, 0.3)), never_share=0.4,
            effect=EffectProfile("const", (0.2,)),
            cohort_effects={4: EffectProfile("const", (1.0,))},
        )
        _, truth = generate(config)
        # both cohorts identified at small ell with equal unit counts
        assert truth.event_effects[0] == pytest.approx(0.6, abs=1e-15)
        assert truth.event_effects[5] == pytest.approx(0.6, abs=1e-15)
        # deeper horizons keep only the early cohort
        assert truth.event_effects[6] == pytest.approx(1.0, abs=1e-15)

    def test_same_config_and_seed_bitwise_identical(self):
        config = simple_config(noise_sd=0.5, unit_effect_sd=1.0, period_effect_sd=0.2)
        p1, _ = generate(config)
        p2, _ = generate(config)
        assert np.array_equal(p1.outcome, p2.outcome)

    def test_different_seed_differs(self):
        import dataclasses

        config = simple_config(noise_sd=0.5)
        p1, _ = generate(config)
        p2, _ = generate(dataclasses.replace(config, seed=2))
        assert not np.array_equal(p1.outcome, p2.outcome)

    def test_unit_effect_level_shift_leaves_estimates_unchanged(self):
        config = simple_config(unit_effect_sd=1.0, noise_sd=0.0)
        shifted = simple_config(unit_effect_sd=1.0, unit_effect_mean=25.0, noise_sd=0.0)
        s1 = event_study(generate(config)[0], lags=3, leads=2)
        s2 = event_study(generate(shifted)[0], lags=3, leads=2)
        assert np.allclose(s1.estimate, s2.estimate, atol=1e-10, equal_nan=True)

    def test_anticipation_and_pretrend_enter_expected_values(self):
        config = simple_config(
            anticipation={-2: 0.2, -3: 0.2}, period_end=12, cohorts=((6, 0.5),))
        _, truth = generate(config)
        assert truth.expected_placebo[1] == pytest.approx(0.2, abs=1e-15)
        assert truth.expected_placebo[2] == pytest.approx(0.2, abs=1e-15)
        assert truth.expected_placebo[3] == pytest.approx(0.0, abs=1e-15)

    def test_ar1_noise_runs(self):
        panel, _ = generate(simple_config(noise_sd=0.2, ar1=0.6))
        assert np.isfinite(panel.outcome).all()


class TestNoiselessOracle:
    def test_every_estimator_matches_truth_on_identified_horizons(self):
        config = simple_config(
            n_units=60, period_end=14,
            cohorts=((5, 0.25), (9, 0.25)), never_share=0.5,
            effect=EffectProfile("ramp", (0.07,)),
        )
        panel, truth = generate(config)
        dyn = dynamic_effects(panel, horizon=8)
        for ell, want in truth.expected_dynamic.items():
            if ell <= 8:
                got = dyn.at(ell)
                assert got["identified"]
                assert got["estimate"] == pytest.approx(want, abs=1e-10)
                assert got["n_switchers"] == truth.n_identified[ell]
        pl = placebo_effects(panel, horizon=3)
        for k, want in truth.expected_placebo.items():
            if k <= 3:
                assert pl.at(-1 - k)["estimate"] == pytest.approx(want, abs=1e-10)

    def test_homogeneous_case_twfe_agrees_with_truth(self):
        config = simple_config(n_units=50, effect=EffectProfile("const", (0.4,)))
        panel, truth = generate(config)
        static = twfe_static(panel)
        assert static.estimate == pytest.approx(0.4, abs=1e-10)
        series = twfe_event_study(panel, TwfeSpec(leads=2, lags=4, bin_endpoints=True))
        for ell in range(0, 5):
            assert series.at(ell)["estimate"] == pytest.approx(0.4, abs=1e-10)


class TestScenarioLibrary:
    def test_library_names(self):
        lib = scenario_library()
        for name in (
            "parallel-homogeneous", "cohort-heterogeneous", "pretrend-violation",
            "anticipation-2yr", "neighbor-spillover", "paper-scale", "sign-reversal",
        ):
            assert name in lib

    def test_parallel_homogeneous_robust_and_twfe_agree(self):
        panel, _ = generate(scenario_library()["parallel-homogeneous"])
        robust = dynamic_effects(panel, horizon=5)
        static = twfe_static(panel)
        for ell in range(0, 6):
            assert robust.at(ell)["estimate"] == pytest.approx(static.estimate, abs=1e-8)

    def test_cohort_heterogeneous_static_twfe_gap_matches_brute_force(self):
        panel, truth = generate(scenario_library()["cohort-heterogeneous"])
        static = twfe_static(panel)
        records = panel.to_frame().to_dict("records")
        brute = brute_force_twfe(records)
        assert static.estimate == pytest.approx(brute["treated"], abs=1e-8)
        # biased away from the truth-weighted average under heterogeneity
        assert abs(static.estimate - truth.event_effects[0]) > 0.01

    def test_paper_scale_shape(self):
        config = scenario_library()["paper-scale"]
        assert config.n_units == 2400
        assert config.period_end - config.period_start + 1 == 58
        assert config.n_units * 58 == 139200
        counts, never = config.group_counts()
        assert sum(counts) + never == 2400

    def test_sign_reversal_scenario_flips_static_twfe(self):
        panel, truth = generate(scenario_library()["sign-reversal"])
        static = twfe_static(panel)
        assert static.estimate < 0
        assert all(v > 0 for v in truth.event_effects.values())
