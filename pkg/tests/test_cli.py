"""Command-line interface: subcommands, manifests, determinism."""

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from eventpanel.cli import format_percent, main


def run(argv):
    return main(argv)


def write_panel(tmp_path, name="panel.csv", scenario="parallel-homogeneous", seed=17):
    out = tmp_path / f"sim_{name}"
    assert run(["simulate", "--scenario", scenario, "--seed", str(seed),
                "--output", str(out)]) == 0
    return out / "panel.csv"


class TestFormatPercent:
    def test_paper_rounding(self):
        assert format_percent(0.80) == "+123%"
        assert format_percent(0.148) == "+16%"
        assert format_percent(0.153) == "+17%"


class TestSimulate:
    def test_writes_panel_truth_config_manifest(self, tmp_path):
        out = tmp_path / "sim"
        assert run(["simulate", "--scenario", "neighbor-spillover", "--seed", "3",
                    "--output", str(out)]) == 0
        for name in ("panel.csv", "truth.json", "config.txt", "manifest.json",
                     "adjacency.csv"):
            assert (out / name).exists()
        truth = json.loads((out / "truth.json").read_text())
        assert "event_effects" in truth and "manifest" in truth

    def test_config_file_input(self, tmp_path):
        config_text = (
            "n_units = 20\nperiods = 1:8\ncohorts = 4:0.5\nnever_share = 0.5\n"
            "effect = const:0.25\nseed = 1\n"
        )
        cfg = tmp_path / "dgp.txt"
        cfg.write_text(config_text)
        out = tmp_path / "sim"
        assert run(["simulate", "--config", str(cfg), "--seed", "9",
                    "--output", str(out)]) == 0
        panel = pd.read_csv(out / "panel.csv", comment="#")
        assert panel["unit"].nunique() == 20

    def test_requires_exactly_one_source(self, tmp_path):
        assert run(["simulate", "--seed", "1", "--output", str(tmp_path / "x")]) == 1

    def test_unknown_scenario_fails_cleanly(self, tmp_path, capsys):
        code = run(["simulate", "--scenario", "nope", "--seed", "1",
                    "--output", str(tmp_path / "x")])
        assert code == 1
        assert "EventPanelError" in capsys.readouterr().err


class TestValidate:
    def test_prints_report(self, tmp_path, capsys):
        panel = write_panel(tmp_path)
        assert run(["validate", str(panel)]) == 0
        out = capsys.readouterr().out
        assert "units: 200" in out
        assert "switcher counts" in out
        assert "balanced: yes" in out

    def test_non_absorbing_panel_exits_with_error_class(self, tmp_path, capsys):
        path = tmp_path / "bad.csv"
        path.write_text(
            "unit,period,outcome,treated\nA,1,1.0,0\nA,2,1.0,1\nA,3,1.0,0\n")
        assert run(["validate", str(path)]) == 1
        err = capsys.readouterr().err
        assert err.startswith("NonAbsorbingTreatment:")
        assert err.strip().count("\n") == 0

    def test_output_files(self, tmp_path):
        panel = write_panel(tmp_path)
        out = tmp_path / "val"
        assert run(["validate", str(panel), "--output", str(out)]) == 0
        assert (out / "switcher_counts.csv").exists()
        assert (out / "cohort_histogram.csv").exists()
        assert (out / "switcher_counts.png").exists()
        assert (out / "manifest.json").exists()

    def test_json_output(self, tmp_path):
        panel = write_panel(tmp_path, name="vj.csv", seed=41)
        out = tmp_path / "valj"
        assert run(["validate", str(panel), "--output", str(out),
                    "--format", "json"]) == 0
        payload = json.loads((out / "validate.json").read_text())
        assert "switcher_counts" in payload and "manifest" in payload


class TestEstimate:
    def test_noiseless_series_constant_at_tau(self, tmp_path):
        panel = write_panel(tmp_path)
        out = tmp_path / "est"
        assert run(["estimate", str(panel), "--lags", "5", "--leads", "3",
                    "--reps", "40", "--seed", "5", "--output", str(out)]) == 0
        frame = pd.read_csv(out / "robust.csv", comment="#")
        post = frame[frame["event_time"] >= 0]
        assert np.allclose(post["estimate"], 0.3, atol=1e-8)
        for name in ("twfe.csv", "comparison.csv", "summary.json",
                     "event_study.png", "manifest.json"):
            assert (out / name).exists()

    def test_summary_contains_percent_and_static(self, tmp_path):
        panel = write_panel(tmp_path)
        out = tmp_path / "est2"
        assert run(["estimate", str(panel), "--lags", "4", "--leads", "2",
                    "--reps", "40", "--seed", "5", "--output", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["final_dynamic"]["percent"].endswith("%")
        assert "formatted" in summary["twfe_static"]
        assert "pretrend_wald" in summary
        assert summary["twfe_weights"]["sum"] == pytest.approx(1.0, abs=1e-8)

    def test_json_format(self, tmp_path):
        panel = write_panel(tmp_path)
        out = tmp_path / "est3"
        assert run(["estimate", str(panel), "--lags", "2", "--leads", "1",
                    "--estimator", "robust", "--reps", "0", "--seed", "1",
                    "--format", "json", "--output", str(out)]) == 0
        obj = json.loads((out / "robust.json").read_text())
        assert obj["manifest"]["command"] == "estimate"
        assert obj["rows"][0]["event_time"] == -2

    def test_seed_required(self, tmp_path, capsys):
        panel = write_panel(tmp_path)
        with pytest.raises(SystemExit):
            run(["estimate", str(panel), "--output", str(tmp_path / "x")])

    def test_control_rule_and_shift_flags(self, tmp_path):
        panel = write_panel(tmp_path, name="c.csv", seed=31)
        out = tmp_path / "estc"
        assert run(["estimate", str(panel), "--lags", "2", "--leads", "1",
                    "--estimator", "robust", "--control", "never", "--shift", "2",
                    "--reps", "0", "--seed", "1", "--output", str(out)]) == 0
        frame = pd.read_csv(out / "robust.csv", comment="#").set_index("event_time")
        # treatment moved 2 periods before the effect onset: shifted event
        # times 0-1 precede the response, the effect shows from 2 on
        assert frame.loc[0, "estimate"] == pytest.approx(0.0, abs=1e-10)
        assert frame.loc[1, "estimate"] == pytest.approx(0.0, abs=1e-10)
        assert frame.loc[2, "estimate"] == pytest.approx(0.3, abs=1e-10)

    def test_split_flag_estimates_one_half(self, tmp_path):
        rows_ = []
        for group, base, effect, n_sw, n_nv in (("l", 1.0, 0.2, 5, 3), ("h", 10.0, 1.0, 5, 3)):
            for i in range(n_sw):
                for p in range(1, 8):
                    rows_.append(f"{group}s{i},{p},{base + (effect if p >= 4 else 0.0)},{int(p >= 4)}")
            for i in range(n_nv):
                for p in range(1, 8):
                    rows_.append(f"{group}n{i},{p},{base},0")
        path = tmp_path / "split.csv"
        path.write_text("unit,period,outcome,treated\n" + "\n".join(rows_) + "\n")
        for half, want in (("low", 0.2), ("high", 1.0)):
            out = tmp_path / f"est_{half}"
            assert run(["estimate", str(path), "--split", half,
                        "--baseline-period", "1", "--lags", "2", "--leads", "1",
                        "--estimator", "robust", "--reps", "0", "--seed", "1",
                        "--output", str(out)]) == 0
            frame = pd.read_csv(out / "robust.csv", comment="#").set_index("event_time")
            assert frame.loc[0, "estimate"] == pytest.approx(want, abs=1e-10)

    def test_log_flag_transforms_outcomes(self, tmp_path):
        path = tmp_path / "lvl.csv"
        path.write_text(
            "unit,period,outcome,treated\n"
            "A,1,1.0,0\nA,2,2.718281828459045,1\n"
            "N,1,1.0,0\nN,2,1.0,0\n"
        )
        out = tmp_path / "estl"
        assert run(["estimate", str(path), "--log", "--lags", "0", "--leads", "1",
                    "--estimator", "robust", "--reps", "0", "--seed", "1",
                    "--output", str(out)]) == 0
        frame = pd.read_csv(out / "robust.csv", comment="#").set_index("event_time")
        assert frame.loc[0, "estimate"] == pytest.approx(1.0, abs=1e-12)

    def test_weight_column_flag(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text(
            "unit,period,outcome,treated,population\n"
            "A,1,0.0,0,3\nA,2,1.0,1,3\n"
            "B,1,0.0,0,1\nB,2,3.0,1,1\n"
            "N,1,0.0,0,5\nN,2,0.0,0,5\n"
        )
        out = tmp_path / "estw"
        assert run(["estimate", str(path), "--lags", "0", "--leads", "1",
                    "--estimator", "robust", "--weighting", "column=population",
                    "--reps", "0", "--seed", "1", "--output", str(out)]) == 0
        frame = pd.read_csv(out / "robust.csv", comment="#")
        at0 = frame[frame["event_time"] == 0]["estimate"].iloc[0]
        assert at0 == pytest.approx((3 * 1.0 + 1 * 3.0) / 4.0, abs=1e-12)


class TestSpillover:
    def test_end_to_end_detects_planted_effect(self, tmp_path):
        sim = tmp_path / "sim"
        assert run(["simulate", "--scenario", "neighbor-spillover", "--seed", "3",
                    "--output", str(sim)]) == 0
        out = tmp_path / "spill"
        assert run(["spillover", str(sim / "panel.csv"), str(sim / "adjacency.csv"),
                    "--lags", "4", "--leads", "2", "--reps", "30", "--seed", "4",
                    "--output", str(out)]) == 0
        frame = pd.read_csv(out / "spillover.csv", comment="#")
        post = frame[(frame["event_time"] >= 0) & np.isfinite(frame["estimate"])]
        assert np.allclose(post["estimate"], 0.1, atol=1e-10)
        report = json.loads((out / "match_report.json").read_text())
        assert report["matched_units"] > 0


class TestCrosssec:
    def build_targeted_inputs(self, tmp_path):
        """Plant + rail files whose all-sector row is exactly 1.11 (0.11), n=1342."""
        n_t, n_c = 893, 449
        n = n_t + n_c
        base = (n / (n - 2)) * ((n_t - 1) / n_t**2 + (n_c - 1) / n_c**2)
        delta = 0.11 / math.sqrt(base)
        rows = []
        rail_rows = []
        for i in range(n_t):
            sign = 1.0 if i % 2 == 0 else -1.0
            y = 1.11 + (sign * delta if i < n_t - 1 else 0.0)
            unit = f"t{i:04d}"
            rows.append((unit, 1, 1913, math.exp(y), 1.0))
            rail_rows.append((unit, 1))
        for i in range(n_c):
            sign = 1.0 if i % 2 == 0 else -1.0
            y = sign * delta if i < n_c - 1 else 0.0
            unit = f"c{i:04d}"
            rows.append((unit, 1, 1913, math.exp(y), 1.0))
            rail_rows.append((unit, 0))
        plants = tmp_path / "plants.csv"
        pd.DataFrame(rows, columns=["unit", "sector", "year", "production_value",
                                    "employment"]).to_csv(plants, index=False)
        rail = tmp_path / "rail.csv"
        pd.DataFrame(rail_rows, columns=["unit", "rail"]).to_csv(rail, index=False)
        return plants, rail

    def test_exact_paper_style_row(self, tmp_path, capsys):
        plants, rail = self.build_targeted_inputs(tmp_path)
        out = tmp_path / "cs"
        assert run(["crosssec", str(plants), "--rail", str(rail),
                    "--output", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "all sectors: 1.11 (0.11), n=1342" in stdout.splitlines()[0]
        wide = pd.read_csv(out / "crosssec.csv", comment="#")
        assert wide.iloc[0]["all"] == "1.11 (0.11)"
        assert int(wide.iloc[1]["all"]) == 1342

    def test_split_panels_add_groups(self, tmp_path):
        rng = np.random.default_rng(2)
        units = [f"u{i:02d}" for i in range(20)]
        plant_rows = [(u, 1, 1913, float(rng.uniform(1, 9)), 1.0) for u in units]
        plants = tmp_path / "plants.csv"
        pd.DataFrame(plant_rows, columns=["unit", "sector", "year", "production_value",
                                          "employment"]).to_csv(plants, index=False)
        rail = tmp_path / "rail.csv"
        pd.DataFrame({"unit": units, "rail": [i % 2 for i in range(20)]}).to_csv(
            rail, index=False)
        panel_rows = []
        for i, u in enumerate(units):
            for p in (1871, 1872):
                panel_rows.append({"unit": u, "period": p,
                                   "outcome": float(i), "treated": 0})
        panel = tmp_path / "base.csv"
        pd.DataFrame(panel_rows).to_csv(panel, index=False)
        out = tmp_path / "cs2"
        assert run(["crosssec", str(plants), "--rail", str(rail),
                    "--split-panel", str(panel), "--baseline-period", "1871",
                    "--output", str(out)]) == 0
        long = pd.read_csv(out / "crosssec_long.csv", comment="#")
        assert set(long["group"]) == {"all", "low", "high"}


class TestScenarioSweep:
    @pytest.mark.parametrize("scenario", [
        "parallel-homogeneous", "cohort-heterogeneous", "sign-reversal",
        "pretrend-violation", "anticipation-2yr", "neighbor-spillover",
    ])
    def test_validate_and_estimate_run_on_every_scenario(self, tmp_path, scenario):
        sim = tmp_path / "sim"
        assert run(["simulate", "--scenario", scenario, "--seed", "11",
                    "--output", str(sim)]) == 0
        assert run(["validate", str(sim / "panel.csv")]) == 0
        out = tmp_path / "est"
        assert run(["estimate", str(sim / "panel.csv"), "--lags", "4", "--leads", "3",
                    "--reps", "0", "--seed", "2", "--output", str(out)]) == 0
        robust = pd.read_csv(out / "robust.csv", comment="#")
        twfe = pd.read_csv(out / "twfe.csv", comment="#")
        # both estimators share the event-time grid -4..4
        assert list(robust["event_time"]) == list(range(-4, 5))
        assert list(twfe["event_time"]) == list(range(-4, 5))


class TestCompare:
    def test_merges_series_files(self, tmp_path):
        panel = write_panel(tmp_path)
        est = tmp_path / "est"
        assert run(["estimate", str(panel), "--lags", "3", "--leads", "2",
                    "--reps", "0", "--seed", "1", "--output", str(est)]) == 0
        out = tmp_path / "cmp"
        assert run(["compare", str(est / "robust.csv"), str(est / "twfe.csv"),
                    "--output", str(out)]) == 0
        merged = pd.read_csv(out / "compare.csv", comment="#")
        assert set(merged["estimator"]) == {"robust", "twfe"}
        assert (out / "compare.png").exists()


class TestDeterminism:
    def files_of(self, path):
        return sorted(p for p in Path(path).rglob("*") if p.is_file())

    def snapshot(self, outdir):
        return {p.name: p.read_bytes() for p in self.files_of(outdir)}

    def test_repeat_run_bitwise_identical(self, tmp_path):
        panel = write_panel(tmp_path, scenario="cohort-heterogeneous")
        out = tmp_path / "run"
        argv = ["estimate", str(panel), "--lags", "4", "--leads", "3",
                "--reps", "60", "--seed", "9", "--output", str(out)]
        assert run(argv) == 0
        first = self.snapshot(out)
        assert run(argv) == 0
        second = self.snapshot(out)
        assert first.keys() == second.keys()
        for name in first:
            assert first[name] == second[name], f"{name} differs"

    def test_manifest_replay_reproduces_outputs(self, tmp_path):
        panel = write_panel(tmp_path)
        out = tmp_path / "run"
        assert run(["estimate", str(panel), "--lags", "3", "--leads", "2",
                    "--reps", "50", "--seed", "12", "--output", str(out)]) == 0
        first = self.snapshot(out)
        # replaying the emitted manifest rewrites the same output path
        assert run(["--from-manifest", str(out / "manifest.json")]) == 0
        second = self.snapshot(out)
        assert first.keys() == second.keys()
        for name in first:
            assert first[name] == second[name], f"{name} differs"

    def test_manifest_replay_with_output_override(self, tmp_path):
        panel = write_panel(tmp_path, name="b.csv", seed=23)
        out1 = tmp_path / "a"
        assert run(["estimate", str(panel), "--lags", "2", "--leads", "1",
                    "--reps", "30", "--seed", "4", "--output", str(out1)]) == 0
        out2 = tmp_path / "b"
        assert run(["--from-manifest", str(out1 / "manifest.json"),
                    "--output", str(out2)]) == 0
        # numeric content identical; embedded argv differs only by path
        a = pd.read_csv(out1 / "robust.csv", comment="#")
        b = pd.read_csv(out2 / "robust.csv", comment="#")
        pd.testing.assert_frame_equal(a, b)
