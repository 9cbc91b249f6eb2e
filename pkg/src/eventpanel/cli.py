"""Command-line front end.

Subcommands: validate, estimate, spillover, crosssec, simulate, compare.
Every run writes a manifest echoing its full argument vector; re-running a
manifest (``--from-manifest``) reproduces all output files bitwise.  The
report path renders matplotlib figures next to the delimited output
(disable with ``--no-figures``).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, designs, figures, robust, simgen, twfe
from .errors import EventPanelError
from .inference import BootstrapConfig, pretrend_wald
from .panel import (
    Panel,
    cohorts,
    load_panel,
    log_transform,
    percent_change,
    shift_treatment,
    switcher_counts,
)
from .series import EstimateSeries


def format_percent(log_points: float) -> str:
    """Report a log-point effect the way the tables do: '+123%'."""
    return f"{100.0 * percent_change(log_points):+.0f}%"


# ---------------------------------------------------------------------------
# manifest plumbing
# ---------------------------------------------------------------------------


def _manifest_obj(command: str, argv: list[str]) -> dict:
    return {
        "package": "eventpanel",
        "version": __version__,
        "command": command,
        "argv": list(argv),
    }


def _manifest_str(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, separators=(",", ":"))


def _prepare_outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(outdir: Path, manifest: dict) -> None:
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _write_series(series: EstimateSeries, outdir: Path, name: str, fmt: str, manifest: dict) -> Path:
    if fmt == "json":
        path = outdir / f"{name}.json"
        series.to_json(path, manifest=manifest)
    else:
        path = outdir / f"{name}.csv"
        series.to_csv(path, manifest=_manifest_str(manifest))
    return path


def _load_series_file(path: str) -> EstimateSeries:
    p = Path(path)
    label = p.stem
    if p.suffix.lower() == ".json":
        return EstimateSeries.from_json(p, label=label)
    return EstimateSeries.from_csv(p, label=label)


# ---------------------------------------------------------------------------
# shared option groups
# ---------------------------------------------------------------------------


def _add_estimator_options(sub: argparse.ArgumentParser, *, lags=30, leads=25) -> None:
    sub.add_argument("--lags", type=int, default=lags,
                     help=f"dynamic horizons after the switch (default {lags})")
    sub.add_argument("--leads", type=int, default=leads,
                     help=f"long-difference placebo horizons (default {leads})")
    sub.add_argument("--shift", type=int, default=0,
                     help="move treatment earlier by N periods (opening -> construction start)")
    sub.add_argument("--control", choices=("not-yet", "never"), default="not-yet",
                     help="control pool: not-yet-treated (default) or never-treated only")
    sub.add_argument("--weighting", default="equal",
                     help="'equal' (default) or column=<name> for unit weights")
    sub.add_argument("--log", action="store_true",
                     help="log-transform outcomes before estimating")
    sub.add_argument("--split", choices=("low", "high"), default=None,
                     help="restrict to one initial-condition half (needs --baseline-period)")
    sub.add_argument("--baseline-period", type=int, default=None,
                     help="period whose outcome defines the median split")


def _add_inference_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--reps", type=int, default=999,
                     help="bootstrap replications (0 disables inference)")
    sub.add_argument("--seed", type=int, required=True,
                     help="seed for all randomness (required)")
    sub.add_argument("--level", type=float, default=0.95, help="CI level (default 0.95)")


def _add_output_options(sub: argparse.ArgumentParser, required: bool = True) -> None:
    sub.add_argument("--output", required=required, help="output directory")
    sub.add_argument("--format", choices=("csv", "json"), default="csv",
                     help="tabular output format (default csv)")
    sub.add_argument("--no-figures", dest="render_figures", action="store_false",
                     help="skip rendering PNG figures")


def _bootstrap_config(args) -> BootstrapConfig | None:
    if args.reps <= 0:
        return None
    return BootstrapConfig(seed=args.seed, replications=args.reps, ci_level=args.level)


def _prepared_panel(args) -> Panel:
    panel = load_panel(args.panel)
    if getattr(args, "log", False):
        panel = log_transform(panel)
    if getattr(args, "shift", 0):
        panel = shift_treatment(panel, args.shift)
    if getattr(args, "split", None):
        if args.baseline_period is None:
            raise EventPanelError("--split requires --baseline-period")
        split = designs.split_by_initial(panel, args.baseline_period)
        half = split.low if args.split == "low" else split.high
        if half is None:
            raise EventPanelError("requested split half is empty")
        panel = half
    return panel


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args, manifest: dict) -> int:
    panel = _prepared_panel(args)
    cm = cohorts(panel)
    counts = switcher_counts(panel, args.lags, args.leads, control_rule=args.control)
    n_sw = len(cm.switchers)
    print(f"panel: {args.panel}")
    print(f"units: {panel.n_units} (switchers {n_sw}, never-treated {len(cm.never_treated)}, "
          f"always-treated {len(cm.always_treated)})")
    print(f"periods: {panel.period_start}..{panel.period_end} ({panel.n_periods}), "
          f"balanced: {'yes' if panel.balanced else 'no'}")
    print(f"observations: {int(panel.observed.sum())}")
    hist: dict[int, int] = {}
    for unit in cm.switchers:
        hist[cm.first_switch[unit]] = hist.get(cm.first_switch[unit], 0) + 1
    print("cohort histogram (switch period: units):")
    for s in sorted(hist):
        print(f"  {s}: {hist[s]}")
    print("switcher counts (cell event time: identified switchers):")
    for ell, c in sorted(counts.per_event_time.items()):
        print(f"  {ell}: {c}")
    if args.output:
        outdir = _prepare_outdir(args.output)
        mstr = _manifest_str(manifest)
        counts_frame = counts.to_frame()
        hist_frame = pd.DataFrame(sorted(hist.items()), columns=["switch_period", "n_units"])
        if args.format == "json":
            payload = {
                "manifest": manifest,
                "switcher_counts": counts_frame.to_dict("records"),
                "cohort_histogram": hist_frame.to_dict("records"),
            }
            with open(outdir / "validate.json", "w") as fh:
                json.dump(payload, fh, sort_keys=True, indent=1)
                fh.write("\n")
        else:
            for name, frame in (("switcher_counts", counts_frame),
                                ("cohort_histogram", hist_frame)):
                with open(outdir / f"{name}.csv", "w", newline="") as fh:
                    fh.write(f"# manifest: {mstr}\n")
                    frame.to_csv(fh, index=False)
        if args.render_figures:
            fig = figures.switcher_counts_figure(counts_frame)
            figures.save_figure(fig, outdir / "switcher_counts.png", _manifest_str(manifest))
        _write_manifest(outdir, manifest)
    return 0


def cmd_estimate(args, manifest: dict) -> int:
    panel = _prepared_panel(args)
    outdir = _prepare_outdir(args.output)
    config = _bootstrap_config(args)
    run_robust = args.estimator in ("robust", "both")
    run_twfe = args.estimator in ("twfe", "both")
    summary: dict = {"command": "estimate"}
    series_files: list[EstimateSeries] = []

    robust_series = boot = None
    if run_robust:
        robust_series, boot = robust.event_study(
            panel, lags=args.lags, leads=args.leads, weighting=args.weighting,
            control_rule=args.control, inference=config, return_bootstrap=True,
        )
        _write_series(robust_series, outdir, "robust", args.format, manifest)
        series_files.append(robust_series)
        last = int(robust_series.event_time[-1])
        final = robust_series.at(last)
        if np.isfinite(final["estimate"]):
            summary["final_dynamic"] = {
                "event_time": last,
                "estimate": final["estimate"],
                "percent": format_percent(final["estimate"]),
            }
        if boot is not None and args.leads >= 1 and config.replications >= 30:
            try:
                wald = pretrend_wald(robust_series, boot)
                summary["pretrend_wald"] = {
                    "statistic": wald.statistic,
                    "pvalue": wald.pvalue,
                    "dof": wald.dof,
                    "dropped": list(wald.dropped),
                    "n_replications": wald.n_replications,
                }
            except EventPanelError as err:
                # degenerate (e.g. noiseless) bootstrap covariance
                summary["pretrend_wald"] = {"unavailable": str(err)}

    if run_twfe:
        spec = twfe.TwfeSpec(
            leads=args.leads + 1, lags=args.lags,
            bin_endpoints=args.bin_endpoints, omitted_lead=args.omitted_lead,
            trend_controls=args.trend_controls, ci_level=args.level,
        )
        twfe_series = twfe.twfe_event_study(panel, spec)
        _write_series(twfe_series, outdir, "twfe", args.format, manifest)
        series_files.append(twfe_series)
        static = twfe.twfe_static(panel, trend_controls=args.trend_controls)
        weights = twfe.twfe_weights(panel)
        weights.to_csv(outdir / "twfe_weights.csv", manifest=_manifest_str(manifest))
        summary["twfe_static"] = {
            "estimate": static.estimate,
            "se": static.se,
            "formatted": static.formatted(),
        }
        summary["twfe_weights"] = {
            "share_negative": weights.share_negative,
            "min_weight": weights.min_weight,
            "sum": weights.total,
        }
        if args.render_figures:
            fig = figures.weights_figure(weights)
            figures.save_figure(fig, outdir / "twfe_weights.png", _manifest_str(manifest))

    if len(series_files) > 1:
        comparison = _merged_long(series_files)
        _write_table(comparison, outdir, "comparison", args.format, manifest)
    with open(outdir / "summary.json", "w") as fh:
        json.dump({"manifest": manifest, **summary}, fh, sort_keys=True, indent=1)
        fh.write("\n")
    if args.render_figures and series_files:
        fig = figures.event_study_figure(series_files, title="Event study")
        figures.save_figure(fig, outdir / "event_study.png", _manifest_str(manifest))
    _write_manifest(outdir, manifest)
    if "final_dynamic" in summary:
        fd = summary["final_dynamic"]
        print(f"final dynamic effect at +{fd['event_time']}: "
              f"{fd['estimate']:.4f} log points ({fd['percent']})")
    return 0


def cmd_spillover(args, manifest: dict) -> int:
    panel = _prepared_panel(args)
    graph = designs.AdjacencyGraph.read_csv(args.adjacency)
    result = designs.build_spillover_panel(
        panel, cohorts(panel), graph, mode=args.match, k_nearest=args.k_nearest,
    )
    config = _bootstrap_config(args)
    series, _ = designs.spillover_event_study(
        result, lags=args.lags, leads=args.leads, weighting=args.weighting,
        control_rule=args.control, inference=config, return_bootstrap=True,
    )
    outdir = _prepare_outdir(args.output)
    _write_series(series, outdir, "spillover", args.format, manifest)
    with open(outdir / "match_report.json", "w") as fh:
        json.dump({"manifest": manifest, **result.report()}, fh, sort_keys=True, indent=1)
        fh.write("\n")
    if args.render_figures:
        fig = figures.event_study_figure(series, title="Neighbor-spillover placebo")
        figures.save_figure(fig, outdir / "spillover.png", _manifest_str(manifest))
    _write_manifest(outdir, manifest)
    print(f"matched {result.n_matched} of {result.n_source_never} never-treated units "
          f"({len(result.dropped)} dropped)")
    return 0


def cmd_crosssec(args, manifest: dict) -> int:
    plants = designs.read_plants(args.plants)
    if args.rail:
        rail_frame = pd.read_csv(args.rail, comment="#", dtype={"unit": str})
        if not {"unit", "rail"} <= set(rail_frame.columns):
            raise EventPanelError("rail file needs columns unit,rail")
        rail = {str(u): bool(int(r)) for u, r in zip(rail_frame["unit"], rail_frame["rail"])}
    else:
        rail_panel = load_panel(args.rail_from_panel)
        rail = {str(u): bool(np.isfinite(rail_panel.first_switch_period[i]))
                for i, u in enumerate(rail_panel.units)}
    groups = None
    if args.split_panel:
        if args.baseline_period is None:
            raise EventPanelError("--split-panel requires --baseline-period")
        split_src = load_panel(args.split_panel)
        split = designs.split_by_initial(split_src, args.baseline_period)
        groups = {str(u): "low" for u in split.low.units}
        if split.high is not None:
            groups.update({str(u): "high" for u in split.high.units})
    lo, _, hi = args.window.partition(":")
    table = designs.plant_study(
        plants, rail, (int(lo), int(hi)), groups=groups, outcome=args.outcome,
    )
    for row in table.rows:
        if row.group == "all":
            print(row.summary_line())
    outdir = _prepare_outdir(args.output)
    if args.format == "json":
        with open(outdir / "crosssec.json", "w") as fh:
            json.dump(table.to_json_obj(manifest), fh, sort_keys=True, indent=1)
            fh.write("\n")
    else:
        table.to_csv(outdir / "crosssec.csv", manifest=_manifest_str(manifest), wide=True)
        table.to_csv(outdir / "crosssec_long.csv", manifest=_manifest_str(manifest), wide=False)
    if args.render_figures:
        fig = figures.strata_figure(table, args.outcome)
        figures.save_figure(fig, outdir / "crosssec.png", _manifest_str(manifest))
    _write_manifest(outdir, manifest)
    return 0


def cmd_simulate(args, manifest: dict) -> int:
    if (args.scenario is None) == (args.config is None):
        raise EventPanelError("provide exactly one of --scenario or --config")
    if args.scenario:
        library = simgen.scenario_library()
        if args.scenario not in library:
            raise EventPanelError(
                f"unknown scenario {args.scenario!r}; available: {sorted(library)}")
        config = library[args.scenario]
    else:
        config = simgen.DgpConfig.from_text(Path(args.config).read_text())
    config = dataclasses.replace(config, seed=args.seed)
    if args.sigma is not None:
        config = dataclasses.replace(config, noise_sd=args.sigma)
    panel, truth = simgen.generate(config)
    outdir = _prepare_outdir(args.output)
    mstr = _manifest_str(manifest)
    panel.write_csv(outdir / "panel.csv", manifest=mstr)
    truth.write_json(outdir / "truth.json", manifest=manifest)
    (outdir / "config.txt").write_text(f"# manifest: {mstr}\n" + config.to_text())
    edges = config.edges()
    if edges:
        graph = designs.AdjacencyGraph.from_pairs(edges)
        with open(outdir / "adjacency.csv", "w", newline="") as fh:
            fh.write(f"# manifest: {mstr}\n")
            graph.to_frame().to_csv(fh, index=False)
    _write_manifest(outdir, manifest)
    print(f"wrote panel with {panel.n_units} units x {panel.n_periods} periods to {outdir}")
    return 0


def cmd_compare(args, manifest: dict) -> int:
    series_list = [_load_series_file(p) for p in args.series]
    merged = _merged_long(series_list)
    outdir = _prepare_outdir(args.output)
    _write_table(merged, outdir, "compare", args.format, manifest)
    if args.render_figures:
        fig = figures.event_study_figure(series_list, title="Series comparison")
        figures.save_figure(fig, outdir / "compare.png", _manifest_str(manifest))
    _write_manifest(outdir, manifest)
    return 0


def _merged_long(series_list: list[EstimateSeries]) -> pd.DataFrame:
    frames = []
    for s in series_list:
        frame = s.to_frame()
        frame.insert(0, "estimator", s.label)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def _write_table(frame: pd.DataFrame, outdir: Path, name: str, fmt: str, manifest: dict) -> None:
    if fmt == "json":
        payload = {"manifest": manifest, "rows": json.loads(frame.to_json(orient="records"))}
        with open(outdir / f"{name}.json", "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=1)
            fh.write("\n")
    else:
        with open(outdir / f"{name}.csv", "w", newline="") as fh:
            fh.write(f"# manifest: {_manifest_str(manifest)}\n")
            frame.to_csv(fh, index=False)


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eventpanel",
        description="Panel event-study toolkit for staggered treatment designs.",
    )
    parser.add_argument("--version", action="version", version=f"eventpanel {__version__}")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("validate", help="validate a panel and report cohorts/switcher counts")
    p.add_argument("panel")
    _add_estimator_options(p)
    p.add_argument("--output", default=None, help="optional output directory")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-figures", dest="render_figures", action="store_false")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("estimate", help="robust and/or TWFE event studies")
    p.add_argument("panel")
    p.add_argument("--estimator", choices=("robust", "twfe", "both"), default="both")
    _add_estimator_options(p)
    p.add_argument("--bin-endpoints", action="store_true",
                   help="bin TWFE event-time endpoints")
    p.add_argument("--omitted-lead", type=int, default=-1,
                   help="TWFE normalization lead (default -1)")
    p.add_argument("--trend-controls", choices=("none", "unit-linear"), default="none")
    _add_inference_options(p)
    _add_output_options(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("spillover", help="neighbor-spillover placebo design")
    p.add_argument("panel")
    p.add_argument("adjacency", help="CSV with unit_a,unit_b[,distance]")
    p.add_argument("--match", choices=("adjacency", "nearest"), default="adjacency")
    p.add_argument("--k-nearest", type=int, default=1)
    _add_estimator_options(p, lags=20, leads=15)
    _add_inference_options(p)
    _add_output_options(p)
    p.set_defaults(func=cmd_spillover)

    p = sub.add_parser("crosssec", help="stratified cross-sectional plant study")
    p.add_argument("plants", help="CSV with unit,sector,year,production_value,employment")
    rail = p.add_mutually_exclusive_group(required=True)
    rail.add_argument("--rail", help="CSV with unit,rail columns")
    rail.add_argument("--rail-from-panel", help="panel CSV; rail = ever treated")
    p.add_argument("--window", default="1913:1917", help="aggregation years lo:hi")
    p.add_argument("--outcome", choices=("production_value", "employment"),
                   default="production_value")
    p.add_argument("--split-panel", default=None,
                   help="panel CSV used for the initial-condition split")
    p.add_argument("--baseline-period", type=int, default=None)
    _add_output_options(p)
    p.set_defaults(func=cmd_crosssec)

    p = sub.add_parser("simulate", help="generate a synthetic panel plus exact truth")
    p.add_argument("--scenario", default=None, help="library scenario name")
    p.add_argument("--config", default=None, help="plain-text DGP config file")
    p.add_argument("--sigma", type=float, default=None, help="override noise sd")
    p.add_argument("--seed", type=int, required=True)
    _add_output_options(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="merge estimate files into one long table")
    p.add_argument("series", nargs="+", help="series files (csv or json)")
    _add_output_options(p)
    p.set_defaults(func=cmd_compare)

    return parser


def _replay_argv(argv: list[str]) -> list[str]:
    """Resolve --from-manifest into the recorded argument vector."""
    if "--from-manifest" not in argv:
        return argv
    i = argv.index("--from-manifest")
    try:
        path = argv[i + 1]
    except IndexError:
        raise EventPanelError("--from-manifest requires a path") from None
    rest = argv[:i] + argv[i + 2:]
    with open(path) as fh:
        manifest = json.load(fh)
    recorded = list(manifest["argv"])
    if "--output" in rest:
        j = rest.index("--output")
        override = rest[j + 1]
        if "--output" in recorded:
            k = recorded.index("--output")
            recorded[k + 1] = override
        else:
            recorded += ["--output", override]
        rest = rest[:j] + rest[j + 2:]
    if rest:
        raise EventPanelError(f"unexpected arguments alongside --from-manifest: {rest}")
    return recorded


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _replay_argv(argv)
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_help()
            return 2
        manifest = _manifest_obj(args.command, argv)
        return args.func(args, manifest)
    except EventPanelError as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"{type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
