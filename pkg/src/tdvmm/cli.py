"""Command-line front end: simulate | sweep | contour | estimate."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, list_presets, load_config
from .devices import error_contour
from .engine import PARAM_KEYS, design_point_from_params
from .errors import ConfigurationError, TdvmmError
from .metrics import (SweepReport, expand_grid, performance_estimate, plot_rows, run_trial, summarize, sweep,
                      simulate_trials)

log = logging.getLogger("tdvmm")

SCHEMA_VERSION = 1
RESULT_COLUMNS = ["trial", "column", "t_out_sim_s", "t_out_ideal_s", "err", "code"]
TRACE_COLUMNS = ["time_s", "column", "v_cap_V"]
PLOT_COLUMNS = ["sweep_var", "value", "metric", "metric_value"]
CONTOUR_COLUMNS = PLOT_COLUMNS + ["status"]
ESTIMATE_COLUMNS = ["component", "area_m2", "energy_J", "area_share", "energy_share"]
PRECISION_COLUMNS = ["target_bits", "t_window_s", "e_out_max", "p_out", "e_cl_J", "energy_J", "area_m2",
                     "energy_efficiency_ops_per_J", "throughput_ops_per_s"]
EXIT_CONFIG = 2
EXIT_FLAGGED = 3


# --------------------------------------------------------------------------
# output helpers


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return "" if value is None else str(value)


def write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, columns: list[str], rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    write_atomic(path, buf.getvalue())
    return path


def write_manifest(out_dir: Path, command: str, cfg: RunConfig, outputs: list[Path]):
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool": "tdvmm",
        "version": __version__,
        "command": command,
        "seed": cfg.batch.seed,
        "config_hash": cfg.digest(),
        "outputs": sorted(p.name for p in outputs),
        "resolved": cfg.resolved(),
        "config_text": cfg.source_text,
    }
    write_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def sweep_columns(reports: list[SweepReport], extra: list[str] = ()) -> list[str]:
    cols = []
    for r in reports:
        for k in r.params:
            if k not in cols:
                cols.append(k)
    for k in extra:
        if k not in cols:
            cols.append(k)
    return cols + list(SweepReport.METRICS) + ["status"]


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, args) -> int:
    dp = design_point_from_params(cfg.params)
    outcomes = simulate_trials(dp, cfg.batch, jobs=args.jobs)
    rows = []
    for t, o in enumerate(outcomes):
        for j in range(dp.n_cols):
            rows.append({"trial": t, "column": j, "t_out_sim_s": o.t_out_sim[j], "t_out_ideal_s": o.t_out_ideal[j],
                         "err": o.errors[j], "code": o.codes[j]})
    out = args.out_dir
    written = [write_csv(out / "result.csv", RESULT_COLUMNS, rows)]
    report = summarize(dp, outcomes, cfg.perf)
    if report.flagged:
        report.status = f"flagged: overflow={report.overflow_count} underflow={report.underflow_count}"
    written.append(write_csv(out / "summary.csv", sweep_columns([report]), [report.row()]))
    if args.trace or cfg.output.get("trace"):
        rec = run_trial(dp, cfg.batch, 0, record=True)
        trace_rows = [{"time_s": t, "column": c, "v_cap_V": v}
                      for c in range(rec.v_trace.shape[0]) for t, v in zip(rec.times, rec.v_trace[c])]
        written.append(write_csv(out / "trace.csv", TRACE_COLUMNS, trace_rows))
    write_manifest(out, "simulate", cfg, written)
    print(f"e_out_max={report.e_out_max:.4g}  e_out_p99={report.e_out_p99:.4g}  p_out={report.p_out} bits  "
          f"E_Cl={report.e_cl_total:.4g} J  flags: overflow={report.overflow_count} "
          f"underflow={report.underflow_count}")
    return EXIT_FLAGGED if args.strict and report.flagged else 0


def cmd_sweep(cfg: RunConfig, args) -> int:
    if not cfg.grid:
        raise ConfigurationError("sweep needs a [sweep] section with at least one axis")
    points = expand_grid(cfg.grid, cfg.zipped)
    if not points:
        raise ConfigurationError("sweep grid is empty")
    log.info("evaluating %d design points", len(points))
    reports = sweep(cfg.params, points, cfg.batch, cfg.perf, jobs=args.jobs)
    out = args.out_dir
    sweep_vars = list(cfg.grid)
    metrics = cfg.output.get("plot_metrics", ["e_out_max", "p_out", "e_cl_total"])
    written = [write_csv(out / "sweep.csv", sweep_columns(reports, sweep_vars), [r.row() for r in reports]),
               write_csv(out / "plot.csv", PLOT_COLUMNS, plot_rows(reports, sweep_vars, metrics))]
    write_manifest(out, "sweep", cfg, written)
    bad = [r for r in reports if r.status != "ok"]
    for r in reports:
        label = " ".join(f"{k}={_fmt(r.params.get(k))}" for k in sweep_vars)
        print(f"{label}  e_out_max={r.e_out_max:.4g}  p_out={r.p_out}  E_Cl={r.e_cl_total:.4g}  {r.status}")
    return EXIT_FLAGGED if args.strict and bad else 0


def cmd_contour(cfg: RunConfig, args) -> int:
    c = cfg.contour
    params = {"m_rows": 1, "t_window": 1.0, **cfg.params}
    v_gates = c.get("v_gate") or [params.get("v_gate_on", 0.3)]
    l_gates = c.get("l_gate") or [params.get("l_gate")]
    n_v = c.get("v_node_points", 21)
    n_w = c.get("weight_points", 11)
    if n_v < 1 or n_w < 1:
        raise ConfigurationError("contour grid needs at least one point per axis")
    delta_v = c.get("delta_v", 1e-3)
    rows, summary = [], []
    for vg in v_gates:
        for lg in l_gates:
            p = dict(params, v_gate_on=vg)
            if lg is not None:
                p["l_gate"] = lg
            dp = design_point_from_params(p)
            v_cal = c.get("v_cal", dp.calibration_voltage)
            v_nodes = np.linspace(c.get("v_node_min", dp.v_th_neuron), c.get("v_node_max", dp.v_reset), n_v)
            weights = np.linspace(c.get("weight_min", 0.0), c.get("weight_max", 1.0), n_w)
            try:
                err = error_contour(dp.cell, vg, v_nodes, weights, v_cal, delta_v)
                failure = None
            except (TdvmmError, ValueError) as exc:
                err = np.full((n_v, n_w), np.nan)
                failure = f"error: {exc}"
            lg_val = dp.cell.mosfet.l_gate
            inside_all = []
            for a, vn in enumerate(v_nodes):
                for b, w in enumerate(weights):
                    inside = dp.v_th_neuron <= vn <= dp.v_reset
                    if failure:
                        status = failure
                    elif np.isnan(err[a, b]):
                        status = "undefined"
                    elif not inside:
                        status = "outside-operating-region"
                    else:
                        status = "ok"
                        inside_all.append(err[a, b])
                    rows.append({"sweep_var": "v_gate;l_gate;v_node;weight",
                                 "value": f"{_fmt(float(vg))};{_fmt(lg_val)};{_fmt(float(vn))};{_fmt(float(w))}",
                                 "metric": "clm_dibl_error", "metric_value": err[a, b], "status": status})
            mean = float(np.mean(inside_all)) if inside_all else float("nan")
            summary.append((vg, lg_val, mean))
    out = args.out_dir
    written = [write_csv(out / "contour.csv", CONTOUR_COLUMNS, rows)]
    write_manifest(out, "contour", cfg, written)
    print("v_gate_V  l_gate_m    mean_error")
    for vg, lg, mean in summary:
        print(f"{vg:<9g} {lg:<10.3g}  {mean:.4g}")
    flagged = any(r["status"] != "ok" for r in rows)
    return EXIT_FLAGGED if args.strict and flagged else 0


def _estimate_point(params, cfg, args):
    dp = design_point_from_params(params)
    outcomes = simulate_trials(dp, cfg.batch, jobs=args.jobs)
    report = summarize(dp, outcomes, cfg.perf)
    return dp, report, performance_estimate(dp, cfg.perf, report)


def cmd_estimate(cfg: RunConfig, args) -> int:
    if cfg.perf is None:
        raise ConfigurationError("estimate needs a [perf] section (use 'base = calibrated' for the defaults)")
    dp, report, est = _estimate_point(cfg.params, cfg, args)
    rows = []
    for comp in est["area_breakdown"]:
        a, e = est["area_breakdown"][comp], est["energy_breakdown"][comp]
        rows.append({"component": comp, "area_m2": a, "energy_J": e,
                     "area_share": a / est["area"] if est["area"] else 0.0,
                     "energy_share": e / est["energy"] if est["energy"] else 0.0})
    rows.append({"component": "total", "area_m2": est["area"], "energy_J": est["energy"],
                 "area_share": 1.0, "energy_share": 1.0})
    out = args.out_dir
    written = [write_csv(out / "estimate.csv", ESTIMATE_COLUMNS, rows)]
    print(f"{dp.m_rows}x{dp.n_cols}, {dp.output_bits}-bit, T={dp.t_window:.3g} s")
    print(f"{'component':<10} {'area (um^2)':>12} {'energy (pJ)':>12} {'area %':>7} {'energy %':>9}")
    for r in rows:
        print(f"{r['component']:<10} {r['area_m2'] * 1e12:>12.4g} {r['energy_J'] * 1e12:>12.4g} "
              f"{100 * r['area_share']:>7.1f} {100 * r['energy_share']:>9.1f}")
    print(f"throughput        {est['throughput']:.4g} ops/s")
    print(f"energy efficiency {est['energy_efficiency']:.4g} ops/J")
    print(f"dominant: area={est['dominant_area']} energy={est['dominant_energy']}")

    targets = cfg.estimate.get("precision_targets")
    flagged = report.flagged
    if targets:
        prow = []
        t_clock = cfg.estimate["t_clock"]
        for bits in targets:
            p = dict(cfg.params, output_bits=bits, t_window=(2 ** bits) * t_clock)
            dpp, rep, e = _estimate_point(p, cfg, args)
            flagged = flagged or rep.flagged
            prow.append({"target_bits": bits, "t_window_s": dpp.t_window, "e_out_max": rep.e_out_max,
                         "p_out": rep.p_out, "e_cl_J": rep.e_cl_total, "energy_J": e["energy"], "area_m2": e["area"],
                         "energy_efficiency_ops_per_J": e["energy_efficiency"],
                         "throughput_ops_per_s": e["throughput"]})
            print(f"target {bits} bits: T={dpp.t_window:.3g} s  efficiency={e['energy_efficiency']:.4g} ops/J  "
                  f"throughput={e['throughput']:.4g} ops/s")
        written.append(write_csv(out / "precision.csv", PRECISION_COLUMNS, prow))
    write_manifest(out, "estimate", cfg, written)
    return EXIT_FLAGGED if args.strict and flagged else 0


COMMANDS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "contour": cmd_contour, "estimate": cmd_estimate}


# --------------------------------------------------------------------------
# argument handling


def _override(item: str) -> str:
    lhs = item.split("=", 1)[0].strip()
    if "." in lhs or "=" not in item:
        return item
    from .config import _DEVICE_KEYS

    if lhs in _DEVICE_KEYS:
        return f"device.{item}"
    if lhs in PARAM_KEYS:
        return f"design.{item}"
    return item


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override [trials] seed")
    common.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--strict", action="store_true", help="exit 3 when any overflow/underflow/failure is flagged")
    common.add_argument("--out-dir", type=Path, default=Path("tdvmm-out"), help="output directory")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="[SECTION.]KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="tdvmm", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--list-presets", action="store_true", help="print shipped preset names and exit")
    sub = parser.add_subparsers(dest="command")
    helps = {"simulate": "run one design point", "sweep": "evaluate a parameter grid",
             "contour": "CLM/DIBL error maps", "estimate": "area/energy/throughput estimate"}
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("config", help="INI file, preset name, or manifest.json from an earlier run")
        sp.add_argument("--trials", type=int, help="override [trials] n_trials")
        if name == "simulate":
            sp.add_argument("--topology", choices=["source-connected", "drain-connected"])
            sp.add_argument("--trace", action="store_true", help="also write trace.csv for trial 0")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.list_presets:
        print("\n".join(list_presets()))
        return 0
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    overrides = [_override(o) for o in args.overrides]
    if args.seed is not None:
        overrides.append(f"trials.seed={args.seed}")
    if args.trials is not None:
        overrides.append(f"trials.n_trials={args.trials}")
    if getattr(args, "topology", None):
        overrides.append(f"device.topology={args.topology}")
    try:
        cfg = load_config(args.config, overrides)
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be >= 1")
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        print(f"tdvmm: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TdvmmError as exc:
        print(f"tdvmm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
