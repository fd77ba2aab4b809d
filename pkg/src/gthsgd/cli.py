"""Command line front end.

Subcommands:

- ``run``: execute one JSON run config, write ``<name>.csv`` (pinned header
  ``t,epoch,loss,stat_gap,consensus,tracking,queries``) and a
  ``<name>_summary.json`` sidecar into the output directory.
- ``compare``: execute an experiment spec (a list of named run configs, each
  repeated over consecutive seeds), write per-seed CSVs, seed-averaged
  ``<name>_mean.csv`` files, and ``compare.svg`` rendered purely from the
  mean CSVs on disk.
- ``spectrum``: print the contraction factor, validation report, and
  step-size cap for a built-in family or a custom matrix file.

All files are written atomically (temp file + rename) and reruns of the same
config produce byte-identical artifacts. ``GTHSGD_THREADS`` caps the worker
threads ``compare`` uses; it cannot change any output because every run's
randomness is keyed by value, not by execution order.

Exit codes: 0 success, 1 config/data/validation errors, 2 invariant
violations (a broken trajectory identity aborts the run).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .algorithms import (
    ConfigError,
    InvariantViolation,
    RunConfig,
    RunResult,
    config_from_dict,
    horizon_schedule,
    load_run_config,
    rerun_with,
    run,
    schedule_valid_horizon,
    stepsize_cap,
)
from .dataio import DataFormatError
from .metrics import CSV_COLUMNS, CSV_HEADER, TraceRecord
from .oracle import OracleError
from .topology import (
    EQUAL,
    FAMILIES,
    LAZY_METROPOLIS,
    TopologyError,
    build_topology,
    load_weight_matrix,
    validate_mixing_matrix,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as handle:
        handle.write(text)
    os.replace(tmp, path)


def write_trace_csv(records: list[TraceRecord], path: str) -> None:
    lines = [CSV_HEADER]
    lines.extend(record.to_csv_row() for record in records)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace_csv(path: str) -> dict[str, np.ndarray]:
    with open(path) as handle:
        lines = [line.strip() for line in handle if line.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise DataFormatError(f"{path}: expected header {CSV_HEADER!r}")
    columns: dict[str, list[float]] = {name: [] for name in CSV_COLUMNS}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise DataFormatError(
                f"{path}: line {lineno}: expected {len(CSV_COLUMNS)} fields, found {len(parts)}"
            )
        for name, part in zip(CSV_COLUMNS, parts):
            columns[name].append(float(part))
    out = {name: np.array(vals) for name, vals in columns.items()}
    out["t"] = out["t"].astype(int)
    out["queries"] = out["queries"].astype(int)
    return out


def mean_records(per_seed: list[list[TraceRecord]]) -> list[TraceRecord]:
    """Average aligned traces across seeds (t and queries must agree)."""
    first = per_seed[0]
    for other in per_seed[1:]:
        if len(other) != len(first):
            raise ConfigError("traces have different lengths, cannot average")
        if any(a.t != b.t or a.queries != b.queries for a, b in zip(first, other)):
            raise ConfigError("traces are misaligned, cannot average")
    out = []
    for k, base in enumerate(first):
        rows = [trace[k] for trace in per_seed]
        out.append(
            TraceRecord(
                t=base.t,
                epoch=float(np.mean([r.epoch for r in rows])),
                loss=float(np.mean([r.loss for r in rows])),
                stat_gap=float(np.mean([r.stat_gap for r in rows])),
                consensus=float(np.mean([r.consensus for r in rows])),
                tracking=float(np.mean([r.tracking for r in rows])),
                queries=base.queries,
            )
        )
    return out


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    magnitude = 10.0 ** math.floor(math.log10(raw))
    step = 10.0 * magnitude
    for mult in (1.0, 2.0, 5.0):
        if raw <= mult * magnitude:
            step = mult * magnitude
            break
    first = math.ceil(lo / step - 1e-9)
    ticks = []
    k = first
    while k * step <= hi + 1e-9 * step:
        ticks.append(k * step)
        k += 1
    return ticks


def _fmt(value: float) -> str:
    return "%g" % round(value, 12)


def render_line_svg(
    series: list[tuple[str, np.ndarray, np.ndarray]],
    xlabel: str,
    ylabel: str,
    logy: bool = False,
    width: int = 960,
    height: int = 540,
) -> str:
    """Deterministic polyline chart: fixed palette, fixed precision, no
    external resources. ``series`` holds (name, x, y) triples."""
    left, right, top, bottom = 72.0, 170.0, 24.0, 54.0
    plot_w = width - left - right
    plot_h = height - top - bottom

    cleaned = []
    for name, xs, ys in series:
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if logy:
            keep &= ys > 0.0
        xs, ys = xs[keep], ys[keep]
        if logy:
            ys = np.log10(ys)
        cleaned.append((name, xs, ys))

    xs_all = np.concatenate([xs for _, xs, _ in cleaned if xs.size] or [np.array([0.0, 1.0])])
    ys_all = np.concatenate([ys for _, _, ys in cleaned if ys.size] or [np.array([0.0, 1.0])])
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.04 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad

    def sx(v: float) -> float:
        return left + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v: float) -> float:
        return top + (y_hi - v) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<line x1="{left:.2f}" y1="{top + plot_h:.2f}" x2="{left + plot_w:.2f}" '
        f'y2="{top + plot_h:.2f}" stroke="#333333" stroke-width="1"/>',
        f'<line x1="{left:.2f}" y1="{top:.2f}" x2="{left:.2f}" '
        f'y2="{top + plot_h:.2f}" stroke="#333333" stroke-width="1"/>',
    ]
    for tick in _nice_ticks(x_lo, x_hi):
        x = sx(tick)
        parts.append(
            f'<line x1="{x:.2f}" y1="{top + plot_h:.2f}" x2="{x:.2f}" '
            f'y2="{top + plot_h + 5:.2f}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{top + plot_h + 20:.2f}" text-anchor="middle" '
            f'font-family="monospace" font-size="12" fill="#333333">{_fmt(tick)}</text>'
        )
    for tick in _nice_ticks(y_lo, y_hi):
        y = sy(tick)
        label = f"1e{_fmt(tick)}" if logy else _fmt(tick)
        parts.append(
            f'<line x1="{left - 5:.2f}" y1="{y:.2f}" x2="{left:.2f}" y2="{y:.2f}" '
            f'stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 9:.2f}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-family="monospace" font-size="12" fill="#333333">{label}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w / 2:.2f}" y="{height - 14:.2f}" text-anchor="middle" '
        f'font-family="monospace" font-size="13" fill="#333333">{xlabel}</text>'
    )
    y_title = ylabel if not logy else f"{ylabel} (log scale)"
    parts.append(
        f'<text x="18" y="{top + plot_h / 2:.2f}" text-anchor="middle" '
        f'font-family="monospace" font-size="13" fill="#333333" '
        f'transform="rotate(-90 18 {top + plot_h / 2:.2f})">{y_title}</text>'
    )
    for idx, (name, xs, ys) in enumerate(cleaned):
        color = _PALETTE[idx % len(_PALETTE)]
        if xs.size:
            points = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
            parts.append(
                f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.6"/>'
            )
        ly = top + 16 + 18 * idx
        lx = left + plot_w + 14
        parts.append(
            f'<line x1="{lx:.2f}" y1="{ly - 4:.2f}" x2="{lx + 22:.2f}" y2="{ly - 4:.2f}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{lx + 28:.2f}" y="{ly:.2f}" font-family="monospace" '
            f'font-size="12" fill="#333333">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _worker_count(jobs: int) -> int:
    raw = os.environ.get("GTHSGD_THREADS")
    if raw is None:
        workers = os.cpu_count() or 1
    else:
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigError(f"GTHSGD_THREADS must be an integer, got {raw!r}")
        if workers < 1:
            raise ConfigError(f"GTHSGD_THREADS must be >= 1, got {workers}")
    return max(1, min(workers, jobs))


def _write_summary(result: RunResult, path: str) -> None:
    atomic_write_text(path, json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")


def cmd_run(args) -> int:
    config = load_run_config(args.config)
    result = run(config)
    os.makedirs(args.out, exist_ok=True)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    csv_path = os.path.join(args.out, f"{config.name}.csv")
    write_trace_csv(result.records, csv_path)
    _write_summary(result, os.path.join(args.out, f"{config.name}_summary.json"))
    final = result.records[-1]
    print(
        f"{config.name}: algorithm={config.algorithm} n={config.n} T={config.horizon} "
        f"loss={final.loss:.6g} stat_gap={final.stat_gap:.6g} "
        f"queries/node={final.queries} -> {csv_path}"
    )
    return EXIT_OK


_SPEC_KEYS = {"runs", "repeat", "output_dir", "plot"}
_PLOT_KEYS = {"metric", "x", "logy"}
_PLOT_METRICS = ("loss", "stat_gap", "consensus", "tracking")
_PLOT_AXES = ("epoch", "t")


def _load_experiment_spec(path: str) -> dict:
    with open(path) as handle:
        try:
            spec = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}")
    if not isinstance(spec, dict):
        raise ConfigError(f"{path}: experiment spec must be an object")
    unknown = set(spec) - _SPEC_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown spec keys: {', '.join(sorted(unknown))}")
    runs = spec.get("runs")
    if not isinstance(runs, list) or not runs:
        raise ConfigError(f"{path}: spec needs a non-empty 'runs' list")
    repeat = spec.get("repeat", 1)
    if not isinstance(repeat, int) or repeat < 1:
        raise ConfigError(f"{path}: repeat must be a positive integer, got {repeat!r}")
    plot = spec.get("plot", {})
    if not isinstance(plot, dict):
        raise ConfigError(f"{path}: plot must be an object")
    unknown = set(plot) - _PLOT_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown plot keys: {', '.join(sorted(unknown))}")
    if plot.get("metric", "loss") not in _PLOT_METRICS:
        raise ConfigError(f"{path}: plot metric must be one of {', '.join(_PLOT_METRICS)}")
    if plot.get("x", "epoch") not in _PLOT_AXES:
        raise ConfigError(f"{path}: plot x must be one of {', '.join(_PLOT_AXES)}")
    names = []
    for entry in runs:
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(f"{path}: every run needs a 'name'")
        name = entry["name"]
        if not isinstance(name, str) or not name or not all(
            c.isalnum() or c in "_.-" for c in name
        ):
            raise ConfigError(f"{path}: run name {name!r} is not filesystem-safe")
        names.append(name)
    if len(set(names)) != len(names):
        raise ConfigError(f"{path}: run names must be unique")
    return spec


def _expand_jobs(spec: dict) -> list[tuple[int, int, RunConfig]]:
    jobs = []
    for run_index, entry in enumerate(spec["runs"]):
        base = config_from_dict(entry)
        base_output = base.output_seed if base.output_seed is not None else base.seed + 1
        for r in range(spec.get("repeat", 1)):
            jobs.append(
                (
                    run_index,
                    r,
                    rerun_with(base, seed=base.seed + r, output_seed=base_output + r),
                )
            )
    return jobs


def cmd_compare(args) -> int:
    spec = _load_experiment_spec(args.spec)
    out_dir = args.out if args.out is not None else spec.get("output_dir", "out")
    jobs = _expand_jobs(spec)
    workers = _worker_count(len(jobs))
    results: dict[tuple[int, int], RunResult] = {}
    if workers == 1:
        for run_index, r, config in jobs:
            results[(run_index, r)] = run(config)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(run, config): (run_index, r)
                for run_index, r, config in jobs
            }
            for future, key in futures.items():
                results[key] = future.result()

    os.makedirs(out_dir, exist_ok=True)
    plot = spec.get("plot", {})
    metric = plot.get("metric", "loss")
    x_axis = plot.get("x", "epoch")
    logy = bool(plot.get("logy", False))
    mean_paths = []
    for run_index, entry in enumerate(spec["runs"]):
        name = entry["name"]
        traces = []
        for r in range(spec.get("repeat", 1)):
            result = results[(run_index, r)]
            for warning in result.warnings:
                print(f"warning: {name}: {warning}", file=sys.stderr)
            write_trace_csv(
                result.records,
                os.path.join(out_dir, f"{name}_s{result.config.seed}.csv"),
            )
            traces.append(result.records)
        averaged = mean_records(traces)
        mean_path = os.path.join(out_dir, f"{name}_mean.csv")
        write_trace_csv(averaged, mean_path)
        mean_paths.append((name, mean_path))
        final = averaged[-1]
        print(
            f"{name}: seeds={spec.get('repeat', 1)} final mean loss={final.loss:.6g} "
            f"stat_gap={final.stat_gap:.6g} epochs={final.epoch:.6g}"
        )

    # the figure is a pure function of the mean CSVs: read them back from disk
    series = []
    for name, path in mean_paths:
        columns = read_trace_csv(path)
        series.append((name, columns[x_axis], columns[metric]))
    svg_path = os.path.join(out_dir, "compare.svg")
    atomic_write_text(svg_path, render_line_svg(series, x_axis, metric, logy=logy))
    print(f"wrote {svg_path}")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    smoothness = args.smoothness
    if args.matrix is not None:
        topo = load_weight_matrix(args.matrix)
        print(f"custom matrix {args.matrix}: n={topo.n}")
        rows = [(topo.weight_rule, topo.lam)]
    else:
        if args.family is None or args.n is None:
            raise ConfigError("spectrum needs either --matrix or --family and --n")
        topo = build_topology(args.family, args.n, weight_rule=args.weight_rule)
        print(f"family={topo.family} n={topo.n} rule={topo.weight_rule}")
        rows = []
        for rule in (EQUAL, LAZY_METROPOLIS):
            try:
                candidate = build_topology(args.family, args.n, weight_rule=rule)
            except TopologyError:
                continue
            rows.append((rule, candidate.lam))
    print(validate_mixing_matrix(topo.weights).summary())
    print(f"lambda = {topo.lam:.12g} (spectral gap {1 - topo.lam:.12g})")
    if len(rows) > 1:
        print("weight-rule comparison:")
        for rule, lam in rows:
            marker = " (selected)" if rule == topo.weight_rule else ""
            print(f"  {rule:16s} lambda = {lam:.12g}{marker}")
    cap = stepsize_cap(topo.n, topo.lam, smoothness)
    print(f"step-size cap at L={smoothness:g}: {cap:.12g}")
    print(
        "closed-form schedule valid beyond T > "
        f"{schedule_valid_horizon(topo.n, topo.lam):.6g}"
    )
    example = horizon_schedule(topo.n, max(2, args.horizon), smoothness)
    print(
        f"schedule at T={max(2, args.horizon)}: alpha={example.alpha:.6g} "
        f"beta={example.beta:.6g} b0={example.b0}"
    )
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors (exit 1); 2 is reserved for invariant
    # violations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gthsgd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gthsgd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one run config")
    p_run.add_argument("--config", required=True, help="path to a run config JSON")
    p_run.add_argument("--out", default="out", help="output directory (default: out)")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="execute an experiment spec")
    p_cmp.add_argument("--spec", required=True, help="path to an experiment spec JSON")
    p_cmp.add_argument(
        "--out", default=None, help="output directory (overrides the spec's output_dir)"
    )
    p_cmp.set_defaults(func=cmd_compare)

    p_spec = sub.add_parser("spectrum", help="inspect a mixing matrix")
    p_spec.add_argument("--family", choices=FAMILIES, help="built-in family name")
    p_spec.add_argument("--n", type=int, help="number of nodes")
    p_spec.add_argument(
        "--weight-rule",
        choices=(EQUAL, LAZY_METROPOLIS),
        default=None,
        help="override the family's default weight rule",
    )
    p_spec.add_argument("--matrix", help="path to a custom matrix file")
    p_spec.add_argument(
        "--smoothness", type=float, default=1.0, help="L used for the step-size cap"
    )
    p_spec.add_argument(
        "--horizon", type=int, default=1000, help="T for the example schedule printout"
    )
    p_spec.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, TopologyError, DataFormatError, OracleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
