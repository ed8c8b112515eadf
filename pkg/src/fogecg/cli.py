"""Command-line entry point: ``fogecg {synth,analyze,simulate,evaluate,power}``.

Every subcommand writes its artifacts plus ``manifest.json`` into the output
directory (``--out``, else ``$FOGECG_OUT_DIR``, else ``./out``).  Exit codes:
0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .delineation import NormalRanges, classify, delineate, summarize_periods
from .errors import DegenerateSpan, FogEcgError
from .evaluation import load_components, load_tables, power_budget, table_summary
from .fog import FogConfig, FogNode, ONLINE, OFFLINE, default_sinks
from .hrv import DEFAULT_VITAL_BOUNDS, PeakDetectionConfig, compute_measures, detect_peaks
from .netsim import LinkModel, bandwidth, bandwidth_from_totals
from .signal import EcgSynthParams, load_csv, synthesize, write_annotations, write_csv
from .simulation import run_simulation

logger = logging.getLogger("fogecg")

OUT_ENV = "FOGECG_OUT_DIR"

# config-file prefix -> dataclass holding the defaults
SECTIONS = {
    "synth": EcgSynthParams,
    "peaks": PeakDetectionConfig,
    "fog": FogConfig,
    "link": LinkModel,
    "ranges": NormalRanges,
}


class UsageError(Exception):
    pass


def parse_windows(text: str) -> tuple:
    """``"30-60,90-100"`` (seconds) -> ((30000.0, 60000.0), (90000.0, 100000.0))."""
    windows = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            start, end = (float(x) for x in part.split("-"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad disconnect window {part!r}, expected START-END seconds") from None
        if not 0 <= start < end:
            raise argparse.ArgumentTypeError(f"bad disconnect window {part!r}")
        windows.append((start * 1000.0, end * 1000.0))
    return tuple(sorted(windows))


def read_config(path) -> dict:
    """Parse ``section.key = value`` lines; values are JSON when they parse as JSON."""
    overrides: dict = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section == "vitals":
            overrides.setdefault("vitals", {})[name] = json.loads(value)
            continue
        if section not in SECTIONS or name not in {f.name for f in dataclasses.fields(SECTIONS[section])}:
            raise UsageError(f"{path}:{lineno}: unknown setting {key!r}")
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        if isinstance(parsed, list):
            parsed = tuple(tuple(v) if isinstance(v, list) else v for v in parsed)
        overrides.setdefault(section, {})[name] = parsed
    return overrides


class Context:
    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out or os.environ.get(OUT_ENV) or "out")
        self.out.mkdir(parents=True, exist_ok=True)
        self.overrides = read_config(args.config) if args.config else {}

    def build(self, section: str, **flags):
        values = dict(self.overrides.get(section, {}))
        values.update({k: v for k, v in flags.items() if v is not None})
        try:
            return SECTIONS[section](**values)
        except TypeError as exc:
            raise UsageError(f"bad {section} settings: {exc}") from None

    def vital_bounds(self) -> dict:
        bounds = dict(DEFAULT_VITAL_BOUNDS)
        for name, pair in self.overrides.get("vitals", {}).items():
            bounds[name] = tuple(pair)
        return bounds

    def write_json(self, name: str, obj) -> Path:
        path = self.out / name
        path.write_text(json.dumps(obj, indent=2) + "\n")
        return path

    def manifest(self, config: dict) -> None:
        self.write_json("manifest.json", {
            "command": self.args.command,
            "argv": self.argv,
            "seed": self.args.seed,
            "version": __version__,
            "config": _jsonable(config),
        })


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return _jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def cmd_synth(ctx: Context) -> None:
    a = ctx.args
    params = ctx.build("synth", duration_s=a.duration, rr_ms=a.rr, pr_ms=a.pr, qrs_ms=a.qrs, qt_ms=a.qt,
                       noise_std=a.noise, fs_hz=a.fs, seed=a.seed)
    stream, annotations = synthesize(params)
    write_csv(stream, ctx.out / "samples.csv")
    write_annotations(annotations, ctx.out / "annotations.json")
    ctx.manifest({"synth": params})
    print(f"wrote {len(stream)} samples, {len(annotations)} beats to {ctx.out}")


def cmd_analyze(ctx: Context) -> None:
    a = ctx.args
    stream = load_csv(a.input)
    peak_cfg = ctx.build("peaks")
    ranges = ctx.build("ranges")
    peaks = detect_peaks(stream, peak_cfg)
    hrv = compute_measures(peaks)
    intervals = delineate(stream, peaks)
    ctx.write_json("hrv.json", hrv.to_dict())
    ctx.write_json("intervals.json", intervals.to_dict())
    verdict = classify(summarize_periods(intervals, a.periods), ranges)
    ctx.write_json("verdict.json", verdict.to_dict())
    ctx.manifest({"peaks": peak_cfg, "ranges": ranges, "periods": a.periods})
    print(f"{len(peaks.peak_indices)} beats, {hrv.bpm:.1f} bpm, {verdict.status}")


def cmd_simulate(ctx: Context) -> None:
    a = ctx.args
    fog_cfg = ctx.build("fog")
    if a.input:
        source = load_csv(a.input, fog_cfg.fs_hz)
        synth_cfg = None
    else:
        synth_cfg = ctx.build("synth", duration_s=a.duration, seed=a.seed, fs_hz=fog_cfg.fs_hz)
        source, _ = synthesize(synth_cfg)
    link_cfg = ctx.build("link", disconnect_windows=a.disconnects, base_latency_ms=a.latency,
                         jitter_ms=a.jitter, max_buffer=a.max_buffer, seed=a.seed)
    peak_cfg = ctx.build("peaks")
    ranges = ctx.build("ranges")
    node = FogNode(fog_cfg, peak_cfg, ranges, ctx.vital_bounds(), default_sinks(), mode=a.start_mode,
                   store_path=ctx.out / "local_store.jsonl")
    result = run_simulation(source, link_cfg, fog_cfg, node)

    result.trace.to_csv(ctx.out / "trace.csv")
    try:
        report = bandwidth(result.trace)
    except DegenerateSpan:
        report = bandwidth_from_totals(0, max(len(source) / fog_cfg.fs_hz, 1e-9), result.trace.sent,
                                       result.trace.delivered)
    ctx.write_json("bandwidth.json", report.to_dict())
    write_csv(result.reassembled, ctx.out / "reassembled.csv")
    diff = result.diff()
    diff.update({"batches_sent": result.trace.sent, "batches_delivered": result.trace.delivered,
                 "duplicates": len(result.cloud.duplicates), "final_mode": node.mode,
                 "local_store_batches": len(node.state.local_store)})
    ctx.write_json("diff.json", diff)
    with (ctx.out / "alerts.jsonl").open("w") as fh:
        for rec in node.alerts:
            fh.write(json.dumps(rec.to_dict()) + "\n")
    ctx.manifest({"synth": synth_cfg, "fog": fog_cfg, "link": link_cfg, "peaks": peak_cfg, "ranges": ranges,
                  "vitals": ctx.vital_bounds(), "start_mode": a.start_mode, "input": a.input})
    print(f"{diff['batches_sent']} batches sent, {diff['batches_delivered']} delivered, "
          f"{diff['missing_samples']} missing samples, {report.bytes_per_s:.0f} B/s")


def cmd_evaluate(ctx: Context) -> None:
    summary = table_summary(load_tables(ctx.args.tables))
    out = summary.to_dict()
    out["raw"] = {"overall_device_error_pct": summary.overall_device_error_pct,
                  "accuracy_pct": summary.accuracy_pct,
                  "accuracy_pct_computed": summary.accuracy_pct_computed}
    ctx.write_json("summary.json", out)
    ctx.manifest({"tables": str(ctx.args.tables or "bundled")})
    print(f"overall device error {out['overall_device_error_pct']:.2f}%, accuracy {out['accuracy_pct']:.2f}%")


def cmd_power(ctx: Context) -> None:
    budget = power_budget(load_components(ctx.args.components), ctx.args.hours)
    ctx.write_json("power.json", budget.to_dict())
    ctx.manifest({"components": str(ctx.args.components or "bundled"), "hours": ctx.args.hours})
    print(f"{budget.watts:.2f} W, {budget.watt_hours:.1f} Wh over {ctx.args.hours:g} h")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="key = value overrides, e.g. 'peaks.ma_window_s = 0.5'")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fogecg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic ECG recording")
    p.add_argument("--duration", type=float, default=60.0, help="seconds")
    p.add_argument("--rr", type=float)
    p.add_argument("--pr", type=float)
    p.add_argument("--qrs", type=float)
    p.add_argument("--qt", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--fs", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", parents=[common], help="HRV, intervals and verdict for a sample CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--periods", type=int, default=4)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", parents=[common], help="fog node -> flaky link -> cloud, on a virtual clock")
    p.add_argument("--input", help="sample CSV; synthesized when omitted")
    p.add_argument("--duration", type=float, default=120.0, help="seconds of synthetic signal")
    p.add_argument("--disconnects", type=parse_windows, help="START-END[,START-END...] in seconds")
    p.add_argument("--latency", type=float, help="base latency, ms")
    p.add_argument("--jitter", type=float, help="uniform jitter half-width, ms")
    p.add_argument("--max-buffer", type=int, help="bound the link buffer (default unbounded)")
    p.add_argument("--start-mode", choices=(ONLINE, OFFLINE), default=ONLINE)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", parents=[common], help="error tables summary")
    p.add_argument("--tables", help="tables CSV (default: bundled data)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("power", parents=[common], help="power and energy budget")
    p.add_argument("--components", help="components CSV (default: bundled data)")
    p.add_argument("--hours", type=float, default=24.0)
    p.set_defaults(func=cmd_power)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = Context(args, argv)
        args.func(ctx)
    except UsageError as exc:
        print(f"fogecg: usage error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"fogecg: error: file not found: {exc.filename}", file=sys.stderr)
        return 1
    except (FogEcgError, OSError, ValueError) as exc:
        print(f"fogecg: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
