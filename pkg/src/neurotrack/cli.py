"""``neurotrack`` command line: track, step, adapt, bench, config."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigFileError, RunConfig, load_config
from .harness import (ADAPTATION_SETPOINTS, DEFAULT_BASELINE, ExperimentSpec, check_baseline, load_baseline, run_adaptation,
                      run_benchmark, run_step, run_tracking_sweep)

CONTROLLERS = {"pd": "cpu-pd", "cpu-pd": "cpu-pd", "snn-pd": "snn-pd",
               "adaptive": "snn-pd-adaptive", "snn-pd-adaptive": "snn-pd-adaptive"}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key-value config file (see `neurotrack config`)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="directory for CSVs, metrics.csv and manifest.txt")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neurotrack", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="follow a disk spinning at constant speed")
    p.add_argument("--speed", type=_floats, default=[800.0], help="deg/s, comma separated")
    p.add_argument("--backend", choices=["snn", "cpu", "both"], default="snn")
    p.add_argument("--controller", choices=sorted(CONTROLLERS), default="pd")
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--analysis", type=float, default=5.0, help="trailing seconds scored")
    _common(p)

    p = sub.add_parser("step", help="disk (or setpoint) steps")
    p.add_argument("--targets", type=_floats, default=[40.0], help="angles in deg, comma separated")
    p.add_argument("--hold", type=float, default=2.0, help="seconds per target")
    p.add_argument("--lead", type=float, default=0.5, help="seconds at 0 deg before the first step")
    p.add_argument("--backend", choices=["snn", "cpu", "encoder"], default="snn")
    p.add_argument("--controller", choices=sorted(CONTROLLERS), default="pd")
    _common(p)

    p = sub.add_parser("adapt", help="setpoint holds with or without the 125 g weight")
    p.add_argument("--weight", choices=["on", "off"], default="on")
    p.add_argument("--controller", choices=sorted(CONTROLLERS), default="adaptive")
    p.add_argument("--setpoints", type=_floats, default=list(ADAPTATION_SETPOINTS))
    p.add_argument("--hold", type=float, default=10.0)
    _common(p)

    p = sub.add_parser("bench", help="estimator throughput and latency")
    p.add_argument("--events", default="synth", help="event file (.csv/.bin) or 'synth'")
    p.add_argument("--speed", type=float, default=800.0, help="rotation of the synthetic stream, deg/s")
    p.add_argument("--duration", type=float, default=1.0, help="seconds of synthetic stream")
    p.add_argument("--baseline", type=Path, default=DEFAULT_BASELINE)
    _common(p)

    p = sub.add_parser("config", help="print every default as a config file")
    p.add_argument("--config", type=Path)
    return ap


def _print_table(rows: list[dict], cols: list[str]) -> None:
    print("  ".join(f"{c:>12}" for c in cols))
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c, "")
            cells.append(f"{v:12.3f}" if isinstance(v, float) else f"{str(v):>12}")
        print("  ".join(cells))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else RunConfig()
    except (OSError, ConfigFileError) as exc:
        print(f"neurotrack: {exc}", file=sys.stderr)
        return 2
    out = str(args.out) if getattr(args, "out", None) else None

    if args.command == "config":
        sys.stdout.write(config.to_text())
        return 0

    if args.command == "track":
        backends = ("snn", "cpu") if args.backend == "both" else (args.backend,)
        spec = ExperimentSpec("tracking", backends[0], CONTROLLERS[args.controller], duration_s=args.duration,
                              analysis_s=args.analysis, seed=args.seed, out_dir=out)
        ms = run_tracking_sweep(spec, config, speeds=args.speed, backends=backends)
        _print_table([m.row() for m in ms], ["backend", "speed_dps", "rmse", "delay_ms", "failed"])
        return 1 if any(m.failed for m in ms) else 0

    if args.command == "step":
        knots = [(0.0, 0.0)] + [(args.lead + k * args.hold, a) for k, a in enumerate(args.targets)]
        prof = "steps:" + ",".join(f"{t:g}={a:g}" for t, a in knots)
        dur = args.lead + args.hold * len(args.targets)
        spec = ExperimentSpec("step", args.backend, CONTROLLERS[args.controller], profile=prof, duration_s=dur,
                              analysis_s=min(args.hold, dur), seed=args.seed, out_dir=out)
        m = run_step(spec, config)
        _print_table([m.row()], ["backend", "rise_ms", "overshoot_pct", "settle_ms", "final_error", "failed"])
        return 1 if m.failed else 0

    if args.command == "adapt":
        spec = ExperimentSpec("adaptation", "encoder", CONTROLLERS[args.controller], duration_s=args.hold,
                              analysis_s=args.hold, seed=args.seed, out_dir=out, weight=args.weight == "on",
                              setpoints=tuple(args.setpoints))
        ms = run_adaptation(spec, config)
        _print_table([m.row() for m in ms], ["setpoint", "rmse", "steady_error", "ff_final", "failed"])
        return 1 if any(m.failed for m in ms) else 0

    if args.command == "bench":
        spec = ExperimentSpec("benchmark", "snn", profile=f"constant:{args.speed:g}", duration_s=args.duration,
                              analysis_s=args.duration, seed=args.seed, out_dir=out)
        baseline = args.baseline if args.baseline and Path(args.baseline).exists() else None
        rep = run_benchmark(spec, args.events, config, baseline=str(baseline) if baseline else None)
        for k, v in rep.row().items():
            print(f"{k:>16} = {v:.6g}" if isinstance(v, float) else f"{k:>16} = {v}")
        if baseline:
            ok, msg = check_baseline(rep, load_baseline(baseline))
            print(("PASS " if ok else "FAIL ") + msg)
            return 0 if ok else 1
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
