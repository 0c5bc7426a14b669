"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
Worker-pool size comes from the IABSIM_WORKERS environment variable; the
kernel backend from IABSIM_BACKEND (numba, the default, or python).
"""

from __future__ import annotations

import argparse
import sys

from .config import ArchMode, ConfigError, ScenarioConfig, load_config
from .harness import SCENARIO_KINDS, emit_outputs, run_experiment


class _Parser(argparse.ArgumentParser):
    # usage problems are configuration errors per the exit-code contract
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="iab-sim",
                description="System-level simulator of multihop IAB mmWave networks")
    p.add_argument("--config", help="TOML configuration file (defaults used when omitted)")
    p.add_argument("--scenario", required=True, choices=SCENARIO_KINDS)
    p.add_argument("--mode", choices=[m.value for m in ArchMode],
                   help="architecture mode override")
    p.add_argument("--nd", type=int, help="number of IAB-donors (3gpp mode)")
    p.add_argument("--runs", type=int, help="number of Monte Carlo runs")
    p.add_argument("--slots", type=int, help="timeslots per run")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--trace", action="store_true",
                   help="write the per-event mobility FSM trace")
    return p


def _apply_overrides(cfg: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    overrides = {}
    if args.mode is not None:
        overrides["arch_mode"] = ArchMode.parse(args.mode)
    if args.nd is not None:
        overrides["num_donors"] = args.nd
    if args.runs is not None:
        overrides["num_runs"] = args.runs
    if args.slots is not None:
        overrides["slots_per_run"] = args.slots
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    return cfg.replace(**overrides) if overrides else cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config) if args.config else ScenarioConfig()
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        print(f"iab-sim: config error: {exc}", file=sys.stderr)
        return 1
    try:
        report = run_experiment(cfg, args.scenario, trace=args.trace)
        written = emit_outputs(report, args.out)
    except ConfigError as exc:
        print(f"iab-sim: config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"iab-sim: error: {exc}", file=sys.stderr)
        return 2
    agg = report.aggregate
    print(f"scenario={report.scenario} mode={cfg.arch_mode.value} "
          f"runs={cfg.num_runs} slots={cfg.slots_per_run}")
    if report.scenario == "throughput":
        print(f"avg_throughput_bps={agg['avg_throughput_bps']['mean']:.6g} "
              f"pooled_cell_edge_bps={agg.get('pooled_cell_edge_bps', float('nan')):.6g}")
    else:
        print(f"outage_rate_pct={agg['outage_rate_pct']['mean']:.6g} "
              f"hfr_pct={agg['hfr_pct']['mean']:.6g}")
    print(f"wrote {len(written)} files to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
