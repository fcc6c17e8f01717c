"""Command-line interface: run scenarios, sweep parameters, bench crypto, stats.

Output files are data (JSON report, CSV sweep table); when an output path
is given, matplotlib figures are rendered next to it unless --no-figures
is passed. Exit code 0 on completion, 2 when the scenario configuration is
invalid.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import scenarios
from .bench import crypto_bench
from .defense import AUTH_AEAD, AUTH_MAC, DefenseConfig
from .scenario import ConfigInvalid, ScenarioConfig
from .sim import run_scenario, sweep
from .stats import DegenerateSample, wilcoxon_signed_rank

EXIT_OK = 0
EXIT_CONFIG = 2

# Key used by `bench` when no scenario supplies one.
_BENCH_KEY = bytes.fromhex(
    "603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4")


def _load_scenario(ref: str) -> ScenarioConfig:
    if os.path.exists(ref):
        return ScenarioConfig.load(ref)
    base = ref[:-5] if ref.endswith(".yaml") else ref
    try:
        return scenarios.load_scenario(base)
    except FileNotFoundError:
        raise ConfigInvalid(
            f"{ref!r} is neither a scenario file nor a bundled scenario "
            f"(see `telesim scenarios`)") from None


def _figure_path(out_path: str, suffix: str = "") -> str:
    stem, _ = os.path.splitext(out_path)
    return f"{stem}{suffix}.png"


def _cmd_run(args) -> int:
    cfg = _load_scenario(args.scenario)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.transport is not None:
        cfg.channel.transport = args.transport
    cfg.validate()
    rep = run_scenario(cfg)
    payload = rep.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
        if not args.no_figures:
            from .plots import render_run_figure
            render_run_figure(rep.to_dict(), _figure_path(args.out))
        print(f"report written to {args.out}")
    else:
        print(payload)
    print(f"{cfg.name}: complete={rep.complete} "
          f"completion_time_s={rep.completion_time_s:.3f} "
          f"estops={rep.estop_count} block_drops={rep.block_drops} "
          f"forged_accepted={rep.packets.forged_accepted}")
    return EXIT_OK


def _parse_param(spec: str) -> tuple[str, list[float]]:
    if "=" not in spec:
        raise ConfigInvalid(f"--param must look like path=a:b:step or path=v1,v2 (got {spec!r})")
    path, expr = spec.split("=", 1)
    if ":" in expr:
        parts = expr.split(":")
        if len(parts) != 3:
            raise ConfigInvalid(f"range form is start:stop:step (got {expr!r})")
        start, stop, step = (float(p) for p in parts)
        if step <= 0:
            raise ConfigInvalid("sweep step must be positive")
        values, v, k = [], start, 0
        while v <= stop + 1e-12:
            values.append(round(v, 12))
            k += 1
            v = start + k * step
    else:
        values = [float(p) for p in expr.split(",") if p != ""]
    if not values:
        raise ConfigInvalid(f"no sweep values in {spec!r}")
    return path, values


def _cmd_sweep(args) -> int:
    cfg = _load_scenario(args.scenario)
    grid = {}
    for spec in args.param:
        path, values = _parse_param(spec)
        grid[path] = values
    seeds = list(range(1, args.seeds + 1))
    result = sweep(cfg, grid, seeds, jobs=args.jobs)
    result.save_csv(args.out)
    print(f"{len(result.rows)} sweep rows written to {args.out}")
    if not args.no_figures and len(grid) >= 1:
        from .plots import render_sweep_figure
        first_param = next(iter(grid))
        render_sweep_figure(result.rows, first_param, _figure_path(args.out))
    return EXIT_OK


def _cmd_bench(args) -> int:
    mode = {"aead": AUTH_AEAD, "mac": AUTH_MAC}[args.auth]
    cfg = DefenseConfig(auth_mode=mode, key=_BENCH_KEY, key_bits=args.keybits)
    cfg.validate()
    rep = crypto_bench(cfg, args.count)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(rep.to_json() + "\n")
        if not args.no_figures and rep.rows:
            from .plots import render_bench_figure
            render_bench_figure(rep.to_dict(), _figure_path(args.out))
        print(f"bench report written to {args.out}")
    for row in rep.rows:
        star = "*" if row.key_bits == args.keybits else " "
        print(f"{star}{row.key_bits}-bit: seal {row.seal_median_us:.2f}us "
              f"open {row.open_median_us:.2f}us p99 {row.roundtrip_p99_us:.2f}us "
              f"throughput {row.throughput_pkts_per_s:,.0f}/s "
              f"memory {row.memory_delta_kb:+.0f}KB")
    return EXIT_OK


def _read_numbers(path: str) -> list[float]:
    values = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            for cell in row:
                cell = cell.strip()
                if not cell:
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    pass  # header or label cell
    if not values:
        raise ConfigInvalid(f"no numeric values found in {path}")
    return values


def _cmd_stats(args) -> int:
    x = _read_numbers(args.x)
    y = _read_numbers(args.y)
    try:
        res = wilcoxon_signed_rank(x, y)
    except (DegenerateSample, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    out = {"w": res.w, "p_two_sided": res.p_two_sided, "n": res.n, "method": res.method}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(out, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"W={res.w:g} p_two_sided={res.p_two_sided:.6g} n={res.n} ({res.method})")
    return EXIT_OK


def _cmd_scenarios(_args) -> int:
    for name in scenarios.list_scenarios():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="telesim",
        description="Teleoperated-robot control-link security testbed")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and report metrics")
    p_run.add_argument("scenario", help="scenario file path or bundled scenario name")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--transport", choices=["mem", "udp"], default=None)
    p_run.add_argument("--out", default=None, help="write the JSON report here")
    p_run.add_argument("--no-figures", action="store_true")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep parameters over seeds")
    p_sweep.add_argument("scenario")
    p_sweep.add_argument("--param", action="append", required=True,
                         metavar="PATH=START:STOP:STEP|PATH=V1,V2,...",
                         help="e.g. channel.attack.eta=0:1:0.05 (repeatable)")
    p_sweep.add_argument("--seeds", type=int, default=10, help="seeds 1..N per point")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--out", required=True, help="aggregate CSV path")
    p_sweep.add_argument("--no-figures", action="store_true")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_bench = sub.add_parser("bench", help="crypto seal/open overhead benchmark")
    p_bench.add_argument("--auth", choices=["aead", "mac"], default="aead")
    p_bench.add_argument("--keybits", type=int, choices=[128, 192, 256], default=256)
    p_bench.add_argument("--count", type=int, default=100_000)
    p_bench.add_argument("--out", default=None)
    p_bench.add_argument("--no-figures", action="store_true")
    p_bench.set_defaults(func=_cmd_bench)

    p_stats = sub.add_parser("stats", help="statistical utilities")
    stats_sub = p_stats.add_subparsers(dest="stat", required=True)
    p_wil = stats_sub.add_parser("wilcoxon", help="paired Wilcoxon signed-rank test")
    p_wil.add_argument("--x", required=True, help="CSV of first paired sample")
    p_wil.add_argument("--y", required=True, help="CSV of second paired sample")
    p_wil.add_argument("--out", default=None)
    p_wil.set_defaults(func=_cmd_stats)

    p_list = sub.add_parser("scenarios", help="list bundled scenario names")
    p_list.set_defaults(func=_cmd_scenarios)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
