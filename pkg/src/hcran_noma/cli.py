"""Command-line front end: single solves, figure sweeps, the parallel
benchmark, the signalling-overhead curves and the optimality-gap study.

Configs are YAML key-value files; every key is optional and falls back to the
experiment defaults (42 dBm high-power node, 23 dBm low-power heads, mask =
budget/N, -174 dBm/Hz noise, unit weights, 1024-bit packets, 25-packet queues,
stop tolerance 0.01).  Unknown keys are rejected by name.

All CSV outputs start with a comment block recording the config hash, the git
revision, and the command; identical (config, seed) runs produce identical
bytes unless the opt-in timing column is enabled.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import subprocess
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import yaml

from . import dinkelbach, model, overhead, parallel
from .model import ConfigError, NetworkConfig, Tolerances
from .polyblock import PolyblockSolver
from .scale import ScaleSolver
from .scenarios import (ARCHITECTURES, Scenario, build_config, gen_channel,
                        run_sweep, tiny_instance)

_NETWORK_KEYS = {
    "architecture", "m_f", "n_subcarriers", "bandwidth_hz", "noise_dbm_hz",
    "l_max", "mask_dbm",
}
_TRAFFIC_KEYS = {"arrival_rate", "queue_packets", "packet_bits"}
_SCENARIO_KEYS = {
    "sweep", "values", "users", "streaming_users", "draws", "seed", "solver",
    "workers", "oma",
}
_TOLERANCE_KEYS = {"xi", "varpi1_rel", "varpi2_rel", "s_max", "v_max",
                   "outer_max", "rho1", "rho2"}


def load_config(path: str | Path | None) -> tuple[NetworkConfig, Scenario]:
    """Parse a YAML config into a validated network (defaults applied) and a
    scenario.  An empty or missing-body file yields the full defaults."""
    raw = {}
    if path is not None:
        text = Path(path).read_text()
        raw = yaml.safe_load(text) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    known = _NETWORK_KEYS | _TRAFFIC_KEYS | _SCENARIO_KEYS | {"tolerances"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
    tol_raw = raw.get("tolerances") or {}
    for key in tol_raw:
        if key not in _TOLERANCE_KEYS:
            raise ConfigError(f"unknown tolerances key {key!r}")
    tolerances = Tolerances(**tol_raw)

    l_max = 1 if raw.get("oma") else int(raw.get("l_max", 3))
    scenario = Scenario(
        architecture=raw.get("architecture", "hcran"),
        sweep=raw.get("sweep", "none"),
        values=tuple(raw.get("values", (raw.get("users", 12),))),
        k_total=int(raw.get("users", 12)),
        k_streaming=int(raw.get("streaming_users", 6)),
        arrival_rate=float(raw.get("arrival_rate", 125.0)),
        l_max=l_max,
        n_subcarriers=int(raw.get("n_subcarriers", 32)),
        bandwidth_hz=float(raw.get("bandwidth_hz", 1.0e6)),
        draws=int(raw.get("draws", 50)),
        seed=int(raw.get("seed", 1)),
        solver=raw.get("solver", "scale"),
        workers=int(raw.get("workers", 1)),
    )
    cfg = build_config(
        architecture=scenario.architecture,
        k_total=scenario.k_total,
        k_streaming=scenario.k_streaming,
        rng=np.random.default_rng([scenario.seed, 0]),
        arrival_rate=scenario.arrival_rate,
        queue_packets=float(raw.get("queue_packets", 25.0)),
        packet_bits=float(raw.get("packet_bits", 1024.0)),
        l_max=scenario.l_max,
        n_subcarriers=scenario.n_subcarriers,
        bandwidth_hz=scenario.bandwidth_hz,
        m_f=raw.get("m_f"),
        noise_dbm_hz=float(raw.get("noise_dbm_hz", -174.0)),
        tolerances=tolerances,
        mask_dbm=raw.get("mask_dbm"),
    )
    return cfg, scenario


def _git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).parent)
        return out.stdout.strip() or "unknown"
    except Exception:
        return "unknown"


def _header_lines(tag: str, payload: dict) -> list[str]:
    blob = json.dumps(payload, sort_keys=True, default=str)
    digest = hashlib.sha256(blob.encode()).hexdigest()[:16]
    return [f"# {tag}", f"# config_hash: {digest}", f"# git_rev: {_git_revision()}",
            f"# config: {blob}"]


def _write_csv(path: Path, lines: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")


_PLOT_TEMPLATE = """\
# Auto-generated plotting companion; run with any matplotlib-enabled python.
import csv
import sys

import matplotlib.pyplot as plt

rows = []
with open({csv_name!r}) as fh:
    for row in csv.DictReader(l for l in fh if not l.startswith('#')):
        rows.append(row)
x = [float(r[{x_col!r}]) for r in rows]
y = [float(r[{y_col!r}]) for r in rows]
plt.plot(x, y, marker='o')
plt.xlabel({x_col!r})
plt.ylabel({y_col!r})
plt.grid(True)
plt.savefig({png_name!r}, dpi=150, bbox_inches='tight')
print('saved', {png_name!r})
"""


def _emit_plot_script(csv_path: Path, x_col: str, y_col: str) -> None:
    script = _PLOT_TEMPLATE.format(csv_name=csv_path.name, x_col=x_col,
                                   y_col=y_col, png_name=csv_path.stem + ".png")
    (csv_path.with_suffix(csv_path.suffix + ".plot.py")).write_text(script)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_solve(args) -> int:
    cfg, scenario = load_config(args.config)
    scenario = replace(scenario, seed=args.seed if args.seed is not None else scenario.seed,
                       l_max=1 if args.oma else scenario.l_max)
    if args.oma:
        cfg, _ = _rebuild(cfg, scenario)
    ch = gen_channel(cfg, np.random.default_rng([scenario.seed, 7]))
    solver = (PolyblockSolver(allow_high_dim=True) if args.solver == "polyblock"
              else ScaleSolver(workers=args.workers, collect_trace=True))
    t0 = time.perf_counter()
    trace = dinkelbach.solve(ch, cfg, solver)
    wall = time.perf_counter() - t0
    alloc = trace.final_allocation
    report = model.energy_efficiency(alloc, ch, cfg)
    feas = model.check_feasibility(alloc, ch, cfg)
    print(f"status={trace.status} iterations={len(trace.iterations)} "
          f"ee={report.ee:.6g} rate={report.sum_rate:.6g} "
          f"power={report.total_power:.6g} feasible={feas.ok} wall={wall:.2f}s")
    if args.out:
        lines = _header_lines("single solve", {"seed": scenario.seed,
                                               "solver": args.solver,
                                               "oma": bool(args.oma)})
        lines.append("iteration,e,surplus")
        for i, it in enumerate(trace.iterations):
            lines.append(f"{i},{it.e:.12g},{it.surplus:.12g}")
        _write_csv(Path(args.out), lines)
        _emit_plot_script(Path(args.out), "iteration", "e")
    return 0


def _rebuild(cfg: NetworkConfig, scenario: Scenario) -> tuple[NetworkConfig, Scenario]:
    rebuilt = build_config(
        architecture=scenario.architecture, k_total=scenario.k_total,
        k_streaming=scenario.k_streaming,
        rng=np.random.default_rng([scenario.seed, 0]),
        arrival_rate=scenario.arrival_rate, l_max=scenario.l_max,
        n_subcarriers=scenario.n_subcarriers, bandwidth_hz=scenario.bandwidth_hz,
        tolerances=cfg.tolerances)
    return rebuilt, scenario


def _cmd_sweep(args) -> int:
    _, scenario = load_config(args.config)
    overrides = {}
    if args.arch:
        overrides["architecture"] = args.arch
    if args.sweep:
        overrides["sweep"] = args.sweep
    if args.values:
        vals = tuple(float(v) if "." in v else int(v)
                     for v in args.values.split(","))
        overrides["values"] = vals
    if args.draws is not None:
        overrides["draws"] = args.draws
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.solver:
        overrides["solver"] = args.solver
    if args.oma:
        overrides["l_max"] = 1
    if args.timing:
        overrides["include_timing"] = True
    scenario = replace(scenario, **overrides)

    rows = run_sweep(scenario)
    lines = _header_lines("sweep", asdict(scenario))
    cols = "value,mean_ee,mean_rate,mean_power,mean_iterations,n_feasible,n_draws"
    if scenario.include_timing:
        cols += ",mean_wall_s"
    lines.append(cols)
    for r in rows:
        row = (f"{r.value:.10g},{r.mean_ee:.10g},{r.mean_rate:.10g},"
               f"{r.mean_power:.10g},{r.mean_iterations:.10g},"
               f"{r.n_feasible},{r.n_draws}")
        if scenario.include_timing:
            row += f",{r.mean_wall_s:.4f}"
        lines.append(row)
    out = Path(args.out or "sweep.csv")
    _write_csv(out, lines)
    _emit_plot_script(out, "value", "mean_ee")
    return 0


def _cmd_bench(args) -> int:
    grid = []
    for part in args.grid.split(";"):
        m, n, k = (int(x) for x in part.split(","))
        grid.append((m, n, k))
    report = parallel.benchmark(grid, repetitions=args.reps, workers=args.workers,
                                seed=args.seed or 0)
    lines = _header_lines("parallel benchmark", {"grid": grid, "reps": args.reps,
                                                 "workers": args.workers})
    lines.extend(report.csv_lines())
    _write_csv(Path(args.out or "bench.csv"), lines)
    for row in report.rows:
        print(f"M={row.m} N={row.n} K={row.k}: serial {row.serial_ms:.1f} ms, "
              f"parallel {row.parallel_ms:.1f} ms, speedup {row.speedup:.2f}x, "
              f"divergence {row.max_divergence:.1e}")
    return 0


def _cmd_overhead(args) -> int:
    lo, hi = (int(x) for x in args.k_range.split(":"))
    lines = _header_lines("signalling overhead",
                          {"m": args.m, "n": args.n, "k_range": [lo, hi]})
    lines.append("K,centralized_bits,distributed_bits")
    for k in range(lo, hi + 1):
        cfg = build_config(architecture="hcran", k_total=k,
                           k_streaming=min(args.streaming, k), rng=0,
                           m_f=args.m - 1, n_subcarriers=args.n)
        cen = overhead.count_centralized(cfg)
        dist = overhead.count_distributed(cfg, rounds=1)
        lines.append(f"{k},{cen},{dist}")
    out = Path(args.out or "overhead.csv")
    _write_csv(out, lines)
    _emit_plot_script(out, "K", "centralized_bits")
    return 0


def _cmd_gap(args) -> int:
    rng = np.random.default_rng(args.seed or 0)
    lines = _header_lines("optimality gap study",
                          {"instances": args.instances, "seed": args.seed})
    lines.append("instance,dim,scale_value,poly_value,poly_gap,ratio")
    scale_solver = ScaleSolver()
    for i in range(args.instances):
        inst = tiny_instance(rng)
        poly = PolyblockSolver(allow_high_dim=True, max_dim=args.max_dim,
                               max_iter=args.budget)
        s_res = scale_solver.solve_fixed_e(inst.ch, inst.cfg, inst.e)
        p_res = poly.solve_fixed_e(inst.ch, inst.cfg, inst.e,
                                   warm_start=s_res.allocation
                                   if s_res.status == "ok" else None)
        s_val = s_res.stats.true_objective if s_res.status == "ok" else float("nan")
        p_val = p_res.stats.true_objective if p_res.status == "ok" else float("nan")
        ratio = s_val / p_val if (p_val and np.isfinite(p_val) and p_val > 0) else float("nan")
        lines.append(f"{i},{p_res.stats.dim},{s_val:.10g},{p_val:.10g},"
                     f"{p_res.stats.gap:.10g},{ratio:.6g}")
        print(lines[-1])
    _write_csv(Path(args.out or "gap.csv"), lines)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hcran-noma",
        description="Energy-efficient power allocation for layered NOMA "
                    "cloud radio networks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output CSV path")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--solver", choices=["scale", "polyblock"], default=None)
        p.add_argument("--oma", action="store_true",
                       help="orthogonal baseline: one user per subcarrier")

    p_solve = sub.add_parser("solve", help="solve one channel instance")
    common(p_solve)
    p_solve.set_defaults(func=_cmd_solve, workers=1, solver="scale")

    p_sweep = sub.add_parser("sweep", help="run a figure-style sweep")
    common(p_sweep)
    p_sweep.add_argument("--arch", choices=list(ARCHITECTURES))
    p_sweep.add_argument("--sweep", choices=["users", "streaming", "arrival",
                                             "lpn", "none"])
    p_sweep.add_argument("--values", help="comma-separated sweep values")
    p_sweep.add_argument("--draws", type=int, default=None)
    p_sweep.add_argument("--timing", action="store_true",
                         help="include the (non-reproducible) wall-time column")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_bench = sub.add_parser("bench", help="serial-vs-parallel sweep benchmark")
    p_bench.add_argument("--grid", default="3,64,12;3,256,12;10,64,20;10,256,20",
                         help='semicolon-separated "M,N,K" triples')
    p_bench.add_argument("--reps", type=int, default=3)
    p_bench.add_argument("--workers", type=int, default=4)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--out")
    p_bench.set_defaults(func=_cmd_bench)

    p_over = sub.add_parser("overhead", help="signalling overhead curves")
    p_over.add_argument("--m", type=int, default=3)
    p_over.add_argument("--n", type=int, default=8)
    p_over.add_argument("--streaming", type=int, default=2)
    p_over.add_argument("--k-range", default="4:40")
    p_over.add_argument("--out")
    p_over.set_defaults(func=_cmd_overhead)

    p_gap = sub.add_parser("gap", help="local solver vs global oracle on tiny instances")
    p_gap.add_argument("--instances", type=int, default=20)
    p_gap.add_argument("--seed", type=int, default=0)
    p_gap.add_argument("--max-dim", type=int, default=40)
    p_gap.add_argument("--budget", type=int, default=800,
                       help="polyblock iteration budget per instance")
    p_gap.add_argument("--out")
    p_gap.set_defaults(func=_cmd_gap)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
