"""Command line entry point: density, analyze, optimize, simulate, compare."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .config import ConfigError, ExperimentConfig, load_config
from .mac import InfeasibleSensingError, Protocol, build_table, evaluation_positions, perf
from .optimizer import optimize_global, optimize_local
from .simulator import COMPARE_HEADER, compare, simulate_aloha, simulate_csma
from .traffic import DensityField, steady_state_density, transient_density

log = logging.getLogger("vanetperf")

EXIT_OK, EXIT_GATE, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3

SWEEP_HEADER = ["alpha", "rho_avg", "pi_avg"]
OPT_GLOBAL_HEADER = ["alpha", "protocol", "strategy", "p_star", "pi_star", "rho_star", "p_upper"]


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def density_field(cfg: ExperimentConfig) -> DensityField:
    if cfg.t_end is not None:
        return transient_density(cfg.velocity, cfg.arrivals, cfg.t_end, cfg.dt, dx=cfg.grid_dx, L=cfg.L)
    return steady_state_density(cfg.velocity, cfg.arrivals, dx=cfg.grid_dx, L=cfg.L)


def _table(cfg, d):
    return build_table(d, cfg.params, cfg.strategy, evaluation_positions(cfg.L, cfg.n_positions),
                       model=cfg.interferer_model)


def _operating_p(cfg, d, table) -> float:
    if cfg.optimize_p:
        return optimize_global(d, cfg.params, cfg.protocol, cfg.strategy, table=table).p_star
    return float(cfg.p)


def _sweep_configs(cfg):
    return [cfg.with_alpha(a) for a in cfg.alphas]


def cmd_density(cfg: ExperimentConfig, out: Path) -> int:
    """Mean density and velocity profiles."""
    d = density_field(cfg)
    d.to_csv(out / "density.csv")
    with open(out / "velocity.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_km", "v_km_per_min"])
        for x, v in zip(d.x, cfg.velocity(d.x)):
            w.writerow([_fmt(x), _fmt(v)])
    log.info("expected vehicles on the road: %.6g", d.total)
    return EXIT_OK


def cmd_analyze(cfg: ExperimentConfig, out: Path) -> int:
    """Throughput and progress profiles (plus one row per swept arrival rate)."""
    tag = f"{cfg.protocol.value}_{cfg.strategy.value}"
    d = density_field(cfg)
    table = _table(cfg, d)
    prof = perf(d, cfg.params, _operating_p(cfg, d, table), cfg.protocol, cfg.strategy, table=table)
    prof.to_csv(out / f"perf_{tag}.csv")
    log.info("p=%.6g rho_avg=%.6g pi_avg=%.6g", prof.p, prof.rho_avg, prof.pi_avg)
    if cfg.sweep:
        rows = []
        for c in _sweep_configs(cfg):
            d = density_field(c)
            table = _table(c, d)
            prof = perf(d, c.params, _operating_p(c, d, table), c.protocol, c.strategy, table=table)
            rows.append([_fmt(c.arrivals.alpha), _fmt(prof.rho_avg), _fmt(prof.pi_avg)])
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_HEADER)
            w.writerows(rows)
    return EXIT_OK


def cmd_optimize(cfg: ExperimentConfig, out: Path) -> int:
    """Road-wide optimum per arrival rate and the per-position optimum."""
    rows = []
    configs = [cfg] if cfg.t_end is not None else _sweep_configs(cfg)
    for k, c in enumerate(configs):
        d = density_field(c)
        table = _table(c, d)
        g = optimize_global(d, c.params, c.protocol, c.strategy, table=table)
        alpha = c.arrivals.alpha if c.arrivals.is_constant else float("nan")
        rows.append([_fmt(alpha), c.protocol.value, c.strategy.value, _fmt(g.p_star), _fmt(g.pi_at_star),
                     _fmt(g.rho_at_star), _fmt(g.p_upper)])
        if k == 0:
            optimize_local(d, c.params, c.protocol, c.strategy, table=table).to_csv(out / "opt_local.csv")
        log.info("alpha=%s p*=%.6g pi*=%.6g", rows[-1][0], g.p_star, g.pi_at_star)
    with open(out / "opt_global.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OPT_GLOBAL_HEADER)
        w.writerows(rows)
    return EXIT_OK


def _simulate(cfg, d, p):
    if cfg.protocol is Protocol.ALOHA:
        return simulate_aloha(d, cfg.params, p, cfg.strategy, cfg.sim)
    return simulate_csma(d, cfg.params, p, cfg.strategy, cfg.sim)


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    """Monte Carlo estimates of throughput and progress."""
    d = density_field(cfg)
    p = _operating_p(cfg, d, _table(cfg, d)) if cfg.optimize_p else float(cfg.p)
    stats = _simulate(cfg, d, p)
    tag = f"{cfg.protocol.value}_{cfg.strategy.value}"
    stats.to_csv(out / f"sim_{tag}.csv")
    stats.runs_to_csv(out / f"sim_runs_{tag}.csv")
    log.info("p=%.6g rho_hat=%.6g (se %.2g) pi_hat=%.6g (se %.2g)", p, stats.rho_hat, stats.rho_se,
             stats.pi_hat, stats.pi_se)
    return EXIT_OK


def cmd_compare(cfg: ExperimentConfig, out: Path) -> int:
    """Analysis against simulation for every arrival rate; exits 1 if any gate fails."""
    rows, ok = [], True
    configs = [cfg] if cfg.t_end is not None else _sweep_configs(cfg)
    for c in configs:
        d = density_field(c)
        table = _table(c, d)
        p = _operating_p(c, d, table)
        prof = perf(d, c.params, p, c.protocol, c.strategy, table=table)
        rep = compare(prof, _simulate(c, d, p), c.rel_gate, c.se_gate)
        ok &= rep.passed
        alpha = c.arrivals.alpha if c.arrivals.is_constant else float("nan")
        for row in rep.rows():
            rows.append([_fmt(alpha)] + row)
        for chk in rep.checks:
            log.info("alpha=%s %s analytical=%.6g simulated=%.6g rel_dev=%+.2f%% %s", _fmt(alpha), chk.metric,
                     chk.analytical, chk.simulated, 100 * chk.rel_dev, "pass" if chk.passed else "FAIL")
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha"] + COMPARE_HEADER)
        w.writerows(rows)
    return EXIT_OK if ok else EXIT_GATE


COMMANDS = {
    "density": cmd_density,
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment file (defaults apply when omitted)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
    common.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="simulation seed (overrides sim.seed)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="vanetperf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__doc__ or name)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"sim.seed={args.seed}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out if args.out is not None else cfg.output_dir
    cfg = replace(cfg, output_dir=out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out)
    except InfeasibleSensingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
