"""Batch benchmark front end.

Four modes:

- ``verify``   run the numerical check battery (geometry plus gradients) and
               print one pass/fail line per check
- ``oracles``  run every solver on every closed-form benchmark problem and
               report the optimality gaps
- ``sweep``    Monte-Carlo secrecy-rate sweep over an SNR grid, one table row
               per (SNR, solver)
- ``ports``    per-subset secrecy table for one fading realization

Settings come from built-in defaults, overridden by an optional JSON config
file (``--config``), overridden by explicit CLI flags, in that order.  With a
fixed seed the emitted artifacts are byte-for-byte reproducible; measured
wall-clock columns are left empty unless ``--timing`` is passed, since
environment-dependent numbers would break that guarantee.

Exit codes: 0 success, 2 configuration error, 3 check failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .beamforming import (
    BudgetError,
    PortGrid,
    SecrecyScenario,
    monte_carlo_sweep,
    sample_channels,
    select_ports,
)
from .costs import standard_battery
from .solvers import SOLVERS, SolverConfig
from .verify import run_battery

SWEEP_HEADER = "snr_db,solver,asr_bits,asr_stderr,mean_iters,mean_time_s,trials,seed"

MODES = ("verify", "oracles", "sweep", "ports")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


@dataclass
class ExperimentConfig:
    mode: str = "verify"
    solvers: tuple = ("rgd", "rtr")
    snr_min: float = 0.0
    snr_max: float = 20.0
    snr_step: float = 5.0
    trials: int = 10
    seed: int = 0
    ports: int = 8
    active: int = 4
    alpha: float = 0.8
    noise_power: float = 1.0
    paths: int = 4
    out: str = "results"
    format: str = "csv"
    timing: bool = False

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {MODES}, got '{self.mode}'")
        if not self.solvers:
            raise ConfigError("solvers: at least one solver must be selected")
        for s in self.solvers:
            if s not in SOLVERS:
                raise ConfigError(
                    f"solvers: unknown solver '{s}' (choose from {sorted(SOLVERS)})"
                )
        if self.snr_step <= 0:
            raise ConfigError("snr_step: must be positive")
        if self.snr_max < self.snr_min:
            raise ConfigError("snr_max: must be >= snr_min")
        if self.trials < 1:
            raise ConfigError("trials: must be >= 1")
        if self.ports < 1:
            raise ConfigError("ports: must be >= 1")
        if not 1 <= self.active <= self.ports:
            raise ConfigError("active: must satisfy 1 <= active <= ports")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha: must be in (0, 1]")
        if self.noise_power <= 0:
            raise ConfigError("noise_power: must be positive")
        if self.paths < 1:
            raise ConfigError("paths: must be >= 1")
        if self.format not in FORMATS:
            raise ConfigError(f"format: must be one of {FORMATS}")

    def snr_grid(self) -> tuple:
        n = int(math.floor((self.snr_max - self.snr_min) / self.snr_step + 1e-9)) + 1
        return tuple(self.snr_min + k * self.snr_step for k in range(n))

    def scenario(self, solver: str) -> SecrecyScenario:
        return SecrecyScenario(
            grid=PortGrid(n_ports=self.ports, n_active=self.active),
            alpha=self.alpha,
            noise_power=self.noise_power,
            n_paths=self.paths,
            snr_grid_db=self.snr_grid(),
            trials=self.trials,
            seed=self.seed,
            solver=solver,
        )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="riemopt-bench",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    defaults = ExperimentConfig()
    p.add_argument("--mode", choices=MODES,
                   help=f"experiment mode (default: {defaults.mode})")
    p.add_argument("--config", help="JSON config file; flags override its fields")
    p.add_argument("--solver", action="append", choices=sorted(SOLVERS),
                   help="solver to run; repeat for several "
                        f"(default: {' '.join(defaults.solvers)})")
    p.add_argument("--snr-min", type=float, dest="snr_min",
                   help=f"sweep start in dB (default: {defaults.snr_min:g})")
    p.add_argument("--snr-max", type=float, dest="snr_max",
                   help=f"sweep end in dB (default: {defaults.snr_max:g})")
    p.add_argument("--snr-step", type=float, dest="snr_step",
                   help=f"sweep step in dB (default: {defaults.snr_step:g})")
    p.add_argument("--trials", type=int,
                   help=f"Monte-Carlo trials per SNR point (default: {defaults.trials})")
    p.add_argument("--seed", type=int,
                   help=f"master RNG seed (default: {defaults.seed})")
    p.add_argument("--ports", type=int,
                   help=f"number of candidate antenna ports (default: {defaults.ports})")
    p.add_argument("--active", type=int,
                   help=f"number of active antennas (default: {defaults.active})")
    p.add_argument("--alpha", type=float,
                   help=f"signal power fraction in (0, 1] (default: {defaults.alpha})")
    p.add_argument("--noise-power", type=float, dest="noise_power",
                   help=f"receiver noise power (default: {defaults.noise_power:g})")
    p.add_argument("--paths", type=int,
                   help=f"multipath components per channel (default: {defaults.paths})")
    p.add_argument("--out", help=f"output directory (default: {defaults.out})")
    p.add_argument("--format", choices=FORMATS,
                   help="also mirror tables to JSON with 'json' (default: csv)")
    p.add_argument("--timing", action="store_true", default=None,
                   help="record wall-clock columns in artifacts (non-reproducible)")
    return p


_CONFIG_KEYS = set(ExperimentConfig().__dict__)


def load_config(argv) -> ExperimentConfig:
    args = build_parser().parse_args(argv)
    merged = ExperimentConfig().__dict__.copy()

    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config: file '{path}' not found")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config: invalid JSON ({e})") from None
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be an object")
        for key, value in data.items():
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{key}: unknown config field")
            merged[key] = value

    overrides = {
        "mode": args.mode,
        "solvers": tuple(args.solver) if args.solver else None,
        "snr_min": args.snr_min,
        "snr_max": args.snr_max,
        "snr_step": args.snr_step,
        "trials": args.trials,
        "seed": args.seed,
        "ports": args.ports,
        "active": args.active,
        "alpha": args.alpha,
        "noise_power": args.noise_power,
        "paths": args.paths,
        "out": args.out,
        "format": args.format,
        "timing": args.timing,
    }
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value

    merged["solvers"] = tuple(merged["solvers"])
    cfg = ExperimentConfig(**merged)
    cfg.validate()
    return cfg


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)  # shortest exact round-trip
    return str(x)


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(_fmt(c) for c in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, header: str, rows) -> None:
    keys = header.split(",")
    payload = [dict(zip(keys, row)) for row in rows]
    path.write_text(json.dumps(payload, indent=2) + "\n")


def emit_report(results, out_dir: Path, fmt: str, timing: bool) -> None:
    """Serialize sweep results: ASR table, runtime table, plain-text summary.

    ``results`` is a list of SweepResult.  Without ``timing`` the
    ``mean_time_s`` fields are left empty so artifacts stay reproducible.
    """
    if not results:
        raise ValueError("emit_report: no results to serialize")
    out_dir.mkdir(parents=True, exist_ok=True)

    def record(solver, row):
        t = row.mean_time_s if timing else ""
        return (row.snr_db, solver, row.asr, row.asr_stderr,
                row.mean_iters, t, row.trials, row.seed)

    flat = [record(res.solver, row) for res in results for row in res.rows]
    by_snr = sorted(flat, key=lambda r: (r[0], r[1]))
    by_solver = sorted(flat, key=lambda r: (r[1], r[0]))

    _write_csv(out_dir / "asr_vs_snr.csv", SWEEP_HEADER, by_snr)
    _write_csv(out_dir / "runtime_vs_snr.csv", SWEEP_HEADER, by_solver)
    if fmt == "json":
        _write_json(out_dir / "asr_vs_snr.json", SWEEP_HEADER, by_snr)
        _write_json(out_dir / "runtime_vs_snr.json", SWEEP_HEADER, by_solver)

    lines = ["range-averaged results per solver", ""]
    for res in results:
        asr = float(np.mean([r.asr for r in res.rows]))
        iters = float(np.mean([r.mean_iters for r in res.rows]))
        lines.append(f"solver={res.solver} avg_asr_bits={_fmt(asr)} "
                     f"avg_iters={_fmt(iters)}")
        if timing:
            secs = float(np.mean([r.mean_time_s for r in res.rows]))
            lines[-1] += f" avg_time_s={_fmt(secs)}"
    if not timing:
        lines.append("")
        lines.append("timing columns disabled; rerun with --timing to record them")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")


def _mode_verify(cfg: ExperimentConfig) -> int:
    records = run_battery(seed=cfg.seed)
    failures = 0
    for rec in records:
        tag = "PASS" if rec.passed else "FAIL"
        print(f"[{tag}] {rec.name}: {rec.detail}")
        failures += 0 if rec.passed else 1
    print(f"{len(records) - failures}/{len(records)} checks passed")
    return 0 if failures == 0 else 3


ORACLE_GAP_TOL = 1e-4
ORACLE_STARTS = 5


def _mode_oracles(cfg: ExperimentConfig) -> int:
    problems = standard_battery(cfg.seed)
    solver_cfg = SolverConfig(grad_tol=1e-8, max_iters=2000)
    rng = np.random.default_rng(cfg.seed)
    rows = []
    worst = 0.0
    for prob in problems:
        starts = [prob.manifold.random_point(rng) for _ in range(ORACLE_STARTS)]
        for name in sorted(SOLVERS):
            gap = 0.0
            iters = []
            for x0 in starts:
                report = SOLVERS[name](prob.cost, prob.manifold, x0, solver_cfg)
                gap = max(gap, abs(report.final_cost - prob.optimum_value))
                iters.append(report.iterations)
            rows.append((name, prob.name, gap, float(np.mean(iters))))
            worst = max(worst, gap)

    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = "solver,problem,gap,mean_iters"
    _write_csv(out_dir / "oracle_grid.csv", header, rows)
    print(header)
    for row in rows:
        print(",".join(_fmt(c) for c in row))
    print(f"worst gap {worst:.3e} (tolerance {ORACLE_GAP_TOL:g})")
    return 0 if worst <= ORACLE_GAP_TOL else 3


def _mode_sweep(cfg: ExperimentConfig) -> int:
    results = [monte_carlo_sweep(cfg.scenario(solver)) for solver in cfg.solvers]
    emit_report(results, Path(cfg.out), cfg.format, cfg.timing)
    print(f"sweep complete: {len(results)} solver(s) x {len(cfg.snr_grid())} "
          f"SNR points x {cfg.trials} trials -> {cfg.out}/")
    return 0


def _mode_ports(cfg: ExperimentConfig) -> int:
    solver = cfg.solvers[0]
    scenario = cfg.scenario(solver)
    rng = np.random.default_rng([cfg.seed])
    ch = sample_channels(scenario, rng)
    selection = select_ports(scenario, ch, rng)

    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = "ports,rate_bits,iterations" + (",time_s" if cfg.timing else "")
    rows = []
    for row in selection.table:
        cells = ["|".join(str(p) for p in row.ports), row.rate, row.iterations]
        if cfg.timing:
            cells.append(row.wall_time)
        rows.append(tuple(cells))
    _write_csv(out_dir / "ports.csv", header, rows)
    best = "|".join(str(p) for p in selection.best_ports)
    print(f"{len(rows)} subsets evaluated; best ports {best} "
          f"rate {selection.best_rate:.4f} bits")
    return 0


def main(argv=None) -> int:
    try:
        cfg = load_config(argv)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    try:
        if cfg.mode == "verify":
            return _mode_verify(cfg)
        if cfg.mode == "oracles":
            return _mode_oracles(cfg)
        if cfg.mode == "sweep":
            return _mode_sweep(cfg)
        return _mode_ports(cfg)
    except BudgetError as e:
        print(f"config error: ports/active: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"config error: out: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
