# roa_invariance/cli.py
"""Command line front end.

    python -m roa_invariance roa --example example1
    python -m roa_invariance cct --case wscc9 --contingency bus:8,line:8-9 --dt 0.001 --tmax 5
    python -m roa_invariance simulate --case wscc9 --contingency bus:8,line:8-9 --clear 0.3
    python -m roa_invariance verify --example example3 --samples 1000
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import toml

from . import codec
from .cct import (
    CctSettings,
    build_power_roa,
    clearing_simulation,
    fault_on_trajectory,
    prepare,
    random_line_trips,
    screen,
)
from .checksum import artifact_digest, file_digest
from .dynsys import IntegratorConfig, Method, integrate
from .errors import ConfigError, ContingencyError, IntegrationDiverged, RoaError
from .examples import example, names, vector_field_grid
from .invariance import LIMIT_RESIDUAL_TOL, check_boundary_flow, check_trajectory_invariance
from .powersys import Contingency, PowerCase, bundled_case_path, load_case

log = logging.getLogger("cli")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
SUBCOMMANDS = ("roa", "cct", "simulate", "verify")


def configure_logging() -> None:
    name = os.environ.get("ROA_LOG", "info").lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(name, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )
    if name not in LOG_LEVELS:
        log.warning(f"unknown ROA_LOG level {name!r}, using info")


# --- configuration ---
@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    case_path: str | None = None
    example: str | None = None
    contingencies: tuple[str, ...] = ()
    random_contingencies: int = 0
    dt: float = 1e-3
    t_max: float = 5.0
    tol: float = 1e-3
    t_end: float = 100.0
    clear: float | None = None
    x0: tuple[float, ...] | None = None
    samples: int = 1000
    facet_samples: int = 200
    seed: int = 0
    jobs: int | None = None
    grid_box: tuple[float, ...] = (-4.0, 4.0, -4.0, 4.0)
    resolution: int = 21
    output: str | None = None
    sets: str | None = None
    format: str = "csv"
    lossless: bool = False
    transfer_conductances: bool = False
    per_angle_bounds: bool = True
    uep_bounds: bool = True

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_max > self.dt:
            raise ConfigError(f"tmax ({self.t_max}) must exceed dt ({self.dt})")
        if not self.t_end > 0:
            raise ConfigError(f"t-end must be positive, got {self.t_end}")
        if self.samples < 1 or self.facet_samples < 1:
            raise ConfigError("sample counts must be positive")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError(f"jobs must be positive, got {self.jobs}")
        for spec in self.contingencies:
            try:
                Contingency.parse(spec)
            except ContingencyError as exc:
                raise ConfigError(str(exc)) from exc

    def cct_settings(self) -> CctSettings:
        return CctSettings(dt=self.dt, t_max=self.t_max, tol=self.tol, lossless=self.lossless,
                           transfer_conductances=self.transfer_conductances,
                           per_angle_bounds=self.per_angle_bounds, uep_bounds=self.uep_bounds)

    def contingency_list(self) -> list[Contingency]:
        return [Contingency.parse(spec) for spec in self.contingencies]


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def load_config_file(path: str | None) -> dict[str, Any]:
    """Defaults from the [run] table of a TOML file."""
    if path is None:
        return {}
    try:
        doc = toml.load(path)
    except (OSError, toml.TomlDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    run = doc.get("run", {})
    known = {f.name for f in fields(RunConfig)} - {"subcommand"} | {"case", "tmax"}
    unknown = set(run) - known
    if unknown:
        raise ConfigError(f"unknown keys in [run]: {', '.join(sorted(unknown))}")
    if "case" in run:
        run["case_path"] = run.pop("case")
    if "tmax" in run:
        run["t_max"] = run.pop("tmax")
    for key in ("grid_box", "x0", "contingencies"):
        if key in run:
            run[key] = tuple(run[key])
    return run


def build_run_config(args: argparse.Namespace) -> RunConfig:
    values = load_config_file(args.config)
    flags = {
        "case_path": args.case, "example": args.example, "contingencies": args.contingency,
        "random_contingencies": getattr(args, "random_contingencies", None),
        "dt": args.dt, "t_max": args.tmax, "tol": args.tol, "t_end": args.t_end,
        "clear": getattr(args, "clear", None), "x0": getattr(args, "x0", None),
        "samples": args.samples, "facet_samples": args.facet_samples, "seed": args.seed,
        "jobs": args.jobs, "grid_box": getattr(args, "grid_box", None),
        "resolution": getattr(args, "resolution", None), "output": args.output,
        "sets": getattr(args, "sets", None), "format": args.format,
        "lossless": args.lossless, "transfer_conductances": args.transfer_conductances,
        "per_angle_bounds": args.per_angle_bounds, "uep_bounds": args.uep_bounds,
    }
    for key, value in flags.items():
        if value is not None:
            values[key] = tuple(value) if isinstance(value, list) else value
    return RunConfig(subcommand=args.subcommand, **values)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file whose [run] table supplies defaults")
    common.add_argument("--case", help="case JSON path or bundled name (wscc9, ieee39)")
    common.add_argument("--example", choices=names())
    common.add_argument("--contingency", action="append", help="fault spec such as bus:8,line:8-9")
    common.add_argument("--dt", type=float, help="fault-on step / scan step in seconds")
    common.add_argument("--tmax", type=float, help="simulation horizon in seconds")
    common.add_argument("--tol", type=float, help="oracle bisection tolerance in seconds")
    common.add_argument("--t-end", dest="t_end", type=float, help="horizon for example runs")
    common.add_argument("--samples", type=int)
    common.add_argument("--facet-samples", dest="facet_samples", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("-o", "--output", help="write the artifact here instead of stdout")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--lossless", action="store_true", default=None, help="drop transfer conductances")
    common.add_argument("--transfer-conductances", dest="transfer_conductances", action="store_true", default=None,
                        help="keep transfer conductances in CCT studies")
    common.add_argument("--no-per-angle-bounds", dest="per_angle_bounds", action="store_false", default=None)
    common.add_argument("--symmetric-bounds", dest="uep_bounds", action="store_false", default=None,
                        help="bound every angle difference by pi instead of its unstable point")

    parser = argparse.ArgumentParser(prog="roa_invariance",
                                     description="Regions of attraction by individual invariance")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    roa = sub.add_parser("roa", parents=[common], help="invariant sets and vector field grids")
    roa.add_argument("--grid-box", dest="grid_box", type=_floats, help="lo1,hi1,lo2,hi2")
    roa.add_argument("--resolution", type=int)
    roa.add_argument("--sets", help="where the invariant sets JSON goes with csv output "
                                    "(default: next to --output, or <example>.sets.json)")

    cct = sub.add_parser("cct", parents=[common], help="critical clearing times")
    cct.add_argument("--random-contingencies", dest="random_contingencies", type=int)

    sim = sub.add_parser("simulate", parents=[common], help="trajectories")
    sim.add_argument("--x0", type=_floats)
    sim.add_argument("--clear", type=float, help="clearing time; omit for the fault-on trajectory")

    sub.add_parser("verify", parents=[common], help="invariance property suites")
    return parser


# --- helpers ---
def resolve_case(name: str | None) -> PowerCase:
    if name is None:
        raise ConfigError("--case is required")
    path = Path(name)
    if not path.exists():
        path = bundled_case_path(name)
    if not path.exists():
        raise ConfigError(f"no case file {name!r} and no bundled case of that name")
    return load_case(path)


def emit(text: str, output: str | None) -> None:
    digest = artifact_digest(text)
    if output is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        where = "stdout"
    else:
        Path(output).write_bytes(text.encode("utf-8"))
        if file_digest(output) != digest:
            raise RoaError(f"{output} does not read back as written (crc32 {file_digest(output)} != {digest})")
        where = output
    log.info(f"wrote {where} ({len(text)} bytes, crc32 {digest})")


def sets_path(cfg: RunConfig, name: str) -> str:
    """--sets, else a sibling of --output, else <name>.sets.json in the working directory."""
    if cfg.sets is not None:
        return cfg.sets
    if cfg.output is not None:
        out = Path(cfg.output)
        return str(out.with_name(f"{out.stem}.sets.json"))
    return f"{name}.sets.json"


def _single(cfg: RunConfig) -> Contingency:
    contingencies = cfg.contingency_list()
    if len(contingencies) != 1:
        raise ConfigError("exactly one --contingency is required")
    return contingencies[0]


# --- subcommands ---
def run_roa(cfg: RunConfig) -> int:
    if cfg.case_path is not None:
        case = resolve_case(cfg.case_path)
        study = prepare(case, _single(cfg), cfg.cct_settings())
        roa = build_power_roa(study.post, study.pre.initial_angles, cfg.per_angle_bounds, cfg.uep_bounds)
        emit(codec.dump_json(codec.build_candidate(roa)), cfg.output)
        return 0
    if cfg.example is None:
        raise ConfigError("roa needs --example or --case")
    system = example(cfg.example)
    box = cfg.grid_box
    if len(box) != 2 * system.dim:
        raise ConfigError(f"--grid-box needs {2 * system.dim} numbers")
    grid = vector_field_grid(system, list(zip(box[::2], box[1::2])), cfg.resolution)
    sets_doc = {"example": system.name, "params": dict(system.params), **codec.build_candidate(system.roa)}
    if cfg.format == "json":
        doc = dict(sets_doc, grid={"states": grid.states.tolist(), "values": grid.values.tolist()})
        emit(codec.dump_json(doc), cfg.output)
        if cfg.sets is not None:
            emit(codec.dump_json(sets_doc), cfg.sets)
    else:
        emit(codec.build_grid_csv(grid), cfg.output)
        emit(codec.dump_json(sets_doc), sets_path(cfg, system.name))
    return 0


def run_cct(cfg: RunConfig) -> int:
    case = resolve_case(cfg.case_path)
    contingencies = cfg.contingency_list()
    if cfg.random_contingencies:
        contingencies += random_line_trips(case, cfg.random_contingencies, np.random.default_rng(cfg.seed))
    if not contingencies:
        raise ConfigError("cct needs --contingency or --random-contingencies")
    results = screen(case, contingencies, cfg.cct_settings(), jobs=cfg.jobs)
    if cfg.format == "json":
        emit(codec.dump_json(codec.build_cct_json(results)), cfg.output)
    else:
        emit(codec.build_cct_csv(results), cfg.output)
    return 0


def run_simulate(cfg: RunConfig) -> int:
    if cfg.case_path is not None:
        case = resolve_case(cfg.case_path)
        contingency = _single(cfg)
        if cfg.clear is None:
            traj = fault_on_trajectory(case, contingency, cfg.dt, cfg.t_max, cfg.lossless,
                                       cfg.transfer_conductances)
        else:
            traj = clearing_simulation(case, contingency, cfg.clear, cfg.dt, cfg.t_max, cfg.lossless,
                                       cfg.transfer_conductances)
    elif cfg.example is not None:
        system = example(cfg.example)
        x0 = cfg.x0 if cfg.x0 is not None else tuple(system.equilibrium + 0.5)
        try:
            traj = integrate(system.field, x0, cfg.t_end, IntegratorConfig(step=cfg.dt, method=Method.RK4))
        except IntegrationDiverged as exc:
            log.warning(str(exc))
            traj = exc.trajectory
    else:
        raise ConfigError("simulate needs --example or --case")
    if traj.diverged:
        log.warning(f"trajectory stopped early: {traj.message}")
    if cfg.format == "json":
        emit(codec.dump_json({"t": traj.times.tolist(), "x": traj.states.tolist()}), cfg.output)
    else:
        emit(codec.build_trajectory_csv(traj), cfg.output)
    return 0


def verify_example(name: str, cfg: RunConfig) -> dict:
    system = example(name)
    rng = np.random.default_rng(cfg.seed)
    flow = check_boundary_flow(system.field, system.roa, cfg.facet_samples, rng)
    traj = check_trajectory_invariance(system.field, system.roa, cfg.samples, cfg.t_end, rng)
    residuals = [
        {"set": s.label, "part": p.name, "residual": s.limit_residual(p, rng)}
        for s, p in zip(system.omega_sets, system.field.parts)
    ]
    residual_ok = all(r["residual"] <= LIMIT_RESIDUAL_TOL for r in residuals)
    return {
        "example": name,
        "passed": flow.passed and traj.passed and residual_ok,
        "facet_flow": codec.build_flow_report(flow),
        "trajectory_invariance": codec.build_invariance_report(traj),
        "limit_residuals": residuals,
    }


def _verify_lines(reports: list[dict]) -> str:
    lines = []
    for rep in reports:
        flow, traj = rep["facet_flow"], rep["trajectory_invariance"]
        worst = max((r["residual"] for r in rep["limit_residuals"]), default=0.0)
        lines.append(f"{rep['example']} facet_flow {'pass' if flow['passed'] else 'FAIL'} "
                     f"violations={len(flow['violations'])}")
        lines.append(f"{rep['example']} trajectory_invariance {'pass' if traj['passed'] else 'FAIL'} "
                     f"exits={len(traj['exits'])} max_distance={traj['max_terminal_distance']:.3e}")
        lines.append(f"{rep['example']} limit_residual {'pass' if worst <= LIMIT_RESIDUAL_TOL else 'FAIL'} "
                     f"max={worst:.3e}")
    return "\n".join(lines) + "\n"


def run_verify(cfg: RunConfig) -> int:
    targets = [cfg.example] if cfg.example else names()
    reports = [verify_example(name, cfg) for name in targets]
    text = codec.dump_json(reports) if cfg.format == "json" else _verify_lines(reports)
    emit(text, cfg.output)
    return 0 if all(rep["passed"] for rep in reports) else 1


COMMANDS = {"roa": run_roa, "cct": run_cct, "simulate": run_simulate, "verify": run_verify}


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = build_run_config(args)
        return COMMANDS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"{parser.prog} {args.subcommand}: error: {exc}", file=sys.stderr)
        return 2
    except RoaError as exc:
        log.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
