"""Configuration-driven experiment runner.

Builds a problem and hierarchy from a flat ``key = value`` config file (with
``#`` comments; command-line overrides win), runs the solver, and writes
machine-readable results: convergence.csv, solution.txt, summary.txt, and an
optional cycle-shape trace.  Exit status 0 means converged, 1 not converged
or diverged, 2 a configuration error.
"""

import argparse
import os
import sys
from dataclasses import dataclass, fields, replace

from .applications import Dahlquist, Heat1D, Heat1DTransfer, Heat2D
from .core import PropagationError, TimeGrid
from .hierarchy import build_hierarchy_from_grids, build_uniform_hierarchy
from .solver import DivergenceError, MgritSettings, MgritSolver, solve_parallel

__all__ = ["RunConfig", "ConfigError", "parse_config", "run_config", "main"]

PROBLEMS = ("dahlquist", "heat1d", "heat2d")
TRANSPORTS = ("threads", "mpi")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    problem: str = "dahlquist"
    constant_lambda: float = -1.0
    a: float = 1.0
    n_x: int = 129
    n_y: int = 33
    t_start: float = 0.0
    t_stop: float = 5.0
    nt: int = 101
    levels: int = 2
    coarsening: object = 2
    cycle_type: str = "V"
    cf_iter: int = 1
    nested_iteration: bool = True
    tol: float = 1e-7
    max_iter: int = 100
    seed: int = 0
    workers_time: int = 1
    workers_space: int = 1
    transport: str = "threads"
    output_dir: str = "."
    trace: bool = False
    spatial_coarsening: bool = False
    spatial_grids: object = None


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_or_list(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty value")
    if len(parts) == 1:
        return int(parts[0])
    return tuple(int(p) for p in parts)


def _parse_int_list(text):
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty value")
    return tuple(int(p) for p in parts)


# config key -> (RunConfig attribute, parser)
KEYS = {
    "problem": ("problem", str),
    "lambda": ("constant_lambda", float),
    "a": ("a", float),
    "n_x": ("n_x", int),
    "n_y": ("n_y", int),
    "t_start": ("t_start", float),
    "t_stop": ("t_stop", float),
    "nt": ("nt", int),
    "levels": ("levels", int),
    "coarsening": ("coarsening", _parse_int_or_list),
    "cycle_type": ("cycle_type", str),
    "cf_iter": ("cf_iter", int),
    "nested_iteration": ("nested_iteration", _parse_bool),
    "tol": ("tol", float),
    "max_iter": ("max_iter", int),
    "seed": ("seed", int),
    "workers_time": ("workers_time", int),
    "workers_space": ("workers_space", int),
    "transport": ("transport", str),
    "output_dir": ("output_dir", str),
    "trace": ("trace", _parse_bool),
    "spatial_coarsening": ("spatial_coarsening", _parse_bool),
    "spatial_grids": ("spatial_grids", _parse_int_list),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in KEYS.items()}


def _apply_assignment(values, key, raw, where):
    key = key.strip()
    if key not in KEYS:
        raise ConfigError(f"{where}: unknown key {key!r}")
    attr, parser = KEYS[key]
    try:
        values[attr] = parser(raw.strip())
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from exc


def validate_config(cfg: RunConfig) -> RunConfig:
    if cfg.problem not in PROBLEMS:
        raise ConfigError(f"unknown problem {cfg.problem!r}; choose from {PROBLEMS}")
    if cfg.transport not in TRANSPORTS:
        raise ConfigError(f"unknown transport {cfg.transport!r}; choose from {TRANSPORTS}")
    if cfg.levels < 1:
        raise ConfigError("levels must be >= 1")
    if cfg.nt < 2:
        raise ConfigError("nt must be >= 2 time points")
    if cfg.workers_time < 1 or cfg.workers_space < 1:
        raise ConfigError("worker counts must be >= 1")
    if cfg.workers_space != 1 and cfg.transport != "mpi":
        raise ConfigError("space parallelism requires transport = mpi")
    factors = cfg.coarsening if isinstance(cfg.coarsening, tuple) else (cfg.coarsening,)
    if any(int(m) < 2 for m in factors):
        raise ConfigError("coarsening factors must be integers >= 2")
    if cfg.spatial_coarsening:
        if cfg.problem != "heat1d":
            raise ConfigError("spatial_coarsening is only available for heat1d")
        if cfg.spatial_grids is None:
            raise ConfigError("spatial_coarsening requires spatial_grids")
        if len(cfg.spatial_grids) != cfg.levels:
            raise ConfigError(
                f"spatial_grids lists {len(cfg.spatial_grids)} sizes for {cfg.levels} levels"
            )
    try:
        MgritSettings(
            cycle_type=cfg.cycle_type,
            cf_iter=cfg.cf_iter,
            tol=cfg.tol,
            max_iter=cfg.max_iter,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def parse_config(path) -> RunConfig:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            _apply_assignment(values, key, raw, f"{path}:{lineno}")
    return validate_config(RunConfig(**values))


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    values = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        _apply_assignment(values, key, raw, f"override {item!r}")
    return validate_config(replace(cfg, **values))


def echo_config(cfg: RunConfig):
    """Config as 'key = value' lines that re-parse to an equal RunConfig."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        key = _ATTR_TO_KEY[f.name]
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return lines


def _coarsening_factors(cfg) -> list:
    if isinstance(cfg.coarsening, tuple):
        factors = list(cfg.coarsening)
        if len(factors) != cfg.levels - 1:
            raise ConfigError(
                f"got {len(factors)} coarsening factors for {cfg.levels} levels"
            )
        return factors
    return [int(cfg.coarsening)] * (cfg.levels - 1)


def build_problem(cfg: RunConfig, comm_space=None):
    grid = dict(t_start=cfg.t_start, t_stop=cfg.t_stop, nt=cfg.nt)
    if cfg.problem == "dahlquist":
        return Dahlquist(constant_lambda=cfg.constant_lambda, **grid)
    if cfg.problem == "heat1d":
        return Heat1D(n_x=cfg.n_x, a=cfg.a, **grid)
    return Heat2D(n_x=cfg.n_x, n_y=cfg.n_y, comm_space=comm_space, **grid)


def build_run(cfg: RunConfig, comm_space=None):
    """(hierarchy, settings) for a validated configuration."""
    transfers = None
    if cfg.spatial_coarsening:
        factors = _coarsening_factors(cfg)
        points = TimeGrid.uniform(cfg.t_start, cfg.t_stop, cfg.nt).points
        apps = []
        for l, n_x in enumerate(cfg.spatial_grids):
            apps.append(Heat1D(n_x=n_x, a=cfg.a, time_grid=TimeGrid(points)))
            if l < len(factors):
                points = points[:: factors[l]]
        hierarchy = build_hierarchy_from_grids(apps)
        transfers = [
            Heat1DTransfer(cfg.spatial_grids[l], cfg.spatial_grids[l + 1])
            for l in range(cfg.levels - 1)
        ]
    else:
        problem = build_problem(cfg, comm_space=comm_space)
        hierarchy = build_uniform_hierarchy(problem, cfg.levels, cfg.coarsening)
    settings = MgritSettings(
        cycle_type=cfg.cycle_type,
        cf_iter=cfg.cf_iter,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        nested_iteration=cfg.nested_iteration,
        random_seed=cfg.seed,
        transfers=transfers,
        trace=cfg.trace,
    )
    return hierarchy, settings


def _fmt(x) -> str:
    return f"{x:.17g}"


def write_outputs(out_dir, cfg, info, solution, time_points, trace):
    os.makedirs(out_dir, exist_ok=True)

    rows = []
    if info.setup_residual is not None:
        rows.append(("0", _fmt(info.setup_residual), _fmt(0.0)))
    for k, (res, sec) in enumerate(zip(info.residual_history, info.residual_seconds), 1):
        rows.append((str(k), _fmt(res), _fmt(sec)))
    with open(os.path.join(out_dir, "convergence.csv"), "w") as fh:
        fh.write("iteration,residual,cumulative_seconds\n")
        for row in rows:
            fh.write(",".join(row) + "\n")

    with open(os.path.join(out_dir, "solution.txt"), "w") as fh:
        for i, (t, u) in enumerate(zip(time_points, solution)):
            packed = " ".join(_fmt(v) for v in u.pack())
            fh.write(f"{i} {_fmt(t)} {packed}\n")

    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(f"# converged = {'yes' if info.converged else 'no'}\n")
        fh.write(f"# iterations = {info.iterations}\n")
        fh.write(f"# setup_seconds = {_fmt(info.setup_seconds)}\n")
        fh.write(f"# solve_seconds = {_fmt(info.solve_seconds)}\n")
        for line in echo_config(cfg):
            fh.write(line + "\n")

    if cfg.trace and trace is not None:
        with open(os.path.join(out_dir, "trace.txt"), "w") as fh:
            for level, op, first, last in trace:
                fh.write(f"{level},{op},{first},{last}\n")


def run_config(cfg: RunConfig) -> int:
    env_transport = os.environ.get("MGRIT_TRANSPORT")
    if env_transport:
        cfg = validate_config(replace(cfg, transport=env_transport))

    if cfg.transport == "mpi":
        from mpi4py import MPI

        from .runtime import MpiTransport, split_mpi_communicator

        comm_time, comm_space = split_mpi_communicator(MPI.COMM_WORLD, cfg.workers_space)
        hierarchy, settings = build_run(cfg, comm_space=comm_space)
        solver = MgritSolver(hierarchy, settings, transport=MpiTransport(comm_time))
        info = solver.solve()
        solution = solver.solution()
        trace = solver.trace
        writer = comm_time.Get_rank() == 0 and comm_space.Get_rank() == 0
    else:
        hierarchy, settings = build_run(cfg)
        if cfg.workers_time == 1:
            solver = MgritSolver(hierarchy, settings)
            info = solver.solve()
            solution = solver.solution()
            trace = solver.trace
        else:
            solvers = []
            info, solution = solve_parallel(
                hierarchy, settings, n_workers=cfg.workers_time, solvers_out=solvers
            )
            trace = solvers[0].trace if solvers else None
        writer = True

    if writer:
        write_outputs(
            cfg.output_dir, cfg, info, solution,
            hierarchy[0].app.time_grid.points, trace,
        )
    return 0 if info.converged else 1


def emit_residual_plot_data(csv_path, out_path) -> None:
    """Rewrite convergence.csv as a gnuplot-ready two-column file.

    Residual strings are copied verbatim, so the emitted column matches the
    CSV exactly.
    """
    with open(csv_path) as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    with open(out_path, "w") as fh:
        fh.write("# iteration residual\n")
        for line in lines[1:]:
            parts = line.split(",")
            fh.write(f"{parts[0]} {parts[1]}\n")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mgrit", description="Multigrid-reduction-in-time experiment runner"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="solve a problem described by a config file")
    run_p.add_argument("config", help="flat 'key = value' configuration file")
    run_p.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE",
        help="override a config value (repeatable)",
    )
    run_p.add_argument("--trace", action="store_true", help="write the cycle-shape trace")

    plot_p = sub.add_parser("plotdata", help="extract plot data from convergence.csv")
    plot_p.add_argument("csv", help="convergence.csv produced by 'mgrit run'")
    plot_p.add_argument("-o", "--output", default=None, help="output file (default: <csv>.dat)")

    args = parser.parse_args(argv)

    if args.command == "plotdata":
        out = args.output if args.output is not None else args.csv + ".dat"
        emit_residual_plot_data(args.csv, out)
        return 0

    try:
        cfg = parse_config(args.config)
        cfg = apply_overrides(cfg, args.override)
        if args.trace:
            cfg = validate_config(replace(cfg, trace=True))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        return run_config(cfg)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 1
    except PropagationError as exc:
        print(f"step failure: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # hierarchy construction and other setup problems are config errors
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
