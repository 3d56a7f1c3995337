"""Command-line front end: one YAML config per run, six subcommands.

simulate   integrate a trajectory, write it as CSV
hist       histogram a trajectory (file or inline run) to a density file
steady     assemble the operator and solve its stationary density
dist       transport cost + potentials between two density files
infer      recover parameters against a reference density
gradcheck  compare analytic gradient routes against finite differences

Every run writes `resolved_config.yaml` (all defaults filled in) next to
its outputs, so the run can be repeated bit-identically from that file.
Exit codes: 0 success, 2 config validation, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .analysis import mc_convergence_sweep
from .config import RunConfig, load_config
from .dynamics import DEFAULT_BOUNDS
from .errors import ConfigError, NumericalError
from .fvm import MarkovOperator, assemble_K, cfl_constant, face_velocities
from .gradient import finite_difference_grad, loss_and_grad
from .grid import DensityField, Grid
from .io import (
    read_density,
    read_trajectory_csv,
    write_density,
    write_table_csv,
    write_trajectory_csv,
    write_vector,
)
from .optimize import coordinate_descent, gradient_descent
from .ot import sinkhorn
from .simulate import integrate, occupation_histogram, subsample
from .stationary import SparseFactor, solve_stationary_direct, solve_stationary_power

_THREAD_ENV_KEYS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def _apply_threads(n: int) -> None:
    """Cap worker-thread pools; 0 leaves every library at its default."""
    if n <= 0:
        return
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:
        for key in _THREAD_ENV_KEYS:
            os.environ[key] = str(n)


def _echo(cfg: RunConfig, out_dir: Path) -> None:
    cfg.echo(out_dir / "resolved_config.yaml")


def _run_dns(cfg: RunConfig, system, theta):
    dat = cfg.data["data"]
    dt = float(dat["dt"])
    n_steps = int(round(float(dat["T"]) / dt))
    return integrate(
        system,
        theta,
        cfg.x0(system),
        dt=dt,
        n_steps=n_steps,
        noise=cfg.noise_spec(),
        seed=int(dat["seed"]),
    )


def cmd_simulate(cfg: RunConfig, out_dir: Path, args) -> int:
    _echo(cfg, out_dir)
    system = cfg.system()
    theta = cfg.theta(system)
    traj = _run_dns(cfg, system, theta)
    path = out_dir / "trajectory.csv"
    write_trajectory_csv(path, traj.times, traj.states)
    lo = traj.states.min(axis=0)
    hi = traj.states.max(axis=0)
    print(f"wrote {path} ({traj.states.shape[0]} rows, dt={traj.dt}, seed={traj.seed})")
    for d in range(system.dim):
        print(f"  axis {d}: [{lo[d]:.6g}, {hi[d]:.6g}]")
    return 0


def _hist_grid(cfg: RunConfig, system):
    bin_size = cfg.data["data"]["bin_size"]
    if bin_size is None:
        return cfg.grid(system)
    g = cfg.data["grid"]
    lo, hi = g["lo"], g["hi"]
    if lo is None or hi is None:
        if system.kind not in DEFAULT_BOUNDS:
            raise ConfigError("grid.lo/grid.hi are required with data.bin_size")
        box = DEFAULT_BOUNDS[system.kind]
        lo = [a for a, _ in box] if lo is None else lo
        hi = [b for _, b in box] if hi is None else hi
    return Grid.from_spacing(lo, hi, float(bin_size))


def cmd_hist(cfg: RunConfig, out_dir: Path, args) -> int:
    _echo(cfg, out_dir)
    system = cfg.system()
    dat = cfg.data["data"]
    traj_path = args.trajectory or cfg.data["io"]["trajectory"]
    if traj_path is not None:
        _, states = read_trajectory_csv(traj_path)
    else:
        states = _run_dns(cfg, system, cfg.theta(system)).states
    grid = _hist_grid(cfg, system)
    burn = int(dat["burn_in"] * states.shape[0])
    kept = states[burn:]
    if dat["subsample"] is not None:
        kept = subsample(kept, int(dat["subsample"]), seed=int(dat["subsample_seed"]))
    field, n_outside = occupation_histogram(kept, grid)
    path = out_dir / "density.bin"
    write_density(path, field.normalized())
    frac = n_outside / max(1, kept.shape[0])
    print(f"wrote {path} ({kept.shape[0]} samples, {frac:.2%} outside the box)")
    if dat["subsample_sweep"] is not None:
        sizes, misfits, slope = mc_convergence_sweep(
            states[burn:],
            grid,
            dat["subsample_sweep"],
            cfg.cost_spec(),
            seed=int(dat["sweep_seed"]),
            pairs=int(dat["sweep_pairs"]),
        )
        sweep_path = out_dir / "subsample_sweep.csv"
        write_table_csv(
            sweep_path,
            ["N", "self_misfit"],
            [[int(n), f"{m:.10g}"] for n, m in zip(sizes, misfits)],
        )
        print(f"wrote {sweep_path} (fitted log-log slope {slope:.3f})")
    return 0


def cmd_steady(cfg: RunConfig, out_dir: Path, args) -> int:
    _echo(cfg, out_dir)
    system = cfg.system()
    theta = cfg.theta(system)
    grid = cfg.grid(system)
    fwd = cfg.data["forward"]
    faces = face_velocities(system, theta, grid)
    op = assemble_K(system, theta, grid, faces)
    c = float(fwd["c"]) if fwd["c"] is not None else cfl_constant(faces, float(fwd["safety"]))
    markov = MarkovOperator(op=op, c=c, epsilon=float(fwd["epsilon"]))
    if fwd["solver"] == "power":
        rho, info = solve_stationary_power(
            markov, tol=float(fwd["power_tol"]), max_iters=int(fwd["power_max_iters"])
        )
    else:
        rho, info = solve_stationary_direct(markov, factor=SparseFactor(markov))
    path = out_dir / "steady.bin"
    write_density(path, rho)
    print(
        f"wrote {path} (solver={info.method}, residual_inf={info.residual_inf:.3e}, "
        f"iterations={info.iterations}, c={c:.6g})"
    )
    return 0


def cmd_dist(cfg: RunConfig, out_dir: Path, args) -> int:
    _echo(cfg, out_dir)
    mu_path = args.mu or cfg.data["io"]["mu"]
    nu_path = args.nu or cfg.data["io"]["nu"]
    if mu_path is None or nu_path is None:
        raise ConfigError("dist needs two density files (--mu/--nu or io.mu/io.nu)")
    mu = read_density(mu_path)
    nu = read_density(nu_path)
    if mu.grid != nu.grid:
        raise ConfigError("the two density files live on different grids")
    result = sinkhorn(mu.normalized(), nu.normalized(), cfg.cost_spec())
    write_vector(out_dir / "phi.bin", DensityField(mu.grid, result.potentials.phi))
    write_vector(out_dir / "psi.bin", DensityField(mu.grid, result.potentials.psi))
    print(f"transport cost: {result.cost:.12g}")
    print(
        f"  iterations={result.iterations}, marginal_err={result.marginal_err:.3e}, "
        f"eta_final={result.eta_final:.6g}"
    )
    return 0


def cmd_infer(cfg: RunConfig, out_dir: Path, args) -> int:
    _echo(cfg, out_dir)
    system = cfg.system()
    ref_path = cfg.data["io"]["reference"]
    if ref_path is None:
        raise ConfigError("infer needs io.reference (a density file)")
    rho_star = read_density(ref_path)
    grid = rho_star.grid
    g = cfg.data["grid"]
    if g["dx"] is not None or g["counts"] is not None:
        declared = cfg.grid(system)
        if declared != grid:
            raise ConfigError(
                "grid block disagrees with the reference density's grid"
            )
    icfg = cfg.inference_config(system, grid)
    runner = coordinate_descent if icfg.mode == "coordinate" else gradient_descent
    trace = runner(system, rho_star, icfg)
    path = out_dir / "trace.csv"
    trace.write_csv(path)
    names = system.param_names
    print(f"wrote {path} ({len(trace.records)} records)")
    print(f"status: {trace.status} after {trace.records[-1].iter} steps, "
          f"{trace.n_evals} evaluations")
    print(f"f_final: {trace.f_final:.6e}")
    for name, val in zip(names, trace.theta_final):
        print(f"  {name} = {val:.8g}")
    return 0


def cmd_gradcheck(cfg: RunConfig, out_dir: Path, args) -> int:
    _echo(cfg, out_dir)
    system = cfg.system()
    theta = cfg.theta(system)
    ref_path = cfg.data["io"]["reference"]
    if ref_path is None:
        raise ConfigError("gradcheck needs io.reference (a density file)")
    rho_star = read_density(ref_path)
    loss_cfg = cfg.loss_config(rho_star.grid)
    rep_ift = loss_and_grad(system, theta, rho_star, loss_cfg.replace(method="ift"))
    rep_adj = loss_and_grad(system, theta, rho_star, loss_cfg.replace(method="adjoint"))
    fd = finite_difference_grad(system, theta, rho_star, 1e-4, loss_cfg)

    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-30)

    header = ["param", "ift", "adjoint", "fd", "rel_ift_adjoint", "rel_adjoint_fd"]
    rows = []
    for k, name in enumerate(system.param_names):
        rows.append(
            [
                name,
                f"{rep_ift.grad[k]:.10g}",
                f"{rep_adj.grad[k]:.10g}",
                f"{fd[k]:.10g}",
                f"{rel(rep_ift.grad[k], rep_adj.grad[k]):.3e}",
                f"{rel(rep_adj.grad[k], fd[k]):.3e}",
            ]
        )
    write_table_csv(out_dir / "gradcheck.csv", header, rows)
    widths = [max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))]
    for row in [header] + rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(row, widths)))
    print(f"f = {rep_adj.f_value:.10g} (floors: f {rep_adj.f_floor:.3e}, "
          f"grad {rep_adj.grad_floor:.3e})")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "hist": cmd_hist,
    "steady": cmd_steady,
    "dist": cmd_dist,
    "infer": cmd_infer,
    "gradcheck": cmd_gradcheck,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="measinv",
        description="Invariant-measure matching for chaotic ODE parameter inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument(
            "--config",
            required=name != "dist",
            help="YAML run configuration",
        )
        p.add_argument("--out-dir", default=None, help="output directory override")
        if name == "hist":
            p.add_argument("--trajectory", default=None, help="trajectory CSV to bin")
        if name == "dist":
            p.add_argument("--mu", default=None, help="first density file")
            p.add_argument("--nu", default=None, help="second density file")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig({})
        _apply_threads(cfg.threads())
        out_dir = Path(args.out_dir or cfg.data["io"]["out_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out_dir, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
