"""Command-line entry point ``fracground``.

Exit codes: 0 success, 1 config or usage error, 2 non-convergence,
3 failed invariants (``verify``) or a flagged multistart.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .domain import build_grid
from .experiments import (
    SWEEP_COLUMNS,
    SweepConfig,
    analyse_solution,
    make_domain,
    multistart,
    rescale_epsilon,
    sweep,
)
from .io import (
    ConfigError,
    read_config,
    typed,
    write_grid_csv,
    write_grid_function,
    write_json,
    write_records_csv,
    write_two_column,
)
from .operator import assemble
from .solver import ProblemParams, SolverConfig, random_init, solve_least_energy
from .spectra import assemble_linearized, eigen_solve
from .verify import FAULTS, run_verify

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_FAILED = 0, 1, 2, 3

SOLVE_KEYS = {
    "s": "float",
    "lambda": "float",
    "p": "float",
    "N": "int",
    "kind": "str",
    "R": "float",
    "h": "float",
    "tol": "float",
    "max_iter": "int",
    "seed": "int",
}
SOLVE_REQUIRED = ("s", "lambda", "p", "N", "kind", "R", "h")

SWEEP_KEYS = {
    "s": "float",
    "lambda": "float",
    "p": "float",
    "N": "int",
    "kind": "str",
    "R": "floats",
    "h0": "float",
    "h_rule": "str",
    "n_fixed": "int",
    "seeds": "ints",
    "multistart": "str",
    "tol": "float",
    "max_iter": "int",
    "tol_zero": "float",
    "k": "int",
    "L_ref": "float",
}


def _load(path, schema, required) -> dict:
    return typed(read_config(path), schema, str(path), required)


def _setup(cfg: dict, source: str):
    try:
        params = ProblemParams(cfg["s"], cfg["lambda"], cfg["p"], cfg["N"])
        grid = build_grid(make_domain(cfg["kind"], cfg["R"]), cfg["h"])
    except ValueError as exc:
        raise ConfigError(f"{source}:0: {exc}") from None
    if grid.N != params.N:
        raise ConfigError(f"{source}:0: kind {cfg['kind']!r} does not have N={params.N}")
    sys_ = assemble(grid, params.s, params.lam)
    solver = SolverConfig(tol=cfg.get("tol", 1e-9), max_iter=cfg.get("max_iter", 2000))
    return params, grid, sys_, solver


def _solve(cfg, sys_, params, solver):
    init = random_init(sys_.grid, cfg["seed"]) if "seed" in cfg else None
    return solve_least_energy(sys_, params, solver, init=init)


def cmd_solve(args) -> int:
    from .plotting import plot_solution

    cfg = _load(args.config, SOLVE_KEYS, SOLVE_REQUIRED)
    params, grid, sys_, solver = _setup(cfg, args.config)
    res = _solve(cfg, sys_, params, solver)
    out = _outdir(args)
    write_grid_function(out / "solution.fgf", grid, res.u)
    write_grid_csv(out / "solution.csv", grid, res.u)
    write_json(out / "solution.json", res.sidecar())
    write_json(
        out / "run.json",
        {"config": cfg, "grid": grid.describe(), "message": res.message, "newton_steps": res.newton_steps,
         "energy_history": res.history, "residual_history": res.residual_history},
    )
    plot_solution(out / "solution.png", grid, res.u)
    print(res.message)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_spectrum(args) -> int:
    from .plotting import plot_eigenfunctions

    schema = dict(SOLVE_KEYS, k="int")
    cfg = _load(args.config, schema, SOLVE_REQUIRED)
    params, grid, sys_, solver = _setup(cfg, args.config)
    res = _solve(cfg, sys_, params, solver)
    if not res.converged:
        print(res.message, file=sys.stderr)
        return EXIT_NOT_CONVERGED
    k = cfg.get("k", 4)
    chk = analyse_solution(sys_, params, res, k)
    spec = eigen_solve(assemble_linearized(sys_, res.u, params), k)
    out = _outdir(args)
    write_json(out / "spectrum.json", {"solve": res.sidecar(), "analysis": chk})
    write_records_csv(out / "spectrum.csv", [{"i": i + 1, "mu_i": m} for i, m in enumerate(spec.values)], ("i", "mu_i"))
    for i in range(spec.k):
        write_grid_function(out / f"phi_{i + 1}.fgf", grid, spec.phi(i))
    plot_eigenfunctions(out / "eigenfunctions.png", grid, spec.values, spec.vectors)
    print(" ".join(f"{m:.6g}" for m in spec.values))
    return EXIT_OK


def sweep_config(cfg: dict, source: str) -> SweepConfig:
    kw = {k: v for k, v in cfg.items() if k not in ("lambda",)}
    kw["lam"] = cfg["lambda"]
    try:
        return SweepConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}:0: {exc}") from None


def write_sweep(out: Path, report) -> None:
    from .plotting import plot_sweep

    rows = [r.row() for r in report.records]
    write_records_csv(out / "sweep.csv", rows, SWEEP_COLUMNS)
    write_json(out / "report.json", report.as_dict())
    ok = [r for r in report.records if r.converged]
    write_two_column(out / "mu2_vs_R.dat", [r.R for r in ok], [r.mu2 for r in ok], "R mu2")
    write_two_column(out / "cR_vs_R.dat", [r.R for r in ok], [r.c_R for r in ok], "R c_R")
    plot_sweep(out, report.records, report.c_ref)


def cmd_sweep(args) -> int:
    cfg = _load(args.config, SWEEP_KEYS, ("s", "lambda", "p", "N", "kind", "R"))
    scfg = sweep_config(cfg, args.config)
    report = sweep(scfg)
    out = _outdir(args)
    write_sweep(out, report)
    for r in report.records:
        print(f"R={r.R:g} c_R={r.c_R:.10g} mu2={r.mu2:.4g} {r.error}".rstrip())
    print(f"empirical R0: {report.R0}")
    return EXIT_OK


def cmd_multistart(args) -> int:
    from .plotting import plot_multistart

    schema = dict(SOLVE_KEYS, seeds="ints", n_seeds="int")
    cfg = _load(args.config, schema, SOLVE_REQUIRED)
    params, grid, sys_, _ = _setup(cfg, args.config)
    seeds = cfg.get("seeds") or tuple(range(cfg.get("n_seeds", 10)))
    solver = SolverConfig(tol=cfg.get("tol", 1e-14), max_iter=cfg.get("max_iter", 3000), newton_max=200)
    try:
        rep = multistart(sys_, params, seeds, solver)
    except ValueError as exc:
        raise ConfigError(f"{args.config}:0: {exc}") from None
    out = _outdir(args)
    write_json(out / "multistart.json", rep.as_dict())
    plot_multistart(out / "multistart.png", rep.distances, rep.seeds)
    print(f"max pairwise distance {rep.max_pairwise:.3e}; unique: {rep.unique}")
    return EXIT_FAILED if rep.flagged else EXIT_OK


def cmd_rescale(args) -> int:
    from .plotting import plot_rescaled

    schema = dict(SOLVE_KEYS, h_D="float")
    cfg = _load(args.config, schema, SOLVE_REQUIRED)
    params, grid, sys_, solver = _setup(cfg, args.config)
    res = _solve(cfg, sys_, params, solver)
    if not res.converged:
        print(res.message, file=sys.stderr)
        return EXIT_NOT_CONVERGED
    try:
        rs = rescale_epsilon(sys_, params, res.u, cfg["R"], cfg.get("h_D"))
    except ValueError as exc:
        raise ConfigError(f"{args.config}:0: {exc}") from None
    out = _outdir(args)
    write_grid_function(out / "rescaled.fgf", rs.grid, rs.v)
    write_json(out / "rescale.json", rs.as_dict())
    plot_rescaled(out / "rescale.png", grid, res.u, rs.grid, rs.v)
    print(f"eps={rs.eps:.6g} residual ratio {rs.residual_ratio:.3g} energy error {rs.energy_rel_error:.3g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = run_verify(args.inject_fault)
    out = _outdir(args)
    failed = [c.name for c in checks if not c.passed]
    write_json(
        out / "verify.json",
        {"passed": not failed, "failed": failed, "inject_fault": args.inject_fault,
         "checks": [c.as_dict() for c in checks]},
    )
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} measured={c.measured:.6g} threshold={c.threshold:.6g}")
    if failed:
        print("failed invariants: " + ", ".join(failed), file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracground", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("solve", cmd_solve, "one least-energy solve"),
        ("spectrum", cmd_spectrum, "solve, then the linearized spectrum"),
        ("sweep", cmd_sweep, "growing-domain sweep"),
        ("multistart", cmd_multistart, "random-start uniqueness probe"),
        ("rescale", cmd_rescale, "solve on R D and rescale to D"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="flat key = value file")
        p.add_argument("--out", default="out", help="output directory")
        p.set_defaults(func=fn)
    p = sub.add_parser("verify", help="invariant suite on pinned configurations")
    p.add_argument("--config", help="ignored; accepted for uniformity")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--inject-fault", choices=FAULTS, default=None, help="negative control")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
