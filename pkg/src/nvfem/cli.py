"""Command line driver: ``nvfem {convergence,condition,compare,quasilinear,solve}``.

Options can also come from ``--config FILE``, a flat ``key=value`` file whose
keys are the long option names (``problem=test42``, ``levels=8,16,32``).
Command line flags override the file. With ``--check`` the exit status is 0
only if the run's acceptance gates pass, 1 otherwise.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .assembly import assemble_system
from .fespace import build_space, error_norms
from .linsolve import nvfem_solve
from .mesh import mesh_metrics, uniform_square_mesh, write_mesh
from .problems import PROBLEM_IDS

COMMANDS = ("convergence", "condition", "compare", "quasilinear", "solve")


def parse_config(path) -> dict:
    """Read ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _levels(text):
    return tuple(int(t) for t in str(text).replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key=value defaults file")
    common.add_argument("--problem", choices=PROBLEM_IDS + ("quasilinear",))
    common.add_argument("--p", type=int, choices=(1, 2), help="polynomial degree")
    common.add_argument("--levels", type=_levels, help="mesh subdivisions, e.g. 8,16,32")
    common.add_argument("--n", type=int, help="single mesh level (compare, solve)")
    common.add_argument("--K", type=float, help="coefficient steepness for test42")
    common.add_argument("--sign", type=float, help="sign in the mean curvature coefficient")
    common.add_argument("--tol", type=float)
    common.add_argument("--restart", type=int)
    common.add_argument("--maxiter", type=int)
    common.add_argument("--preconditioner", choices=("none", "lumped", "diagonal"))
    common.add_argument("--mode", choices=ex.MODES + ("variational", "nonvariational", "both"))
    common.add_argument("--tol-factor", dest="tol_factor", type=float,
                        help="stagnation threshold as a multiple of h^2")
    common.add_argument("--converge-factor", dest="converge_factor", type=float,
                        help="fixed-point threshold (times h^2) for the quasilinear EOC sweep")
    common.add_argument("--out", type=Path)
    common.add_argument("--check", action="store_true", help="exit 1 unless the gates pass")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="nvfem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


DEFAULTS = {
    "problem": "test41", "p": 1, "levels": None, "n": None, "K": None, "sign": None,
    "tol": 1e-10, "restart": 50, "maxiter": None, "preconditioner": "none", "mode": None,
    "tol_factor": 1.0, "converge_factor": 1e-4, "out": None, "check": False,
}
_CONVERT = {"p": int, "levels": _levels, "n": int, "K": float, "sign": float, "tol": float,
            "restart": int, "maxiter": int, "tol_factor": float, "converge_factor": float,
            "out": Path,
            "check": lambda s: str(s).lower() in ("1", "true", "yes")}


def resolve_options(args) -> dict:
    opts = dict(DEFAULTS)
    if args.config is not None:
        for key, value in parse_config(args.config).items():
            if key not in DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
            opts[key] = _CONVERT.get(key, str)(value)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            opts[key] = value
    return opts


def make_config(command, opts) -> ex.RunConfig:
    mode = opts["mode"]
    if command == "condition":
        mode = "condition"
    elif command == "quasilinear":
        mode = "quasilinear-nonvariational"
    elif mode is None:
        mode = "nvfem"
    elif mode not in ex.MODES or mode == "condition":
        raise ValueError(f"mode {mode!r} is not valid for {command}")
    params = {}
    if opts["K"] is not None:
        params["K"] = opts["K"]
    if opts["sign"] is not None:
        params["sign"] = opts["sign"]
    problem = "quasilinear" if command == "quasilinear" else opts["problem"]
    levels = opts["levels"]
    if opts["n"] is not None and command in ("compare", "solve"):
        levels = (opts["n"],)
    if levels is None and command == "condition":
        levels = (2, 4, 8, 16, 32)
    if levels is None and command == "quasilinear":
        levels = (10, 20, 40, 80)
    prec = None if opts["preconditioner"] == "none" else opts["preconditioner"]
    return ex.RunConfig(problem=problem, params=params, degree=opts["p"], levels=levels or (),
                        tol=opts["tol"], restart=opts["restart"], maxiter=opts["maxiter"],
                        preconditioner=prec, out=opts["out"], mode=mode,
                        tol_factor=opts["tol_factor"], converge_factor=opts["converge_factor"])


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _print_table(rows, columns):
    print(" ".join(f"{c:>11}" for c in columns))
    for r in rows:
        print(" ".join(f"{_fmt(getattr(r, c)):>11}" for c in columns))


def cmd_convergence(cfg, opts):
    rows = ex.run_convergence(cfg)
    _print_table(rows, ["n", "h", "dofs", "e0", "e1", "eoc0", "eoc1", "iterations", "seconds",
                        "status"])
    return ex.eoc_gate(rows, cfg.degree)


def cmd_condition(cfg, opts):
    rows, truncated = ex.run_condition(cfg)
    _print_table(rows, ["n", "dofs", "size", "h", "kappa", "h2_kappa"])
    if truncated:
        print(f"sweep truncated: block size above {ex.DENSE_LIMIT}")
    return ex.condition_gate(rows)


def cmd_compare(cfg, opts):
    s = ex.run_compare(cfg)
    print(f"n={s.n} K={_fmt(s.K)} max error nvfem={s.max_error_nvfem:.4e} "
          f"standard={s.max_error_fem:.4e} ratio={_fmt(s.ratio)} ({s.fem_status})")
    return s.ratio >= 5.0


def cmd_quasilinear(cfg, opts):
    which = opts["mode"] or "both"
    modes = ("nonvariational", "variational") if which == "both" else (which.split("-")[-1],)
    rows, sweep = ex.run_quasilinear(cfg, modes=modes)
    _print_table(rows, ["n", "h", "mode", "stagnation_point", "seconds", "e0", "e1", "status"])
    print()
    _print_table(sweep, ["n", "h", "e0", "e1", "eoc0", "eoc1"])
    ok = ex.eoc_gate(sweep, cfg.degree)
    if len(modes) == 2:
        ok = ok and ex.quasilinear_gate(rows)
    return ok


def cmd_solve(cfg, opts):
    problem = cfg.problem_spec()
    n = cfg.levels[-1]
    space = build_space(uniform_square_mesh(n), cfg.degree)
    system = assemble_system(space, problem.A, problem.f, problem.g)
    sol = nvfem_solve(system, tol=cfg.tol, restart=cfg.restart, maxiter=cfg.maxiter,
                      preconditioner=cfg.preconditioner)
    h, _ = mesh_metrics(space.mesh)
    print(f"n={n} p={cfg.degree} h={h:.4g} dofs={system.size} iterations={sol.stats.iterations} "
          f"residual={sol.stats.residual:.3e} seconds={sol.stats.seconds:.2f}")
    ok = sol.stats.converged
    if problem.exact_u is not None:
        e0, e1 = error_norms(space, sol.coefficients, problem.exact_u, problem.exact_grad_u)
        print(f"L2 error={e0:.4e} H1 error={e1:.4e}")
    if cfg.out is not None:
        cfg.out.mkdir(parents=True, exist_ok=True)
        stem = f"solve_{problem.name}_n{n}_p{cfg.degree}"
        write_mesh(space.mesh, cfg.out / f"{stem}.mesh")
        H = sol.hessian
        with open(cfg.out / f"{stem}_solution.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dof", "x", "y", "u", "h11", "h12", "h21", "h22"])
            for i, (xy, u) in enumerate(zip(space.dof_coords, sol.coefficients)):
                w.writerow([i, repr(xy[0]), repr(xy[1]), repr(u)]
                           + [repr(H[a][b][i]) for a in range(2) for b in range(2)])
        ex.write_rows(cfg.out / f"solver_{stem}.csv", [ex.SolverRecord(
            n, cfg.degree, problem.name, system.size, sol.stats.iterations, sol.stats.residual,
            sol.stats.seconds)])
        ex.write_manifest(cfg.out / f"{stem}.manifest.json", cfg,
                          [{"n": n, "status": "ok" if ok else "not converged"}])
    return bool(ok)


HANDLERS = {"convergence": cmd_convergence, "condition": cmd_condition, "compare": cmd_compare,
            "quasilinear": cmd_quasilinear, "solve": cmd_solve}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = resolve_options(args)
        cfg = make_config(args.command, opts)
    except ValueError as exc:
        parser.error(str(exc))
    np.seterr(all="ignore")
    passed = HANDLERS[args.command](cfg, opts)
    if opts["check"]:
        print("gates:", "PASS" if passed else "FAIL")
        return 0 if passed else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
