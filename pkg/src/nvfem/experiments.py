"""Refinement sweeps, conditioning tables, and method comparisons.

Each ``run_*`` function returns plain rows and, when ``cfg.out`` is set, writes
CSV tables, whitespace-separated log-log data files, and a JSON manifest.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import assemble_system
from .fespace import build_space, error_norms, interpolate
from .linsolve import DENSE_LIMIT, condition_estimate, nvfem_solve
from .mesh import mesh_metrics, uniform_square_mesh
from .problems import make_problem, standard_fem_solve
from .quasilinear import StagnationError, mean_curvature_problem, quasilinear_solve

logger = logging.getLogger(__name__)

MODES = ("nvfem", "standard-fem", "quasilinear-variational", "quasilinear-nonvariational",
         "condition")
DEFAULT_LEVELS = {1: (8, 16, 32, 64), 2: (4, 8, 16, 32)}
EOC_GATES = {1: ((1.8, 2.2), (0.85, 1.15)), 2: ((2.7, 3.3), (1.8, 2.2))}


@dataclass
class RunConfig:
    problem: str = "test41"
    params: dict = field(default_factory=dict)
    degree: int = 1
    levels: tuple = ()
    tol: float = 1e-10
    restart: int = 50
    maxiter: int | None = None
    preconditioner: str | None = None
    out: Path | None = None
    mode: str = "nvfem"
    tol_factor: float = 1.0
    converge_factor: float | None = 1e-4

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        self.levels = tuple(int(n) for n in (self.levels or DEFAULT_LEVELS[self.degree]))
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError(f"levels must be strictly increasing, got {self.levels}")
        if self.levels[0] < 1:
            raise ValueError("levels must be positive")
        if self.out is not None:
            self.out = Path(self.out)

    def problem_spec(self):
        if self.problem == "quasilinear" or self.mode.startswith("quasilinear"):
            return mean_curvature_problem(**self.params)
        return make_problem(self.problem, **self.params)


@dataclass
class ConvergenceRow:
    n: int
    h: float
    dofs: int
    interior_dofs: int
    e0: float = math.nan
    e1: float = math.nan
    eoc0: float | None = None
    eoc1: float | None = None
    iterations: int = 0
    seconds: float = 0.0
    status: str = "ok"


@dataclass
class SolverRecord:
    n: int
    p: int
    problem: str
    dofs: int
    iterations: int
    residual: float
    seconds: float


def eoc(e_prev, e_curr, h_prev, h_curr):
    if not (e_prev > 0 and e_curr > 0):
        return None
    return math.log(e_prev / e_curr) / math.log(h_prev / h_curr)


def fill_eoc(rows):
    prev = None
    for row in rows:
        row.eoc0 = row.eoc1 = None
        if prev is not None and row.status == "ok":
            row.eoc0 = eoc(prev.e0, row.e0, prev.h, row.h)
            row.eoc1 = eoc(prev.e1, row.e1, prev.h, row.h)
        if row.status == "ok":
            prev = row
    return rows


def eoc_gate(rows, degree):
    """Check the final-level EOCs against the optimal-rate bands for ``degree``."""
    (lo0, hi0), (lo1, hi1) = EOC_GATES[degree]
    last = rows[-1] if rows else None
    ok = (last is not None and last.status == "ok" and last.eoc0 is not None
          and lo0 <= last.eoc0 <= hi0 and lo1 <= last.eoc1 <= hi1)
    return bool(ok)


def _solve_level(cfg: RunConfig, problem, n, records):
    mesh = uniform_square_mesh(n)
    space = build_space(mesh, cfg.degree)
    t0 = time.perf_counter()
    iterations = 0
    if cfg.mode == "nvfem":
        system = assemble_system(space, problem.A, problem.f, problem.g)
        sol = nvfem_solve(system, tol=cfg.tol, restart=cfg.restart, maxiter=cfg.maxiter,
                          preconditioner=cfg.preconditioner)
        coeffs = sol.coefficients
        iterations = sol.stats.iterations
        records.append(SolverRecord(n, cfg.degree, problem.name, system.size, iterations,
                                    sol.stats.residual, sol.stats.seconds))
    elif cfg.mode == "standard-fem":
        coeffs = standard_fem_solve(problem, space)
    else:
        mode = cfg.mode.split("-", 1)[1]
        res = quasilinear_solve(space, f=problem.f, mode=mode, tol_factor=cfg.tol_factor,
                                tol=cfg.tol, restart=cfg.restart,
                                preconditioner=cfg.preconditioner,
                                sign=problem.params.get("sign", -1.0),
                                converge_factor=cfg.converge_factor)
        coeffs = res.U
        iterations = res.iterations
    return space, coeffs, iterations, time.perf_counter() - t0


def run_convergence(cfg: RunConfig):
    """Solve on every level and tabulate errors and EOCs."""
    problem = cfg.problem_spec()
    if problem.exact_u is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    rows, records = [], []
    for n in cfg.levels:
        h, _ = mesh_metrics(uniform_square_mesh(n))
        try:
            space, coeffs, iterations, seconds = _solve_level(cfg, problem, n, records)
            e0, e1 = error_norms(space, coeffs, problem.exact_u, problem.exact_grad_u)
            rows.append(ConvergenceRow(n, h, space.n_dofs, space.n_interior, e0, e1,
                                       iterations=iterations, seconds=seconds))
        except Exception as exc:  # a failed level is recorded and the sweep continues
            logger.warning("level n=%d failed: %s", n, exc)
            rows.append(ConvergenceRow(n, h, 0, 0, status=f"error: {exc}"))
        logger.info("n=%d %s", n, rows[-1])
    fill_eoc(rows)
    if cfg.out is not None:
        stem = f"convergence_{problem.name}_{cfg.mode}_p{cfg.degree}"
        write_rows(cfg.out / f"{stem}.csv", rows)
        write_loglog(cfg.out / f"{stem}.dat", rows)
        write_rows(cfg.out / f"solver_{stem}.csv", records)
        write_manifest(cfg.out / f"{stem}.manifest.json", cfg, rows)
    return rows


@dataclass
class ConditionRow:
    n: int
    dofs: int
    size: int
    h: float
    kappa: float
    h2_kappa: float


def run_condition(cfg: RunConfig):
    """Dense condition numbers of E; stops once the block size exceeds the dense limit."""
    problem = cfg.problem_spec()
    rows = []
    truncated = False
    for n in cfg.levels:
        space = build_space(uniform_square_mesh(n), cfg.degree)
        size = 4 * space.n_dofs + space.n_interior
        if size > DENSE_LIMIT:
            truncated = True
            logger.info("condition sweep stopped at n=%d (size %d > %d)", n, size, DENSE_LIMIT)
            break
        system = assemble_system(space, problem.A, problem.f, problem.g)
        h, _ = mesh_metrics(space.mesh)
        kappa = condition_estimate(system)
        rows.append(ConditionRow(n, space.n_dofs, size, h, kappa, h * h * kappa))
    if cfg.out is not None:
        stem = f"condition_{problem.name}_p{cfg.degree}"
        write_rows(cfg.out / f"{stem}.csv", rows)
        write_manifest(cfg.out / f"{stem}.manifest.json", cfg, rows, extra={"truncated": truncated})
    return rows, truncated


def condition_gate(rows, band=(5.0, 80.0), ratio=(0.5, 2.0)):
    if len(rows) < 2:
        return False
    scaled = [r.h2_kappa for r in rows]
    kappas = [r.kappa for r in rows]
    in_band = all(band[0] <= s <= band[1] for s in scaled)
    ratios = all(ratio[0] <= b / a <= ratio[1] for a, b in zip(scaled, scaled[1:]))
    increasing = all(b > a for a, b in zip(kappas, kappas[1:]))
    return in_band and ratios and increasing


@dataclass
class CompareSummary:
    n: int
    K: float
    max_error_nvfem: float
    max_error_fem: float
    ratio: float
    fem_status: str
    cell_error_nvfem: np.ndarray = field(repr=False, default=None)
    cell_error_fem: np.ndarray = field(repr=False, default=None)


def cell_max_errors(space, coeffs, u):
    """Per-cell maximum of |u - U| over the cell's nodes and quadrature points."""
    nodal = np.abs(interpolate(space, u) - coeffs)[space.cell_dofs].max(axis=1)
    x, _, phi, _ = space.cell_quadrature()
    U = np.einsum("ql,cl->cq", phi, coeffs[space.cell_dofs])
    inner = np.abs(np.asarray(u(x.reshape(-1, 2))).reshape(U.shape) - U).max(axis=1)
    return np.maximum(nodal, inner)


def run_compare(cfg: RunConfig, n: int | None = None):
    """NVFEM against the divergence-form Galerkin method on one mesh."""
    problem = cfg.problem_spec()
    n = cfg.levels[-1] if n is None else n
    space = build_space(uniform_square_mesh(n), cfg.degree)
    exact = interpolate(space, problem.exact_u)
    system = assemble_system(space, problem.A, problem.f, problem.g)
    U = nvfem_solve(system, tol=cfg.tol, restart=cfg.restart, maxiter=cfg.maxiter,
                    preconditioner=cfg.preconditioner).coefficients
    err_nv = float(np.abs(U - exact).max())
    cell_nv = cell_max_errors(space, U, problem.exact_u)
    try:
        V = standard_fem_solve(problem, space)
        err_fem = float(np.abs(V - exact).max())
        cell_fem = cell_max_errors(space, V, problem.exact_u)
        status = "ok"
    except Exception as exc:
        logger.warning("standard FEM failed: %s", exc)
        err_fem, cell_fem, status = math.inf, np.full(space.mesh.n_cells, np.inf), "diverged"
    ratio = err_fem / err_nv if err_nv > 0 else math.inf
    summary = CompareSummary(n, problem.params.get("K", math.nan), err_nv, err_fem, ratio, status,
                             cell_nv, cell_fem)
    if cfg.out is not None:
        stem = f"compare_{problem.name}_n{n}_p{cfg.degree}"
        cfg.out.mkdir(parents=True, exist_ok=True)
        centroids = space.mesh.vertices[space.mesh.cells].mean(axis=1)
        with open(cfg.out / f"{stem}_cells.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "x", "y", "error_nvfem", "error_fem"])
            for c, (xy, a, b) in enumerate(zip(centroids, cell_nv, cell_fem)):
                w.writerow([c, repr(xy[0]), repr(xy[1]), repr(a), repr(b)])
        row = {k: v for k, v in asdict(summary).items() if not k.startswith("cell_")}
        write_rows(cfg.out / f"{stem}.csv", [row])
        write_manifest(cfg.out / f"{stem}.manifest.json", cfg, [row])
    return summary


@dataclass
class QuasilinearRow:
    n: int
    h: float
    mode: str
    stagnation_point: int | None
    seconds: float
    e0: float = math.nan
    e1: float = math.nan
    iterations: int = 0
    status: str = "ok"


def run_quasilinear(cfg: RunConfig, modes=("nonvariational", "variational")):
    """Stagnation points of both fixed-point linearisations on every level.

    Stagnation points use ``cfg.tol_factor * h^2``. Nonvariational runs then
    continue to ``cfg.converge_factor * h^2`` and the returned EOC sweep is
    computed from those converged iterates.
    """
    problem = mean_curvature_problem(**cfg.params)
    rows = []
    for n in cfg.levels:
        space = build_space(uniform_square_mesh(n), cfg.degree)
        h, _ = mesh_metrics(space.mesh)
        for mode in modes:
            try:
                # nonvariational iterates feed the EOC sweep, so they run on to the fixed point
                factor = cfg.converge_factor if mode == "nonvariational" else None
                res = quasilinear_solve(space, f=problem.f, mode=mode, tol_factor=cfg.tol_factor,
                                        tol=cfg.tol, restart=cfg.restart,
                                        preconditioner=cfg.preconditioner,
                                        sign=problem.params.get("sign", -1.0),
                                        converge_factor=factor)
                e0, e1 = error_norms(space, res.U, problem.exact_u, problem.exact_grad_u)
                rows.append(QuasilinearRow(n, h, mode, res.stagnation_point, res.seconds, e0, e1,
                                           iterations=res.iterations))
            except StagnationError as exc:
                rows.append(QuasilinearRow(n, h, mode, None, math.nan, status=f"error: {exc}"))
            logger.info("%s", rows[-1])
    sweep = fill_eoc([
        ConvergenceRow(r.n, r.h, 0, 0, r.e0, r.e1, iterations=r.stagnation_point or 0,
                       seconds=r.seconds, status=r.status)
        for r in rows if r.mode == "nonvariational"
    ])
    if cfg.out is not None:
        stem = f"quasilinear_p{cfg.degree}"
        write_rows(cfg.out / f"{stem}.csv", rows)
        write_rows(cfg.out / f"{stem}_convergence.csv", sweep)
        write_loglog(cfg.out / f"{stem}_convergence.dat", sweep)
        write_manifest(cfg.out / f"{stem}.manifest.json", cfg, rows)
    return rows, sweep


def quasilinear_gate(rows, expected=(4, 6, 7, 8), slack=2):
    nv = [r.stagnation_point for r in rows if r.mode == "nonvariational"]
    var = [r.stagnation_point for r in rows if r.mode == "variational"]
    if None in nv or None in var or len(nv) < len(expected):
        return False
    close = all(abs(a - b) <= slack for a, b in zip(nv, expected))
    slower = all(v > w for v, w in zip(var[1:], nv[1:]))
    monotone = all(b >= a for a, b in zip(nv, nv[1:]))
    return close and slower and monotone


def _plain(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    return value


def write_rows(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    dicts = [r if isinstance(r, dict) else asdict(r) for r in rows]
    with open(path, "w", newline="") as fh:
        if not dicts:
            return
        w = csv.DictWriter(fh, fieldnames=list(dicts[0]))
        w.writeheader()
        for d in dicts:
            w.writerow({k: "" if v is None else (repr(v) if isinstance(v, float) else v)
                        for k, v in d.items()})


def write_loglog(path: Path, rows) -> None:
    lines = ["# h e0 e1"] + [f"{r.h!r} {r.e0!r} {r.e1!r}" for r in rows if r.status == "ok"]
    path.write_text("\n".join(lines) + "\n")


def write_manifest(path: Path, cfg: RunConfig, rows, extra=None) -> None:
    dicts = [r if isinstance(r, dict) else asdict(r) for r in rows]
    manifest = {
        "version": __version__,
        "config": {k: _plain(v) for k, v in asdict(cfg).items()},
        "rows": [{"n": d.get("n"), "status": d.get("status", "ok")} for d in dicts],
    }
    manifest.update(extra or {})
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
