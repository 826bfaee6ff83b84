"""Simulation driver: builds the discretization from a RunConfig, iterates
the load schedule with the chosen stepping policy and writes the report
files (summary CSV, per-step damage contours, mesh dumps).

Outputs are written incrementally so a failed step leaves the completed
steps' artifacts on disk. All orderings are deterministic, so two runs of
the same configuration produce identical summaries except for the timing
columns.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adaptivity import RefinementConfig, adaptive_load_step, stepping_policy
from .assembly import (
    BoundaryConditions, assemble_phasefield_constant, dissipated_energy,
    reaction_force,
)
from .config import RunConfig
from .hierarchy import HierarchicalMesh, ThbSpace, build_space
from .initialization import (
    CrackSegment, InitConfig, init_mesh_around_crack, ipf_initialize,
)
from .solvers import SolverTolerances, staggered_load_step

log = logging.getLogger(__name__)

SUMMARY_HEADER = ("step,u,Fx,Fy,dissipation,dofs,elements,"
                  "elAssemblyTime,elSolverTime,pfAssemblyTime,pfSolverTime,"
                  "projectionTime")


@dataclass
class StepReport:
    """One load step's record (displacement in mm, forces in kN,
    dissipation in kN mm, wall times in seconds)."""

    step: int
    u: float
    Fx: float
    Fy: float
    dissipation: float
    dofs: int
    elements: int
    el_assembly_time: float = 0.0
    el_solver_time: float = 0.0
    pf_assembly_time: float = 0.0
    pf_solver_time: float = 0.0
    projection_time: float = 0.0
    staggered_iters: int = 0
    refinement_iters: int = 0

    def csv_row(self) -> str:
        vals = [self.step, self.u, self.Fx, self.Fy, self.dissipation,
                self.dofs, self.elements, self.el_assembly_time,
                self.el_solver_time, self.pf_assembly_time,
                self.pf_solver_time, self.projection_time]
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in vals)


def boundary_template() -> BoundaryConditions:
    """Both benchmarks clamp the bottom edge and prescribe both components on
    the top edge; no lateral constraints."""
    return BoundaryConditions(dirichlet=[
        ("bottom", 0, 0.0), ("bottom", 1, 0.0),
        ("top", 0, 0.0), ("top", 1, 0.0)])


def _bc_for(kind: str, u: float) -> BoundaryConditions:
    bc = boundary_template()
    if kind == "tensile":
        return bc.with_values(top=(0.0, u))
    return bc.with_values(top=(u, 0.0))


def build_discretization(cfg: RunConfig) -> tuple[ThbSpace, CrackSegment]:
    crack = CrackSegment(*cfg.crack)
    mesh = HierarchicalMesh.uniform(2, cfg.mesh.base, lmax=cfg.mesh.lmax, dim=2)
    space = build_space(mesh)
    if cfg.mesh.kind == "thb" and cfg.mesh.lmax > 0:
        space = init_mesh_around_crack(
            space, crack, cfg.material,
            InitConfig(cfg.band_radius, cfg.mesh_band_radius),
            m=cfg.admissibility)
    return space, crack


def extract_contour(space: ThbSpace, d: np.ndarray, level: float = 0.5,
                    resolution: int = 512) -> np.ndarray:
    """Point cloud of the damage level set on a uniform sampling grid.

    Grid segments whose endpoint values bracket the level are bisected on
    the spline evaluation to 1e-6 in position. Returns an (n, 2) array.
    """
    xs = np.linspace(0.0, 1.0, resolution)
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    vals = (space.eval_field(d, pts)["value"] - level).reshape(resolution, resolution)

    segs_a, segs_b = [], []
    sx = np.signbit(vals)
    cross_h = sx[:-1, :] != sx[1:, :]
    i, j = np.nonzero(cross_h)
    segs_a.append(np.column_stack([xs[i], xs[j]]))
    segs_b.append(np.column_stack([xs[i + 1], xs[j]]))
    cross_v = sx[:, :-1] != sx[:, 1:]
    i, j = np.nonzero(cross_v)
    segs_a.append(np.column_stack([xs[i], xs[j]]))
    segs_b.append(np.column_stack([xs[i], xs[j + 1]]))
    a = np.vstack(segs_a)
    b = np.vstack(segs_b)
    if len(a) == 0:
        return np.empty((0, 2))
    fa = space.eval_field(d, a)["value"] - level
    for _ in range(22):  # bisection to ~2e-7 < 1e-6 in position
        mid = 0.5 * (a + b)
        fm = space.eval_field(d, mid)["value"] - level
        left = (fa < 0) == (fm < 0)
        a = np.where(left[:, None], mid, a)
        fa = np.where(left, fm, fa)
        b = np.where(left[:, None], b, mid)
    return 0.5 * (a + b)


def write_reports(reports: list[StepReport], out_dir) -> Path:
    """Summary CSV with the documented bit-exact header."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "summary.csv"
    with open(path, "w") as f:
        f.write(SUMMARY_HEADER + "\n")
        for rep in reports:
            f.write(rep.csv_row() + "\n")
    return path


def read_summary(path) -> list[StepReport]:
    reports = []
    with open(path) as f:
        reader = csv.DictReader(f)
        for row in reader:
            reports.append(StepReport(
                step=int(row["step"]), u=float(row["u"]), Fx=float(row["Fx"]),
                Fy=float(row["Fy"]), dissipation=float(row["dissipation"]),
                dofs=int(row["dofs"]), elements=int(row["elements"]),
                el_assembly_time=float(row["elAssemblyTime"]),
                el_solver_time=float(row["elSolverTime"]),
                pf_assembly_time=float(row["pfAssemblyTime"]),
                pf_solver_time=float(row["pfSolverTime"]),
                projection_time=float(row["projectionTime"])))
    return reports


def _write_contour(space, d, level, resolution, path):
    pts = extract_contour(space, d, level, resolution)
    with open(path, "w") as f:
        f.write("index,x,y\n")
        for k, (x, y) in enumerate(pts):
            f.write(f"{k},{float(x)!r},{float(y)!r}\n")


def run_simulation(cfg: RunConfig, progress=None) -> list[StepReport]:
    """Execute the configured run; returns the per-step reports.

    Artifacts in cfg.out: summary.csv (rewritten after every step),
    contour_<k>.csv per step, mesh_init.txt and mesh_<k>.txt whenever the
    mesh changed during step k.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(_config_json(cfg))

    space, crack = build_discretization(cfg)
    mat, spec = cfg.material, cfg.model
    icfg = InitConfig(cfg.band_radius, cfg.mesh_band_radius)
    d = ipf_initialize(space, crack, spec, mat, icfg)
    u = np.zeros(2 * space.ndofs)
    (out / "mesh_init.txt").write_text(space.mesh.dump())

    refine_cfg = RefinementConfig(d_min=cfg.d_min, m=cfg.admissibility,
                                  tol_ref=stepping_policy(cfg.stepping))
    adaptive = cfg.mesh.kind == "thb" and cfg.mesh.lmax > 0

    reports = [StepReport(step=0, u=0.0, Fx=0.0, Fy=0.0,
                          dissipation=dissipated_energy(space, d, spec, mat),
                          dofs=space.ndofs,
                          elements=space.total_active_cells())]
    write_reports(reports, out)
    _write_contour(space, d, 0.5, cfg.contour_resolution, out / "contour_0.csv")

    for step, u_edge in enumerate(cfg.displacements(), start=1):
        bc = _bc_for(cfg.bc, u_edge)
        try:
            if adaptive:
                u, d, new_space, stats = adaptive_load_step(
                    space, u, d, mat, spec, bc, cfg.tolerances, refine_cfg,
                    step=step)
                mesh_changed = new_space is not space
                space = new_space
            else:
                t0 = time.perf_counter()
                Phi, phi = assemble_phasefield_constant(space, spec, mat)
                pf_pre = time.perf_counter() - t0
                u, d, stats = staggered_load_step(space, u, d, mat, bc,
                                                  Phi, phi, cfg.tolerances)
                stats.pf_assembly_time += pf_pre
                stats.refinement_iters = 0
                mesh_changed = False
        except Exception:
            log.exception("step %d failed; partial outputs kept in %s", step, out)
            write_reports(reports, out)
            raise
        F = reaction_force(space, u, d, mat, bc, "top")
        rep = StepReport(
            step=step, u=u_edge, Fx=float(F[0]), Fy=float(F[1]),
            dissipation=dissipated_energy(space, d, spec, mat),
            dofs=space.ndofs, elements=space.total_active_cells(),
            el_assembly_time=stats.el_assembly_time,
            el_solver_time=stats.el_solver_time,
            pf_assembly_time=stats.pf_assembly_time,
            pf_solver_time=stats.pf_solver_time,
            projection_time=stats.projection_time,
            staggered_iters=stats.staggered_iters,
            refinement_iters=stats.refinement_iters)
        reports.append(rep)
        write_reports(reports, out)
        _write_contour(space, d, 0.5, cfg.contour_resolution,
                       out / f"contour_{step}.csv")
        if mesh_changed:
            (out / f"mesh_{step}.txt").write_text(space.mesh.dump())
        if progress:
            progress(rep)
        log.info("step %d: u=%.3e F=(%.4e, %.4e) D=%.4e dofs=%d",
                 step, u_edge, rep.Fx, rep.Fy, rep.dissipation, rep.dofs)
    return reports


def _config_json(cfg: RunConfig) -> str:
    import dataclasses
    import json

    def enc(obj):
        if dataclasses.is_dataclass(obj):
            return dataclasses.asdict(obj)
        raise TypeError

    return json.dumps(dataclasses.asdict(cfg), indent=2, default=enc)
