"""Damage-driven marking, cross-talk-eliminating refinement and the adaptive
load-stepping driver with explicit/implicit/hybrid policies.

Marking samples the damage field in a 3x3 interior grid per active element
(fractions 1/4, 1/2, 3/4 per direction, so every sample belongs to exactly
one element) and marks the element once any sample exceeds the threshold.
Refinement runs level by level up to the finest level; at the second-finest
level the marked set is widened by its support extension, which removes every
coarse function bridging a fully damaged band (cross-talk) once the mesh is
class-2 admissible. Solutions are carried between refinement iterations by
exact transfer, so re-solving a load step on the refined mesh (implicit and
hybrid policies) starts from the same physical state.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from .assembly import BoundaryConditions, assemble_phasefield_constant
from .hierarchy import (
    HierarchicalMesh, ThbSpace, build_space, mark_admissible_closure,
    support_extension, transfer_field,
)
from .model import MaterialParams, ModelSpec
from .solvers import SolverTolerances, StepStats, staggered_load_step

log = logging.getLogger(__name__)


@dataclass
class RefinementConfig:
    """Damage-threshold marking parameters."""

    d_min: float = 0.1
    m: int = 2
    tol_ref: float = 0.005
    max_refine_iters: int = 10

    def __post_init__(self):
        if not 0 < self.d_min < 1:
            raise ValueError("marking threshold must lie in (0, 1)")
        if not 0 <= self.tol_ref <= 1:
            raise ValueError("mesh-change ratio threshold must lie in [0, 1]")


def stepping_policy(kind: str) -> float:
    """Mesh-change ratio threshold of a named load-stepping policy."""
    return {"explicit": 1.0, "implicit": 0.0, "hybrid": 0.005}[kind]


_SAMPLE_FRACTIONS = np.array([0.25, 0.5, 0.75])


def mark_by_damage(space: ThbSpace, d: np.ndarray, cfg: RefinementConfig,
                   level: int | None = None) -> dict[int, np.ndarray]:
    """Elements whose sampled damage exceeds the threshold, per level.

    Only elements of levels below the capacity lmax are marked. If ``level``
    is given, restrict marking to that level.
    """
    import itertools

    mesh = space.mesh
    out = {}
    levels = range(mesh.nlevels) if level is None else [level]
    for l in levels:
        if l >= mesh.lmax:
            continue
        lvl = mesh.level(l)
        act = np.flatnonzero(mesh.active[l].ravel())
        if len(act) == 0:
            continue
        cmulti = np.unravel_index(act, lvl.cells_shape)
        lo = [lvl.cell_bounds(dd)[cmulti[dd]] for dd in range(space.dim)]
        h = [lvl.cell_bounds(dd)[cmulti[dd] + 1] - lo[dd] for dd in range(space.dim)]
        ct = space.tensor_operator(l).T @ d
        vals = np.zeros(len(act))
        for fracs in itertools.product(_SAMPLE_FRACTIONS, repeat=space.dim):
            pts = np.column_stack([lo[dd] + fracs[dd] * h[dd]
                                   for dd in range(space.dim)])
            vals = np.maximum(vals, _eval_tensor_values(space, l, ct, pts))
        hit = vals > cfg.d_min
        if hit.any():
            msk = np.zeros(lvl.cells_shape, bool)
            msk[tuple(c[hit] for c in cmulti)] = True
            out[l] = msk
    return out


def _eval_tensor_values(space: ThbSpace, level: int, tensor_coeffs, pts) -> np.ndarray:
    flat, per_dir = space._local_tensor_basis(level, pts, 0)
    loc = tensor_coeffs[flat]
    return np.einsum("ij,ij->i", loc, space._combine(per_dir, 0, 0))


def refine_for_damage(space: ThbSpace, d: np.ndarray, cfg: RefinementConfig):
    """One full damage-driven refinement pass; returns (space, d, marked).

    Levels are processed coarse to fine so newly created elements are marked
    in the same call (a damaged coarse region is carried all the way to the
    finest level). At the second-finest level each marked element is replaced
    by its support extension (cross-talk elimination). The damage field is
    transferred exactly at every stage; the returned ``marked`` counts the
    elements actually refined.
    """
    mesh = space.mesh
    total_marked = 0
    for l in range(mesh.lmax):
        if l >= space.mesh.nlevels:
            break
        marked = mark_by_damage(space, d, cfg, level=l)
        if l not in marked:
            continue
        msk = marked[l]
        if l == mesh.lmax - 1:
            msk = support_extension(space.mesh, l, msk) & space.mesh.active[l]
        closure = mark_admissible_closure(space.mesh, {l: msk}, m=cfg.m)
        total_marked += int(sum(c.sum() for c in closure.values()))
        new_mesh = space.mesh.refine(closure)
        new_space = build_space(new_mesh)
        d = transfer_field(space, new_space, d)
        space = new_space
    return space, d, total_marked


def adaptive_load_step(space: ThbSpace, u_k: np.ndarray, d_k: np.ndarray,
                       mat: MaterialParams, spec: ModelSpec,
                       bc: BoundaryConditions, tols: SolverTolerances,
                       cfg: RefinementConfig, step: int = 0):
    """Solve one load step, refining and re-solving per the stepping policy.

    Repeats { staggered solve; damage-driven refinement; exact transfer of
    u and d } until the refined-element ratio drops to tol_ref (marking
    nothing always terminates). Returns (u, d, space, stats).
    """
    u = np.array(u_k, dtype=float)
    d = np.array(d_k, dtype=float)
    totals = StepStats()
    for it in range(1, cfg.max_refine_iters + 1):
        t0 = time.perf_counter()
        Phi, phi = assemble_phasefield_constant(space, spec, mat)
        totals.pf_assembly_time += time.perf_counter() - t0
        u, d, stats = staggered_load_step(space, u, d, mat, bc, Phi, phi, tols)
        _accumulate(totals, stats)
        totals.refinement_iters = it
        ncells_before = space.total_active_cells()
        t0 = time.perf_counter()
        new_space, d_new, marked = refine_for_damage(space, d, cfg)
        ratio = marked / ncells_before
        log.info("step %d refine-iter %d: marked %d of %d cells (ratio %.4f), %d dofs",
                 step, it, marked, ncells_before, ratio, new_space.ndofs)
        if marked:
            u = transfer_field(space, new_space, u.reshape(2, -1).T).T.ravel()
            d = d_new
            space = new_space
        totals.projection_time += time.perf_counter() - t0
        if marked == 0 or ratio <= cfg.tol_ref:
            break
    else:
        raise RuntimeError("refinement iterations exceeded the configured cap")
    return u, d, space, totals


def _accumulate(total: StepStats, part: StepStats):
    total.staggered_iters += part.staggered_iters
    total.picard_iters += part.picard_iters
    total.psor_sweeps += part.psor_sweeps
    total.el_assembly_time += part.el_assembly_time
    total.el_solver_time += part.el_solver_time
    total.pf_assembly_time += part.pf_assembly_time
    total.pf_solver_time += part.pf_solver_time
