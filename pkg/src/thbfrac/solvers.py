"""Solvers: sparse linear solve, projected SOR for the damage LCP, the Picard
elasticity loop, the phase-field step and the staggered load step.

The damage subproblem is the symmetric LCP

    find x >= 0  with  Q x - r >= 0  and  x . (Q x - r) = 0,

whose solution is the increment of the damage coefficients; irreversibility
is the constraint x >= 0 relative to the previous *load step*. PSOR sweeps
ascending through the unknowns (inherently sequential; compiled with numba)
and convergence is measured by the componentwise KKT residual scaled by
max(1, |r|_inf).

Residual norms of the elasticity problem are Euclidean norms on the reduced
(Dirichlet-eliminated) system, scaled by max(1, |F|) so the unloaded first
step does not divide by zero.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .assembly import (
    BoundaryConditions, GlobalSystem, assemble_elasticity,
    assemble_phasefield_solution,
)
from .hierarchy import ThbSpace
from .model import MaterialParams


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, what, iterations, residual):
        super().__init__(f"{what} did not converge in {iterations} iterations "
                         f"(residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


@dataclass
class SolverTolerances:
    tol_picard: float = 1e-5
    tol_psor: float = 1e-9
    tol_stag: float = 1e-5
    max_picard: int = 100
    max_psor: int = 200_000
    max_stag: int = 500
    omega: float = 1.2

    def __post_init__(self):
        if min(self.tol_picard, self.tol_psor, self.tol_stag) <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 < self.omega < 2:
            raise ValueError("PSOR relaxation factor must lie in (0, 2)")


@dataclass
class LCProblem:
    """Symmetric LCP with strictly positive diagonal."""

    Q: sp.csr_matrix
    r: np.ndarray

    def __post_init__(self):
        self.Q = self.Q.tocsr()
        diag = self.Q.diagonal()
        if np.any(diag <= 0):
            raise ValueError("LCP matrix must have strictly positive diagonal")


@dataclass
class StepStats:
    """Per-load-step iteration counts and wall times (seconds)."""

    staggered_iters: int = 0
    picard_iters: int = 0
    psor_sweeps: int = 0
    refinement_iters: int = 0
    el_assembly_time: float = 0.0
    el_solver_time: float = 0.0
    pf_assembly_time: float = 0.0
    pf_solver_time: float = 0.0
    projection_time: float = 0.0


def solve_linear(system: GlobalSystem) -> np.ndarray:
    """Direct sparse solve of the reduced system; returns the full vector."""
    K, rhs = system.reduced()
    x = _spsolve_checked(K, rhs)
    return system.expand(x)


class ReusableLinearSolver:
    """Linear solver that recycles the last LU factorization.

    Successive staggered iterations change the stiffness only through the
    local damage update, so the previous factorization is an excellent CG
    preconditioner; a fresh factorization happens only when CG stalls or
    the system size changes. Falls back to the checked direct solve.
    """

    def __init__(self, cg_maxiter: int = 12):
        self._lu = None
        self._n = -1
        self.cg_maxiter = cg_maxiter

    def solve(self, system: GlobalSystem) -> np.ndarray:
        K, rhs = system.reduced()
        n = K.shape[0]
        if n == 0:
            return system.expand(np.empty(0))
        rhs_norm = np.linalg.norm(rhs)
        if self._lu is not None and self._n == n and rhs_norm > 0:
            M = spla.LinearOperator(K.shape, matvec=self._lu.solve)
            x, info = spla.cg(K, rhs, M=M, rtol=1e-11, atol=0.0,
                              maxiter=self.cg_maxiter)
            if info == 0:
                res = np.linalg.norm(K @ x - rhs)
                if res <= 1e-10 * max(1.0, rhs_norm):
                    return system.expand(x)
        try:
            self._lu = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A")
            self._n = n
            x = self._lu.solve(rhs)
        except RuntimeError as exc:
            raise SolverError(f"linear solver failed: {exc}")
        if not np.all(np.isfinite(x)):
            raise SolverError("linear solver returned non-finite values")
        res = np.linalg.norm(K @ x - rhs)
        if res > 1e-10 * max(1.0, rhs_norm):
            raise SolverError(f"linear solve residual too large: {res:.3e}")
        return system.expand(x)


def _spsolve_checked(K, rhs):
    if K.shape[0] == 0:
        return np.empty(0)
    try:
        # symmetric-friendly fill-reducing ordering; much faster than the
        # default on the SPD elasticity systems
        lu = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A")
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SolverError(f"linear solver failed: {exc}")
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solver returned non-finite values "
                          "(singular or indefinite matrix?)")
    res = np.linalg.norm(K @ x - rhs)
    if res > 1e-10 * max(1.0, np.linalg.norm(rhs)):
        raise SolverError(f"linear solve residual too large: {res:.3e}")
    return x


@njit(cache=True)
def _psor_sweeps(indptr, indices, data, diag, r, x, omega, tol_scaled, max_sweeps):
    n = x.shape[0]
    sweeps = 0
    res = np.inf
    while sweeps < max_sweeps:
        for i in range(n):
            qx = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                qx += data[k] * x[indices[k]]
            xi = x[i] - omega * (qx - r[i]) / diag[i]
            x[i] = xi if xi > 0.0 else 0.0
        sweeps += 1
        # componentwise KKT residual |min(x_i, (Qx - r)_i)|
        res = 0.0
        for i in range(n):
            qx = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                qx += data[k] * x[indices[k]]
            g = qx - r[i]
            m = x[i] if x[i] < g else g
            if abs(m) > res:
                res = abs(m)
        if res <= tol_scaled:
            break
    return sweeps, res


def solve_psor(problem: LCProblem, x0=None, tol: float = 1e-9,
               omega: float = 1.2, max_sweeps: int = 200_000):
    """PSOR iteration for the LCP; returns (x, sweeps).

    Converged when x >= 0 (by construction), Qx - r >= -tol*scale and
    |min(x_i, (Qx - r)_i)| <= tol*scale with scale = max(1, |r|_inf).
    """
    Q, r = problem.Q, np.asarray(problem.r, dtype=float)
    n = len(r)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    x[x < 0] = 0.0
    scale = max(1.0, float(np.abs(r).max(initial=0.0)))
    sweeps, res = _psor_sweeps(Q.indptr, Q.indices, Q.data, Q.diagonal(),
                               r, x, omega, tol * scale, max_sweeps)
    if res > tol * scale:
        raise NonConvergenceError("PSOR", sweeps, res)
    return x, sweeps


def solve_elasticity(space: ThbSpace, u_prev: np.ndarray, d: np.ndarray,
                     mat: MaterialParams, bc: BoundaryConditions,
                     tols: SolverTolerances, stats: StepStats | None = None,
                     first_system: GlobalSystem | None = None,
                     linear_solver=None):
    """Picard (secant) iteration for the displacement at fixed damage.

    Assembles K(u_prev, d), solves, and repeats with the updated volumetric
    sign pattern until |K(u_j, d) u_j - F| <= tol * max(1, |F|). Returns
    (u, system) with ``system`` assembled at the returned iterate, so the
    caller can reuse it as the staggered residual operator.
    """
    stats = stats if stats is not None else StepStats()
    u = np.asarray(u_prev, dtype=float)
    system = first_system
    if system is None:
        t0 = time.perf_counter()
        system = assemble_elasticity(space, u, d, mat, bc)
        stats.el_assembly_time += time.perf_counter() - t0
    scale = system.rhs_scale()
    signs = _volumetric_signs(space, u)
    solve = solve_linear if linear_solver is None else linear_solver.solve
    for _ in range(tols.max_picard):
        t0 = time.perf_counter()
        u = solve(system)
        stats.el_solver_time += time.perf_counter() - t0
        stats.picard_iters += 1
        new_signs = _volumetric_signs(space, u)
        if np.array_equal(new_signs, signs):
            # unchanged secant: K(u, d) equals the solved operator, so the
            # residual vanishes to solver precision
            return u, system
        signs = new_signs
        t0 = time.perf_counter()
        system = assemble_elasticity(space, u, d, mat, bc)
        stats.el_assembly_time += time.perf_counter() - t0
        res = system.residual(u)
        if res <= tols.tol_picard * scale:
            return u, system
    raise NonConvergenceError("Picard", tols.max_picard, res)


def _volumetric_signs(space: ThbSpace, u: np.ndarray) -> np.ndarray:
    """Quadrature-point signs of the volumetric strain (the Picard secant)."""
    from .assembly import _contexts

    n = space.ndofs
    parts = []
    for ctx in _contexts(space):
        T = space.tensor_operator(ctx.level)
        ev = ctx.field(T.T @ u[:n], 1, 0) + ctx.field(T.T @ u[n:], 0, 1)
        parts.append((ev >= 0.0).ravel())
    return np.concatenate(parts) if parts else np.empty(0, bool)


def solve_phasefield(space: ThbSpace, u: np.ndarray, d_n: np.ndarray,
                     Phi: sp.csr_matrix, phi: np.ndarray,
                     mat: MaterialParams, tols: SolverTolerances,
                     warm_increment: np.ndarray | None = None,
                     stats: StepStats | None = None):
    """One damage solve: LCP in the increment against the previous load step.

    Q = Psi(u) + Gc*Phi and r = psi(u) - Gc*phi - Q d_n, so the KKT system
    of the discrete energy (with the AT1 threshold term entering through
    ``phi``) is Q d - psi + Gc*phi >= 0, d >= d_n, complementarity.
    """
    stats = stats if stats is not None else StepStats()
    t0 = time.perf_counter()
    Psi, psi = assemble_phasefield_solution(space, u, mat)
    Q = (Psi + mat.Gc * Phi).tocsr()
    r = psi - mat.Gc * phi - Q @ d_n
    stats.pf_assembly_time += time.perf_counter() - t0
    t0 = time.perf_counter()
    inc, sweeps = solve_psor(LCProblem(Q, r), x0=warm_increment,
                             tol=tols.tol_psor, omega=tols.omega,
                             max_sweeps=tols.max_psor)
    stats.pf_solver_time += time.perf_counter() - t0
    stats.psor_sweeps += sweeps
    return d_n + inc, inc


def staggered_load_step(space: ThbSpace, u_k: np.ndarray, d_k: np.ndarray,
                        mat: MaterialParams, bc: BoundaryConditions,
                        Phi: sp.csr_matrix, phi: np.ndarray,
                        tols: SolverTolerances):
    """Alternate elasticity and damage solves until the staggered residual
    |K(u, d) u - F| drops below tol * max(1, |F|).

    The solution-independent operators (Phi, phi, F) are assembled once per
    step by the caller. Returns (u, d, stats); at least one staggered
    iteration is always performed.
    """
    stats = StepStats()
    u = np.array(u_k, dtype=float)
    d = np.array(d_k, dtype=float)
    warm = None
    system = None
    scale = None
    linear_solver = ReusableLinearSolver()
    for it in range(1, tols.max_stag + 1):
        u, system = solve_elasticity(space, u, d, mat, bc, tols, stats=stats,
                                     first_system=system,
                                     linear_solver=linear_solver)
        if scale is None:
            scale = system.rhs_scale()
        d, warm = solve_phasefield(space, u, d_k, Phi, phi, mat, tols,
                                   warm_increment=warm, stats=stats)
        stats.staggered_iters = it
        t0 = time.perf_counter()
        system = assemble_elasticity(space, u, d, mat, bc)
        stats.el_assembly_time += time.perf_counter() - t0
        res = system.residual(u)
        if res <= tols.tol_stag * scale:
            return u, d, stats
    raise NonConvergenceError("staggered scheme", tols.max_stag, res)
