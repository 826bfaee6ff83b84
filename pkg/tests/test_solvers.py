"""Solver tests: linear solve, PSOR vs brute-force oracle, Picard loop,
phase-field step and the staggered iteration."""

import numpy as np
import pytest
import scipy.sparse as sp

from thbfrac.assembly import (
    BoundaryConditions, assemble_elasticity, assemble_phasefield_constant,
    dissipated_energy,
)
from thbfrac.hierarchy import HierarchicalMesh, build_space
from thbfrac.model import MaterialParams, ModelSpec
from thbfrac.solvers import (
    LCProblem, NonConvergenceError, SolverError, SolverTolerances,
    solve_elasticity, solve_linear, solve_phasefield, solve_psor,
    staggered_load_step,
)

MAT = MaterialParams(l0=0.03)
TOLS = SolverTolerances()


def brute_force_lcp(Q: np.ndarray, r: np.ndarray):
    """Enumerate all active sets; return the feasible complementary point."""
    n = len(r)
    for mask in range(2 ** n):
        free = [i for i in range(n) if (mask >> i) & 1]
        x = np.zeros(n)
        if free:
            x[free] = np.linalg.solve(Q[np.ix_(free, free)], r[free])
        w = Q @ x - r
        if np.all(x >= -1e-11) and np.all(w >= -1e-9):
            return np.maximum(x, 0.0)
    raise AssertionError("no complementary solution found")


def clamp_bc(uy=0.0):
    return BoundaryConditions(dirichlet=[
        ("bottom", 0, 0.0), ("bottom", 1, 0.0),
        ("top", 0, 0.0), ("top", 1, uy)])


# -- linear solver ---------------------------------------------------------------

def test_solve_linear_identity_and_2x2():
    from thbfrac.assembly import GlobalSystem
    I = sp.identity(4, format="csr")
    f = np.arange(4.0)
    system = GlobalSystem(I, f, np.empty(0, dtype=int), np.empty(0))
    assert np.allclose(solve_linear(system), f)
    K = sp.csr_matrix(np.array([[2.0, 1.0], [1.0, 2.0]]))
    system = GlobalSystem(K, np.array([3.0, 3.0]), np.empty(0, dtype=int), np.empty(0))
    assert np.allclose(solve_linear(system), [1.0, 1.0])


def test_solve_linear_random_spd_vs_dense(rng):
    from thbfrac.assembly import GlobalSystem
    A = rng.normal(size=(50, 50))
    K = A @ A.T + 50 * np.eye(50)
    f = rng.normal(size=50)
    system = GlobalSystem(sp.csr_matrix(K), f, np.empty(0, dtype=int), np.empty(0))
    x = solve_linear(system)
    assert np.abs(x - np.linalg.solve(K, f)).max() <= 1e-9


def test_solve_linear_singular_raises():
    from thbfrac.assembly import GlobalSystem
    K = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    system = GlobalSystem(K, np.array([1.0, 2.0]), np.empty(0, dtype=int), np.empty(0))
    with pytest.raises(SolverError):
        solve_linear(system)


# -- PSOR ------------------------------------------------------------------------

def test_psor_scalar_cases():
    x, _ = solve_psor(LCProblem(sp.csr_matrix([[2.0]]), np.array([4.0])))
    assert np.allclose(x, [2.0])
    x, _ = solve_psor(LCProblem(sp.csr_matrix([[2.0]]), np.array([-1.0])))
    assert np.allclose(x, [0.0])
    x, _ = solve_psor(LCProblem(sp.csr_matrix([[2.0, -1.0], [-1.0, 2.0]]),
                                np.array([1.0, -2.0])))
    assert np.abs(x - [0.5, 0.0]).max() < 1e-9


def test_psor_matches_brute_force_oracle(rng):
    for _ in range(200):
        n = int(rng.integers(1, 9))
        A = rng.normal(size=(n, n))
        Q = A @ A.T + n * np.eye(n)
        r = 2 * rng.normal(size=n)
        xb = brute_force_lcp(Q, r)
        xp, _ = solve_psor(LCProblem(sp.csr_matrix(Q), r), tol=1e-12)
        assert np.abs(xb - xp).max() <= 1e-8


def test_psor_warm_start_same_solution(rng):
    A = rng.normal(size=(12, 12))
    Q = sp.csr_matrix(A @ A.T + 12 * np.eye(12))
    r = rng.normal(size=12)
    cold, _ = solve_psor(LCProblem(Q, r), tol=1e-12)
    warm, sweeps = solve_psor(LCProblem(Q, r), x0=cold + rng.uniform(0, 0.1, 12),
                              tol=1e-12)
    assert np.abs(cold - warm).max() <= 1e-8


def test_psor_nonconvergence_error():
    Q = sp.csr_matrix([[1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(NonConvergenceError):
        solve_psor(LCProblem(Q, np.array([1.0, 1.0])), max_sweeps=0)


def test_lcp_requires_positive_diagonal():
    with pytest.raises(ValueError):
        LCProblem(sp.csr_matrix([[0.0]]), np.array([1.0]))


def test_tolerances_validation():
    with pytest.raises(ValueError):
        SolverTolerances(omega=2.5)
    with pytest.raises(ValueError):
        SolverTolerances(tol_psor=0.0)


# -- elasticity / phase-field steps -----------------------------------------------

def small_problem():
    space = build_space(HierarchicalMesh.uniform(2, 8, lmax=1, dim=2))
    n = space.ndofs
    return space, np.zeros(2 * n), np.zeros(n)


def test_solve_elasticity_linear_case_one_iteration():
    space, u0, d0 = small_problem()
    bc = clamp_bc(uy=1e-4)
    stats_holder = []
    from thbfrac.solvers import StepStats
    stats = StepStats()
    u, system = solve_elasticity(space, u0, d0, MAT, bc, TOLS, stats=stats)
    # d=0, stable sign pattern: converged right after the first solve
    assert stats.picard_iters == 1
    assert system.residual(u) <= TOLS.tol_picard * system.rhs_scale()


def test_solve_elasticity_matches_direct_solve():
    space, u0, d0 = small_problem()
    bc = clamp_bc(uy=2e-4)
    u, system = solve_elasticity(space, u0, d0, MAT, bc, TOLS)
    direct = solve_linear(assemble_elasticity(space, u0, d0, MAT, bc))
    assert np.abs(u - direct).max() <= 1e-10


def test_solve_phasefield_no_driving_force():
    space, u0, d0 = small_problem()
    for fam in ("at2", "at1"):
        spec = ModelSpec(fam, 2)
        Phi, phi = assemble_phasefield_constant(space, spec, MAT)
        d, inc = solve_phasefield(space, u0, d0, Phi, phi, MAT, TOLS)
        assert np.abs(d).max() == 0.0, fam


def test_solve_phasefield_homogeneous_at2_limit():
    """Uniform positive energy: d tends to 2 psi / (2 psi + Gc / l0)."""
    space, u0, d0 = small_problem()
    n = space.ndofs
    eps_y = 2e-2  # large uniform stretch
    kvy = space.mesh.level(0).kvs[1]
    u = np.zeros(2 * n)
    u[n:] = np.tile(kvy.greville() * eps_y,
                    (space.mesh.level(0).funcs_shape[0], 1)).ravel()
    spec = ModelSpec("at2", 2)
    Phi, phi = assemble_phasefield_constant(space, spec, MAT)
    d, _ = solve_phasefield(space, u, d0, Phi, phi, MAT, TOLS)
    psi0 = 0.5 * MAT.K2d * eps_y ** 2 + 0.5 * MAT.mu * eps_y ** 2
    d_hom = 2 * psi0 / (2 * psi0 + MAT.Gc / MAT.l0)
    # interior coefficients approach the homogeneous solution
    mid = space.eval_field(d, np.array([[0.5, 0.5]]))["value"][0]
    assert abs(mid - d_hom) < 0.02 * d_hom


def test_staggered_zero_increment_converges_immediately():
    space, u0, d0 = small_problem()
    spec = ModelSpec("at2", 2)
    Phi, phi = assemble_phasefield_constant(space, spec, MAT)
    u, d, stats = staggered_load_step(space, u0, d0, MAT, clamp_bc(0.0),
                                      Phi, phi, TOLS)
    assert stats.staggered_iters == 1
    assert np.abs(u).max() == 0.0 and np.abs(d).max() == 0.0


def test_staggered_dissipation_nondecreasing_and_irreversible():
    space, u0, d0 = small_problem()
    spec = ModelSpec("at2", 2)
    Phi, phi = assemble_phasefield_constant(space, spec, MAT)
    u, d = u0, d0
    last_diss = 0.0
    for k, uy in enumerate((2e-3, 4e-3, 6e-3)):
        u, d_new, stats = staggered_load_step(space, u, d, MAT, clamp_bc(uy),
                                              Phi, phi, TOLS)
        assert (d_new - d).min() >= -1e-12
        d = d_new
        diss = dissipated_energy(space, d, spec, MAT)
        assert diss >= last_diss - 1e-10
        last_diss = diss
    assert last_diss > 0  # the load was large enough to damage the plate
