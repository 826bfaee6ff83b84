"""Shared helpers: THB admissibility predicate, random admissible meshes."""

import numpy as np
import pytest

from thbfrac.hierarchy import (
    HierarchicalMesh, ThbSpace, build_space, mark_admissible_closure,
)


def contributing_dofs(space: ThbSpace, level: int, cellflat: int) -> np.ndarray:
    """Global DOFs whose truncated function is not identically zero on the
    given active cell (nonzero rows of the cell's extraction columns)."""
    lvl = space.mesh.level(level)
    cmulti = np.unravel_index(cellflat, lvl.cells_shape)
    p = space.p
    axes = [np.arange(c, c + p + 1) for c in cmulti]
    if space.dim == 1:
        cols = axes[0]
    else:
        cols = (axes[0][:, None] * lvl.funcs_shape[1] + axes[1][None, :]).ravel()
    E = space._Tcsc[level][:, cols]
    return np.unique(E.nonzero()[0])


def cell_func_incidence(lvl, p):
    """Sparse (ncells x nfuncs): cell c vs tensor functions alive on it."""
    import scipy.sparse as sp

    mats = []
    for n, nf in zip(lvl.cells_shape, lvl.funcs_shape):
        rows = np.repeat(np.arange(n), p + 1)
        cols = (np.arange(n)[:, None] + np.arange(p + 1)[None, :]).ravel()
        mats.append(sp.csr_matrix((np.ones(len(rows)), (rows, cols)),
                                  shape=(n, nf)))
    out = mats[0]
    for M in mats[1:]:
        out = sp.kron(out, M, format="csr")
    return out


def check_admissibility(space: ThbSpace, m: int = 2) -> bool:
    """Class-m admissibility: on every active level-l cell, contributing
    functions have level >= l - m + 1 (vectorized over cells)."""
    for l in range(space.nlevels):
        act = np.flatnonzero(space.mesh.active[l].ravel())
        if len(act) == 0:
            continue
        S = cell_func_incidence(space.mesh.level(l), space.p)[act]
        for k in range(0, l - m + 1):
            R = space._rep[k][l]
            if R.nnz == 0:
                continue
            hits = S @ abs(R).T  # (ncells_active x n_act_k)
            if hits.nnz and hits.max() > 1e-14:
                return False
    return True


def random_refined_space(rng, base=6, lmax=3, steps=3, dim=2, frac=0.12):
    """Random admissible mesh: repeated random marking + closure + refine."""
    mesh = HierarchicalMesh.uniform(2, base, lmax=lmax, dim=dim)
    for _ in range(steps):
        l = int(rng.integers(0, mesh.nlevels))
        msk = (rng.random(mesh.level(l).cells_shape) < frac) & mesh.active[l]
        if not msk.any():
            continue
        mesh = mesh.refine(mark_admissible_closure(mesh, {l: msk}, m=2))
    return build_space(mesh)


def crosstalk_free(space: ThbSpace, d: np.ndarray, thresh: float = 0.95) -> bool:
    """No active function below the finest level bridges two undamaged
    regions separated by the fully damaged set {d >= thresh}.

    Sampled on the finest-level cell-center grid: label the connected
    undamaged components, then check every coarse function's *truncated*
    support (the cells its truncated representation is nonzero on) against
    the labels it touches.
    """
    from scipy import ndimage

    fine = space.nlevels - 1
    lvl = space.mesh.level(fine)
    centers = [0.5 * (lvl.cell_bounds(dd)[:-1] + lvl.cell_bounds(dd)[1:])
               for dd in range(space.dim)]
    if space.dim == 1:
        pts = centers[0][:, None]
    else:
        gx, gy = np.meshgrid(*centers, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
    import scipy.sparse as sp

    vals = space.eval_field(d, pts)["value"].reshape(lvl.cells_shape)
    undamaged = vals < thresh
    labels, ncomp = ndimage.label(undamaged)
    if ncomp < 2:
        return True
    # cells per undamaged component as an indicator matrix
    Lab = sp.csr_matrix((np.ones(np.count_nonzero(labels)),
                         (np.flatnonzero(labels.ravel()),
                          labels.ravel()[labels.ravel() > 0] - 1)),
                        shape=(lvl.ncells, ncomp))
    C = cell_func_incidence(lvl, space.p)  # cells x fine funcs
    for k in range(fine):
        R = abs(space._rep[k][fine])
        if R.nnz == 0:
            continue
        # truncated-support cells per coarse function, then labels touched
        touched = ((R @ C.T) @ Lab) > 1e-14
        if touched.nnz and np.any(np.diff(touched.tocsr().indptr) > 1):
            return False
    return True


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
