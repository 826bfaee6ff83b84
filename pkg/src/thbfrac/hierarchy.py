"""Hierarchical meshes and truncated hierarchical B-spline (THB) spaces.

A hierarchical mesh is a sequence of dyadically nested tensor levels together
with one set of *active* cells per level; the active cells of all levels tile
the parametric domain exactly once. The refined domains are never stored as
geometry: cell membership in the level-l refined region is derived from the
active sets of levels >= l, which keeps all admissibility logic integer-only.

Function activity follows the classical selection: a level-l tensor function
is active when its support lies inside the level-l refined region but not
inside the level-(l+1) one. Active coarse functions are truncated against all
finer levels by the recursive rule "represent one level finer, zero every
coefficient whose function is fully contained in the finer region". The
truncated representations are cached per level as sparse matrices, which turns
THB evaluation, assembly and field transfer into tensor-level operations.

Indexing conventions: cells and functions carry per-direction indices
(i0, i1, ...) flattened in C order with direction 0 slowest. Global DOFs are
numbered level-major, then lexicographically by multi-index, so orderings are
deterministic across runs.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy import ndimage

from .splines import KnotVector, two_scale_matrix, basis_ders, find_span


class StructuralError(RuntimeError):
    """Mesh or space bookkeeping violates a structural invariant."""


class CapacityError(RuntimeError):
    """Refinement request exceeds the configured finest level."""


class TensorLevel:
    """One tensor-product level: a knot vector per parametric direction."""

    def __init__(self, kvs):
        self.kvs = tuple(kvs)
        self.dim = len(self.kvs)
        self.cells_shape = tuple(kv.ncells for kv in self.kvs)
        self.funcs_shape = tuple(kv.nfuncs for kv in self.kvs)
        self.ncells = int(np.prod(self.cells_shape))
        self.nfuncs = int(np.prod(self.funcs_shape))

    def refine(self) -> "TensorLevel":
        return TensorLevel([kv.dyadic_refine() for kv in self.kvs])

    def cell_bounds(self, d: int) -> np.ndarray:
        return self.kvs[d].breakpoints


def _box_all(mask: np.ndarray, p: int, funcs_shape) -> np.ndarray:
    """For every function multi-index j, test whether all cells in its
    (clipped) support box [j-p, j] are True in ``mask``. Uses summed-area
    tables so the check is O(1) per function."""
    dim = mask.ndim
    acc = mask.astype(np.int64)
    for ax in range(dim):
        acc = np.cumsum(acc, axis=ax)
    pad = np.zeros(tuple(s + 1 for s in mask.shape), dtype=np.int64)
    pad[tuple(slice(1, None) for _ in range(dim))] = acc

    los, his = [], []
    for d in range(dim):
        j = np.arange(funcs_shape[d])
        los.append(np.maximum(0, j - p))
        his.append(np.minimum(mask.shape[d] - 1, j))
    out_sum = np.zeros(funcs_shape, dtype=np.int64)
    vol = np.ones(funcs_shape, dtype=np.int64)
    # inclusion-exclusion over box corners
    for corner in range(2 ** dim):
        idx = []
        sign = 1
        for d in range(dim):
            if corner >> d & 1:
                idx.append(his[d] + 1)
            else:
                idx.append(los[d])
                sign = -sign
        out_sum += sign * pad[np.ix_(*idx)] if dim > 1 else sign * pad[idx[0]]
    for d in range(dim):
        w = his[d] - los[d] + 1
        shape = [1] * dim
        shape[d] = -1
        vol = vol * w.reshape(shape)
    return out_sum == vol


def _children_mask(mask: np.ndarray) -> np.ndarray:
    """Bool mask on the next finer grid covering the same region."""
    out = mask
    for ax in range(mask.ndim):
        out = np.repeat(out, 2, axis=ax)
    return out


def _parents_all(mask: np.ndarray) -> np.ndarray:
    """Coarse cells whose 2^d children are all True."""
    out = mask
    for ax in range(mask.ndim):
        n = out.shape[ax] // 2
        shape = out.shape[:ax] + (n, 2) + out.shape[ax + 1:]
        out = out.reshape(shape).all(axis=ax + 1)
    return out


def _parents_any(mask: np.ndarray) -> np.ndarray:
    out = mask
    for ax in range(mask.ndim):
        n = out.shape[ax] // 2
        shape = out.shape[:ax] + (n, 2) + out.shape[ax + 1:]
        out = out.reshape(shape).any(axis=ax + 1)
    return out


class HierarchicalMesh:
    """Nested tensor levels with per-level active-cell masks."""

    def __init__(self, base: TensorLevel, lmax: int):
        if lmax < 0:
            raise ValueError("lmax must be nonnegative")
        self.p = base.kvs[0].degree
        self.dim = base.dim
        self.lmax = lmax
        self.levels = [base]
        self.active = [np.ones(base.cells_shape, dtype=bool)]

    @classmethod
    def uniform(cls, degree: int, ncells, lmax: int, dim: int = 2) -> "HierarchicalMesh":
        if np.isscalar(ncells):
            ncells = (ncells,) * dim
        base = TensorLevel([KnotVector.uniform_open(degree, n) for n in ncells])
        return cls(base, lmax)

    # -- level bookkeeping -------------------------------------------------

    @property
    def nlevels(self) -> int:
        return len(self.levels)

    def level(self, l: int) -> TensorLevel:
        return self.levels[l]

    def _ensure_level(self, l: int):
        if l > self.lmax:
            raise CapacityError(f"level {l} exceeds lmax={self.lmax}")
        while len(self.levels) <= l:
            self.levels.append(self.levels[-1].refine())
            self.active.append(np.zeros(self.levels[-1].cells_shape, dtype=bool))

    def domain_masks(self) -> list[np.ndarray]:
        """Per level, cells belonging to the level-l refined region."""
        dom = [None] * self.nlevels
        dom[-1] = self.active[-1].copy()
        for l in range(self.nlevels - 2, -1, -1):
            dom[l] = self.active[l] | _parents_all(dom[l + 1])
        return dom

    def validate(self):
        """Disjoint cover and nestedness; raises StructuralError otherwise."""
        dom = self.domain_masks()
        for l in range(self.nlevels - 1):
            covered = _parents_all(dom[l + 1])
            touched = _parents_any(dom[l + 1])
            if np.any(covered != touched):
                raise StructuralError(f"level {l + 1} region not aligned with level-{l} cells")
            if np.any(self.active[l] & covered):
                raise StructuralError(f"active level-{l} cells overlap finer active cells")
        if not dom[0].all():
            raise StructuralError("active cells do not cover the domain")
        # exact (integer) disjoint-cover identity on the finest grid
        total = 0
        fin = self.nlevels - 1
        for l in range(self.nlevels):
            total += int(self.active[l].sum()) * (2 ** self.dim) ** (fin - l)
        if total != int(np.prod(self.levels[fin].cells_shape)):
            raise StructuralError("active cells do not tile the domain exactly once")

    def total_active_cells(self) -> int:
        return int(sum(a.sum() for a in self.active))

    # -- refinement ---------------------------------------------------------

    def refine(self, marked: dict[int, np.ndarray]) -> "HierarchicalMesh":
        """Replace each marked active cell by its 2^d children.

        ``marked`` maps level -> bool mask over that level's cell grid. A new
        mesh is returned; the original is untouched.
        """
        out = self.copy()
        top = max((l for l, m in marked.items() if m.any()), default=-1)
        if top < 0:
            return out
        if top + 1 > self.lmax:
            raise CapacityError(f"refining level {top} exceeds lmax={self.lmax}")
        out._ensure_level(top + 1)
        for l in sorted(marked):
            m = marked[l] & out.active[l]
            if not m.any():
                continue
            out._ensure_level(l + 1)
            out.active[l] &= ~m
            out.active[l + 1] |= _children_mask(m)
        return out

    def copy(self) -> "HierarchicalMesh":
        new = HierarchicalMesh.__new__(HierarchicalMesh)
        new.p = self.p
        new.dim = self.dim
        new.lmax = self.lmax
        new.levels = list(self.levels)
        new.active = [a.copy() for a in self.active]
        return new

    def dump(self) -> str:
        """Plain-text active-element listing, one ``level, i, j`` per line."""
        lines = []
        for l in range(self.nlevels):
            idx = np.argwhere(self.active[l])
            for row in idx:
                lines.append(", ".join(str(int(v)) for v in (l, *row)))
        return "\n".join(lines) + ("\n" if lines else "")


def support_extension(mesh: HierarchicalMesh, level: int, cells: np.ndarray) -> np.ndarray:
    """Level-``level`` cells intersecting the support of any level-``level``
    tensor function whose support contains one of the given cells.

    On a uniform grid this is the box dilation by p in every direction,
    clipped to the domain. ``cells`` is a bool mask; a bool mask is returned.
    """
    if cells.shape != mesh.level(level).cells_shape:
        raise ValueError("cell mask shape does not match level grid")
    p = mesh.p
    if not cells.any():
        return cells.copy()
    return ndimage.binary_dilation(cells, structure=np.ones((2 * p + 1,) * mesh.dim, bool))


def _ancestor_mask(mask: np.ndarray, steps: int) -> np.ndarray:
    out = mask
    for _ in range(steps):
        out = _parents_any(out)
    return out


def mark_admissible_closure(mesh: HierarchicalMesh, marked: dict[int, np.ndarray],
                            m: int = 2) -> dict[int, np.ndarray]:
    """Enlarge a marked set so refining it preserves class-``m`` admissibility.

    Uses the truncated-basis neighborhood: for marked cells of level l, the
    support extension is taken at level l-m+2 and every active cell of level
    l-m+1 intersecting it is marked too. Levels are processed fine-to-coarse
    so the closure cascades.
    """
    if m < 2:
        raise ValueError("admissibility class must be >= 2")
    out = {}
    for l, msk in marked.items():
        out[l] = msk & mesh.active[l]
    for l in range(mesh.nlevels - 1, -1, -1):
        msk = out.get(l)
        if msk is None or not msk.any():
            continue
        k2 = l - m + 2  # support-extension level of the T-neighborhood
        if k2 - 1 < 0:
            continue
        anc = _ancestor_mask(msk, l - k2) if l > k2 else msk
        ext = support_extension(mesh, k2, anc)
        nbrs = _parents_any(ext) & mesh.active[k2 - 1]
        if nbrs.any():
            prev = out.get(k2 - 1)
            out[k2 - 1] = nbrs if prev is None else (prev | nbrs)
    return {l: msk for l, msk in out.items() if msk.any()}


def refine_mesh(mesh: HierarchicalMesh, marked: dict[int, np.ndarray]) -> HierarchicalMesh:
    """Refine the marked active cells (children become active)."""
    return mesh.refine(marked)


class ThbSpace:
    """Truncated hierarchical B-spline space over a hierarchical mesh.

    Holds per-level active-function masks, the global DOF numbering and the
    cached truncated representations ``rep(k -> l)``. ``tensor_operator(l)``
    returns the sparse map from global DOFs to level-l tensor coefficients
    which is exact on the active cells of level l; it is the workhorse for
    assembly, evaluation and marking.
    """

    def __init__(self, mesh: HierarchicalMesh):
        mesh.validate()
        self.mesh = mesh
        self.p = mesh.p
        self.dim = mesh.dim
        L = mesh.nlevels
        dom = mesh.domain_masks()
        self._dom = dom

        self.active_funcs = []
        contained = []  # functions with support inside the level-l region
        for l in range(L):
            lvl = mesh.level(l)
            in_dom = _box_all(dom[l], self.p, lvl.funcs_shape)
            refined = dom[l] & ~mesh.active[l]
            in_refined = _box_all(refined, self.p, lvl.funcs_shape)
            contained.append(in_dom)
            self.active_funcs.append(in_dom & ~in_refined)

        self.act_idx = [np.flatnonzero(a.ravel()) for a in self.active_funcs]
        counts = [len(ix) for ix in self.act_idx]
        self.offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
        self.ndofs = int(self.offsets[-1])

        # prolongations between consecutive levels (kron over directions)
        self._P = []
        for l in range(L - 1):
            mats = [two_scale_matrix(mesh.level(l).kvs[d], mesh.level(l + 1).kvs[d])
                    for d in range(self.dim)]
            P = mats[0]
            for M in mats[1:]:
                P = sp.kron(P, M, format="csr")
            self._P.append(P)

        # truncated representations: rep[k][l] has one row per active level-k
        # function, giving its coefficients over the level-l tensor basis
        self._rep = []
        for k in range(L):
            nk = mesh.level(k).nfuncs
            sel = sp.csr_matrix(
                (np.ones(counts[k]), (np.arange(counts[k]), self.act_idx[k])),
                shape=(counts[k], nk))
            chain = {k: sel}
            R = sel
            for l in range(k + 1, L):
                keep = sp.diags((~contained[l].ravel()).astype(float))
                R = (R @ self._P[l - 1]) @ keep
                R.eliminate_zeros()
                chain[l] = R
            self._rep.append(chain)

        self._T = []
        for l in range(L):
            blocks = [self._rep[k][l] for k in range(l + 1)]
            tail = self.ndofs - self.offsets[l + 1]
            if tail:
                blocks.append(sp.csr_matrix((tail, mesh.level(l).nfuncs)))
            self._T.append(sp.vstack(blocks, format="csr"))
        self._Tcsc = [T.tocsc() for T in self._T]

    # -- structure ----------------------------------------------------------

    @property
    def nlevels(self) -> int:
        return self.mesh.nlevels

    def dof_levels(self) -> np.ndarray:
        """Level of every global DOF."""
        out = np.empty(self.ndofs, dtype=int)
        for l in range(self.nlevels):
            out[self.offsets[l]:self.offsets[l + 1]] = l
        return out

    def tensor_operator(self, l: int) -> sp.csr_matrix:
        """Sparse (ndofs x N_l) map; transposed-apply yields the level-l
        tensor coefficients of a THB field, valid on active level-l cells."""
        return self._T[l]

    def truncated_row(self, level: int, flat_idx: int, at_level: int) -> np.ndarray:
        """Dense truncated representation of one active function (tests)."""
        pos = np.searchsorted(self.act_idx[level], flat_idx)
        if pos >= len(self.act_idx[level]) or self.act_idx[level][pos] != flat_idx:
            raise IndexError("function is not active")
        return np.asarray(self._rep[level][at_level][pos].todense()).ravel()

    def active_cells(self, l: int) -> np.ndarray:
        return self.mesh.active[l]

    def total_active_cells(self) -> int:
        return self.mesh.total_active_cells()

    # -- point location and evaluation ---------------------------------------

    def locate(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """For each point, the (level, flat cell) of its active cell."""
        pts = np.atleast_2d(pts)
        npts = pts.shape[0]
        levels = np.full(npts, -1, dtype=int)
        cells = np.zeros(npts, dtype=int)
        for l in range(self.nlevels):
            lvl = self.mesh.level(l)
            idx = []
            for d in range(self.dim):
                bp = lvl.cell_bounds(d)
                cd = np.clip(np.searchsorted(bp, pts[:, d], side="right") - 1,
                             0, lvl.cells_shape[d] - 1)
                idx.append(cd)
            flat = np.ravel_multi_index(tuple(idx), lvl.cells_shape)
            act = self.mesh.active[l].ravel()[flat]
            take = act & (levels < 0)
            levels[take] = l
            cells[take] = flat[take]
        if np.any(levels < 0):
            raise ValueError("point outside the parametric domain")
        return levels, cells

    def _local_tensor_basis(self, l: int, pts: np.ndarray, nders: int):
        """Per point: flat tensor function indices and value/derivative
        tensors of the (p+1)^dim functions alive there (vectorized)."""
        from .splines import basis_ders_many, find_spans

        lvl = self.mesh.level(l)
        p = self.p
        npts = pts.shape[0]
        per_dir = []
        for d in range(self.dim):
            kv = lvl.kvs[d]
            spans = find_spans(kv, pts[:, d])
            vals = basis_ders_many(kv, spans, pts[:, d], nders)
            first = spans - p
            per_dir.append((first, vals))
        if self.dim == 1:
            first, vals = per_dir[0]
            flat = first[:, None] + np.arange(p + 1)[None, :]
            return flat, per_dir
        fx, fy = per_dir[0][0], per_dir[1][0]
        gx = fx[:, None] + np.arange(p + 1)[None, :]
        gy = fy[:, None] + np.arange(p + 1)[None, :]
        ny = lvl.funcs_shape[1]
        flat = (gx[:, :, None] * ny + gy[:, None, :]).reshape(npts, -1)
        return flat, per_dir

    def _combine(self, per_dir, dx: int, dy: int) -> np.ndarray:
        """Tensor-product derivative (dx in direction 0, dy in direction 1)."""
        if self.dim == 1:
            return per_dir[0][1][:, dx, :]
        ax = per_dir[0][1][:, dx, :]
        ay = per_dir[1][1][:, dy, :]
        return (ax[:, :, None] * ay[:, None, :]).reshape(ax.shape[0], -1)

    def eval_field(self, coeffs: np.ndarray, pts: np.ndarray, nders: int = 0):
        """Evaluate a THB field (and derivatives) at arbitrary points.

        Returns a dict with keys 'value' and, when requested, 'grad'
        (npts x dim) and 'hess' (npts x dim x dim).
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        levels, cells = self.locate(pts)
        npts = pts.shape[0]
        out = {"value": np.zeros(npts)}
        if nders >= 1:
            out["grad"] = np.zeros((npts, self.dim))
        if nders >= 2:
            out["hess"] = np.zeros((npts, self.dim, self.dim))
        for l in np.unique(levels):
            sel = np.flatnonzero(levels == l)
            c_l = self._T[l].T @ coeffs
            flat, per_dir = self._local_tensor_basis(l, pts[sel], nders)
            loc = c_l[flat]
            out["value"][sel] = np.einsum("ij,ij->i", loc, self._combine(per_dir, 0, 0))
            if nders >= 1:
                for d in range(self.dim):
                    dd = [0] * 2
                    dd[d] = 1
                    out["grad"][sel, d] = np.einsum(
                        "ij,ij->i", loc, self._combine(per_dir, dd[0], dd[1]))
            if nders >= 2:
                for d1 in range(self.dim):
                    for d2 in range(d1, self.dim):
                        dd = [0, 0]
                        dd[d1] += 1
                        dd[d2] += 1
                        v = np.einsum("ij,ij->i", loc, self._combine(per_dir, dd[0], dd[1]))
                        out["hess"][sel, d1, d2] = v
                        out["hess"][sel, d2, d1] = v
        return out

    def functions_at(self, pt, nders: int = 0):
        """Active functions nonzero at a point: (global dofs, value rows).

        Returns (dofs, vals) where vals[k] maps dof k to the tuple of
        requested derivatives: value, then grad components, then second
        derivatives (xx, xy, yy in 2D).
        """
        pt = np.asarray(pt, dtype=float).reshape(1, -1)
        levels, cells = self.locate(pt)
        l = int(levels[0])
        flat, per_dir = self._local_tensor_basis(l, pt, nders)
        cols = flat[0]
        E = self._Tcsc[l][:, cols].tocsr()  # ndofs x (p+1)^dim extraction
        rows = np.unique(E.nonzero()[0])
        C = np.asarray(E[rows].todense())
        combos = [(0, 0)]
        if nders >= 1:
            combos += [(1, 0), (0, 1)][: self.dim + (self.dim - 1)]
        if nders >= 2:
            combos += ([(2, 0), (1, 1), (0, 2)] if self.dim == 2 else [(2, 0)])
        vals = []
        for dx, dy in combos:
            b = self._combine(per_dir, dx, dy)[0]
            vals.append(C @ b)
        return rows, np.column_stack(vals)

    # -- boundary -----------------------------------------------------------

    def edge_dofs(self, edge: str) -> np.ndarray:
        """Global DOFs whose basis functions are nonzero on a domain edge."""
        axis, end = {
            "left": (0, 0), "right": (0, 1),
            "bottom": (1, 0), "top": (1, 1),
        }[edge]
        if axis >= self.dim:
            raise ValueError(f"edge {edge!r} undefined in {self.dim}D")
        dofs = []
        for l in range(self.nlevels):
            shape = self.mesh.level(l).funcs_shape
            tgt = 0 if end == 0 else shape[axis] - 1
            multi = np.array(np.unravel_index(self.act_idx[l], shape)).T
            hit = multi[:, axis] == tgt
            dofs.append(self.offsets[l] + np.flatnonzero(hit))
        return np.concatenate(dofs)


def build_space(mesh: HierarchicalMesh) -> ThbSpace:
    """Construct the THB space (active functions + truncation data)."""
    return ThbSpace(mesh)


def transfer_field(old: ThbSpace, new: ThbSpace, coeffs: np.ndarray) -> np.ndarray:
    """Exact coefficient transfer between nested THB spaces.

    The represented field is unchanged: the old field is written on the
    finest tensor level, then the new space's coefficients are recovered
    level by level (claim the active functions of the level by local
    collocation on one owning active cell, subtract their truncated
    representations, continue one level finer).
    """
    if old.p != new.p or old.dim != new.dim:
        raise StructuralError("spaces are not compatible")
    if old.mesh.level(0).cells_shape != new.mesh.level(0).cells_shape:
        raise StructuralError("spaces do not share a base level")
    if old.nlevels > new.nlevels:
        raise StructuralError("new space has fewer levels than the old one")
    dom_new = new.mesh.domain_masks()
    for l in range(old.nlevels):
        if np.any(old.mesh.active[l] & ~dom_new[l]):
            raise StructuralError("new mesh is not a refinement of the old one")

    coeffs = np.asarray(coeffs, dtype=float)
    multi = coeffs.ndim == 2
    if not multi:
        coeffs = coeffs[:, None]

    # old field on the new space's finest tensor level
    resid = old.tensor_operator(old.nlevels - 1).T @ coeffs
    for l in range(old.nlevels - 1, new.nlevels - 1):
        resid = new._P[l].T @ resid

    fine = new.nlevels - 1
    lvl_f = new.mesh.level(fine)
    p = new.p
    ncomp = coeffs.shape[1]
    out = np.zeros((new.ndofs, ncomp))
    gp = _collocation_offsets(p)

    for l in range(new.nlevels):
        lvl = new.mesh.level(l)
        idx = new.act_idx[l]
        if len(idx) == 0:
            continue
        owner = _owner_cells(new, l)
        # group functions by owning cell; one local solve per distinct cell
        order = np.argsort(owner, kind="stable")
        for start in _group_starts(owner[order]):
            grp = order[start[0]:start[1]]
            cell = owner[grp[0]]
            cmulti = np.unravel_index(cell, lvl.cells_shape)
            pts = _cell_points(lvl, cmulti, gp, new.dim)
            vals = _eval_tensor(lvl_f, resid, pts, p, new.dim)
            A, cols = _local_collocation(lvl, cmulti, p, new.dim, gp)
            local = np.linalg.solve(A, vals)
            for g in grp:
                fi = idx[g]
                pos = int(np.flatnonzero(cols == fi)[0])
                out[new.offsets[l] + g] = local[pos]
        claimed = out[new.offsets[l]:new.offsets[l + 1]]
        resid = resid - new._rep[l][fine].T @ claimed

    scale = max(1.0, float(np.abs(coeffs).max(initial=0.0)))
    if np.abs(resid).max(initial=0.0) > 1e-9 * scale:
        raise StructuralError("transfer residual is not zero; spaces not nested?")
    return out if multi else out[:, 0]


def _collocation_offsets(p: int) -> np.ndarray:
    from .splines import gauss_points
    x, _ = gauss_points(p + 1)
    return x


def _owner_cells(space: ThbSpace, l: int) -> np.ndarray:
    """For each active level-l function, one active level-l cell in its
    support (smallest flat index; deterministic)."""
    lvl = space.mesh.level(l)
    act = space.mesh.active[l]
    p = space.p
    idx = space.act_idx[l]
    multi = np.array(np.unravel_index(idx, lvl.funcs_shape)).T
    owners = np.empty(len(idx), dtype=int)
    for k, j in enumerate(multi):
        ranges = [np.arange(max(0, jd - p), min(lvl.cells_shape[d] - 1, jd) + 1)
                  for d, jd in enumerate(j)]
        grids = np.meshgrid(*ranges, indexing="ij")
        flat = np.ravel_multi_index(tuple(g.ravel() for g in grids), lvl.cells_shape)
        ok = flat[act.ravel()[flat]]
        if len(ok) == 0:
            raise StructuralError("active function without active cell in support")
        owners[k] = ok.min()
    return owners


def _group_starts(sorted_vals: np.ndarray):
    n = len(sorted_vals)
    s = 0
    while s < n:
        e = s
        while e < n and sorted_vals[e] == sorted_vals[s]:
            e += 1
        yield (s, e)
        s = e


def _cell_points(lvl: TensorLevel, cmulti, offsets: np.ndarray, dim: int) -> np.ndarray:
    axes = []
    for d in range(dim):
        bp = lvl.cell_bounds(d)
        a, b = bp[cmulti[d]], bp[cmulti[d] + 1]
        axes.append(a + (b - a) * offsets)
    if dim == 1:
        return axes[0][:, None]
    gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def _local_collocation(lvl: TensorLevel, cmulti, p: int, dim: int, offsets):
    """Collocation matrix of the (p+1)^dim tensor functions alive on a cell,
    at the tensor Gauss points of that cell, plus their flat indices."""
    mats, funcs = [], []
    for d in range(dim):
        kv = lvl.kvs[d]
        bp = lvl.cell_bounds(d)
        a, b = bp[cmulti[d]], bp[cmulti[d] + 1]
        xs = a + (b - a) * offsets
        A = np.empty((p + 1, p + 1))
        span = None
        for i, x in enumerate(xs):
            s = find_span(kv, x)
            span = s
            A[i] = basis_ders(kv, s, x, 0)[0]
        mats.append(A)
        funcs.append(np.arange(span - p, span + 1))
    if dim == 1:
        return mats[0], funcs[0]
    A = np.kron(mats[0], mats[1])
    ny = lvl.funcs_shape[1]
    cols = (funcs[0][:, None] * ny + funcs[1][None, :]).ravel()
    return A, cols


def _eval_tensor(lvl: TensorLevel, coeffs: np.ndarray, pts: np.ndarray,
                 p: int, dim: int) -> np.ndarray:
    """Evaluate a tensor-level field (coeff columns) at points."""
    from .splines import basis_ders_many, find_spans

    npts = pts.shape[0]
    per_dir = []
    for d in range(dim):
        kv = lvl.kvs[d]
        spans = find_spans(kv, pts[:, d])
        vals = basis_ders_many(kv, spans, pts[:, d], 0)[:, 0, :]
        first = spans - p
        per_dir.append((first, vals))
    if dim == 1:
        flat = per_dir[0][0][:, None] + np.arange(p + 1)[None, :]
        basis = per_dir[0][1]
    else:
        gx = per_dir[0][0][:, None] + np.arange(p + 1)[None, :]
        gy = per_dir[1][0][:, None] + np.arange(p + 1)[None, :]
        ny = lvl.funcs_shape[1]
        flat = (gx[:, :, None] * ny + gy[:, None, :]).reshape(npts, -1)
        basis = (per_dir[0][1][:, :, None] * per_dir[1][1][:, None, :]).reshape(npts, -1)
    return np.einsum("ij,ijc->ic", basis, coeffs[flat])
