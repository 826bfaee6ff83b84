"""Univariate B-spline kernels: open knot vectors, Cox-de Boor evaluation with
derivatives, dyadic refinement and two-scale (subdivision) matrices.

All knot vectors are open (clamped): the end knots are repeated ``p+1`` times.
Dyadic refinement inserts every span midpoint, so nested levels share knot
values bitwise (each breakpoint is computed as ``i / ncells`` in floating
point, which is deterministic and identical across levels for common knots).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class KnotVector:
    """Open (clamped) knot vector of a univariate B-spline basis.

    Attributes:
        degree: polynomial degree p.
        knots: full nondecreasing knot sequence with end multiplicity p+1.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        kts = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", kts)
        p = self.degree
        if p < 0:
            raise ValueError("degree must be nonnegative")
        if len(kts) < 2 * (p + 1):
            raise ValueError("knot vector too short for degree")
        if np.any(np.diff(kts) < 0):
            raise ValueError("knots must be nondecreasing")
        if np.any(kts[: p + 1] != kts[0]) or np.any(kts[-(p + 1):] != kts[-1]):
            raise ValueError("end knots must have multiplicity p+1 (open knot vector)")
        # interior multiplicity at most p keeps the basis C^0 or smoother
        interior = kts[p + 1:-(p + 1)]
        if interior.size:
            _, counts = np.unique(interior, return_counts=True)
            if np.any(counts > p):
                raise ValueError("interior knot multiplicity exceeds degree")

    @classmethod
    def uniform_open(cls, degree: int, ncells: int, a: float = 0.0, b: float = 1.0) -> "KnotVector":
        """Uniform open knot vector with ``ncells`` equal spans on [a, b]."""
        if ncells < 1:
            raise ValueError("need at least one span")
        inner = a + (b - a) * (np.arange(1, ncells) / ncells)
        knots = np.concatenate([np.full(degree + 1, a), inner, np.full(degree + 1, b)])
        return cls(degree, knots)

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct knot values (span boundaries)."""
        return np.unique(self.knots)

    @property
    def ncells(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def nfuncs(self) -> int:
        """Number of basis functions: len(knots) - p - 1."""
        return len(self.knots) - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def greville(self) -> np.ndarray:
        """Greville abscissae (knot averages), one per basis function."""
        p = self.degree
        return np.array([self.knots[i + 1: i + p + 1].mean() for i in range(self.nfuncs)])

    def span_of_cell(self, cell: int) -> int:
        """Knot-span index of breakpoint cell ``cell`` (uniform: cell + p)."""
        bps = self.breakpoints
        return int(np.searchsorted(self.knots, bps[cell], side="right")) - 1

    def dyadic_refine(self) -> "KnotVector":
        """Insert the midpoint of every nonempty span (one dyadic step)."""
        bps = self.breakpoints
        mids = 0.5 * (bps[:-1] + bps[1:])
        new = np.sort(np.concatenate([self.knots, mids]))
        return KnotVector(self.degree, new)


def find_span(kv: KnotVector, x: float) -> int:
    """Knot span index i with knots[i] <= x < knots[i+1] (last span at x=b)."""
    knots, p = kv.knots, kv.degree
    a, b = kv.domain
    if x < a or x > b:
        raise ValueError(f"evaluation point {x} outside knot range [{a}, {b}]")
    n = kv.nfuncs
    if x >= knots[n]:  # right end: clamp into the last nonempty span
        return n - 1
    return int(np.searchsorted(knots, x, side="right")) - 1


def basis_ders(kv: KnotVector, span: int, x: float, nders: int) -> np.ndarray:
    """Nonzero basis functions and derivatives at ``x`` in ``span``.

    Returns an array of shape (nders+1, p+1): row k holds the k-th derivative
    of the p+1 functions ``span-p .. span`` (Cox-de Boor triangular recurrence
    with the standard derivative table, cf. The NURBS Book A2.3).
    """
    knots, p = kv.knots, kv.degree
    ndu = np.zeros((p + 1, p + 1))
    ndu[0, 0] = 1.0
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    for j in range(1, p + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nders + 1, p + 1))
    ders[0, :] = ndu[:, p]
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nders + 1):
            d = 0.0
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    r = p
    for k in range(1, nders + 1):
        ders[k, :] *= r
        r *= p - k
    return ders


def eval_univariate(kv: KnotVector, xi: float, nders: int = 0):
    """Evaluate the basis at ``xi``: returns (span, ders) where ``ders`` has
    shape (nders+1, p+1) covering functions ``span-p .. span``."""
    if nders > kv.degree:
        raise ValueError("derivative order exceeds degree")
    span = find_span(kv, xi)
    return span, basis_ders(kv, span, xi, nders)


def find_spans(kv: KnotVector, xs: np.ndarray) -> np.ndarray:
    """Vectorized span lookup."""
    knots, p = kv.knots, kv.degree
    a, b = kv.domain
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < a) or np.any(xs > b):
        raise ValueError("evaluation points outside the knot range")
    spans = np.searchsorted(knots, xs, side="right") - 1
    return np.minimum(spans, kv.nfuncs - 1)


def basis_ders_many(kv: KnotVector, spans: np.ndarray, xs: np.ndarray,
                    nders: int) -> np.ndarray:
    """Vectorized Cox-de Boor: (npts, nders+1, p+1) basis/derivative table.

    Same recurrences as :func:`basis_ders` with the point axis vectorized;
    the j/r loops run over the (small) degree only.
    """
    knots, p = kv.knots, kv.degree
    m = len(xs)
    ndu = np.zeros((m, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = xs - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - xs
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, nders + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    a = np.zeros((m, 2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:, 0, :] = 0.0
        a[:, 0, 0] = 1.0
        a[:, 1, :] = 0.0
        for k in range(1, nders + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d = d + a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    rfac = p
    for k in range(1, nders + 1):
        ders[:, k, :] *= rfac
        rfac *= p - k
    return ders


def _insertion_matrix(kv: KnotVector, u: float) -> tuple[sp.csr_matrix, KnotVector]:
    """Single-knot (Boehm) insertion: returns (A, refined kv) with
    new_coeffs = A.T @ old_coeffs mapping so that the spline is unchanged."""
    knots, p = kv.knots, kv.degree
    n = kv.nfuncs
    k = int(np.searchsorted(knots, u, side="right")) - 1
    new_knots = np.insert(knots, k + 1, u)
    rows, cols, vals = [], [], []
    for i in range(n + 1):
        if i <= k - p:
            rows.append(i); cols.append(i); vals.append(1.0)
        elif i <= k:
            denom = knots[i + p] - knots[i]
            alpha = (u - knots[i]) / denom if denom > 0 else 0.0
            rows.append(i); cols.append(i); vals.append(alpha)
            rows.append(i - 1); cols.append(i); vals.append(1.0 - alpha)
        else:
            rows.append(i - 1); cols.append(i); vals.append(1.0)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n + 1))
    return A, KnotVector(p, new_knots)


def two_scale_matrix(coarse: KnotVector, fine: KnotVector) -> sp.csr_matrix:
    """Subdivision matrix S (ncoarse x nfine): coarse_i = sum_j S[i, j] fine_j.

    ``fine`` must contain the knots of ``coarse`` (here: its dyadic
    refinement). Built by repeated single-knot insertion, hence exact.
    """
    missing = _missing_knots(coarse, fine)
    S = sp.identity(coarse.nfuncs, format="csr")
    kv = coarse
    for u in missing:
        A, kv = _insertion_matrix(kv, u)
        S = S @ A
    if kv.nfuncs != fine.nfuncs or not np.array_equal(kv.knots, fine.knots):
        raise ValueError("fine knot vector is not a refinement of the coarse one")
    S.sort_indices()
    return S


def _missing_knots(coarse: KnotVector, fine: KnotVector) -> np.ndarray:
    ck = list(coarse.knots)
    out = []
    for u in fine.knots:
        if ck and ck[0] == u:
            ck.pop(0)
        else:
            out.append(u)
    if ck:
        raise ValueError("coarse knots not contained in fine knots")
    return np.array(out)


def two_scale_row(coarse: KnotVector, fine: KnotVector, i: int) -> list[tuple[int, float]]:
    """Sparse list [(fine index, coeff)] representing coarse function ``i``."""
    if not 0 <= i < coarse.nfuncs:
        raise IndexError("coarse function index out of range")
    S = two_scale_matrix(coarse, fine)
    row = S.getrow(i).tocoo()
    return sorted(zip(row.col.tolist(), row.data.tolist()))


@lru_cache(maxsize=32)
def gauss_points(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
