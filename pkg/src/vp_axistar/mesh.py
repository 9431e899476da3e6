"""Composite Gauss-Legendre radial meshes with exact moment integrals.

A ``RadialMesh`` partitions [0, r_max] into cells, each carrying q
Gauss-Legendre nodes.  Nodal data define a piecewise polynomial (degree
q-1 per cell, recovered through a modal Legendre transform), and all
integral functionals needed by the multipole machinery,

    lower:  integral( s^p f(s),    0 .. r )          (p >= 0)
    upper:  r^l * integral( s^(1-l) f(s), r .. rmax )

are returned as dense matrices acting on the nodal values.  The scaled
form of the upper integral keeps every intermediate bounded by
(r/s)^l <= 1, so negative powers down to s^-7 stay well conditioned.
Partial cells for the upper integral are split into geometrically
growing panels from r so the integrand varies by a bounded factor per
panel.
"""

from __future__ import annotations

import numpy as np

from .numerics import gauss_legendre, legendre_table, legendre_deriv_table

_PARTIAL_Q = 10  # nodes for partial-cell quadrature
_CELL_Q = 16  # nodes for cached full-cell moment integrals


class RadialMesh:
    def __init__(self, edges, q: int = 6):
        edges = np.asarray(edges, dtype=float)
        if edges[0] != 0.0 or np.any(np.diff(edges) <= 0):
            raise ValueError("edges must start at 0 and increase strictly")
        if q < 2:
            raise ValueError("need at least 2 nodes per cell")
        self.edges = edges
        self.q = q
        self.ncells = edges.size - 1
        self.r_max = float(edges[-1])

        ref = gauss_legendre(q)
        self._xg = ref.nodes
        self._wg = ref.weights
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        self.nodes = (mid[:, None] + half[:, None] * ref.nodes[None, :]).ravel()
        self.weights = (half[:, None] * ref.weights[None, :]).ravel()
        self.size = self.nodes.size
        self._half = half
        self._mid = mid

        # nodal -> modal (per-cell Legendre coefficients) transform
        ptab = legendre_table(q - 1, ref.nodes)  # (q, q)
        scale = (2.0 * np.arange(q) + 1.0) / 2.0
        self._modal = scale[:, None] * ptab * ref.weights[None, :]  # (q, q)

        self._moment_rows_cache: dict[float, np.ndarray] = {}

    # ---------------------------------------------------------------- cells

    def cell_of(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        k = np.searchsorted(self.edges, r, side="right") - 1
        return np.clip(k, 0, self.ncells - 1)

    def _ref_coord(self, r, k):
        return (r - self._mid[k]) / self._half[k]

    # ------------------------------------------------------------- sampling

    def interp_matrix(self, r, deriv: int = 0) -> np.ndarray:
        """Rows evaluating the piecewise polynomial (or its r-derivative) at r."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        k = self.cell_of(r)
        x = self._ref_coord(r, k)
        if deriv == 0:
            ptab = legendre_table(self.q - 1, x)  # (q, Q)
            rows_local = ptab.T @ self._modal  # (Q, q)
        elif deriv == 1:
            dtab = legendre_deriv_table(self.q - 1, x)
            rows_local = (dtab.T @ self._modal) / self._half[k][:, None]
        else:
            raise ValueError("deriv must be 0 or 1")
        out = np.zeros((r.size, self.size))
        cols = k[:, None] * self.q + np.arange(self.q)[None, :]
        np.put_along_axis(out, cols, rows_local, axis=1)
        return out

    # ------------------------------------------------------------ integrals

    def cell_moment_rows(self, p: float) -> np.ndarray:
        """(ncells, size) rows: row[c] . f  =  integral( s^p f(s), cell c ).

        For p < 0 the innermost cell (touching 0) gets a zero row; the
        scaled upper-integral path never uses it, covering that cell with
        query-anchored panels instead.
        """
        cached = self._moment_rows_cache.get(p)
        if cached is not None:
            return cached
        ref = gauss_legendre(_CELL_Q)
        out = np.zeros((self.ncells, self.size))
        for c in range(self.ncells):
            a, b = self.edges[c], self.edges[c + 1]
            if a == 0.0 and p < 0:
                continue
            s = 0.5 * (a + b) + 0.5 * (b - a) * ref.nodes
            w = 0.5 * (b - a) * ref.weights * s**p
            x = self._ref_coord(s, np.full(s.shape, c, dtype=int))
            rows_local = (legendre_table(self.q - 1, x).T @ self._modal)
            out[c, c * self.q : (c + 1) * self.q] = w @ rows_local
        self._moment_rows_cache[p] = out
        return out

    def total_matrix(self, p: float) -> np.ndarray:
        """(1, size) row: integral( s^p f(s), 0 .. r_max )."""
        return self.cell_moment_rows(p).sum(axis=0, keepdims=True)

    def _partial_rows(self, lo, hi, k, p: float, scale_r=None, ell: int = 0):
        """Rows for integral( s^p (scale_r/s)^ell f(s), lo .. hi ) on cell k."""
        Q = lo.size
        ref = gauss_legendre(_PARTIAL_Q)
        halfw = 0.5 * (hi - lo)
        s = (0.5 * (lo + hi))[:, None] + halfw[:, None] * ref.nodes[None, :]
        w = halfw[:, None] * ref.weights[None, :]
        w = w * s**p
        if ell:
            w = w * (scale_r[:, None] / s) ** ell
        x = self._ref_coord(s, k[:, None])
        ptab = legendre_table(self.q - 1, x.ravel()).reshape(self.q, Q, -1)
        rows_local = np.einsum("gq,mgq,mn->gn", w, ptab, self._modal)
        out = np.zeros((Q, self.size))
        cols = k[:, None] * self.q + np.arange(self.q)[None, :]
        np.put_along_axis(out, cols, rows_local, axis=1)
        return out

    def lower_matrix(self, p: float, r) -> np.ndarray:
        """(len(r), size) rows: integral( s^p f(s), 0 .. r ).  Needs p >= 0.

        Queries beyond r_max saturate at the full integral (the data is
        treated as zero outside the mesh).
        """
        if p < 0:
            raise ValueError("lower integrals require a nonnegative power")
        r = np.minimum(np.atleast_1d(np.asarray(r, dtype=float)), self.r_max)
        k = self.cell_of(r)
        prefix = np.concatenate(
            [np.zeros((1, self.size)), np.cumsum(self.cell_moment_rows(p), axis=0)]
        )
        out = prefix[k].copy()
        lo = self.edges[k]
        live = r > lo
        if np.any(live):
            out[live] += self._partial_rows(lo[live], r[live], k[live], p)
        return out

    def upper_scaled_matrix(self, ell: int, r) -> np.ndarray:
        """(len(r), size) rows: r^ell * integral( s^(1-ell) f(s), r .. r_max )."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros((r.size, self.size))
        if ell == 0:
            total = self.total_matrix(1.0)
            return np.broadcast_to(total, (r.size, self.size)) - self.lower_matrix(
                1.0, r
            )
        k = self.cell_of(r)
        hi_edge = self.edges[k + 1]

        # tail over full cells above the query's cell
        suffix = np.concatenate(
            [
                np.cumsum(self.cell_moment_rows(float(1 - ell))[::-1], axis=0)[::-1],
                np.zeros((1, self.size)),
            ]
        )
        pos = r > 0.0
        out[pos] = (r[pos] ** ell)[:, None] * suffix[k[pos] + 1]

        # in-cell part on [r, hi_edge], split into doubling panels from r
        lo = r.copy()
        live = pos & (lo < hi_edge)
        while np.any(live):
            hi = np.minimum(2.0 * lo[live], hi_edge[live])
            out[live] += self._partial_rows(
                lo[live], hi, k[live], 1.0, scale_r=r[live], ell=ell
            )
            lo[live] = hi
            live = live & (lo < hi_edge)
        return out


def aligned_mesh(
    r_max: float,
    knots,
    band: tuple[float, float] = (0.86, 1.14),
    band_cell: float = 0.02,
    q: int = 6,
) -> RadialMesh:
    """Mesh whose cell edges contain the given spline knots plus a
    refinement band around the free boundary at r = 1.

    Aligning edges with the knots lets piecewise-cubic data (the radial
    basis of the deformation fields) be represented exactly per cell.
    """
    knots = np.asarray(knots, dtype=float)
    edges = [knots[(knots >= 0.0) & (knots <= r_max)]]
    lo, hi = band
    hi = min(hi, r_max)
    if lo < hi:
        n = max(2, int(round((hi - lo) / band_cell)))
        edges.append(np.linspace(lo, hi, n + 1))
        edges.append(np.array([1.0]) if lo < 1.0 < hi else np.empty(0))
    edges.append(np.array([0.0, r_max]))
    merged = np.unique(np.concatenate(edges))
    # drop near-duplicate edges (degenerate cells break the modal transform)
    keep = [merged[0]]
    for e in merged[1:]:
        if e - keep[-1] > 1e-9:
            keep.append(e)
    keep[-1] = r_max
    return RadialMesh(np.asarray(keep), q=q)


def clustered_mesh(
    r_max: float,
    band: tuple[float, float] = (0.86, 1.14),
    band_cell: float = 0.02,
    coarse_cells_inner: int = 10,
    coarse_cells_outer: int = 8,
    q: int = 6,
) -> RadialMesh:
    """Mesh on [0, r_max] refined around the free-boundary band.

    A cell edge is placed exactly at r = 1, where the undeformed support
    ends, so the base-state density kink never sits inside a cell.
    """
    lo, hi = band
    if not (0.0 < lo < 1.0 < hi):
        raise ValueError("band must straddle r = 1")
    hi = min(hi, r_max)
    inner = np.linspace(0.0, lo, coarse_cells_inner + 1)
    nband = max(2, int(round((hi - lo) / band_cell)))
    fine = np.linspace(lo, hi, nband + 1)
    fine = np.unique(np.concatenate([fine, [1.0]]))
    parts = [inner, fine[1:]]
    if hi < r_max:
        outer = np.linspace(hi, r_max, coarse_cells_outer + 1)
        parts.append(outer[1:])
    return RadialMesh(np.concatenate(parts), q=q)
