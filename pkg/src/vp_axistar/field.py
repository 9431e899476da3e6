"""Axisymmetric scalar fields on the ball and their Newtonian potentials.

Densities are sampled on a composite-Gauss radial mesh times
Gauss-Legendre nodes in cos(theta).  The potential of an even,
reflection-symmetric density is assembled sector by sector from the
kernel expansion 1/|x-y| = sum_l (r_<^l / r_>^{l+1}) P_l, reducing each
Poisson solve to one-dimensional moment integrals

    I_l(r)      = integral( s^{l+2} sigma_l(s), 0..r )
    Vtil_l(r)   = r^l integral( s^{1-l} sigma_l(s), r..2 )
    v_l(r)      = -(4 pi / (2l+1)) [ r^{-(l+1)} I_l(r) + Vtil_l(r) ]

with V(r, theta) = sum_l v_l(r) P_l(cos theta).  All integrals are exact
for the mesh's piecewise-polynomial representation, so gradients and
Hessians are derivatives of the discrete representation itself.
"""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .geometry import DeformationField
from .mesh import RadialMesh, clustered_mesh
from .numerics import (
    LegendreBasis,
    legendre_deriv_table,
    legendre_second_deriv_table,
    legendre_table,
)
from .profiles import Profiles
from .spherical import RadialState

FIELD_R_MAX = 2.0


def polar_basis(node_count: int = 32) -> LegendreBasis:
    """Full discrete Legendre transform in cos(theta) (exactly invertible)."""
    return LegendreBasis(node_count - 1, node_count, even_only=False)


class AxiField:
    """Samples of an axisymmetric, reflection-symmetric field.

    ``moments`` carries the full discrete Legendre spectrum of the polar
    dependence, so values are exactly recoverable; the potential solver
    consumes only the retained even degrees.
    """

    def __init__(self, mesh: RadialMesh, basis: LegendreBasis, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.size, basis.node_count):
            raise ValueError("value grid shape mismatch")
        self.mesh = mesh
        self.basis = basis
        self.values = values
        self.moments = values @ basis.projection.T  # (N, lmax+1)

    @classmethod
    def from_function(cls, mesh, basis, fn) -> "AxiField":
        r = mesh.nodes[:, None]
        c = basis.nodes[None, :]
        return cls(mesh, basis, fn(r, c))

    def sector(self, l: int) -> np.ndarray:
        return self.moments[:, l]

    def reconstruction_error(self) -> float:
        recon = self.basis.evaluate(self.moments, self.basis.nodes)
        scale = max(np.abs(self.values).max(), 1e-300)
        return float(np.abs(recon - self.values).max() / scale)

    def odd_moment_fraction(self) -> float:
        scale = max(np.abs(self.moments).max(), 1e-300)
        return float(np.abs(self.moments[:, 1::2]).max() / scale)

    def sector_fraction(self, l: int) -> float:
        """Size of sector l relative to the monopole (truncation monitor)."""
        mono = np.abs(self.moments[:, 0]).max()
        if mono == 0.0:
            return 0.0
        return float(np.abs(self.moments[:, l]).max() / mono)


def density_from_state(
    gamma: float,
    field: DeformationField,
    base: RadialState,
    profiles: Profiles,
    mesh: RadialMesh,
    basis: LegendreBasis,
) -> AxiField:
    """rho(y) = h(gamma, r(y), U0(g^{-1}(y))) sampled on the grid."""
    field.require_admissible()
    r = mesh.nodes[:, None]
    c = basis.nodes[None, :]
    s = field.invert_radii(c, r)
    u = base.u0_at(s)
    rcyl = r * np.sqrt(1.0 - c**2)
    vals = profiles.h_eval(gamma, rcyl, u)
    return AxiField(mesh, basis, vals)


class SectorRows:
    """Dense functionals of the sector potentials at fixed radii.

    ``value[l]`` and ``dvdr[l]`` act on nodal sigma_l data and return
    v_l and dv_l/dr at the requested radii; rows are exact for the
    mesh representation, including radii beyond the mesh (exterior
    closed form) and r = 0 (finite limits).
    """

    def __init__(self, mesh: RadialMesh, degrees, radii):
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        self.radii = radii
        self.value: dict[int, np.ndarray] = {}
        self.dvdr: dict[int, np.ndarray] = {}
        pos = radii > 0.0
        rp = radii[pos]
        for l in degrees:
            k_l = 4.0 * np.pi / (2 * l + 1)
            lower = mesh.lower_matrix(float(l + 2), rp)
            upper = mesh.upper_scaled_matrix(int(l), rp)
            amat = rp[:, None] ** (-(l + 1)) * lower
            val = np.zeros((radii.size, mesh.size))
            der = np.zeros((radii.size, mesh.size))
            val[pos] = -k_l * (amat + upper)
            der[pos] = (k_l / rp[:, None]) * ((l + 1) * amat - l * upper)
            if l == 0 and np.any(~pos):
                val[~pos] = -k_l * mesh.total_matrix(1.0)
            self.value[int(l)] = val
            self.dvdr[int(l)] = der


class PotentialField:
    """Fast global evaluator for V, grad V, and the Hessian.

    Sector profiles and their first two derivatives are tabulated exactly
    on a dense radius table and interpolated with cubic Hermite splines
    whose slopes are the exact next derivatives; outside the source ball
    the closed multipole form takes over.  The far field satisfies
    V(x) |x| -> -(total mass).
    """

    SMALL_R = 1e-9

    def __init__(self, density: AxiField, max_degree: int = 8, table_n: int = 1200):
        mesh = density.mesh
        self.mesh = mesh
        self.max_degree = max_degree
        self.degrees = np.arange(0, max_degree + 1, 2)
        self.r_source = mesh.r_max

        rt = np.unique(
            np.concatenate(
                [np.linspace(0.0, mesh.r_max, table_n + 1), mesh.edges]
            )
        )
        self._rt = rt
        pos = rt > 0.0
        rp = rt[pos]

        self._splines = {}
        self._full_lower = {}
        self.sigma = {}
        for l in self.degrees:
            sig = density.sector(l)
            k_l = 4.0 * np.pi / (2 * l + 1)
            lower = mesh.lower_matrix(float(l + 2), rp) @ sig
            upper = mesh.upper_scaled_matrix(int(l), rp) @ sig
            amat = rp ** (-(l + 1)) * lower
            sig_at = mesh.interp_matrix(rt) @ sig
            dsig_at = mesh.interp_matrix(rt, deriv=1) @ sig

            v = np.empty(rt.size)
            dv = np.empty(rt.size)
            d2v = np.empty(rt.size)
            d3v = np.empty(rt.size)
            v[pos] = -k_l * (amat + upper)
            dv[pos] = (k_l / rp) * ((l + 1) * amat - l * upper)
            d2v[pos] = (
                -(k_l / rp**2) * ((l + 1) * (l + 2) * amat + l * (l - 1) * upper)
                + 4.0 * np.pi * sig_at[pos]
            )
            d3v[pos] = (
                (k_l / rp**3)
                * (
                    (l + 1) * (l + 2) * (l + 3) * amat
                    - l * (l - 1) * (l - 2) * upper
                )
                - k_l * (4 * l + 2) * sig_at[pos] / rp
                + 4.0 * np.pi * dsig_at[pos]
            )
            if np.any(~pos):
                i1 = np.argmax(pos)  # first positive radius
                v[~pos] = (
                    -k_l * float(mesh.total_matrix(1.0) @ sig) if l == 0 else 0.0
                )
                dv[~pos] = 0.0
                d2v[~pos] = d2v[i1]
                d3v[~pos] = d3v[i1]
            self._splines[int(l)] = (
                CubicHermiteSpline(rt, v, dv),
                CubicHermiteSpline(rt, dv, d2v),
                CubicHermiteSpline(rt, d2v, d3v),
            )
            self._full_lower[int(l)] = float(mesh.lower_matrix(float(l + 2), mesh.r_max) @ sig)
            self.sigma[int(l)] = sig

        self.total_mass = 4.0 * np.pi * float(
            mesh.lower_matrix(2.0, mesh.r_max) @ density.sector(0)
        )
        self.value_at_origin = float(self.sector_values(np.array([0.0]))[0][0])

    # ------------------------------------------------------------- sectors

    def sector_values(self, r, deriv: int = 0):
        """List over retained degrees of v_l (or derivative) at radii r."""
        r = np.asarray(r, dtype=float)
        inside = r <= self.r_source
        rc = np.clip(r, 0.0, self.r_source)
        out = []
        for l in self.degrees:
            k_l = 4.0 * np.pi / (2 * l + 1)
            full = self._full_lower[int(l)]
            vals = self._splines[int(l)][deriv](rc)
            if np.any(~inside):
                re = np.where(inside, 1.0, r)
                ext = {
                    0: -k_l * full * re ** (-(l + 1)),
                    1: k_l * (l + 1) * full * re ** (-(l + 2)),
                    2: -k_l * (l + 1) * (l + 2) * full * re ** (-(l + 3)),
                }[deriv]
                vals = np.where(inside, vals, ext)
            out.append(vals)
        return out

    def _polar(self, points):
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        pts = np.atleast_2d(points)
        r = np.linalg.norm(pts, axis=1)
        with np.errstate(invalid="ignore"):
            c = np.where(r > 0.0, pts[:, 2] / np.maximum(r, self.SMALL_R), 1.0)
        return single, pts, r, np.clip(c, -1.0, 1.0)

    # ---------------------------------------------------------- evaluation

    def potential_eval(self, points):
        single, _, r, c = self._polar(points)
        vl = self.sector_values(r)
        ptab = legendre_table(self.max_degree, c)[self.degrees]
        out = sum(v * p for v, p in zip(vl, ptab))
        return float(out[0]) if single else out

    def potential_grad(self, points):
        single, pts, r, c = self._polar(points)
        safe_r = np.maximum(r, self.SMALL_R)
        unit = np.where(
            r[:, None] > 0.0, pts / safe_r[:, None], np.array([0.0, 0.0, 1.0])
        )
        vl = self.sector_values(r)
        dvl = self.sector_values(r, deriv=1)
        ptab = legendre_table(self.max_degree, c)[self.degrees]
        dptab = legendre_deriv_table(self.max_degree, c)[self.degrees]
        f_r = sum(d * p for d, p in zip(dvl, ptab))
        f_c = sum(v * dp for v, dp in zip(vl, dptab))
        e3 = np.array([0.0, 0.0, 1.0])
        grad_c = (e3[None, :] - c[:, None] * unit) / safe_r[:, None]
        grad = f_r[:, None] * unit + f_c[:, None] * grad_c
        grad[r == 0.0] = 0.0
        return grad[0] if single else grad

    def potential_hessian(self, points):
        single, pts, r, c = self._polar(points)
        r = np.maximum(r, self.SMALL_R)
        unit = pts / r[:, None]
        c = np.clip(unit[:, 2], -1.0, 1.0)
        vl = self.sector_values(r)
        dvl = self.sector_values(r, deriv=1)
        d2vl = self.sector_values(r, deriv=2)
        ptab = legendre_table(self.max_degree, c)[self.degrees]
        dptab = legendre_deriv_table(self.max_degree, c)[self.degrees]
        d2ptab = legendre_second_deriv_table(self.max_degree, c)[self.degrees]
        f_r = sum(d * p for d, p in zip(dvl, ptab))
        f_c = sum(v * dp for v, dp in zip(vl, dptab))
        f_rr = sum(d2 * p for d2, p in zip(d2vl, ptab))
        f_rc = sum(d * dp for d, dp in zip(dvl, dptab))
        f_cc = sum(v * d2p for v, d2p in zip(vl, d2ptab))

        e3 = np.zeros((r.size, 3))
        e3[:, 2] = 1.0
        gc = (e3 - c[:, None] * unit) / r[:, None]  # grad of cos(theta)
        uu = unit[:, :, None] * unit[:, None, :]
        eye = np.eye(3)[None, :, :]
        ugc = unit[:, :, None] * gc[:, None, :]
        hess_c = -(
            gc[:, :, None] * unit[:, None, :]
            + ugc
            + c[:, None, None] * (eye - uu)
        ) / r[:, None, None]
        hess = (
            f_rr[:, None, None] * uu
            + f_rc[:, None, None] * (ugc + np.swapaxes(ugc, 1, 2))
            + f_cc[:, None, None] * gc[:, :, None] * gc[:, None, :]
            + (f_r / r)[:, None, None] * (eye - uu)
            + f_c[:, None, None] * hess_c
        )
        return hess[0] if single else hess


def solve_potential(density: AxiField, max_degree: int = 8) -> PotentialField:
    return PotentialField(density, max_degree=max_degree)


def potential_eval(pot: PotentialField, point):
    return pot.potential_eval(point)


def potential_grad(pot: PotentialField, point):
    return pot.potential_grad(point)


def potential_hessian(pot: PotentialField, point):
    return pot.potential_hessian(point)


def default_field_mesh() -> RadialMesh:
    return clustered_mesh(FIELD_R_MAX)
