"""The deformation operator, its derivative, and Newton continuation.

For an admissible deformation zeta and rotation strength gamma the
operator is evaluated through the potential identity

    T(gamma, zeta)(x) = U0(x) - V(g(x)) - U0(0) + V(0),

with V the multipole potential of rho(y) = h(gamma, r(y), U0(g^{-1}(y))).
Its derivative in a direction xi combines the potential W of the density

    sigma(y) = dh/du (gamma, r(y), U(y)) * U0'(s) / (1 + dzeta/ds) * xi(s w),
    s = |g^{-1}(y)|,  w = y/|y|,

with the transport term, [dT xi](x) = W(g(x)) - W(0) - dV/dr(g(x)) xi(x).
Everything is discretized over even Legendre sectors times radial
collocation values, so the Newton system is small and dense; the
Jacobian at the spherical base state block-diagonalizes into sectors
where it equals -U0' (id - K) with K the compact kernel operator.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import lu_factor, lu_solve, svdvals

from .field import AxiField, SectorRows, polar_basis
from .geometry import AdmissibilityError, DeformationField
from .mesh import aligned_mesh
from .numerics import gauss_legendre, legendre_deriv_table, legendre_table
from .profiles import Profiles
from .spherical import RadialState


class NewtonError(RuntimeError):
    pass


class ResolutionError(RuntimeError):
    """Raised when the retained Legendre band no longer holds the density."""


@dataclass
class OperatorOutput:
    """T (or dT) sampled on the collocation grid.

    ``values[k, j]`` lives at radius r_k, polar node c_j; ``moments`` are
    the even-sector projections; the origin value is zero by the gauge
    construction.  ``y_norm`` is sup |values| / r^2 (the value form of
    the Y-norm); for full operator evaluations ``y_norm_grad`` also
    carries sup |grad T| / r over the sample.
    """

    radii: np.ndarray
    values: np.ndarray
    moments: np.ndarray
    y_norm: float
    y_norm_grad: float | None = None


@dataclass
class JacobianMatrix:
    matrix: np.ndarray
    degrees: np.ndarray
    radii: np.ndarray

    def sector_block(self, l: int) -> np.ndarray:
        i = int(np.where(self.degrees == l)[0][0])
        n = self.radii.size
        return self.matrix[i * n : (i + 1) * n, i * n : (i + 1) * n]

    def off_sector_fraction(self) -> float:
        n = self.radii.size
        nl = self.degrees.size
        blocks = self.matrix.reshape(nl, n, nl, n)
        on = max(
            np.abs(blocks[i, :, i, :]).max() for i in range(nl)
        )
        off = 0.0
        for i in range(nl):
            for j in range(nl):
                if i != j:
                    off = max(off, np.abs(blocks[i, :, j, :]).max())
        return off / on


@dataclass
class ContinuationStep:
    gamma: float
    field: DeformationField
    iterations: int
    residual: float
    x_norm: float


@dataclass
class ContinuationResult:
    steps: list[ContinuationStep]
    reached_gamma: float
    truncated: bool
    failure_reason: str | None
    sector_min_singular: dict[int, float]
    sector_norms: dict[int, float]
    dzeta_dgamma: float | None = None

    @property
    def fields(self):
        return [(s.gamma, s.field) for s in self.steps]


class DeformationOperator:
    """Discretization of T bound to one base state and profile set."""

    def __init__(
        self,
        base: RadialState,
        profiles: Profiles,
        max_degree: int = 8,
        n_radial: int = 64,
        polar_nodes: int = 32,
        sector_tail_limit: float = 1e-4,
    ):
        self.base = base
        self.profiles = profiles
        self.max_degree = max_degree
        self.degrees = np.arange(0, max_degree + 1, 2)
        self.basis = polar_basis(polar_nodes)
        self.sector_tail_limit = sector_tail_limit

        self.template = DeformationField.zeros(max_degree, n_radial)
        self.collocation = self.template.radial_nodes[1:]
        # cell edges aligned with the radial spline knots: the cardinal
        # basis is then exactly piecewise cubic on every cell
        self.mesh = aligned_mesh(2.0, self.template.radial_nodes)
        self._cardinal = CubicSpline(
            self.template.radial_nodes, np.eye(self.template.radial_nodes.size)
        )

        c = self.basis.nodes
        self.proj = self.basis.projection[self.degrees]  # (n_l, ntheta)
        self._ptab_c = legendre_table(max_degree, c)[self.degrees]
        self._dptab_c = legendre_deriv_table(max_degree, c)[self.degrees]
        self._sin_c = np.sqrt(1.0 - c**2)

        self._k_matrices: dict[int, np.ndarray] | None = None

    # ------------------------------------------------------------------ K

    def zero_field(self) -> DeformationField:
        return DeformationField.zeros(self.max_degree, self.collocation.size)

    def _basis_matrix(self, s) -> np.ndarray:
        """Cardinal radial-spline basis (pinned at 0) evaluated at s."""
        vals = self._cardinal(np.clip(s, 0.0, self.template.radial_nodes[-1]))
        return vals[..., 1:]

    def k_matrices(self) -> dict[int, np.ndarray]:
        """Dense sector matrices of the compact operator K."""
        if self._k_matrices is not None:
            return self._k_matrices
        mesh_k = aligned_mesh(1.0, self.template.radial_nodes)
        s = mesh_k.nodes
        data = self.base.rho0_prime_at(s)[:, None] * self._basis_matrix(s)
        rc = self.collocation
        inv_up = 1.0 / self.base.u0_prime_at(rc)
        out = {}
        for l in self.degrees:
            lower = mesh_k.lower_matrix(float(l + 2), rc)
            upper = mesh_k.upper_scaled_matrix(int(l), rc)
            rows = rc[:, None] ** (-(l + 1)) * lower + upper
            if l == 0:
                rows = rows - mesh_k.total_matrix(1.0)
            kmat = -(4.0 * np.pi / (2 * l + 1)) * inv_up[:, None] * (rows @ data)
            out[int(l)] = kmat
        self._k_matrices = out
        return out

    def k_volterra_l0(self) -> np.ndarray:
        """Independent l = 0 path: the Volterra form on [0, r].

        Composite Gauss panels split at the spline knots (and at r), so
        the cardinal-basis kernel is integrated exactly.
        """
        rc = self.collocation
        gl = gauss_legendre(10)
        out = np.zeros((rc.size, rc.size))
        knots = self.template.radial_nodes
        for i, r in enumerate(rc):
            hi = min(r, 1.0)
            edges = np.unique(np.concatenate([knots[knots < hi], [hi]]))
            row = np.zeros(rc.size)
            for a, b in zip(edges[:-1], edges[1:]):
                sq = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes
                w = 0.5 * (b - a) * gl.weights
                kern = self.base.rho0_prime_at(sq) * sq * (sq - r)
                row += (w * kern) @ self._basis_matrix(sq)
            out[i] = -(4.0 * np.pi / (r * self.base.u0_prime_at(r))) * row
        return out

    def apply_K(self, xi: DeformationField) -> DeformationField:
        """Sector-wise K xi on the collocation grid (0 pinned at r = 0)."""
        km = self.k_matrices()
        coeffs = np.zeros_like(xi.coeffs)
        vec = xi.coeffs[:, 1:]
        for i, l in enumerate(self.degrees):
            coeffs[i, 1:] = km[int(l)] @ vec[i]
        return xi.with_coeffs(coeffs)

    def sector_norms(self) -> dict[int, float]:
        """Max-row-sum (sup-norm) estimates of |K_l|."""
        return {
            l: float(np.abs(m).sum(axis=1).max()) for l, m in self.k_matrices().items()
        }

    def sector_min_singular(self) -> dict[int, float]:
        return {
            l: float(svdvals(np.eye(m.shape[0]) - m).min())
            for l, m in self.k_matrices().items()
        }

    def apply_L0(self, xi: DeformationField) -> np.ndarray:
        """L0 xi = -U0' (id - K) xi as sector data at the collocation radii."""
        kxi = self.apply_K(xi)
        up = self.base.u0_prime_at(self.collocation)
        return -up[None, :] * (xi.coeffs[:, 1:] - kxi.coeffs[:, 1:])

    def solve_L0(self, rhs_sectors: np.ndarray) -> DeformationField:
        """Solve L0 xi = g sector by sector (g given at collocation radii)."""
        km = self.k_matrices()
        up = self.base.u0_prime_at(self.collocation)
        coeffs = np.zeros((self.degrees.size, self.collocation.size + 1))
        for i, l in enumerate(self.degrees):
            q = -rhs_sectors[i] / up
            coeffs[i, 1:] = np.linalg.solve(
                np.eye(self.collocation.size) - km[int(l)], q
            )
        return self.template.with_coeffs(coeffs)

    # ------------------------------------------------------------- context

    def _context(self, gamma: float, field: DeformationField) -> dict:
        field.require_admissible()
        c = self.basis.nodes
        r_mesh = self.mesh.nodes

        s = field.invert_radii(c[None, :], r_mesh[:, None])
        slope = 1.0 + field.ray_values(s, c[None, :], deriv=1)
        u = self.base.u0_at(s)
        rcyl = r_mesh[:, None] * self._sin_c[None, :]
        rho_vals = self.profiles.h_eval(gamma, rcyl, u)
        rho = AxiField(self.mesh, self.basis, rho_vals)
        tail = rho.sector_fraction(self.max_degree)
        if tail > self.sector_tail_limit:
            raise ResolutionError(
                f"sector l={self.max_degree} holds {tail:.2e} of the monopole; "
                "raise the retained degree or the polar resolution"
            )
        sigma_pref = (
            self.profiles.h_du(gamma, rcyl, u)
            * self.base.u0_prime_at(s)
            / slope
        )

        rc = self.collocation
        zeta_c = field.ray_values(rc[:, None], c[None, :])
        r_pt = rc[:, None] + zeta_c
        radii_all = np.concatenate([[0.0], r_pt.ravel()])
        rows = SectorRows(self.mesh, self.degrees, radii_all)

        sig = {int(l): rho.sector(int(l)) for l in self.degrees}
        npts = rc.size * c.size
        v_pt = np.zeros(npts)
        dv_pt = np.zeros(npts)
        v0 = 0.0
        ptab_pts = np.tile(self._ptab_c, (1, rc.size))  # (n_l, npts), k-major
        for i, l in enumerate(self.degrees):
            vl = rows.value[int(l)] @ sig[int(l)]
            dvl = rows.dvdr[int(l)] @ sig[int(l)]
            v0 += vl[0]
            v_pt += vl[1:] * ptab_pts[i]
            dv_pt += dvl[1:] * ptab_pts[i]
        return {
            "gamma": gamma,
            "field": field,
            "s": s,
            "slope": slope,
            "rho": rho,
            "sigma_pref": sigma_pref,
            "rows": rows,
            "r_pt": r_pt,
            "zeta_c": zeta_c,
            "v_pt": v_pt.reshape(rc.size, c.size),
            "dv_pt": dv_pt.reshape(rc.size, c.size),
            "v0": float(v0),
            "sig": sig,
        }

    # ----------------------------------------------------------- operator

    def _package(self, values: np.ndarray, grad_norm: float | None = None):
        rc = self.collocation
        moments = (values @ self.proj.T).T  # (n_l, nrc)
        y_norm = float(np.abs(values / rc[:, None] ** 2).max())
        return OperatorOutput(rc, values, moments, y_norm, grad_norm)

    def apply_T(self, gamma: float, field: DeformationField) -> OperatorOutput:
        ctx = self._context(gamma, field)
        return self._apply_T_from_context(ctx)

    def _apply_T_from_context(self, ctx) -> OperatorOutput:
        rc = self.collocation
        c = self.basis.nodes
        u0_c = self.base.u0_at(rc)
        u0_0 = self.base.u0_at(0.0)
        values = u0_c[:, None] - ctx["v_pt"] - u0_0 + ctx["v0"]

        # gradient-based Y-norm: grad T = grad U0 - (Dg)^T grad V(g(x))
        field = ctx["field"]
        zl = field.sector_values(rc)  # (n_l, nrc)
        dz = field.sector_values(rc, deriv=1)
        a = np.einsum("lk,lj->kj", dz, self._ptab_c)
        b = np.einsum("lk,lj->kj", zl / rc[None, :], self._dptab_c)
        f_r = ctx["dv_pt"]
        # f_c at the shifted points
        sig = ctx["sig"]
        rows = ctx["rows"]
        f_c = np.zeros(rc.size * c.size)
        dptab_pts = np.tile(self._dptab_c, (1, rc.size))
        for i, l in enumerate(self.degrees):
            vl = rows.value[int(l)] @ sig[int(l)]
            f_c += vl[1:] * dptab_pts[i]
        f_c = f_c.reshape(rc.size, c.size)
        w_r = f_r
        w_m = f_c / ctx["r_pt"] * self._sin_c[None, :]
        zor = ctx["zeta_c"] / rc[:, None]
        grad_r = self.base.u0_prime_at(rc)[:, None] - w_r * (1.0 + a)
        grad_m = -(w_m * (1.0 + zor) + b * self._sin_c[None, :] * w_r)
        grad_norm = float(
            (np.hypot(grad_r, grad_m) / rc[:, None]).max()
        )
        return self._package(values, grad_norm)

    def apply_dT(
        self, gamma: float, field: DeformationField, direction: DeformationField
    ) -> OperatorOutput:
        ctx = self._context(gamma, field)
        return self._apply_dT_from_context(ctx, direction)

    def _apply_dT_from_context(self, ctx, direction: DeformationField) -> OperatorOutput:
        c = self.basis.nodes
        rc = self.collocation
        xi_pull = direction.ray_values(ctx["s"], c[None, :])
        sigma = AxiField(self.mesh, self.basis, ctx["sigma_pref"] * xi_pull)
        rows = ctx["rows"]
        w_pt = np.zeros(rc.size * c.size)
        w0 = 0.0
        ptab_pts = np.tile(self._ptab_c, (1, rc.size))
        for i, l in enumerate(self.degrees):
            wl = rows.value[int(l)] @ sigma.sector(int(l))
            w0 += wl[0]
            w_pt += wl[1:] * ptab_pts[i]
        w_pt = w_pt.reshape(rc.size, c.size)
        xi_c = direction.ray_values(rc[:, None], c[None, :])
        values = w_pt - w0 - ctx["dv_pt"] * xi_c
        return self._package(values)

    def assemble_jacobian(self, gamma: float, field: DeformationField) -> JacobianMatrix:
        ctx = self._context(gamma, field)
        return self._assemble_from_context(ctx)

    def _assemble_from_context(self, ctx) -> JacobianMatrix:
        rc = self.collocation
        c = self.basis.nodes
        n_l = self.degrees.size
        nrc = rc.size
        npts = nrc * c.size
        rows = ctx["rows"]

        bval = self._basis_matrix(ctx["s"])  # (N, ntheta, nrc)
        jac = np.zeros((n_l, nrc, n_l, nrc))
        ptab_pts = np.tile(self._ptab_c, (1, nrc))

        for ib, lb in enumerate(self.degrees):
            a = ctx["sigma_pref"][:, :, None] * self._ptab_c[ib][None, :, None] * bval
            mom = np.einsum("lj,njb->lnb", self.proj, a)  # (n_l, N, nrc)
            w_pt = np.zeros((npts, nrc))
            w0 = np.zeros(nrc)
            for i, l in enumerate(self.degrees):
                wl = rows.value[int(l)] @ mom[i]  # (1+npts, nrc)
                w0 += wl[0]
                w_pt += wl[1:] * ptab_pts[i][:, None]
            t1 = w_pt.reshape(nrc, c.size, nrc)
            block = np.einsum("lj,kjb->lkb", self.proj, t1)
            block[0] -= w0[None, :]
            jac[:, :, ib, :] = block

        # transport term: diagonal in the collocation radius
        d2 = np.einsum("lj,kj,bj->lbk", self.proj, ctx["dv_pt"], self._ptab_c)
        for ib in range(n_l):
            for i in range(n_l):
                jac[i, np.arange(nrc), ib, np.arange(nrc)] -= d2[i, ib]

        return JacobianMatrix(
            jac.reshape(n_l * nrc, n_l * nrc), self.degrees, rc
        )

    # ------------------------------------------------------------- solvers

    def newton_solve(
        self,
        gamma: float,
        initial: DeformationField,
        tol: float = 1e-7,
        max_iter: int = 12,
    ) -> tuple[DeformationField, dict]:
        """Damped Newton iteration on the sector-collocation coefficients.

        Convergence is declared on the gradient-form Y-norm of T; every
        iterate is re-gated for admissibility.
        """
        field = initial
        history = []
        for it in range(max_iter + 1):
            ctx = self._context(gamma, field)
            out = self._apply_T_from_context(ctx)
            res = out.y_norm_grad
            history.append(res)
            if res <= tol:
                return field, {"iterations": it, "residual": res, "history": history}
            if it == max_iter:
                raise NewtonError(
                    f"no convergence in {max_iter} iterations "
                    f"(residual {res:.3e}, tol {tol:.1e})"
                )
            jac = self._assemble_from_context(ctx)
            lu = lu_factor(jac.matrix)
            step = lu_solve(lu, -out.moments.ravel())
            vec = field.to_vector()
            scale = 1.0
            for _ in range(6):
                trial = field.from_vector(vec + scale * step)
                if trial.is_admissible():
                    trial_out = self.apply_T(gamma, trial)
                    if trial_out.y_norm_grad < res or scale < 0.2:
                        field = trial
                        break
                scale *= 0.5
            else:
                raise AdmissibilityError(
                    "Newton step left the admissible set at all damping levels"
                )
        raise NewtonError("unreachable")

    def continue_in_gamma(
        self,
        gamma_max: float,
        steps: int,
        tol: float = 1e-7,
        max_iter: int = 8,
        measure_gamma_slope: bool = False,
    ) -> ContinuationResult:
        """Predictor-corrector continuation from gamma = 0.

        The predictor is the previous solution (secant extrapolation from
        the two previous ones when available); failures truncate the
        family at the last good gamma, which is reported as the practical
        continuation range.
        """
        if steps < 1:
            raise ValueError("need at least one continuation step")
        gammas = np.linspace(0.0, gamma_max, steps + 1)
        out: list[ContinuationStep] = []
        failure = None
        prev_vec = None
        prev_prev = None
        for i, g in enumerate(gammas):
            if prev_vec is None:
                guess = self.zero_field()
            elif prev_prev is None:
                guess = self.template.from_vector(prev_vec)
            else:
                guess = self.template.from_vector(2.0 * prev_vec - prev_prev)
                if not guess.is_admissible():
                    guess = self.template.from_vector(prev_vec)
            try:
                sol, info = self.newton_solve(float(g), guess, tol=tol, max_iter=max_iter)
            except (NewtonError, AdmissibilityError, ResolutionError) as exc:
                failure = f"{type(exc).__name__} at gamma={g:.6g}: {exc}"
                break
            out.append(
                ContinuationStep(
                    gamma=float(g),
                    field=sol,
                    iterations=info["iterations"],
                    residual=info["residual"],
                    x_norm=sol.x_norm_estimate(),
                )
            )
            prev_prev = prev_vec
            prev_vec = sol.to_vector()

        result = ContinuationResult(
            steps=out,
            reached_gamma=out[-1].gamma if out else 0.0,
            truncated=failure is not None,
            failure_reason=failure,
            sector_min_singular=self.sector_min_singular(),
            sector_norms=self.sector_norms(),
        )
        if measure_gamma_slope and len(out) >= 2:
            # difference quotient |d zeta / d gamma| between the last steps,
            # reported without asserting smoothness in gamma
            a, b = out[-2], out[-1]
            dg = b.gamma - a.gamma
            if dg > 0:
                dv = b.field.to_vector() - a.field.to_vector()
                result.dzeta_dgamma = float(np.abs(dv).max() / dg)
        return result
