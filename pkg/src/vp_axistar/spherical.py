"""Spherically symmetric polytropic base state with unit support radius.

The radial potential equation for y = E0 - U,

    (1/r^2) (r^2 y')' = -4 pi c_mu y_+^(mu + 3/2),

is shot outward from y(0) = 1, the first zero R located by event
detection, and the solution rescaled through the invariance
y_lambda(r) = lambda^(2/(mu+1/2)) y(lambda r) so the support radius
becomes exactly 1.  The additive gauge is fixed by U -> 0 at infinity,
which forces E0 = -M with M the total mass.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .profiles import MU_MAX, MU_MIN, polytrope_density_constant

R_OUT_DEFAULT = 4.0


class BaseStateError(RuntimeError):
    pass


@dataclass
class RadialState:
    """Grids of the base state plus interpolants rebuilt on construction."""

    r_grid: np.ndarray
    rho0: np.ndarray
    u0: np.ndarray
    u0_prime: np.ndarray
    e0: float
    mass: float
    mu: float
    nr: int
    tol: float

    def __post_init__(self):
        self.r_grid = np.asarray(self.r_grid, dtype=float)
        self.rho0 = np.asarray(self.rho0, dtype=float)
        self.u0 = np.asarray(self.u0, dtype=float)
        self.u0_prime = np.asarray(self.u0_prime, dtype=float)
        inside = self.r_grid <= 1.0
        r_in = self.r_grid[inside]
        # U0'' from the field equation pins Hermite slopes exactly
        c_mu = polytrope_density_constant(self.mu)
        u0_second = np.empty_like(r_in)
        u0_second[0] = (4.0 * np.pi / 3.0) * self.rho0[0]
        u0_second[1:] = (
            4.0 * np.pi * self.rho0[inside][1:] - 2.0 * self.u0_prime[inside][1:] / r_in[1:]
        )
        self._u0_in = CubicHermiteSpline(r_in, self.u0[inside], self.u0_prime[inside])
        self._u0_prime_in = CubicHermiteSpline(r_in, self.u0_prime[inside], u0_second)
        self._c_mu = c_mu

    # ------------------------------------------------------------- evaluators

    def u0_at(self, radius):
        r = np.asarray(radius, dtype=float)
        out = np.where(r <= 1.0, self._u0_in(np.clip(r, 0.0, 1.0)), -self.mass / np.maximum(r, 1.0))
        return out if out.ndim else float(out)

    def u0_prime_at(self, radius):
        r = np.asarray(radius, dtype=float)
        out = np.where(
            r <= 1.0,
            self._u0_prime_in(np.clip(r, 0.0, 1.0)),
            self.mass / np.maximum(r, 1.0) ** 2,
        )
        return out if out.ndim else float(out)

    def rho0_at(self, radius):
        """Density through the microscopic law c_mu (E0 - U0)_+^(mu+3/2).

        Monotone by construction (composition of monotone maps), and as
        accurate as the potential interpolant itself.
        """
        r = np.asarray(radius, dtype=float)
        gap = np.maximum(self.e0 - self.u0_at(r), 0.0)
        out = np.where(r < 1.0, self._c_mu * gap ** (self.mu + 1.5), 0.0)
        return out if out.ndim else float(out)

    def rho0_prime_at(self, radius):
        """d rho0 / dr from the microscopic law rho0 = c_mu (E0-U0)^(mu+3/2)."""
        r = np.asarray(radius, dtype=float)
        gap = np.maximum(self.e0 - self.u0_at(r), 0.0)
        out = np.where(
            r < 1.0,
            -self._c_mu * (self.mu + 1.5) * gap ** (self.mu + 0.5) * self.u0_prime_at(r),
            0.0,
        )
        return out if out.ndim else float(out)

    # ---------------------------------------------------------- serialization

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        header = {
            "schema": "vp-axistar/1",
            "kind": "radial-state",
            "mu": self.mu,
            "e0": self.e0,
            "mass": self.mass,
            "nr": self.nr,
            "tol": self.tol,
        }
        (directory / "base_state.json").write_text(
            json.dumps(header, sort_keys=True, indent=2) + "\n"
        )
        with open(directory / "base_state.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["r", "rho0", "u0", "u0_prime"])
            for row in zip(self.r_grid, self.rho0, self.u0, self.u0_prime):
                writer.writerow([format(v, ".17g") for v in row])

    @classmethod
    def load(cls, directory) -> "RadialState":
        directory = Path(directory)
        header = json.loads((directory / "base_state.json").read_text())
        data = np.loadtxt(directory / "base_state.csv", delimiter=",", skiprows=1)
        return cls(
            r_grid=data[:, 0],
            rho0=data[:, 1],
            u0=data[:, 2],
            u0_prime=data[:, 3],
            e0=header["e0"],
            mass=header["mass"],
            mu=header["mu"],
            nr=header["nr"],
            tol=header["tol"],
        )


def _interior_grid(nr: int) -> np.ndarray:
    """Chebyshev-clustered radii on [0, 1]: dense at the center and the
    free boundary, where the solution is least regular."""
    i = np.arange(nr)
    return 0.5 * (1.0 - np.cos(np.pi * i / (nr - 1)))


def solve_base_state(
    mu: float,
    nr: int | None = None,
    tol: float = 1e-12,
    r_out: float = R_OUT_DEFAULT,
) -> RadialState:
    """Shoot, rescale to support radius 1, and sample the base state."""
    if not (MU_MIN < mu < MU_MAX):
        raise ValueError(f"polytrope exponent must lie in ({MU_MIN}, {MU_MAX})")
    if nr is None:
        # near-critical exponents concentrate the mass at the center and
        # need a denser grid to hold the 1e-8 integral identity
        nr = 512 if mu <= 2.6 else 2048
    if r_out < 4.0:
        raise ValueError("outer radius must be at least 4")
    if mu < 1.0:
        warnings.warn(
            "rho0' degenerates at the free boundary for mu < 1; integral "
            "identities remain the operative regularity checks",
            stacklevel=2,
        )
    c_mu = polytrope_density_constant(mu)
    amp = 4.0 * np.pi * c_mu
    n_poly = mu + 1.5

    def rhs(r, yz):
        y, z = yz
        ypos = max(y, 0.0)
        return [z / (r * r), -amp * r * r * ypos**n_poly]

    def boundary(r, yz):
        return yz[0]

    boundary.terminal = True
    boundary.direction = -1

    r0 = 1e-8
    y0 = 1.0 - amp / 6.0 * r0**2
    z0 = -amp / 3.0 * r0**3
    sol = solve_ivp(
        rhs,
        (r0, 100.0),
        [y0, z0],
        method="DOP853",
        rtol=min(tol, 1e-12),
        atol=1e-14,
        dense_output=True,
        events=boundary,
    )
    if not sol.t_events[0].size:
        raise BaseStateError(
            "no zero of the shooting profile found: non-compact support"
        )
    big_r = float(sol.t_events[0][0])

    # rescale so the first zero lands exactly at radius 1
    expo = 2.0 / (mu + 0.5)
    scale = big_r**expo

    def y_scaled(r):
        r = np.asarray(r, dtype=float)
        rr = np.clip(r * big_r, r0, big_r)
        return scale * sol.sol(rr)[0]

    def yprime_scaled(r):
        r = np.asarray(r, dtype=float)
        rr = np.clip(r * big_r, r0, big_r)
        return big_r * scale * sol.sol(rr)[1] / rr**2

    mass = -float(yprime_scaled(1.0))
    e0 = -mass

    r_in = _interior_grid(nr)
    y_in = np.maximum(y_scaled(r_in), 0.0)
    y_in[-1] = 0.0
    yp_in = yprime_scaled(r_in)
    yp_in[0] = 0.0

    r_ext = 1.0 + (r_out - 1.0) * np.linspace(0.0, 1.0, 33)[1:] ** 1.5
    r_grid = np.concatenate([r_in, r_ext])
    u0 = np.concatenate([e0 - y_in, -mass / r_ext])
    u0_prime = np.concatenate([-yp_in, mass / r_ext**2])
    rho0 = np.concatenate([c_mu * y_in**n_poly, np.zeros(r_ext.size)])

    state = RadialState(
        r_grid=r_grid,
        rho0=rho0,
        u0=u0,
        u0_prime=u0_prime,
        e0=e0,
        mass=mass,
        mu=mu,
        nr=nr,
        tol=tol,
    )
    report = radial_state_report(state, include_poisson=False)
    failures = [k for k, v in report.items() if not v["passed"]]
    if failures:
        raise BaseStateError(f"base state failed invariants: {failures}")
    return state


def enclosed_mass(state: RadialState, radii) -> np.ndarray:
    """4 pi * integral( s^2 rho0(s), 0..r ) by composite Gauss quadrature
    over the state's own grid cells (independent of the ODE identity)."""
    from .numerics import gauss_legendre

    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    gl = gauss_legendre(8)
    edges = state.r_grid
    out = np.empty(radii.size)
    # cumulative integrals at the grid edges
    mids = 0.5 * (edges[:-1] + edges[1:])
    halfs = 0.5 * np.diff(edges)
    s = mids[:, None] + halfs[:, None] * gl.nodes[None, :]
    cell = (halfs[:, None] * gl.weights[None, :] * s**2 * state.rho0_at(s)).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    idx = np.clip(np.searchsorted(edges, radii, side="right") - 1, 0, edges.size - 2)
    for i, (r, k) in enumerate(zip(radii, idx)):
        lo = edges[k]
        hi = min(r, edges[k + 1])
        if hi > lo:
            sq = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gl.nodes
            part = (0.5 * (hi - lo) * gl.weights * sq**2 * state.rho0_at(sq)).sum()
        else:
            part = 0.0
        out[i] = cum[k] + part
    return 4.0 * np.pi * out


def poisson_residual(state: RadialState, radii=None, step: float = 0.001) -> float:
    """sup | FD-Laplacian(U0) - 4 pi h0(U0) | over [0.05, 0.95].

    The Laplacian is evaluated in flux form (1/r^2) d(r^2 U0')/dr with a
    five-point central-difference stencil on the state's gradient field,
    which keeps interpolant noise first order in 1/step.
    """
    if radii is None:
        radii = np.linspace(0.05, 0.95, 181)
    radii = np.asarray(radii, dtype=float)
    offsets = np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) * step
    coef = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / (12.0 * step)
    pts = radii[:, None] + offsets[None, :]
    flux = pts**2 * state.u0_prime_at(pts)
    lap = (flux @ coef) / radii**2
    c_mu = polytrope_density_constant(state.mu)
    rhs = 4.0 * np.pi * c_mu * np.maximum(state.e0 - state.u0_at(radii), 0.0) ** (
        state.mu + 1.5
    )
    return float(np.abs(lap - rhs).max())


def radial_state_report(state: RadialState, include_poisson: bool = True) -> dict:
    """Invariant suite for a base state.

    The type invariants gate every solve; the Poisson-residual line is a
    module diagnostic (its finite-difference instrument degrades for the
    steepest admissible exponents) and is asserted by the test suite at
    the exponents the acceptance criteria name.
    """
    checks: dict[str, dict] = {}

    def record(name, value, tol):
        checks[name] = {"value": float(value), "tol": float(tol), "passed": bool(value <= tol)}

    record("u0_at_boundary_equals_e0", abs(state.u0_at(1.0) - state.e0), 1e-8)

    inner = (state.r_grid > 0.0)
    r = state.r_grid[inner]
    lhs = state.u0_prime[inner] * r**2
    rhs = enclosed_mass(state, r)
    record(
        "field_integral_identity",
        np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-30 + 0.0 * rhs + state.mass * 1e-6)),
        1e-8,
    )

    mono = np.all(np.diff(state.rho0) <= 1e-12 * state.rho0[0])
    checks["rho0_monotone"] = {"value": float(not mono), "tol": 0.5, "passed": bool(mono)}
    checks["rho0_positive_center"] = {
        "value": float(state.rho0[0]),
        "tol": 0.0,
        "passed": bool(state.rho0[0] > 0.0),
    }
    increasing = np.all(np.diff(state.u0) > 0.0)
    checks["u0_strictly_increasing"] = {
        "value": float(not increasing),
        "tol": 0.5,
        "passed": bool(increasing),
    }

    r1 = state.r_grid[1]
    u2_fd = state.u0_prime_at(r1) / r1
    u2_exact = (4.0 * np.pi / 3.0) * state.rho0[0]
    record("central_curvature", abs(u2_fd / u2_exact - 1.0), 1e-4)

    # U0'(r) >= C r holds on [0, 1] for some C > 0; record min(U0'/r)/U0''(0)
    rr = np.linspace(0.01, 1.0, 100)
    growth = state.u0_prime_at(rr) / rr
    checks["u0_prime_linear_lower_bound"] = {
        "value": float(growth.min() / u2_exact),
        "tol": 0.0,
        "passed": bool(growth.min() > 0.0),
    }

    c_mu = polytrope_density_constant(state.mu)
    h_of_u = c_mu * np.maximum(state.e0 - state.u0, 0.0) ** (state.mu + 1.5)
    record(
        "self_consistency",
        np.max(np.abs(state.rho0 - h_of_u)) / state.rho0[0],
        1e-7,
    )

    if include_poisson:
        record("poisson_residual", poisson_residual(state), 1e-5)
    return checks
