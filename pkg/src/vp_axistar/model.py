"""Assembled axisymmetric steady states and physics diagnostics.

A converged deformation zeta determines the full state: the density
rho(y) = h(gamma, r(y), U0(g^{-1}(y))), its potential V, and the global
potential U = V + C with C = U0(0) - V(0).  On the two-ball U coincides
with U0 composed with g^{-1}; outside the support U - E0 stays positive
(the maximum-principle statement), which is verified on a sample grid
together with the remaining state invariants.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np

from .field import AxiField, PotentialField, density_from_state, polar_basis
from .geometry import DeformationField
from .mesh import RadialMesh, aligned_mesh
from .numerics import gauss_legendre
from .profiles import Profiles
from .spherical import RadialState

SCHEMA = "vp-axistar/1"
BOUNDARY_SHELL = 0.05


@dataclass
class CurrentField:
    """Azimuthal mass-current magnitude on the grid.

    The direction is the unit azimuthal vector (-x2, x1, 0)/r(x); the
    magnitude vanishes on the axis and wherever the density does.
    """

    values: np.ndarray  # (N, ntheta)
    average_velocity: np.ndarray  # j / rho where rho > 0, else 0

    def max_magnitude(self) -> float:
        return float(np.abs(self.values).max())


@dataclass
class OrbitReport:
    dt: float
    t_final: float
    n_steps: int
    energy_drift: np.ndarray
    momentum_drift: np.ndarray
    f_drift: np.ndarray
    escaped: np.ndarray

    def summary(self) -> dict:
        return {
            "dt": self.dt,
            "t_final": self.t_final,
            "n_steps": self.n_steps,
            "max_energy_drift": float(self.energy_drift.max()),
            "max_momentum_drift": float(self.momentum_drift.max()),
            "max_f_drift": float(self.f_drift.max()),
            "escaped_orbits": int(self.escaped.sum()),
        }


@dataclass
class AxisymmetricState:
    gamma: float
    deformation: DeformationField
    base: RadialState
    profiles: Profiles
    density: AxiField
    potential: PotentialField
    constant_c: float
    mass: float
    multipoles: dict
    boundary_theta: np.ndarray
    boundary_radius: np.ndarray
    report: dict = dataclass_field(default_factory=dict)

    def u_eval(self, points):
        """Global potential U(x) = V(x) + C."""
        out = self.potential.potential_eval(points)
        return out + self.constant_c

    def u_grad(self, points):
        return self.potential.potential_grad(points)

    @property
    def e0(self) -> float:
        return self.base.e0

    def passed(self) -> bool:
        return all(v["passed"] for v in self.report.values())


def _record(report, name, value, tol):
    report[name] = {
        "value": float(value),
        "tol": float(tol),
        "passed": bool(value <= tol),
    }


def assemble(
    gamma: float,
    field: DeformationField,
    base: RadialState,
    profiles: Profiles,
    max_degree: int = 8,
    polar_nodes: int = 32,
    gauge_tol: float = 1e-5,
    mesh: RadialMesh | None = None,
) -> AxisymmetricState:
    """Build the full state from a converged deformation and verify it.

    Invariant violations are recorded in ``state.report`` (the state is
    still returned, flagged) so diagnostics can show what failed.
    """
    field.require_admissible()
    if mesh is None:
        mesh = aligned_mesh(2.0, field.radial_nodes)
    basis = polar_basis(polar_nodes)
    density = density_from_state(gamma, field, base, profiles, mesh, basis)
    potential = PotentialField(density, max_degree=max_degree)
    constant_c = base.u0_at(0.0) - potential.value_at_origin

    theta = np.linspace(0.0, np.pi, 181)
    cb = np.cos(theta)
    boundary = 1.0 + field.ray_values(np.ones_like(cb), cb)

    multipoles = {
        int(l): float(potential._full_lower[int(l)]) for l in potential.degrees
    }

    report: dict = {}
    _record(report, "constant_exceeds_cutoff", base.e0 - constant_c, -1e-12)

    # gauge consistency U = U0 o g^{-1} on the two-ball
    rs = np.linspace(0.05, 1.95, 39)
    cs = gauss_legendre(24).nodes
    s = field.invert_radii(cs[None, :], rs[:, None])
    u_ref = base.u0_at(s)
    pts = np.stack(
        [
            (rs[:, None] * np.sqrt(1 - cs**2)[None, :]).ravel(),
            np.zeros(rs.size * cs.size),
            (rs[:, None] * cs[None, :]).ravel(),
        ],
        axis=1,
    )
    u_here = potential.potential_eval(pts).reshape(rs.size, cs.size) + constant_c
    _record(report, "gauge_consistency", np.abs(u_here - u_ref).max(), gauge_tol)

    # exterior positivity of U - E0 outside the deformed support
    r_ext = np.concatenate(
        [np.linspace(boundary.max() + 0.02, 2.0, 24), np.linspace(2.1, 6.0, 12)]
    )
    pts_ext = np.stack(
        [
            (r_ext[:, None] * np.sqrt(1 - cb**2)[None, :]).ravel(),
            np.zeros(r_ext.size * cb.size),
            (r_ext[:, None] * cb[None, :]).ravel(),
        ],
        axis=1,
    )
    margin = potential.potential_eval(pts_ext) + constant_c - base.e0
    _record(report, "exterior_above_cutoff", -margin.min(), -1e-12)

    # far field: mass against -lim |x| (U - C)
    far = np.array([100.0, 0.0, 0.0])
    m_far = -100.0 * potential.potential_eval(far)
    _record(
        report,
        "far_field_mass",
        abs(m_far - potential.total_mass) / potential.total_mass,
        1e-4,
    )

    _record(report, "reflection_symmetry", density.odd_moment_fraction(), 1e-10)
    _record(report, "moment_consistency", density.reconstruction_error(), 1e-10)

    state = AxisymmetricState(
        gamma=gamma,
        deformation=field,
        base=base,
        profiles=profiles,
        density=density,
        potential=potential,
        constant_c=constant_c,
        mass=potential.total_mass,
        multipoles=multipoles,
        boundary_theta=theta,
        boundary_radius=boundary,
        report=report,
    )
    return state


def quadrupole_fraction(state: AxisymmetricState) -> float:
    """|l=2 multipole| / monopole: the non-sphericity certificate."""
    return abs(state.multipoles[2]) / abs(state.multipoles[0])


def f_eval(state: AxisymmetricState, x, v) -> float:
    """Phase-space density phi(E) psi(gamma P) of the assembled state."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    e = 0.5 * float(v @ v) + float(state.u_eval(x))
    p = float(x[0] * v[1] - x[1] * v[0])
    phi = state.profiles.polytrope.phi(e)
    return float(phi * state.profiles.rotation.psi(state.gamma * p))


def velocity_moments(state: AxisymmetricState) -> CurrentField:
    """First velocity moment: magnitude of j and average velocity j/rho."""
    mesh, basis = state.density.mesh, state.density.basis
    r = mesh.nodes[:, None]
    c = basis.nodes[None, :]
    rcyl = r * np.sqrt(1.0 - c**2)
    pts = np.stack(
        [rcyl.ravel(), np.zeros(rcyl.size), (r * c).ravel()], axis=1
    )
    u = state.u_eval(pts).reshape(rcyl.shape)
    j = state.profiles.current_magnitude(state.gamma, rcyl, u)
    rho = state.density.values
    avg = np.where(rho > 1e-12 * rho.max(initial=1e-300), j / np.maximum(rho, 1e-300), 0.0)
    return CurrentField(values=j, average_velocity=avg)


def poisson_residual(state: AxisymmetricState, n_r: int = 24, n_c: int = 12,
                     step: float = 2e-3) -> float:
    """sup |FD-Laplacian U - 4 pi h(gamma, r(x), U(x))| away from the
    free-boundary shell (a 0.05-thick layer around the deformed surface)."""
    r = np.linspace(0.08, 1.9, n_r)
    c = gauss_legendre(n_c).nodes
    rr, cc = np.meshgrid(r, c, indexing="ij")
    b_at = 1.0 + state.deformation.ray_values(np.ones_like(cc), cc)
    keep = np.abs(rr - b_at) > BOUNDARY_SHELL
    rr, cc = rr[keep], cc[keep]
    pts = np.stack(
        [rr * np.sqrt(1 - cc**2), np.zeros(rr.size), rr * cc], axis=1
    )
    lap = np.zeros(pts.shape[0])
    coef = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * step**2)
    offsets = np.array([-2.0, -1.0, 0.0, 1.0, 2.0]) * step
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        for c5, off in zip(coef, offsets):
            lap += c5 * state.potential.potential_eval(pts + off * e)
    u = state.u_eval(pts)
    rhs = 4.0 * np.pi * state.profiles.h_eval(
        state.gamma, pts[:, 0], u
    )
    return float(np.abs(lap - rhs).max())


def _sample_orbits(state: AxisymmetricState, n_orbits: int, rng) -> tuple:
    """Deterministic phase-space sample inside the support."""
    rho_max = state.density.values.max()
    xs, vs = [], []
    while len(xs) < n_orbits:
        r = rng.uniform(0.05, 1.0)
        c = rng.uniform(-0.95, 0.95)
        phi = rng.uniform(0.0, 2 * np.pi)
        sin = np.sqrt(1 - c * c)
        x = np.array([r * sin * np.cos(phi), r * sin * np.sin(phi), r * c])
        u = float(state.u_eval(x))
        if u >= state.e0:
            continue
        rho_here = state.profiles.h_eval(state.gamma, r * sin, u)
        if rho_here < 0.15 * rho_max:
            continue
        v_esc = np.sqrt(2.0 * (state.e0 - u))
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        vs.append(rng.uniform(0.3, 0.7) * v_esc * direction)
        xs.append(x)
    return np.array(xs), np.array(vs)


def _integrate_orbits(state, x, v, dt, n_steps):
    e_start = 0.5 * np.sum(v * v, axis=1) + state.u_eval(x)
    p_start = x[:, 0] * v[:, 1] - x[:, 1] * v[:, 0]
    f_start = state.profiles.polytrope.phi(e_start) * state.profiles.rotation.psi(
        state.gamma * p_start
    )
    n = x.shape[0]
    e_drift = np.zeros(n)
    p_drift = np.zeros(n)
    f_drift = np.zeros(n)
    escaped = np.zeros(n, dtype=bool)
    acc = -state.u_grad(x)
    for _ in range(n_steps):
        v = v + 0.5 * dt * acc
        x = x + dt * v
        acc = -state.u_grad(x)
        v = v + 0.5 * dt * acc

        e_now = 0.5 * np.sum(v * v, axis=1) + state.u_eval(x)
        p_now = x[:, 0] * v[:, 1] - x[:, 1] * v[:, 0]
        f_now = state.profiles.polytrope.phi(e_now) * state.profiles.rotation.psi(
            state.gamma * p_now
        )
        e_drift = np.maximum(e_drift, np.abs(e_now - e_start))
        p_drift = np.maximum(p_drift, np.abs(p_now - p_start))
        f_drift = np.maximum(f_drift, np.abs(f_now - f_start))
        escaped |= np.linalg.norm(x, axis=1) > 5.0
    return e_drift, p_drift, f_drift, escaped


def stationarity_check(
    state: AxisymmetricState,
    n_orbits: int = 16,
    t_final: float | None = None,
    dt: float | None = None,
    seed: int = 0,
    threads: int = 1,
) -> OrbitReport:
    """Integrate characteristics with leapfrog and report invariant drifts.

    The axisymmetric potential conserves P exactly per step (kicks exert
    no torque about the axis), so its drift isolates rounding; the energy
    drift is second order in dt.  Orbits are independent; ``threads``
    splits them into parallel batches without changing any result.
    """
    t_dyn = 1.0 / np.sqrt(state.mass)
    if dt is None:
        dt = 5e-4 * t_dyn
    if t_final is None:
        t_final = 3.0 * t_dyn
    n_steps = int(round(t_final / dt))
    rng = np.random.default_rng(seed)
    x, v = _sample_orbits(state, n_orbits, rng)

    if threads > 1 and n_orbits > 1:
        from concurrent.futures import ThreadPoolExecutor

        bounds = np.linspace(0, n_orbits, min(threads, n_orbits) + 1).astype(int)
        chunks = [(x[a:b], v[a:b]) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(
                pool.map(
                    lambda xv: _integrate_orbits(state, xv[0], xv[1], dt, n_steps),
                    chunks,
                )
            )
        e_drift = np.concatenate([p[0] for p in parts])
        p_drift = np.concatenate([p[1] for p in parts])
        f_drift = np.concatenate([p[2] for p in parts])
        escaped = np.concatenate([p[3] for p in parts])
    else:
        e_drift, p_drift, f_drift, escaped = _integrate_orbits(state, x, v, dt, n_steps)

    return OrbitReport(
        dt=float(dt),
        t_final=float(t_final),
        n_steps=n_steps,
        energy_drift=e_drift,
        momentum_drift=p_drift,
        f_drift=f_drift,
        escaped=escaped,
    )


# ------------------------------------------------------------------ export

def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format(v, ".17g") for v in row])


def export_state(state: AxisymmetricState, directory) -> None:
    """State export: JSON manifest plus CSV blocks (schema vp-axistar/1)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mesh, basis = state.density.mesh, state.density.basis

    manifest = {
        "schema": SCHEMA,
        "kind": "axisymmetric-state",
        "gamma": state.gamma,
        "mu": state.base.mu,
        "e0": state.base.e0,
        "base_mass": state.base.mass,
        "mass": state.mass,
        "constant_c": state.constant_c,
        "psi_kind": state.profiles.rotation.kind,
        "psi_params": state.profiles.rotation.parameters(),
        "quad_orders": [state.profiles.n_outer, state.profiles.n_inner],
        "max_degree": int(state.potential.max_degree),
        "polar_nodes": int(basis.node_count),
        "mesh_q": int(mesh.q),
        "multipoles": {str(k): v for k, v in state.multipoles.items()},
        "quadrupole_fraction": quadrupole_fraction(state),
        "invariants": state.report,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )

    _write_csv(
        directory / "grid.csv",
        ["kind", "index", "value"],
        [(0.0, float(i), e) for i, e in enumerate(mesh.edges)]
        + [(1.0, float(j), c) for j, c in enumerate(basis.nodes)],
    )
    r = mesh.nodes
    c = basis.nodes
    _write_csv(
        directory / "density.csv",
        ["r", "cos_theta", "rho"],
        (
            (r[i], c[j], state.density.values[i, j])
            for i in range(r.size)
            for j in range(c.size)
        ),
    )
    degrees = state.potential.degrees
    _write_csv(
        directory / "rho_moments.csv",
        ["r"] + [f"sigma_{l}" for l in degrees],
        (
            [r[i]] + [state.density.moments[i, l] for l in degrees]
            for i in range(r.size)
        ),
    )
    rt = np.linspace(0.0, mesh.r_max, 513)
    vl = state.potential.sector_values(rt)
    _write_csv(
        directory / "u_moments.csv",
        ["r"] + [f"v_{l}" for l in degrees],
        ([rt[i]] + [vl[k][i] for k in range(len(degrees))] for i in range(rt.size)),
    )
    current = velocity_moments(state)
    _write_csv(
        directory / "current.csv",
        ["r", "cos_theta", "j", "avg_velocity"],
        (
            (r[i], c[j], current.values[i, j], current.average_velocity[i, j])
            for i in range(r.size)
            for j in range(c.size)
        ),
    )
    _write_csv(
        directory / "boundary.csv",
        ["theta", "r_boundary"],
        zip(state.boundary_theta, state.boundary_radius),
    )
    state.deformation.save(directory)
    state.base.save(directory)


def load_state(directory) -> AxisymmetricState:
    """Rebuild a state from its export, re-solving the potential from the
    stored density samples (corruption therefore propagates to checks)."""
    from .profiles import PolytropeProfile, make_rotation

    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("schema") != SCHEMA:
        raise ValueError(f"unsupported state schema: {manifest.get('schema')!r}")
    base = RadialState.load(directory)
    deformation = DeformationField.load(directory)

    grid = np.loadtxt(directory / "grid.csv", delimiter=",", skiprows=1)
    edges = grid[grid[:, 0] == 0.0][:, 2]
    mesh = RadialMesh(edges, q=manifest["mesh_q"])
    basis = polar_basis(manifest["polar_nodes"])

    dens_rows = np.loadtxt(directory / "density.csv", delimiter=",", skiprows=1)
    values = dens_rows[:, 2].reshape(mesh.size, basis.node_count)
    density = AxiField(mesh, basis, values)

    polytrope = PolytropeProfile(manifest["mu"], manifest["e0"])
    rotation = make_rotation(manifest["psi_kind"], **manifest["psi_params"])
    n_outer, n_inner = manifest["quad_orders"]
    profiles = Profiles(polytrope, rotation, n_outer, n_inner)

    potential = PotentialField(density, max_degree=manifest["max_degree"])
    constant_c = base.u0_at(0.0) - potential.value_at_origin
    theta = np.loadtxt(directory / "boundary.csv", delimiter=",", skiprows=1)

    return AxisymmetricState(
        gamma=manifest["gamma"],
        deformation=deformation,
        base=base,
        profiles=profiles,
        density=density,
        potential=potential,
        constant_c=constant_c,
        mass=potential.total_mass,
        multipoles={
            int(k): v for k, v in manifest["multipoles"].items()
        },
        boundary_theta=theta[:, 0],
        boundary_radius=theta[:, 1],
        report=manifest["invariants"],
    )
