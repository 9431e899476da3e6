"""Microscopic profiles and the spatial density integral.

The ansatz f(x,v) = phi(E) psi(gamma P) turns the kinetic problem into a
semilinear one through the double integral

    h(gamma, r, u) = 2 pi * int_u^{E0} phi(E)
                     int_{-sqrt(2(E-u))}^{sqrt(2(E-u))} psi(gamma r s) ds dE

for u < E0 and h = 0 otherwise.  ``Profiles`` evaluates h and its partial
derivatives with quadrature tuned to the polytropic endpoint behaviour:
substituting E = E0 - (E0-u) t makes the outer weight t^mu, and the inner
s-integral contributes an exact factor sqrt(1-t) (it is an odd smooth
function of the half-width), so the outer rule uses the two-sided weight
t^mu (1-t)^(1/2) and the remaining integrand is smooth.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import beta as beta_function

from .numerics import gauss_jacobi, gauss_legendre, shifted_jacobi

MU_MIN = -0.5
MU_MAX = 3.5

_CHUNK = 4096


@dataclass(frozen=True)
class PolytropeProfile:
    """phi(E) = (E0 - E)_+^mu with -1/2 < mu < 7/2."""

    mu: float
    e0: float

    def __post_init__(self):
        if not (MU_MIN < self.mu < MU_MAX):
            raise ValueError(f"polytrope exponent must lie in ({MU_MIN}, {MU_MAX})")

    def phi(self, e):
        e = np.asarray(e, dtype=float)
        gap = self.e0 - e
        out = np.zeros_like(gap)
        pos = gap > 0.0
        out[pos] = gap[pos] ** self.mu
        return out if out.ndim else float(out)


def phi_eval(profile: PolytropeProfile, e):
    return profile.phi(e)


@dataclass(frozen=True)
class EnergyMomentum:
    """Particle invariants E = v^2/2 + U(x) and P = x1 v2 - x2 v1."""

    e: float
    p: float


def energy_momentum(x, v, u_value: float) -> EnergyMomentum:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    e = 0.5 * float(v @ v) + u_value
    p = float(x[0] * v[1] - x[1] * v[0])
    return EnergyMomentum(e, p)


class RotationProfile:
    """Angular-momentum weight psi with psi(0)=1, psi'(0)=0, psi >= 0.

    psi(P) = 1 exactly at P = 0 only; an even profile makes the model
    static, a skewed one makes it rotate.
    """

    kind = "abstract"
    is_even = False

    def psi(self, p):
        raise NotImplementedError

    def psi_prime(self, p):
        raise NotImplementedError

    def psi_second(self, p):
        raise NotImplementedError

    def parameters(self) -> dict:
        return {}


class EvenGaussian(RotationProfile):
    """psi(P) = exp(-a P^2), a > 0; even, so the resulting model is static."""

    kind = "even-gaussian"
    is_even = True

    def __init__(self, a: float = 1.0):
        if a <= 0:
            raise ValueError("gaussian width parameter must be positive")
        self.a = float(a)

    def psi(self, p):
        p = np.asarray(p, dtype=float)
        return np.exp(-self.a * p * p)

    def psi_prime(self, p):
        p = np.asarray(p, dtype=float)
        return -2.0 * self.a * p * np.exp(-self.a * p * p)

    def psi_second(self, p):
        p = np.asarray(p, dtype=float)
        return (4.0 * self.a**2 * p * p - 2.0 * self.a) * np.exp(-self.a * p * p)

    def parameters(self):
        return {"a": self.a}


class SkewedRational(RotationProfile):
    """psi(P) = (1 + b P^3 / (1 + P^4)) / (1 + a P^2), 0 < b < 1, a >= 0.6 b.

    The odd numerator part skews the profile so the model rotates; the
    even denominator makes psi''(0) = -2a nonzero, so the spatial density
    actually responds to gamma at second order (a profile that is 1 plus
    an odd function is invisible to the s-integral in h).  For a >= 0.6 b
    the equation psi(P) = 1 has no root besides P = 0.
    """

    kind = "skewed-rational"
    is_even = False

    def __init__(self, b: float = 0.5, a: float | None = None):
        if not (0.0 < b < 1.0):
            raise ValueError("skew parameter must lie in (0, 1)")
        self.b = float(b)
        self.a = 0.75 * self.b if a is None else float(a)
        if self.a < 0.6 * self.b:
            raise ValueError("need a >= 0.6 b, else psi(P) = 1 at some P != 0")

    def _num(self, p):
        return 1.0 + self.b * p**3 / (1.0 + p**4)

    def _num_prime(self, p):
        return self.b * p**2 * (3.0 - p**4) / (1.0 + p**4) ** 2

    def _num_second(self, p):
        return 2.0 * self.b * p * (3.0 - 12.0 * p**4 + p**8) / (1.0 + p**4) ** 3

    def psi(self, p):
        p = np.asarray(p, dtype=float)
        return self._num(p) / (1.0 + self.a * p * p)

    def psi_prime(self, p):
        p = np.asarray(p, dtype=float)
        d = 1.0 + self.a * p * p
        return self._num_prime(p) / d - self._num(p) * (2.0 * self.a * p) / d**2

    def psi_second(self, p):
        p = np.asarray(p, dtype=float)
        n, np1, np2 = self._num(p), self._num_prime(p), self._num_second(p)
        d = 1.0 + self.a * p * p
        dp = 2.0 * self.a * p
        return (
            np2 / d
            - 2.0 * np1 * dp / d**2
            - n * (2.0 * self.a) / d**2
            + 2.0 * n * dp**2 / d**3
        )

    def parameters(self):
        return {"b": self.b, "a": self.a}


class TabulatedRotation(RotationProfile):
    """psi from a (P, psi) table with C^2 cubic interpolation.

    The table is rejected at load time if any axiom fails on it: negative
    values, psi(0) != 1, a second unit value away from P = 0, or a
    non-vanishing slope at 0.
    """

    kind = "custom-table"

    def __init__(self, p_values, psi_values):
        p = np.asarray(p_values, dtype=float)
        y = np.asarray(psi_values, dtype=float)
        if p.ndim != 1 or p.shape != y.shape or p.size < 5:
            raise ValueError("table must be two columns with at least 5 rows")
        if np.any(np.diff(p) <= 0):
            raise ValueError("table abscissae must increase strictly")
        if p[0] > 0.0 or p[-1] < 0.0:
            raise ValueError("table must cover P = 0")
        if np.any(y < 0.0):
            raise ValueError("table violates psi >= 0")
        self._spline = CubicSpline(p, y)
        if abs(float(self._spline(0.0)) - 1.0) > 1e-9:
            raise ValueError("table violates psi(0) = 1")
        if abs(float(self._spline(0.0, 1))) > 1e-6:
            raise ValueError("table violates psi'(0) = 0")
        away = np.abs(p) > 0.05 * (p[-1] - p[0])
        if np.any(np.abs(y[away] - 1.0) < 1e-12):
            raise ValueError("table violates psi(P) = 1 only at P = 0")
        self.is_even = bool(np.allclose(y, self._spline(-p), atol=1e-12))
        self._range = (float(p[0]), float(p[-1]))

    @classmethod
    def from_csv(cls, path) -> "TabulatedRotation":
        data = np.loadtxt(path, delimiter=",", comments="#")
        if data.ndim != 2 or data.shape[1] != 2:
            raise ValueError("rotation table CSV must have exactly two columns")
        return cls(data[:, 0], data[:, 1])

    def psi(self, p):
        return np.clip(self._spline(np.asarray(p, dtype=float)), 0.0, None)

    def psi_prime(self, p):
        return self._spline(np.asarray(p, dtype=float), 1)

    def psi_second(self, p):
        return self._spline(np.asarray(p, dtype=float), 2)

    def parameters(self):
        return {"p_min": self._range[0], "p_max": self._range[1]}


def psi_eval(profile: RotationProfile, p):
    return profile.psi(p)


def psi_deriv(profile: RotationProfile, p):
    return profile.psi_prime(p)


def psi_second_deriv(profile: RotationProfile, p):
    return profile.psi_second(p)


def make_rotation(kind: str, **params) -> RotationProfile:
    if kind == "even-gaussian":
        return EvenGaussian(**params)
    if kind == "skewed-rational":
        return SkewedRational(**params)
    if kind == "custom-table":
        return TabulatedRotation.from_csv(params["path"])
    raise ValueError(f"unknown rotation profile kind: {kind!r}")


def polytrope_density_constant(mu: float) -> float:
    """c_mu with h(0, ., u) = c_mu (E0 - u)_+^(mu + 3/2)."""
    return 4.0 * np.sqrt(2.0) * np.pi * beta_function(mu + 1.0, 1.5)


class Profiles:
    """Bundle of (phi, psi) with the quadrature rules evaluating h.

    All evaluators broadcast over array-valued (r, u) with scalar gamma
    and are pure; instances are immutable after construction.
    """

    def __init__(
        self,
        polytrope: PolytropeProfile,
        rotation: RotationProfile,
        n_outer: int = 24,
        n_inner: int = 24,
    ):
        self.polytrope = polytrope
        self.rotation = rotation
        self.n_outer = n_outer
        self.n_inner = n_inner
        mu = polytrope.mu
        self._outer2 = shifted_jacobi(n_outer, mu, 0.5)  # weight t^mu (1-t)^1/2
        self._outer1 = gauss_jacobi(n_outer, mu)  # weight t^mu
        self._inner = gauss_legendre(n_inner)
        self.c_mu = polytrope_density_constant(mu)

    # ----------------------------------------------------------- closed form

    def h0(self, u):
        """h at gamma = 0 (or r = 0): c_mu (E0 - u)_+^(mu + 3/2)."""
        gap = np.maximum(self.polytrope.e0 - np.asarray(u, dtype=float), 0.0)
        return self.c_mu * gap ** (self.polytrope.mu + 1.5)

    def h0_du(self, u):
        gap = np.maximum(self.polytrope.e0 - np.asarray(u, dtype=float), 0.0)
        mu = self.polytrope.mu
        return -self.c_mu * (mu + 1.5) * gap ** (mu + 0.5)

    # ------------------------------------------------------------ quadrature

    def _prepare(self, gamma, r, u):
        r = np.asarray(r, dtype=float)
        u = np.asarray(u, dtype=float)
        if np.any(r < 0.0):
            raise ValueError("cylindrical radius must be nonnegative")
        r, u = np.broadcast_arrays(r, u)
        out = np.zeros(r.shape)
        active = u < self.polytrope.e0
        return float(gamma), r, u, out, active

    def h_eval(self, gamma, r, u):
        """Spatial density h(gamma, r(x), U(x)); zero for u >= E0."""
        gamma, r, u, out, active = self._prepare(gamma, r, u)
        if not np.any(active):
            return out if out.ndim else float(out)
        closed = active & ((gamma == 0.0) | (r == 0.0))
        out[closed] = self.h0(u[closed])
        rest = active & ~closed
        if np.any(rest):
            out[rest] = self._h_nested(gamma, r[rest], u[rest])
        return out if out.ndim else float(out)

    def _h_nested(self, gamma, r, u):
        mu = self.polytrope.mu
        gap = self.polytrope.e0 - u
        w_half = np.sqrt(2.0 * gap)
        t = self._outer2.nodes
        root = np.sqrt(1.0 - t)
        res = np.empty(r.shape)
        for lo in range(0, r.size, _CHUNK):
            sl = slice(lo, min(lo + _CHUNK, r.size))
            # argument tensor: gamma * r * W * sqrt(1-t_i) * x_j
            arg = (
                gamma
                * (r[sl] * w_half[sl])[:, None, None]
                * root[None, :, None]
                * self._inner.nodes[None, None, :]
            )
            inner = np.einsum("j,pij->pi", self._inner.weights, self.rotation.psi(arg))
            res[sl] = inner @ self._outer2.weights
        return 2.0 * np.pi * gap ** (mu + 1.0) * w_half * res

    def h_du(self, gamma, r, u):
        """d h / d u; always <= 0 and zero for u >= E0."""
        gamma, r, u, out, active = self._prepare(gamma, r, u)
        if not np.any(active):
            return out if out.ndim else float(out)
        closed = active & ((gamma == 0.0) | (r == 0.0))
        out[closed] = self.h0_du(u[closed])
        rest = active & ~closed
        if np.any(rest):
            out[rest] = self._h_du_nested(gamma, r[rest], u[rest])
        return out if out.ndim else float(out)

    def _h_du_nested(self, gamma, r, u):
        # substitution w = W(1-t) leaves the weight t^mu and the smooth
        # factor (2-t)^mu: dh/du = -2 pi 2^-mu W^(2mu+1) *
        #   int t^mu (2-t)^mu [psi(g r W (1-t)) + psi(-...)] dt
        mu = self.polytrope.mu
        gap = self.polytrope.e0 - u
        w_half = np.sqrt(2.0 * gap)
        t = self._outer1.nodes
        smooth = (2.0 - t) ** mu
        res = np.empty(r.shape)
        for lo in range(0, r.size, _CHUNK):
            sl = slice(lo, min(lo + _CHUNK, r.size))
            arg = gamma * (r[sl] * w_half[sl])[:, None] * (1.0 - t)[None, :]
            vals = self.rotation.psi(arg) + self.rotation.psi(-arg)
            res[sl] = (vals * smooth[None, :]) @ self._outer1.weights
        return -2.0 * np.pi * 2.0 ** (-mu) * w_half ** (2.0 * mu + 1.0) * res

    def _odd_inner_nested(self, gamma, r, u, func):
        """2 pi * int phi(E) int s * func(gamma r s) ds dE for u < E0."""
        mu = self.polytrope.mu
        gap = self.polytrope.e0 - u
        w_half = np.sqrt(2.0 * gap)
        t = self._outer2.nodes
        root = np.sqrt(1.0 - t)
        res = np.empty(r.shape)
        for lo in range(0, r.size, _CHUNK):
            sl = slice(lo, min(lo + _CHUNK, r.size))
            arg = (
                gamma
                * (r[sl] * w_half[sl])[:, None, None]
                * root[None, :, None]
                * self._inner.nodes[None, None, :]
            )
            inner = np.einsum(
                "j,pij->pi", self._inner.weights * self._inner.nodes, func(arg)
            )
            res[sl] = (inner * root[None, :]) @ self._outer2.weights
        return 2.0 * np.pi * gap ** (mu + 1.0) * w_half**2 * res

    def h_dr(self, gamma, r, u):
        """d h / d r; vanishes identically for gamma = 0 or even psi."""
        gamma, r, u, out, active = self._prepare(gamma, r, u)
        if gamma == 0.0 or not np.any(active):
            return out if out.ndim else float(out)
        out[active] = gamma * self._odd_inner_nested(
            gamma, r[active], u[active], self.rotation.psi_prime
        )
        return out if out.ndim else float(out)

    def current_magnitude(self, gamma, r, u):
        """Scalar multiplying e_t in the mass current; zero on the axis."""
        gamma, r, u, out, active = self._prepare(gamma, r, u)
        if gamma == 0.0 or not np.any(active):
            return out if out.ndim else float(out)
        live = active & (r > 0.0)
        if np.any(live):
            out[live] = self._odd_inner_nested(
                gamma, r[live], u[live], self.rotation.psi
            )
        return out if out.ndim else float(out)


def h_eval(profiles: Profiles, gamma, r, u):
    return profiles.h_eval(gamma, r, u)


def h_du(profiles: Profiles, gamma, r, u):
    return profiles.h_du(gamma, r, u)


def h_dr(profiles: Profiles, gamma, r, u):
    return profiles.h_dr(gamma, r, u)


def current_magnitude(profiles: Profiles, gamma, r, u):
    return profiles.current_magnitude(gamma, r, u)
