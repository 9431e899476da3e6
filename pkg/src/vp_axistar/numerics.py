"""Gaussian quadrature rules and Legendre-polynomial machinery.

Everything downstream (density integrals, polar projections, multipole
potentials) is built on the two rule families and the P_l tables provided
here.  Rules are computed by the Golub-Welsch eigenvalue method from the
three-term recurrence coefficients of the (shifted) Jacobi polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaln


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights of a fixed Gaussian rule.

    ``integrate(values)`` contracts sampled integrand values against the
    weights; nodes are strictly increasing and weights strictly positive.
    """

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("quadrature nodes must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be strictly positive")

    @property
    def n(self) -> int:
        return self.nodes.size

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _golub_welsch(alpha_diag, beta_off, mu0) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights from recurrence coefficients of orthonormal polynomials."""
    if len(alpha_diag) == 1:
        return np.asarray(alpha_diag, float), np.array([mu0])
    nodes, vecs = eigh_tridiagonal(alpha_diag, np.sqrt(beta_off))
    weights = mu0 * vecs[0] ** 2
    return nodes, weights


def _jacobi_recurrence(n: int, a: float, b: float):
    """First n recurrence coefficients for the Jacobi weight (1-x)^a (1+x)^b."""
    k = np.arange(n, dtype=float)
    alpha = np.zeros(n)
    s = 2.0 * k + a + b
    alpha[0] = (b - a) / (a + b + 2.0)
    if n > 1:
        alpha[1:] = (b * b - a * a) / (s[1:] * (s[1:] + 2.0))
    kk = k[1:]
    num = 4.0 * kk * (kk + a) * (kk + b) * (kk + a + b)
    den = s[1:] ** 2 * (s[1:] ** 2 - 1.0)
    beta = num / den
    mu0 = np.exp(
        (a + b + 1.0) * np.log(2.0)
        + gammaln(a + 1.0)
        + gammaln(b + 1.0)
        - gammaln(a + b + 2.0)
    )
    return alpha, beta, mu0


def jacobi_rule(n: int, a: float, b: float) -> QuadratureRule:
    """Gauss-Jacobi rule on [-1, 1] for the weight (1-x)^a (1+x)^b."""
    if n < 1:
        raise ValueError("rule order must be >= 1")
    if a <= -1.0 or b <= -1.0:
        raise ValueError("Jacobi exponents must exceed -1 for an integrable weight")
    alpha, beta, mu0 = _jacobi_recurrence(n, a, b)
    nodes, weights = _golub_welsch(alpha, beta, mu0)
    return QuadratureRule(nodes, weights)


def gauss_legendre(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [-1, 1]; exact through degree 2n-1."""
    if n < 1:
        raise ValueError("rule order must be >= 1")
    if n == 1:
        return QuadratureRule(np.array([0.0]), np.array([2.0]))
    k = np.arange(1, n, dtype=float)
    beta = k * k / (4.0 * k * k - 1.0)
    nodes, weights = _golub_welsch(np.zeros(n), beta, 2.0)
    return QuadratureRule(nodes, weights)


def gauss_jacobi(n: int, alpha: float) -> QuadratureRule:
    """n-point rule on [0, 1] for the weight t^alpha, alpha > -1.

    Handles the integrable endpoint singularity of densities built from
    polytropic profiles with negative exponent.  Exact for
    integral(t^alpha * p(t), 0..1) with deg p <= 2n-1.
    """
    if alpha <= -1.0:
        raise ValueError("weight exponent must exceed -1")
    base = jacobi_rule(n, 0.0, alpha)
    nodes = 0.5 * (base.nodes + 1.0)
    weights = base.weights * 2.0 ** (-(alpha + 1.0))
    return QuadratureRule(nodes, weights)


def shifted_jacobi(n: int, alpha: float, beta: float) -> QuadratureRule:
    """n-point rule on [0, 1] for the two-sided weight t^alpha (1-t)^beta."""
    base = jacobi_rule(n, beta, alpha)
    nodes = 0.5 * (base.nodes + 1.0)
    weights = base.weights * 2.0 ** (-(alpha + beta + 1.0))
    return QuadratureRule(nodes, weights)


def legendre_table(lmax: int, x) -> np.ndarray:
    """P_l(x) for l = 0..lmax, stacked along the first axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((lmax + 1,) + x.shape)
    out[0] = 1.0
    if lmax >= 1:
        out[1] = x
    for l in range(2, lmax + 1):
        out[l] = ((2 * l - 1) * x * out[l - 1] - (l - 1) * out[l - 2]) / l
    return out


def legendre_deriv_table(lmax: int, x) -> np.ndarray:
    """P_l'(x) for l = 0..lmax via P'_l = P'_{l-2} + (2l-1) P_{l-1}."""
    x = np.asarray(x, dtype=float)
    p = legendre_table(lmax, x)
    out = np.zeros_like(p)
    if lmax >= 1:
        out[1] = 1.0
    for l in range(2, lmax + 1):
        out[l] = out[l - 2] + (2 * l - 1) * p[l - 1]
    return out


def legendre_second_deriv_table(lmax: int, x) -> np.ndarray:
    """P_l''(x) for l = 0..lmax via the derivative recurrence applied twice."""
    x = np.asarray(x, dtype=float)
    dp = legendre_deriv_table(lmax, x)
    out = np.zeros_like(dp)
    for l in range(2, lmax + 1):
        out[l] = out[l - 2] + (2 * l - 1) * dp[l - 1]
    return out


def legendre_eval(l: int, x):
    """Value of the Legendre polynomial P_l at x (|x| <= 1), P_l(1) = 1."""
    if l < 0:
        raise ValueError("degree must be nonnegative")
    xa = np.asarray(x, dtype=float)
    if np.any(np.abs(xa) > 1.0 + 1e-12):
        raise ValueError("argument outside [-1, 1]")
    val = legendre_table(l, xa)[l]
    return float(val) if np.isscalar(x) else val


class LegendreBasis:
    """Discrete Legendre basis on Gauss-Legendre nodes in cos(theta).

    With ``even_only`` set, odd-degree coefficients are forced to zero,
    which encodes reflection symmetry across the equatorial plane.
    """

    def __init__(self, max_degree: int, node_count: int, even_only: bool = True):
        if even_only and max_degree % 2 != 0:
            raise ValueError("max_degree must be even when even_only is set")
        if node_count < max_degree + 1:
            raise ValueError("node_count must be at least max_degree + 1")
        self.max_degree = max_degree
        self.node_count = node_count
        self.even_only = even_only
        rule = gauss_legendre(node_count)
        self.nodes = rule.nodes
        self.weights = rule.weights
        self._ptab = legendre_table(max_degree, self.nodes)
        # projection matrix: coeff_l = (2l+1)/2 * sum_j w_j P_l(x_j) f(x_j)
        scale = (2.0 * np.arange(max_degree + 1) + 1.0) / 2.0
        self.projection = scale[:, None] * self._ptab * self.weights[None, :]
        if even_only:
            self.projection[1::2] = 0.0
        self.degrees = (
            np.arange(0, max_degree + 1, 2) if even_only else np.arange(max_degree + 1)
        )

    def project(self, samples: np.ndarray) -> np.ndarray:
        """Coefficients c_l from values sampled at the basis nodes.

        ``samples`` may carry leading axes; the node axis must be last.
        """
        samples = np.asarray(samples, dtype=float)
        if samples.shape[-1] != self.node_count:
            raise ValueError("sample count does not match the basis nodes")
        return samples @ self.projection.T

    def evaluate(self, coeffs: np.ndarray, x) -> np.ndarray:
        """Sum of c_l P_l(x) for coefficient array(s) produced by project()."""
        coeffs = np.asarray(coeffs, dtype=float)
        ptab = legendre_table(self.max_degree, np.asarray(x, dtype=float))
        return np.tensordot(coeffs, ptab, axes=([-1], [0]))


def legendre_project(samples, max_degree: int, even_only: bool = True) -> np.ndarray:
    """Legendre coefficients of values sampled at gauss_legendre(len(samples)) nodes."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[-1] < max_degree + 1:
        raise ValueError("need at least max_degree + 1 samples")
    basis = LegendreBasis(max_degree, samples.shape[-1], even_only=even_only)
    return basis.project(samples)
