"""Cylindrical functionals of measures and their exact derivatives.

A cylindrical functional is Phi(mu) = f(<g_1, mu>, ..., <g_n, mu>) with a
polynomial outer map f and polynomial inner integrands g_k. For this class the
derivative in the measure argument is available in closed form:

* the Lions derivative  d_mu Phi(mu, x) = sum_k  df/dy_k (moments) * grad g_k(x),
* its x-derivative      d_x d_mu Phi(mu, x) = sum_k df/dy_k (moments) * Hess g_k(x),
* differences of the linear (flat) derivative
      dPhi/dmu(mu, x) - dPhi/dmu(mu, y) = sum_k df/dy_k (moments) * (g_k(x) - g_k(y)).

The flat derivative itself is defined only up to an additive constant, so this
module never materializes it; only differences are exposed.
"""

from __future__ import annotations

import numpy as np

from .measures import EmpiricalMeasure
from .polynomials import Polynomial

__all__ = [
    "CylindricalFunctional",
    "DerivativeBundle",
    "evaluate",
    "lions_derivative",
    "lions_x_derivative",
    "linear_derivative_diff",
    "check_lift_gradient",
    "check_linear_derivative_identity",
]


class CylindricalFunctional:
    """Phi(mu) = outer(<inner_1, mu>, ..., <inner_n, mu>).

    Parameters
    ----------
    outer : Polynomial
        Arity-n polynomial applied to the moment vector.
    inner : sequence of Polynomial
        n polynomials of one common arity d (the state dimension).
    """

    __slots__ = ("outer", "inner")

    def __init__(self, outer: Polynomial, inner):
        inner = tuple(inner)
        if not inner:
            raise ValueError("at least one inner polynomial required")
        if outer.arity != len(inner):
            raise ValueError(
                f"outer arity {outer.arity} != number of inner polynomials {len(inner)}"
            )
        d = inner[0].arity
        if any(g.arity != d for g in inner):
            raise ValueError("all inner polynomials must share one arity")
        self.outer = outer
        self.inner = inner

    # -- convenience constructors ------------------------------------------------
    @classmethod
    def moment(cls, g: Polynomial) -> "CylindricalFunctional":
        """The linear functional mu -> <g, mu>."""
        return cls(Polynomial.coordinate(1), [g])

    @property
    def dimension(self) -> int:
        return self.inner[0].arity

    # -- evaluation ---------------------------------------------------------------
    def moments_of(self, points: np.ndarray) -> np.ndarray:
        """Moment vector (<g_k, mu>)_k of the uniform cloud `points` (N, d)."""
        return np.array([np.mean(g(points)) for g in self.inner])

    def value_at_moments(self, moments: np.ndarray) -> float:
        return float(self.outer(moments))

    def __call__(self, mu: EmpiricalMeasure) -> float:
        return evaluate(self, mu)

    # -- algebra (the cylindrical class is closed under + and *) -------------------
    def _pad_outer(self, offset: int, total: int) -> Polynomial:
        terms = []
        for c, e in self.outer.terms:
            expo = [0] * total
            expo[offset : offset + len(e)] = e
            terms.append((c, tuple(expo)))
        return Polynomial(total, terms)

    def __add__(self, other: "CylindricalFunctional") -> "CylindricalFunctional":
        self._check_compatible(other)
        n, m = len(self.inner), len(other.inner)
        outer = self._pad_outer(0, n + m) + other._pad_outer(n, n + m)
        return CylindricalFunctional(outer, self.inner + other.inner)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return CylindricalFunctional(self.outer * float(other), self.inner)
        self._check_compatible(other)
        n, m = len(self.inner), len(other.inner)
        outer = self._pad_outer(0, n + m) * other._pad_outer(n, n + m)
        return CylindricalFunctional(outer, self.inner + other.inner)

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if not isinstance(other, CylindricalFunctional):
            raise TypeError("expected a CylindricalFunctional")
        if other.dimension != self.dimension:
            raise ValueError("dimension mismatch")

    def to_jsonable(self):
        return {
            "outer": self.outer.to_jsonable(),
            "inner": [g.to_jsonable() for g in self.inner],
        }

    @classmethod
    def from_jsonable(cls, data, dimension: int) -> "CylindricalFunctional":
        inner = [Polynomial.from_jsonable(dimension, g) for g in data["inner"]]
        outer = Polynomial.from_jsonable(len(inner), data["outer"])
        return cls(outer, inner)

    def __repr__(self):
        return f"CylindricalFunctional(n={len(self.inner)}, d={self.dimension})"


class DerivativeBundle:
    """Closed-form derivative evaluators of one functional at one measure.

    Binds the moment vector once so that repeated evaluation at many states x
    (as the particle verifiers do) costs only the inner-polynomial work. The
    flat derivative appears exclusively through :meth:`linear_diff`.
    """

    __slots__ = ("phi", "moments", "_outer_grad")

    def __init__(self, phi: CylindricalFunctional, moments):
        self.phi = phi
        self.moments = np.asarray(moments, dtype=float)
        self._outer_grad = np.array(
            [p(self.moments) for p in phi.outer.gradient()]
        )

    @classmethod
    def at_measure(cls, phi: CylindricalFunctional, mu: EmpiricalMeasure):
        if mu.dimension != phi.dimension:
            raise ValueError("dimension mismatch")
        return cls(phi, phi.moments_of(mu.points))

    @classmethod
    def at_points(cls, phi: CylindricalFunctional, points: np.ndarray):
        return cls(phi, phi.moments_of(points))

    def value(self) -> float:
        return self.phi.value_at_moments(self.moments)

    def lions(self, x) -> np.ndarray:
        """d_mu Phi(mu, x): shape (d,) for one state or (N, d) for a batch."""
        arr, single = _as_batch(x, self.phi.dimension)
        out = np.zeros_like(arr)
        for w, g in zip(self._outer_grad, self.phi.inner):
            if w == 0.0:
                continue
            for j in range(g.arity):
                pj = g.partial(j)
                if not pj.is_zero():
                    out[:, j] += w * pj(arr)
        return out[0] if single else out

    def lions_x(self, x) -> np.ndarray:
        """d_x d_mu Phi(mu, x): (d, d) for one state or (N, d, d) for a batch."""
        arr, single = _as_batch(x, self.phi.dimension)
        d = arr.shape[1]
        out = np.zeros((arr.shape[0], d, d))
        for w, g in zip(self._outer_grad, self.phi.inner):
            if w == 0.0:
                continue
            for j in range(d):
                pj = g.partial(j)
                if pj.is_zero():
                    continue
                for i in range(d):
                    pij = pj.partial(i)
                    if not pij.is_zero():
                        out[:, j, i] += w * pij(arr)
        return out[0] if single else out

    def linear_diff(self, x_new, x_old):
        """Flat-derivative difference dPhi/dmu(mu, x_new) - dPhi/dmu(mu, x_old).

        Batched inputs of shape (N, d) give a shape-(N,) result. Exact and
        constant-free for cylindrical functionals.
        """
        a, single_a = _as_batch(x_new, self.phi.dimension)
        b, single_b = _as_batch(x_old, self.phi.dimension)
        out = np.zeros(max(a.shape[0], b.shape[0]))
        for w, g in zip(self._outer_grad, self.phi.inner):
            if w != 0.0:
                out += w * (g(a) - g(b))
        return float(out[0]) if (single_a and single_b) else out


def _as_batch(x, d):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if d != 1:
            raise ValueError("scalar state only valid in dimension 1")
        return arr.reshape(1, 1), True
    if arr.ndim == 1:
        if arr.shape[0] == d:
            return arr[None, :], True
        if d == 1:
            return arr[:, None], False
        raise ValueError(f"state of length {arr.shape[0]} does not match dimension {d}")
    if arr.shape[1] != d:
        raise ValueError("state batch has wrong dimension")
    return arr, False


# -----------------------------------------------------------------------------
# Functional-form operations
# -----------------------------------------------------------------------------
def evaluate(phi: CylindricalFunctional, mu: EmpiricalMeasure) -> float:
    """Phi(mu) = f applied to the moment vector of mu."""
    if mu.dimension != phi.dimension:
        raise ValueError("dimension mismatch")
    return phi.value_at_moments(phi.moments_of(mu.points))


def lions_derivative(phi, mu, x):
    """Exact Lions derivative d_mu Phi(mu, x) as a d-vector."""
    return DerivativeBundle.at_measure(phi, mu).lions(x)


def lions_x_derivative(phi, mu, x):
    """Exact d_x d_mu Phi(mu, x) as a (d, d) matrix."""
    return DerivativeBundle.at_measure(phi, mu).lions_x(x)


def linear_derivative_diff(phi, mu, x_new, x_old):
    """Exact flat-derivative difference between two states under one measure."""
    return DerivativeBundle.at_measure(phi, mu).linear_diff(x_new, x_old)


def check_lift_gradient(phi, mu, direction_samples, h: float) -> float:
    """Finite-difference check of the lifted Frechet derivative.

    Moves every particle x_i to x_i + h * v_i and compares the divided
    difference of Phi with the first-order prediction
    (1/N) sum_i d_mu Phi(mu, x_i) . v_i. Returns the absolute discrepancy,
    which is O(h) in general and O(h^2)-exact for linear Phi.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    v = np.asarray(direction_samples, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape != mu.points.shape:
        raise ValueError("direction field must match the particle cloud shape")
    bundle = DerivativeBundle.at_measure(phi, mu)
    shifted = mu.points + h * v
    lhs = (phi.value_at_moments(phi.moments_of(shifted)) - bundle.value()) / h
    rhs = float(np.mean(np.sum(bundle.lions(mu.points) * v, axis=1)))
    return abs(lhs - rhs)


def check_linear_derivative_identity(
    phi, mu: EmpiricalMeasure, nu: EmpiricalMeasure, quadrature_nodes: int
) -> float:
    """Residual of the flat-derivative identity between two measures.

    Evaluates
        Phi(mu) - Phi(nu) = int_0^1 int dPhi/dmu(h mu + (1-h) nu, x) (mu - nu)(dx) dh
    with Gauss-Legendre quadrature in h. The mixture h mu + (1-h) nu is realized
    as the concatenated two-group weighted cloud, which for cylindrical Phi
    reduces to weighted moments. Since (mu - nu) has zero total mass, the inner
    integral is computed from constant-free differences against a fixed anchor.
    Returns |LHS - RHS|; exact once the node count covers the (outer degree - 1)
    polynomial h-dependence.
    """
    if mu.dimension != nu.dimension or mu.dimension != phi.dimension:
        raise ValueError("dimension mismatch")
    if quadrature_nodes < 1:
        raise ValueError("need at least one quadrature node")
    lhs = evaluate(phi, mu) - evaluate(phi, nu)

    nodes, weights = np.polynomial.legendre.leggauss(quadrature_nodes)
    hs = 0.5 * (nodes + 1.0)
    ws = 0.5 * weights

    mu_pts, nu_pts = mu.points, nu.points
    cloud = np.concatenate([mu_pts, nu_pts], axis=0)
    anchor = np.zeros((1, mu.dimension))
    rhs = 0.0
    for h, w in zip(hs, ws):
        cloud_weights = np.concatenate(
            [np.full(len(mu_pts), h / len(mu_pts)), np.full(len(nu_pts), (1 - h) / len(nu_pts))]
        )
        mixture_moments = np.array(
            [float(np.dot(cloud_weights, g(cloud))) for g in phi.inner]
        )
        bundle = DerivativeBundle(phi, mixture_moments)
        inner = float(np.mean(bundle.linear_diff(mu_pts, anchor))) - float(
            np.mean(bundle.linear_diff(nu_pts, anchor))
        )
        rhs += w * inner
    return abs(lhs - rhs)
