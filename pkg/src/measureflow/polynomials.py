"""Exact multivariate polynomials with closed-form partial derivatives.

A polynomial is a list of (coefficient, multi-index) terms over a fixed arity.
Terms with equal multi-indices are merged and zero coefficients dropped on
construction, so equality of the term lists is a faithful equality of
polynomials. Differentiation is closed: every partial derivative is again a
:class:`Polynomial`.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Polynomial"]


def _normalize(arity, terms):
    merged = {}
    for coeff, expo in terms:
        expo = tuple(int(e) for e in expo)
        if len(expo) != arity:
            raise ValueError(f"multi-index {expo} has length {len(expo)}, expected {arity}")
        if any(e < 0 for e in expo):
            raise ValueError(f"negative exponent in {expo}")
        merged[expo] = merged.get(expo, 0.0) + float(coeff)
    return tuple(
        (c, e) for e, c in sorted(merged.items()) if c != 0.0
    )


class Polynomial:
    """Polynomial R^arity -> R stored as (coefficient, multi-index) terms."""

    __slots__ = ("arity", "terms")

    def __init__(self, arity: int, terms):
        if arity < 1:
            raise ValueError("arity must be >= 1")
        self.arity = int(arity)
        self.terms = _normalize(self.arity, terms)

    # -- constructors --------------------------------------------------------
    @classmethod
    def constant(cls, arity: int, value: float) -> "Polynomial":
        return cls(arity, [(value, (0,) * arity)])

    @classmethod
    def coordinate(cls, arity: int, index: int = 0) -> "Polynomial":
        """The monomial x_index."""
        expo = [0] * arity
        expo[index] = 1
        return cls(arity, [(1.0, tuple(expo))])

    @classmethod
    def univariate(cls, coeffs) -> "Polynomial":
        """1-d polynomial from ascending power coefficients [c0, c1, ...]."""
        return cls(1, [(c, (k,)) for k, c in enumerate(coeffs)])

    @classmethod
    def monomial(cls, arity: int, coeff: float, expo) -> "Polynomial":
        return cls(arity, [(coeff, tuple(expo))])

    # -- evaluation -----------------------------------------------------------
    def __call__(self, x):
        """Evaluate at x of shape (d,) or (N, d); returns scalar or (N,)."""
        arr = np.asarray(x, dtype=float)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.shape[1] != self.arity:
            raise ValueError(f"argument dimension {arr.shape[1]} != arity {self.arity}")
        out = np.zeros(arr.shape[0])
        for coeff, expo in self.terms:
            term = np.full(arr.shape[0], coeff)
            for j, e in enumerate(expo):
                if e:
                    term = term * arr[:, j] ** e
            out += term
        return float(out[0]) if single else out

    # -- algebra ---------------------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        return Polynomial(self.arity, list(self.terms) + list(other.terms))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.arity, [(-c, e) for c, e in self.terms])

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Polynomial(self.arity, [(c * other, e) for c, e in self.terms])
        other = self._coerce(other)
        prods = []
        for c1, e1 in self.terms:
            for c2, e2 in other.terms:
                prods.append((c1 * c2, tuple(a + b for a, b in zip(e1, e2))))
        return Polynomial(self.arity, prods)

    __rmul__ = __mul__

    def _coerce(self, other):
        if isinstance(other, (int, float)):
            return Polynomial.constant(self.arity, float(other))
        if not isinstance(other, Polynomial):
            raise TypeError(f"cannot combine Polynomial with {type(other).__name__}")
        if other.arity != self.arity:
            raise ValueError("arity mismatch")
        return other

    # -- calculus ---------------------------------------------------------------
    def partial(self, index: int) -> "Polynomial":
        """Exact partial derivative with respect to coordinate `index`."""
        out = []
        for coeff, expo in self.terms:
            e = expo[index]
            if e:
                new = list(expo)
                new[index] = e - 1
                out.append((coeff * e, tuple(new)))
        return Polynomial(self.arity, out)

    def gradient(self):
        """Tuple of the arity partial derivatives."""
        return tuple(self.partial(j) for j in range(self.arity))

    def degree(self) -> int:
        return max((sum(e) for _, e in self.terms), default=0)

    # -- misc -------------------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def __eq__(self, other):
        return (
            isinstance(other, Polynomial)
            and other.arity == self.arity
            and other.terms == self.terms
        )

    def __hash__(self):
        return hash((self.arity, self.terms))

    def to_jsonable(self):
        """[[coefficient, [e1, ..., ed]], ...] literal form used in configs."""
        return [[c, list(e)] for c, e in self.terms]

    @classmethod
    def from_jsonable(cls, arity: int, data) -> "Polynomial":
        return cls(arity, [(c, tuple(e)) for c, e in data])

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        bits = []
        for c, e in self.terms:
            mono = "*".join(
                f"x{j + 1}^{p}" if p > 1 else f"x{j + 1}" for j, p in enumerate(e) if p
            )
            bits.append(f"{c:g}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " + ".join(bits) + ")"
