"""Empirical probability measures on R^d and the moment machinery built on them.

An :class:`EmpiricalMeasure` is an equally weighted particle cloud standing in
for a square-integrable probability measure. All reductions go through numpy's
pairwise summation so that repeated runs reproduce bit-identical results
independent of how the surrounding experiment is parallelized.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "EmpiricalMeasure",
    "empirical_from_samples",
    "polynomial_moment",
    "wasserstein2_1d",
    "mean_and_variance",
]


class EmpiricalMeasure:
    """Uniformly weighted particle cloud in R^d.

    Parameters
    ----------
    points : array_like, shape (N, d)
        Particle positions. Must be non-empty and finite.

    Notes
    -----
    The point array is copied and frozen; instances are immutable and safe to
    share between threads. There is no weighted variant.
    """

    __slots__ = ("_points",)

    def __init__(self, points):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ValueError("points must be a (N, d) array or a list of d-vectors")
        if pts.shape[0] == 0:
            raise ValueError("empirical measure needs at least one particle")
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite particle coordinate")
        pts.setflags(write=False)
        self._points = pts

    @property
    def points(self) -> np.ndarray:
        """Read-only (N, d) array of particle positions."""
        return self._points

    @property
    def size(self) -> int:
        return self._points.shape[0]

    @property
    def dimension(self) -> int:
        return self._points.shape[1]

    def mean(self) -> np.ndarray:
        """First moment as a d-vector."""
        return self._points.mean(axis=0)

    def variance(self) -> float:
        """Trace of the covariance: sum over coordinates of Var(x_i).

        Exactly zero when all particles coincide.
        """
        pts = self._points
        if bool(np.all(pts == pts[0])):
            return 0.0
        dev = pts - pts.mean(axis=0)
        return float(np.mean(np.sum(dev * dev, axis=1)))

    def second_moment(self) -> float:
        """||mu||_2^2, the mean of |x|^2."""
        return float(np.mean(np.sum(self._points * self._points, axis=1)))

    def to_csv(self, path) -> None:
        """Write one row per particle, columns x1..xd, period decimals."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(f"x{i + 1}" for i in range(self.dimension)) + "\n")
            for row in self._points:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    def __repr__(self) -> str:
        return f"EmpiricalMeasure(N={self.size}, d={self.dimension})"


def empirical_from_samples(samples) -> EmpiricalMeasure:
    """Build an :class:`EmpiricalMeasure` from a list of d-vectors.

    Raises ``ValueError`` on empty input, ragged dimensions, or non-finite
    entries.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ValueError("no samples given")
    if arr.ndim > 2:
        raise ValueError("samples must be scalars or d-vectors of one common dimension")
    return EmpiricalMeasure(arr)


def polynomial_moment(mu: EmpiricalMeasure, g) -> float:
    """Return <g, mu> = (1/N) sum_i g(x_i) for a polynomial g of arity d."""
    if g.arity != mu.dimension:
        raise ValueError(
            f"polynomial arity {g.arity} does not match measure dimension {mu.dimension}"
        )
    return float(np.mean(g(mu.points)))


def wasserstein2_1d(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Quadratic Wasserstein distance between two 1-d clouds of equal size.

    Uses the sorted (monotone) coupling, which is optimal in one dimension.
    Resampling to unequal particle counts is deliberately unsupported.
    """
    if mu.dimension != 1 or nu.dimension != 1:
        raise ValueError("wasserstein2_1d is defined for 1-d measures only")
    if mu.size != nu.size:
        raise ValueError("equal particle counts required (no resampling)")
    xs = np.sort(mu.points[:, 0])
    ys = np.sort(nu.points[:, 0])
    diff = xs - ys
    return float(np.sqrt(np.mean(diff * diff)))


def mean_and_variance(mu: EmpiricalMeasure):
    """Return (mean vector, variance) with the trace-form variance in d > 1."""
    return mu.mean(), mu.variance()
