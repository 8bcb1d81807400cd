"""Coefficient building blocks for the particle simulators.

Dynamics coefficients may depend on the running law only through a declared
finite feature list (mean, variance, extra polynomial moments), which is what
an interacting-particle system can realize. The JSON-facing forms below cover
every shipped scenario: affine maps in (x, mean, control) for drift/diffusion,
and jump amplitudes that are affine in (x, mean, control) with mark-dependent
weights that are themselves affine in the mark.

Custom coefficient objects are accepted anywhere as long as they implement the
same ``__call__(t, x, a, features)`` protocol with vectorized x of shape
(N, d) and scalar control array a of shape (N,) (or None).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


__all__ = [
    "FeatureSpec",
    "AffineCoefficient",
    "MarkFunction",
    "JumpCoefficient",
    "MarkLaw",
    "InitialSampler",
    "ConstantControl",
    "AffineControl",
]


# -----------------------------------------------------------------------------
# Measure features
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class FeatureSpec:
    """Declared measure features recomputed from the ensemble each step.

    ``mean`` is always computed. Extra polynomial moments are listed as
    (name, polynomial) pairs and appear in the feature dict under their names.
    """

    with_variance: bool = False
    moments: tuple = ()

    def compute(self, x: np.ndarray) -> dict:
        feats = {"mean": x.mean(axis=0)}
        if self.with_variance:
            dev = x - feats["mean"]
            feats["var"] = float(np.mean(np.sum(dev * dev, axis=1)))
        for name, poly in self.moments:
            feats[name] = float(np.mean(poly(x)))
        return feats


def _mean_scalar(features) -> float:
    m = features["mean"]
    return float(m[0]) if np.ndim(m) else float(m)


# -----------------------------------------------------------------------------
# Drift / diffusion coefficients
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class AffineCoefficient:
    """c0 + cx * x + cmean * mean(mu) + ca * a, applied coordinatewise."""

    const: float = 0.0
    x: float = 0.0
    mean: float = 0.0
    control: float = 0.0

    def __call__(self, t, x, a, features):
        out = np.full_like(x, self.const)
        if self.x:
            out += self.x * x
        if self.mean:
            out += self.mean * np.broadcast_to(features["mean"], x.shape)
        if self.control:
            if a is None:
                raise ValueError("coefficient depends on the control but none is set")
            out += self.control * np.asarray(a)[:, None]
        return out

    @property
    def depends_on_state_or_control(self) -> bool:
        return self.x != 0.0 or self.control != 0.0


# -----------------------------------------------------------------------------
# Jumps
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class MarkFunction:
    """Mark weight theta -> const + slope * theta."""

    const: float = 0.0
    slope: float = 0.0

    def __call__(self, theta):
        return self.const + self.slope * np.asarray(theta, dtype=float)

    def is_zero(self) -> bool:
        return self.const == 0.0 and self.slope == 0.0


@dataclass(frozen=True)
class JumpCoefficient:
    """Jump amplitude beta(x, a, mean, theta), affine in (x, mean, a).

    beta = b0(theta) + b1(theta) * x + b1_mean(theta) * mean + b2(theta) * a,
    applied coordinatewise in d > 1.
    """

    b0: MarkFunction = MarkFunction()
    b1: MarkFunction = MarkFunction()
    b1_mean: MarkFunction = MarkFunction()
    b2: MarkFunction = MarkFunction()

    def __call__(self, x, a, features, theta):
        x = np.asarray(x, dtype=float)
        out = np.broadcast_to(self.b0(theta), x.shape).astype(float).copy()
        if not self.b1.is_zero():
            out += self.b1(theta) * x
        if not self.b1_mean.is_zero():
            out += self.b1_mean(theta) * _mean_scalar(features)
        if not self.b2.is_zero():
            if a is None:
                raise ValueError("jump coefficient depends on the control but none is set")
            a = np.asarray(a, dtype=float)
            if x.ndim == 2 and a.ndim == 1:
                a = a[:, None]
            out += self.b2(theta) * a
        return out


@dataclass(frozen=True)
class MarkLaw:
    """Normalized mark distribution: the jump measure is rate * this law.

    kinds: "uniform" (lo, hi), "normal" (mu, sd), "exponential" (scale),
    "point" (value).
    """

    kind: str = "uniform"
    params: tuple = (0.0, 1.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            lo, hi = self.params
            return rng.uniform(lo, hi, size=n)
        if self.kind == "normal":
            mu, sd = self.params
            return mu + sd * rng.standard_normal(n)
        if self.kind == "exponential":
            (scale,) = self.params
            return rng.exponential(scale, size=n)
        if self.kind == "point":
            (v,) = self.params
            return np.full(n, v)
        raise ValueError(f"unknown mark law {self.kind!r}")

    def m1(self) -> float:
        if self.kind == "uniform":
            lo, hi = self.params
            return 0.5 * (lo + hi)
        if self.kind == "normal":
            return self.params[0]
        if self.kind == "exponential":
            return self.params[0]
        if self.kind == "point":
            return self.params[0]
        raise ValueError(self.kind)

    def m2(self) -> float:
        if self.kind == "uniform":
            lo, hi = self.params
            return (lo * lo + lo * hi + hi * hi) / 3.0
        if self.kind == "normal":
            mu, sd = self.params
            return mu * mu + sd * sd
        if self.kind == "exponential":
            s = self.params[0]
            return 2.0 * s * s
        if self.kind == "point":
            return self.params[0] ** 2
        raise ValueError(self.kind)

    def expect(self, f: MarkFunction) -> float:
        """E[f(theta)] under the normalized law."""
        return f.const + f.slope * self.m1()

    def expect_product(self, f: MarkFunction, g: MarkFunction) -> float:
        """E[f(theta) g(theta)] under the normalized law."""
        return (
            f.const * g.const
            + (f.const * g.slope + f.slope * g.const) * self.m1()
            + f.slope * g.slope * self.m2()
        )

    def pdf(self, x: np.ndarray) -> np.ndarray:
        """Density on R; point masses have none and raise."""
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            lo, hi = self.params
            return np.where((x >= lo) & (x < hi), 1.0 / (hi - lo), 0.0)
        if self.kind == "normal":
            mu, sd = self.params
            z = (x - mu) / sd
            return np.exp(-0.5 * z * z) / (sd * np.sqrt(2.0 * np.pi))
        if self.kind == "exponential":
            s = self.params[0]
            return np.where(x >= 0.0, np.exp(-x / s) / s, 0.0)
        raise ValueError(f"mark law {self.kind!r} has no density")

    def cdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            lo, hi = self.params
            return np.clip((x - lo) / (hi - lo), 0.0, 1.0)
        if self.kind == "normal":
            mu, sd = self.params
            from scipy.special import ndtr

            return ndtr((x - mu) / sd)
        if self.kind == "exponential":
            s = self.params[0]
            return np.where(x >= 0.0, 1.0 - np.exp(-x / s), 0.0)
        if self.kind == "point":
            (v,) = self.params
            return (x >= v).astype(float)
        raise ValueError(self.kind)


# -----------------------------------------------------------------------------
# Initial laws and controls
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class InitialSampler:
    """Initial particle law: "point", "normal", "uniform", or "triangular".

    "triangular" is the symmetric triangle on [center - width, center + width],
    convenient as a compactly supported density with a one-line sampler.
    """

    kind: str = "point"
    params: tuple = (0.0,)

    def sample(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        if self.kind == "point":
            (v,) = self.params
            return np.full((n, d), v)
        if self.kind == "normal":
            mu, sd = self.params
            return mu + sd * rng.standard_normal((n, d))
        if self.kind == "uniform":
            lo, hi = self.params
            return rng.uniform(lo, hi, size=(n, d))
        if self.kind == "triangular":
            center, width = self.params
            u = rng.uniform(0.0, 1.0, size=(n, d)) + rng.uniform(0.0, 1.0, size=(n, d))
            return center + width * (u - 1.0)
        raise ValueError(f"unknown initial law {self.kind!r}")

    def pdf(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            lo, hi = self.params
            return np.where((x >= lo) & (x < hi), 1.0 / (hi - lo), 0.0)
        if self.kind == "normal":
            mu, sd = self.params
            z = (x - mu) / sd
            return np.exp(-0.5 * z * z) / (sd * np.sqrt(2.0 * np.pi))
        if self.kind == "triangular":
            c, w = self.params
            return np.maximum(0.0, (1.0 - np.abs(x - c) / w) / w)
        raise ValueError(f"initial law {self.kind!r} has no density")


@dataclass(frozen=True)
class ConstantControl:
    value: float = 0.0

    def __call__(self, t, x, features):
        return np.full(x.shape[0], self.value)


@dataclass(frozen=True)
class AffineControl:
    """Time-constant feedback a(x, mean) = const + cx * x + cmean * mean."""

    const: float = 0.0
    x: float = 0.0
    mean: float = 0.0

    def __call__(self, t, x, features):
        out = np.full(x.shape[0], self.const)
        if self.x:
            out = out + self.x * x[:, 0]
        if self.mean:
            out = out + self.mean * _mean_scalar(features)
        return out
