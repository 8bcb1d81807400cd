"""Scenario-file parsing with pinpointed validation errors.

Scenario JSON files describe one experiment's model; run parameters (N,
steps, seed) live in the experiment config. Every validation failure raises
:class:`SchemaError` carrying the JSON path of the offending field.
"""

from __future__ import annotations


from .coefficients import (
    AffineCoefficient,
    AffineControl,
    ConstantControl,
    InitialSampler,
    JumpCoefficient,
    MarkFunction,
    MarkLaw,
)
from .functionals import CylindricalFunctional
from .lq import LQCoefficients, NuMoments
from .mv import MVParams
from .polynomials import Polynomial
from .simulate import (
    DeterministicEtaSchedule,
    IdiosyncraticEta,
    JumpDiffusionSpec,
    SingularSpec,
)

__all__ = [
    "SchemaError",
    "build_jump_diffusion",
    "build_singular",
    "build_lq",
    "build_mv",
    "build_phi",
    "build_initial",
]


class SchemaError(ValueError):
    """Validation failure at a specific field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _get(obj, key, path, types, required=True, default=None):
    if key not in obj:
        if required:
            raise SchemaError(f"{path}.{key}", "missing required field")
        return default
    val = obj[key]
    if types is not None and not isinstance(val, types):
        names = (
            "/".join(t.__name__ for t in types)
            if isinstance(types, tuple)
            else types.__name__
        )
        raise SchemaError(f"{path}.{key}", f"expected {names}, got {type(val).__name__}")
    return val


def _number(obj, key, path, required=True, default=0.0):
    v = _get(obj, key, path, (int, float), required=required, default=default)
    if isinstance(v, bool):
        raise SchemaError(f"{path}.{key}", "expected a number, got a boolean")
    return float(v)


def _affine(obj, path) -> AffineCoefficient:
    if obj is None:
        return AffineCoefficient()
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object with const/x/mean/control")
    for k in obj:
        if k not in ("const", "x", "mean", "control"):
            raise SchemaError(f"{path}.{k}", "unknown coefficient field")
    return AffineCoefficient(
        const=_number(obj, "const", path, required=False),
        x=_number(obj, "x", path, required=False),
        mean=_number(obj, "mean", path, required=False),
        control=_number(obj, "control", path, required=False),
    )


def _mark_function(obj, path) -> MarkFunction:
    if obj is None:
        return MarkFunction()
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object with const/slope")
    for k in obj:
        if k not in ("const", "slope"):
            raise SchemaError(f"{path}.{k}", "unknown mark-function field")
    return MarkFunction(
        const=_number(obj, "const", path, required=False),
        slope=_number(obj, "slope", path, required=False),
    )


def _mark_law(obj, path) -> MarkLaw:
    kind = _get(obj, "kind", path, str)
    params = _get(obj, "params", path, list)
    if kind not in ("uniform", "normal", "exponential", "point"):
        raise SchemaError(f"{path}.kind", f"unknown mark law {kind!r}")
    return MarkLaw(kind=kind, params=tuple(float(p) for p in params))


def build_initial(obj, path="scenario.initial") -> InitialSampler:
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object with kind/params")
    kind = _get(obj, "kind", path, str)
    params = _get(obj, "params", path, list)
    if kind not in ("point", "normal", "uniform", "triangular"):
        raise SchemaError(f"{path}.kind", f"unknown initial law {kind!r}")
    return InitialSampler(kind=kind, params=tuple(float(p) for p in params))


def _control(obj, path):
    if obj is None:
        return None
    kind = _get(obj, "kind", path, str)
    if kind == "constant":
        return ConstantControl(value=_number(obj, "value", path, required=False))
    if kind == "affine":
        return AffineControl(
            const=_number(obj, "const", path, required=False),
            x=_number(obj, "x", path, required=False),
            mean=_number(obj, "mean", path, required=False),
        )
    raise SchemaError(f"{path}.kind", f"unknown control kind {kind!r}")


def build_phi(obj, dimension: int, path="scenario.phi") -> CylindricalFunctional:
    """Functional literal or one of the shorthands.

    {"kind": "moment", "power": p}      -> <x^p, mu>
    {"kind": "mean_power", "power": p}  -> <x, mu>^p
    {"kind": "custom", "outer": [...], "inner": [[...], ...]}  (d = 1 inner
    polynomials use [coefficient, [exponents...]] pairs)
    """
    if dimension != 1:
        raise SchemaError(path, "scenario functionals are one-dimensional")
    kind = _get(obj, "kind", path, str)
    if kind == "moment":
        p = int(_number(obj, "power", path))
        if p < 0:
            raise SchemaError(f"{path}.power", "power must be nonnegative")
        return CylindricalFunctional.moment(Polynomial.monomial(1, 1.0, (p,)))
    if kind == "mean_power":
        p = int(_number(obj, "power", path))
        outer = Polynomial.monomial(1, 1.0, (p,))
        return CylindricalFunctional(outer, [Polynomial.coordinate(1)])
    if kind == "custom":
        inner_data = _get(obj, "inner", path, list)
        outer_data = _get(obj, "outer", path, list)
        try:
            inner = [Polynomial.from_jsonable(dimension, g) for g in inner_data]
            outer = Polynomial.from_jsonable(len(inner), outer_data)
            return CylindricalFunctional(outer, inner)
        except (TypeError, ValueError) as exc:
            raise SchemaError(path, f"bad polynomial literal: {exc}") from exc
    raise SchemaError(f"{path}.kind", f"unknown functional kind {kind!r}")


def _jump_parts(sc, path):
    jump_rate = _number(sc, "jump_rate", path, required=False)
    if jump_rate < 0:
        raise SchemaError(f"{path}.jump_rate", "jump rate must be nonnegative")
    jump = None
    mark_law = None
    if jump_rate > 0:
        jobj = _get(sc, "jump", path, dict)
        for k in jobj:
            if k not in ("b0", "b1", "b1_mean", "b2"):
                raise SchemaError(f"{path}.jump.{k}", "unknown jump field")
        jump = JumpCoefficient(
            b0=_mark_function(jobj.get("b0"), f"{path}.jump.b0"),
            b1=_mark_function(jobj.get("b1"), f"{path}.jump.b1"),
            b1_mean=_mark_function(jobj.get("b1_mean"), f"{path}.jump.b1_mean"),
            b2=_mark_function(jobj.get("b2"), f"{path}.jump.b2"),
        )
        mark_law = _mark_law(_get(sc, "mark_law", path, dict), f"{path}.mark_law")
    return jump_rate, jump, mark_law


def build_jump_diffusion(sc: dict, path="scenario"):
    """Returns (JumpDiffusionSpec, phi, t0, T)."""
    dimension = int(_number(sc, "dimension", path, required=False, default=1.0))
    if dimension < 1:
        raise SchemaError(f"{path}.dimension", "dimension must be positive")
    t0 = _number(sc, "t0", path, required=False, default=0.0)
    T = _number(sc, "T", path, required=False, default=1.0)
    if not t0 < T:
        raise SchemaError(f"{path}.T", "need t0 < T")
    jump_rate, jump, mark_law = _jump_parts(sc, path)
    spec = JumpDiffusionSpec(
        dimension=dimension,
        drift=_affine(sc.get("drift"), f"{path}.drift"),
        diffusion=_affine(sc.get("diffusion"), f"{path}.diffusion"),
        initial=build_initial(_get(sc, "initial", path, dict), f"{path}.initial"),
        jump=jump,
        jump_rate=jump_rate,
        mark_law=mark_law,
        control=_control(sc.get("control"), f"{path}.control"),
    )
    phi = build_phi(_get(sc, "phi", path, dict), dimension, f"{path}.phi")
    return spec, phi, t0, T


def build_singular(sc: dict, path="scenario"):
    """Returns (SingularSpec, phi, t0, T, mandatory_times)."""
    dimension = int(_number(sc, "dimension", path, required=False, default=1.0))
    t0 = _number(sc, "t0", path, required=False, default=0.0)
    T = _number(sc, "T", path, required=False, default=1.0)
    if not t0 < T:
        raise SchemaError(f"{path}.T", "need t0 < T")
    lam = _number(sc, "lam", path, required=False, default=1.0)
    eobj = _get(sc, "eta", path, dict)
    kind = _get(eobj, "kind", f"{path}.eta", str)
    mandatory = []
    if kind == "deterministic":
        jumps = []
        for i, pair in enumerate(_get(eobj, "jumps", f"{path}.eta", list, required=False, default=[])):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise SchemaError(f"{path}.eta.jumps[{i}]", "expected [time, size]")
            jumps.append((float(pair[0]), float(pair[1])))
            mandatory.append(float(pair[0]))
        rate = eobj.get("rate")
        eta = DeterministicEtaSchedule(
            jumps=tuple(jumps), rate=(float(rate),) if rate is not None else None
        )
    elif kind == "idiosyncratic":
        eta = IdiosyncraticEta(
            mode=_get(eobj, "mode", f"{path}.eta", str, required=False, default="poisson_rate"),
            size=_number(eobj, "size", f"{path}.eta", required=False, default=1.0),
            rate=_number(eobj, "rate", f"{path}.eta", required=False, default=1.0),
        )
    else:
        raise SchemaError(f"{path}.eta.kind", f"unknown eta kind {kind!r}")
    spec = SingularSpec(
        dimension=dimension,
        drift=_affine(sc.get("drift"), f"{path}.drift"),
        diffusion=_affine(sc.get("diffusion"), f"{path}.diffusion"),
        initial=build_initial(_get(sc, "initial", path, dict), f"{path}.initial"),
        lam=(lam,),
        eta=eta,
        control=_control(sc.get("control"), f"{path}.control"),
    )
    phi = build_phi(_get(sc, "phi", path, dict), dimension, f"{path}.phi")
    return spec, phi, t0, T, mandatory


_LQ_SCALARS = (
    "b0", "b1", "b1m", "b2",
    "s0", "s1", "s1m", "s2",
    "f1", "f1m", "f2", "g1", "g1m",
)


def build_lq(sc: dict, path="scenario"):
    """Returns (LQCoefficients, T, initial)."""
    vals = {k: _number(sc, k, path, required=False) for k in _LQ_SCALARS}
    if "f2" not in sc:
        raise SchemaError(f"{path}.f2", "missing required field")
    vals["f2"] = _number(sc, "f2", path)
    jump_rate = _number(sc, "jump_rate", path, required=False)
    betas = {}
    mark_law = None
    if jump_rate > 0:
        jobj = _get(sc, "jump", path, dict)
        for name in ("beta0", "beta1", "beta1m", "beta2"):
            betas[name] = _mark_function(jobj.get(name), f"{path}.jump.{name}")
        mark_law = _mark_law(_get(sc, "mark_law", path, dict), f"{path}.mark_law")
    T = _number(sc, "T", path)
    if T <= 0:
        raise SchemaError(f"{path}.T", "horizon must be positive")
    nu_table = None
    if "nu_moments" in sc:
        tobj = _get(sc, "nu_moments", path, dict)
        known = set(NuMoments.__dataclass_fields__)
        for k in tobj:
            if k not in known:
                raise SchemaError(f"{path}.nu_moments.{k}", "unknown moment name")
        nu_table = NuMoments(**{k: float(v) for k, v in tobj.items()})
    coeffs = LQCoefficients(
        **vals,
        beta0=betas.get("beta0", MarkFunction()),
        beta1=betas.get("beta1", MarkFunction()),
        beta1m=betas.get("beta1m", MarkFunction()),
        beta2=betas.get("beta2", MarkFunction()),
        jump_rate=jump_rate,
        mark_law=mark_law,
        nu_table=nu_table,
    )
    initial = build_initial(_get(sc, "initial", path, dict), f"{path}.initial")
    return coeffs, T, initial


def build_mv(sc: dict, path="scenario"):
    """Returns (MVParams, initial)."""
    fields = {}
    for k in ("r", "rho", "sigma", "beta", "lam", "gamma", "T"):
        fields[k] = _number(sc, k, path)
    try:
        params = MVParams(**fields)
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from exc
    initial = build_initial(_get(sc, "initial", path, dict), f"{path}.initial")
    return params, initial
