"""Term-by-term evaluation of the measure-flow change-of-variables identity
on recorded particle bundles.

Every verifier computes, with empirical marginals standing in for the laws,

    lhs  =  Phi(mu_s) - Phi(mu_t)

and a named decomposition of the right-hand side, then reports the residual
``lhs - sum(terms)``. Integrands are evaluated at left points (pre-jump state
and pre-jump marginal), matching the predictable-integrand convention; terms
whose driving mechanism is absent in a scenario come out exactly 0.0, not
merely small.

Standard errors come from splitting the particles into fixed contiguous
blocks and treating each block as its own universe: the across-block spread
of any statistic, scaled by 1/sqrt(B), estimates the full-ensemble error.
This is exact for exchangeable particle systems (all shipped verifier
scenarios have law-independent coefficients) and a propagation-of-chaos
approximation otherwise. Block statistics are produced in the same single
sweep as the full ones: per-particle contribution arrays are formed once per
node and reduced over blocks, while the measure-level weights (outer
gradients of the cylindrical functional) are evaluated per universe.

For cylindrical Phi every per-universe quantity splits as

    sum_k  w_k(universe moments) * (grouped sum of per-particle values_k),

which is what makes the single sweep possible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .functionals import CylindricalFunctional
from .rng import STREAM
from .simulate import (
    JumpDiffusionSpec,
    PathBundle,
    SingularSpec,
    simulate_jump_diffusion,
)
from .timegrid import TimeGrid

__all__ = [
    "ItoReport",
    "verify_general",
    "verify_jump_corollary",
    "verify_singular_corollary",
    "convergence_sweep",
    "SweepResult",
]

TERM_NAMES = (
    "drift_diffusion_integral",
    "quadratic_variation_term",
    "law_jump_term",
    "lions_jump_compensator",
    "linear_derivative_jump_term",
    "singular_control_integral",
)

DEFAULT_BLOCKS = 32


@dataclass
class ItoReport:
    """Result of one identity check over a node window [t_index, s_index]."""

    lhs: float
    terms: dict
    residual: float
    se: dict
    t_index: int
    s_index: int
    n_particles: int
    kind: str
    diagnostics: list = field(default_factory=list)

    @property
    def rhs(self) -> float:
        return float(sum(self.terms.values()))

    def to_jsonable(self) -> dict:
        return {
            "kind": self.kind,
            "t_index": self.t_index,
            "s_index": self.s_index,
            "n_particles": self.n_particles,
            "lhs": self.lhs,
            "terms": dict(self.terms),
            "residual": self.residual,
            "se": dict(self.se),
        }


# -----------------------------------------------------------------------------
# Universe bookkeeping: index 0 is the full ensemble, 1..B the SE blocks
# -----------------------------------------------------------------------------
class _Universes:
    def __init__(self, n: int, block_count: int):
        self.n = n
        b = min(block_count, n)
        if b >= 2:
            self.edges = np.linspace(0, n, b + 1).astype(np.int64)
        else:
            self.edges = np.array([0, n], dtype=np.int64)
        self.b = len(self.edges) - 1
        self.sizes = np.concatenate([[n], np.diff(self.edges)]).astype(float)

    def grouped_sum(self, arr: np.ndarray) -> np.ndarray:
        """(1 + B,) sums of a per-particle array: full first, then blocks."""
        blocks = np.add.reduceat(arr, self.edges[:-1])
        return np.concatenate([[blocks.sum()], blocks])

    def grouped_row_sum(self, values: np.ndarray, parts: np.ndarray) -> np.ndarray:
        """Sums of per-jump-row values grouped by the owning block."""
        idx = np.searchsorted(self.edges, parts, side="right") - 1
        blocks = np.bincount(idx, weights=values, minlength=self.b)
        return np.concatenate([[blocks.sum()], blocks])

    def zeros(self) -> np.ndarray:
        return np.zeros(1 + self.b)


class _PhiSweep:
    """Per-node cylindrical bookkeeping shared by all verifiers.

    Tracks, for the current node state, the per-universe moment sums of every
    inner polynomial, and evaluates per-universe outer gradients and values.
    """

    def __init__(self, phi: CylindricalFunctional, uni: _Universes):
        self.phi = phi
        self.uni = uni
        self.inner = phi.inner
        self.grad_outer = phi.outer.gradient()
        self.d = phi.dimension

    def moment_sums(self, x: np.ndarray) -> np.ndarray:
        """(n_inner, U) raw sums of g_k over each universe."""
        return np.vstack([self.uni.grouped_sum(g(x)) for g in self.inner])

    def weights(self, moment_sums: np.ndarray) -> np.ndarray:
        """(n_inner, U) outer gradients at each universe's moments."""
        moments = (moment_sums / self.uni.sizes).T  # (U, n_inner)
        return np.vstack([p(moments) for p in self.grad_outer])

    def values(self, moment_sums: np.ndarray) -> np.ndarray:
        """(U,) value of Phi at each universe's moments."""
        moments = (moment_sums / self.uni.sizes).T
        return np.asarray(self.phi.outer(moments), dtype=float).reshape(-1)

    def lions_dot(self, x: np.ndarray, vec: np.ndarray):
        """Per-inner arrays c_k,i = grad g_k(x_i) . vec_i (no outer weights)."""
        out = []
        for g in self.inner:
            c = np.zeros(x.shape[0])
            for j in range(self.d):
                pj = g.partial(j)
                if not pj.is_zero():
                    c += pj(x) * vec[:, j]
            out.append(c)
        return out

    def lions_xx_diag(self, x: np.ndarray, qv):
        """Per-inner arrays q_k,i = sum_j d2 g_k / dx_j^2 (x_i) * qv_{i j}."""
        per_particle = qv.ndim == 2
        out = []
        for g in self.inner:
            c = np.zeros(x.shape[0])
            for j in range(self.d):
                pjj = g.partial(j).partial(j)
                if not pjj.is_zero():
                    c += pjj(x) * (qv[:, j] if per_particle else qv[j])
            out.append(c)
        return out

    def inner_diffs(self, x_new: np.ndarray, x_old: np.ndarray):
        """Per-inner arrays g_k(x_new) - g_k(x_old)."""
        return [g(x_new) - g(x_old) for g in self.inner]

    @staticmethod
    def combine(weights: np.ndarray, grouped: np.ndarray, sizes: np.ndarray):
        """(U,) statistic sum_k w_k,u * grouped_k,u / size_u."""
        return np.einsum("ku,ku->u", weights, grouped) / sizes


def _row_left_states(x_left, parts, deltas):
    """Per-jump left limits at one node.

    A particle jumping several times within one step sees its later jumps from
    the state left by the earlier ones, so rows of a repeated particle
    accumulate the preceding deltas (rows are stored in event-time order).
    """
    row_left = x_left[parts].copy()
    if len(np.unique(parts)) != len(parts):
        running = {}
        for r in range(len(parts)):
            p = int(parts[r])
            if p in running:
                row_left[r] = running[p]
            running[p] = row_left[r] + deltas[r]
    return row_left


def _check_window(phi, bundle, t_index, s_index):
    if phi.dimension != bundle.dimension:
        raise ValueError("functional and bundle dimensions differ")
    if not (0 <= t_index < s_index < bundle.n_nodes):
        raise ValueError("need 0 <= t_index < s_index within the grid")


def _report_from(kind, phi, bundle, t_index, s_index, lhs_u, terms_u, diagnostics):
    terms = {name: float(vals[0]) for name, vals in terms_u.items()}
    residual_u = lhs_u - sum(terms_u.values())
    stats = {name: vals for name, vals in terms_u.items()}
    stats["lhs"] = lhs_u
    stats["residual"] = residual_u
    b = len(lhs_u) - 1
    se = {}
    for name, vals in stats.items():
        se[name] = (
            float(np.std(vals[1:], ddof=1) / np.sqrt(b)) if b >= 2 else 0.0
        )
    return ItoReport(
        lhs=float(lhs_u[0]),
        terms=terms,
        residual=float(residual_u[0]),
        se=se,
        t_index=t_index,
        s_index=s_index,
        n_particles=bundle.N,
        kind=kind,
        diagnostics=diagnostics,
    )


def _trapezoid_weights(nodes, t_index, s_index):
    w = np.zeros(s_index - t_index + 1)
    dts = np.diff(nodes[t_index : s_index + 1])
    w[:-1] += 0.5 * dts
    w[1:] += 0.5 * dts
    return w


# -----------------------------------------------------------------------------
# Pathwise identity for general semimartingale bundles
# -----------------------------------------------------------------------------
def verify_general(
    phi: CylindricalFunctional,
    bundle: PathBundle,
    t_index: int,
    s_index: int,
    block_count: int = DEFAULT_BLOCKS,
) -> ItoReport:
    """Pathwise decomposition on any recorded bundle.

    Terms, all with left-point (predictable) integrands:

    * drift_diffusion_integral: (1/N) sum over particles and increments of
      d_mu Phi . dX, jump increments included;
    * quadratic_variation_term: half-trace against the accumulated model
      quadratic variation sigma sigma^T dt;
    * law_jump_term: Phi jump across declared common-jump nodes;
    * lions_jump_compensator: minus the Lions term over all jump increments
      (cancels the jump part of the dX integral exactly);
    * linear_derivative_jump_term: flat-derivative differences across
      idiosyncratic jumps, under the post-jump marginal.

    At declared law-jump nodes the flat-derivative term is skipped and vice
    versa; the two indicators are disjoint by construction.
    """
    _check_window(phi, bundle, t_index, s_index)
    uni = _Universes(bundle.N, block_count)
    sweep = _PhiSweep(phi, uni)
    sizes = uni.sizes

    terms_u = {name: uni.zeros() for name in TERM_NAMES}
    diagnostics = []

    x_prev = bundle.right_states(t_index)
    sums_prev = sweep.moment_sums(x_prev)
    phi_start = sweep.values(sums_prev)
    phi_prev = phi_start

    for k in range(t_index, s_index):
        node = k + 1
        d_dd = uni.zeros()
        d_qv = uni.zeros()
        d_law = uni.zeros()
        d_comp = uni.zeros()
        d_lin = uni.zeros()

        w_prev = sweep.weights(sums_prev)
        x_left = bundle.left_states(node)
        incr = x_left - x_prev
        if np.any(incr != 0.0):
            grouped = np.vstack(
                [uni.grouped_sum(c) for c in sweep.lions_dot(x_prev, incr)]
            )
            d_dd += sweep.combine(w_prev, grouped, sizes)

        qv = bundle.step_qv(k)
        if np.any(qv != 0.0):
            grouped = np.vstack(
                [uni.grouped_sum(c) for c in sweep.lions_xx_diag(x_prev, qv)]
            )
            d_qv += 0.5 * sweep.combine(w_prev, grouped, sizes)

        x_right = bundle.right_states(node)
        rows = bundle.jump_rows_at(node)
        parts = bundle.jump_particle[rows]
        if parts.size:
            deltas = bundle.jump_delta[rows]
            row_left = _row_left_states(x_left, parts, deltas)
            sums_left = sums_prev + np.vstack(
                [uni.grouped_sum(c) for c in sweep.inner_diffs(x_left, x_prev)]
            )
            w_left = sweep.weights(sums_left)
            # Lions term of the jump increments, at each row's own left limit
            row_vals = []
            for g in sweep.inner:
                c = np.zeros(len(parts))
                for j in range(sweep.d):
                    pj = g.partial(j)
                    if not pj.is_zero():
                        c += pj(row_left) * deltas[:, j]
                row_vals.append(uni.grouped_row_sum(c, parts))
            jd = sweep.combine(w_left, np.vstack(row_vals), sizes)
            d_dd += jd
            d_comp -= jd

            row_diffs = [
                g(row_left + deltas) - g(row_left) for g in sweep.inner
            ]
            adjust = np.vstack(
                [uni.grouped_row_sum(c, parts) for c in row_diffs]
            )
            sums_right = sums_left + adjust
            if bundle.has_common_jump(node):
                d_law += sweep.values(sums_right) - sweep.values(sums_left)
            else:
                w_right = sweep.weights(sums_right)
                d_lin += sweep.combine(w_right, adjust, sizes)
            sums_prev = sums_right
        else:
            sums_prev = sums_prev + np.vstack(
                [uni.grouped_sum(c) for c in sweep.inner_diffs(x_right, x_prev)]
            )

        for name, val in (
            ("drift_diffusion_integral", d_dd),
            ("quadratic_variation_term", d_qv),
            ("law_jump_term", d_law),
            ("lions_jump_compensator", d_comp),
            ("linear_derivative_jump_term", d_lin),
        ):
            terms_u[name] += val

        phi_now = sweep.values(sums_prev)
        diagnostics.append(
            {
                "node": node,
                "time": float(bundle.grid.nodes[node]),
                "d_lhs": float(phi_now[0] - phi_prev[0]),
                "d_drift_diffusion": float(d_dd[0]),
                "d_quadratic_variation": float(d_qv[0]),
                "d_law_jump": float(d_law[0]),
                "d_compensator": float(d_comp[0]),
                "d_linear_derivative": float(d_lin[0]),
                "d_residual": float(
                    (phi_now[0] - phi_prev[0])
                    - (d_dd[0] + d_qv[0] + d_law[0] + d_comp[0] + d_lin[0])
                ),
            }
        )
        phi_prev = phi_now
        x_prev = x_right

    return _report_from(
        "general", phi, bundle, t_index, s_index, phi_prev - phi_start, terms_u, diagnostics
    )


# -----------------------------------------------------------------------------
# Generator form for jump diffusions
# -----------------------------------------------------------------------------
def verify_jump_corollary(
    phi: CylindricalFunctional,
    spec: JumpDiffusionSpec,
    bundle: PathBundle,
    t_index: int,
    s_index: int,
    mark_mc: int = 1,
    block_count: int = DEFAULT_BLOCKS,
) -> ItoReport:
    """Generator-route check for jump-diffusion bundles.

    Integrates in time (composite trapezoid over nodes) the closed-form
    generator: the Lions term against the drift, the half-trace diffusion
    term, and the jump-measure integral of flat-derivative differences. The
    jump integral is estimated with ``mark_mc`` fresh marks per particle and
    node, resampled independently of the realized path marks, so the estimate
    is conditionally unbiased. Coefficients are evaluated at the features the
    simulation realized (the full-ensemble ones); only the functional's
    measure argument varies across SE-block universes.
    """
    _check_window(phi, bundle, t_index, s_index)
    if mark_mc < 1:
        raise ValueError("mark_mc must be >= 1")
    nodes = bundle.grid.nodes
    has_jumps = spec.jump_rate > 0
    uni = _Universes(bundle.N, block_count)
    sweep = _PhiSweep(phi, uni)
    sizes = uni.sizes

    n_nodes = s_index - t_index + 1
    g_drift = np.zeros((n_nodes, 1 + uni.b))
    g_qv = np.zeros((n_nodes, 1 + uni.b))
    g_jump = np.zeros((n_nodes, 1 + uni.b))
    lhs_ends = {}

    for j, node in enumerate(range(t_index, s_index + 1)):
        t = float(nodes[node])
        x = bundle.right_states(node)
        sums = sweep.moment_sums(x)
        w = sweep.weights(sums)
        if node == t_index or node == s_index:
            lhs_ends[node] = sweep.values(sums)
        feats = spec.features.compute(x)
        a = spec.control(t, x, feats) if spec.control is not None else None
        b = np.asarray(spec.drift(t, x, a, feats), dtype=float)
        grouped = np.vstack([uni.grouped_sum(c) for c in sweep.lions_dot(x, b)])
        g_drift[j] = sweep.combine(w, grouped, sizes)
        s = np.asarray(spec.diffusion(t, x, a, feats), dtype=float)
        grouped = np.vstack(
            [uni.grouped_sum(c) for c in sweep.lions_xx_diag(x, s * s)]
        )
        g_qv[j] = 0.5 * sweep.combine(w, grouped, sizes)
        if has_jumps:
            ss = np.random.SeedSequence(
                int(bundle.seed), spawn_key=(STREAM["mark_mc"], int(node))
            )
            rng = np.random.Generator(np.random.Philox(ss))
            marks = spec.mark_law.sample(rng, bundle.N * mark_mc).reshape(
                bundle.N, mark_mc
            )
            diff_sums = [np.zeros(bundle.N) for _ in sweep.inner]
            for m in range(mark_mc):
                theta = marks[:, m : m + 1]
                shifted = x + spec.jump(x, a, feats, theta)
                for ki, g in enumerate(sweep.inner):
                    diff_sums[ki] += g(shifted) - g(x)
            grouped = np.vstack([uni.grouped_sum(c) for c in diff_sums])
            g_jump[j] = (spec.jump_rate / mark_mc) * sweep.combine(w, grouped, sizes)

    w_time = _trapezoid_weights(nodes, t_index, s_index)
    terms_u = {name: uni.zeros() for name in TERM_NAMES}
    terms_u["drift_diffusion_integral"] = w_time @ g_drift
    terms_u["quadratic_variation_term"] = w_time @ g_qv
    terms_u["linear_derivative_jump_term"] = w_time @ g_jump

    diagnostics = [
        {
            "node": node,
            "time": float(nodes[node]),
            "generator_drift": float(g_drift[j, 0]),
            "generator_diffusion": float(g_qv[j, 0]),
            "generator_jump": float(g_jump[j, 0]),
        }
        for j, node in enumerate(range(t_index, s_index + 1))
    ]
    lhs_u = lhs_ends[s_index] - lhs_ends[t_index]
    return _report_from(
        "jump_corollary", phi, bundle, t_index, s_index, lhs_u, terms_u, diagnostics
    )


# -----------------------------------------------------------------------------
# Singular corollary
# -----------------------------------------------------------------------------
def verify_singular_corollary(
    phi: CylindricalFunctional,
    spec: SingularSpec,
    bundle: PathBundle,
    t_index: int,
    s_index: int,
    block_count: int = DEFAULT_BLOCKS,
) -> ItoReport:
    """Decomposition for mixed regular-singular bundles.

    Drift and diffusion enter in generator (expectation) form, integrated by
    the trapezoid rule; the singular term enters pathwise: the lambda-weighted
    Lions integral against d(eta) (continuous part at its pre-increment left
    limit plus the jump part), the law-jump sum across declared common nodes,
    the minus compensator over all eta jumps, and the flat-derivative sum
    across idiosyncratic jump nodes. Jumps scheduled exactly at t_index are
    included when t_index is the first node (window closed on the left, which
    is where an initial projection lives).
    """
    _check_window(phi, bundle, t_index, s_index)
    nodes = bundle.grid.nodes
    lam = spec.lam_vector()
    uni = _Universes(bundle.N, block_count)
    sweep = _PhiSweep(phi, uni)
    sizes = uni.sizes

    terms_u = {name: uni.zeros() for name in TERM_NAMES}

    # generator part of the regular dynamics
    n_nodes = s_index - t_index + 1
    g_drift = np.zeros((n_nodes, 1 + uni.b))
    g_qv = np.zeros((n_nodes, 1 + uni.b))
    for j, node in enumerate(range(t_index, s_index + 1)):
        t = float(nodes[node])
        x = bundle.right_states(node)
        sums = sweep.moment_sums(x)
        w = sweep.weights(sums)
        feats = spec.features.compute(x)
        a = spec.control(t, x, feats) if spec.control is not None else None
        b = np.asarray(spec.drift(t, x, a, feats), dtype=float)
        if np.any(b != 0.0):
            grouped = np.vstack([uni.grouped_sum(c) for c in sweep.lions_dot(x, b)])
            g_drift[j] = sweep.combine(w, grouped, sizes)
        s = np.asarray(spec.diffusion(t, x, a, feats), dtype=float)
        if np.any(s != 0.0):
            grouped = np.vstack(
                [uni.grouped_sum(c) for c in sweep.lions_xx_diag(x, s * s)]
            )
            g_qv[j] = 0.5 * sweep.combine(w, grouped, sizes)
    w_time = _trapezoid_weights(nodes, t_index, s_index)
    if np.any(g_drift != 0.0):
        terms_u["drift_diffusion_integral"] = w_time @ g_drift
    if np.any(g_qv != 0.0):
        terms_u["quadratic_variation_term"] = w_time @ g_qv

    # continuous part of eta, at the pre-increment left limit
    for k in range(t_index, s_index):
        node = k + 1
        d_eta = bundle.eta_cont_step(k)
        if d_eta is None or not np.any(d_eta != 0.0):
            continue
        x_left = bundle.left_states(node)
        if d_eta.ndim == 1:
            d_eta = np.broadcast_to(d_eta, x_left.shape)
        x_pre = x_left - lam * d_eta
        sums_pre = sweep.moment_sums(x_pre)
        w_pre = sweep.weights(sums_pre)
        grouped = np.vstack(
            [uni.grouped_sum(c) for c in sweep.lions_dot(x_pre, lam * d_eta)]
        )
        terms_u["singular_control_integral"] += sweep.combine(w_pre, grouped, sizes)

    # jump part of eta: integral contribution and compensator cancel exactly
    first = t_index if t_index == 0 else t_index + 1
    for node in range(first, s_index + 1):
        rows = bundle.jump_rows_at(node)
        parts = bundle.jump_particle[rows]
        common = bundle.has_common_jump(node)
        if parts.size == 0:
            continue
        if bundle.jump_delta_eta is None:
            raise ValueError("bundle lacks eta jump sizes; not a singular bundle")
        deltas = bundle.jump_delta[rows]
        x_left = bundle.left_states(node)
        sums_left = sweep.moment_sums(x_left)
        w_left = sweep.weights(sums_left)
        row_left = _row_left_states(x_left, parts, deltas)
        row_vals = []
        for g in sweep.inner:
            c = np.zeros(len(parts))
            for j in range(sweep.d):
                pj = g.partial(j)
                if not pj.is_zero():
                    c += pj(row_left) * deltas[:, j]
            row_vals.append(uni.grouped_row_sum(c, parts))
        jd = sweep.combine(w_left, np.vstack(row_vals), sizes)
        terms_u["singular_control_integral"] += jd
        terms_u["lions_jump_compensator"] -= jd

        adjust = np.vstack(
            [
                uni.grouped_row_sum(g(row_left + deltas) - g(row_left), parts)
                for g in sweep.inner
            ]
        )
        sums_right = sums_left + adjust
        if common:
            terms_u["law_jump_term"] += sweep.values(sums_right) - sweep.values(
                sums_left
            )
        else:
            w_right = sweep.weights(sums_right)
            terms_u["linear_derivative_jump_term"] += sweep.combine(
                w_right, adjust, sizes
            )

    side_t_left = t_index == 0
    x_t = bundle.left_states(t_index) if side_t_left else bundle.right_states(t_index)
    lhs_u = sweep.values(sweep.moment_sums(bundle.right_states(s_index))) - sweep.values(
        sweep.moment_sums(x_t)
    )
    return _report_from(
        "singular_corollary", phi, bundle, t_index, s_index, lhs_u, terms_u, []
    )


# -----------------------------------------------------------------------------
# Convergence sweep
# -----------------------------------------------------------------------------
@dataclass
class SweepResult:
    rows: list
    slope_vs_n: float | None
    slope_vs_dt: float | None

    @property
    def slope_vs_steps(self) -> float | None:
        """Mirror of the dt-slope: residual ~ dt^p decays as steps^-p."""
        return None if self.slope_vs_dt is None else -self.slope_vs_dt

    def to_jsonable(self):
        return {
            "slope_vs_n": self.slope_vs_n,
            "slope_vs_dt": self.slope_vs_dt,
            "slope_vs_steps": self.slope_vs_steps,
            "rows": self.rows,
        }


def _sweep_task(payload):
    phi, spec, n, steps, seed, t0, horizon, mark_mc, verifier = payload
    grid = TimeGrid(t0, horizon, steps)
    bundle = simulate_jump_diffusion(spec, n, grid, seed)
    if verifier == "general":
        rep = verify_general(phi, bundle, 0, bundle.n_nodes - 1)
    elif verifier == "jump_corollary":
        rep = verify_jump_corollary(
            phi, spec, bundle, 0, bundle.n_nodes - 1, mark_mc=mark_mc
        )
    else:
        raise ValueError(f"unknown verifier {verifier!r}")
    return {
        "N": n,
        "steps": steps,
        "seed": seed,
        "lhs": rep.lhs,
        "residual": rep.residual,
        "se_residual": rep.se.get("residual", 0.0),
    }


def _fit_slope(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = ys > 0.0  # deterministic scenarios sit at exactly zero residual
    if keep.sum() < 2:
        return None
    return float(np.polyfit(np.log(xs[keep]), np.log(ys[keep]), 1)[0])


def convergence_sweep(
    phi,
    spec,
    n_list,
    steps_list,
    seeds,
    t0: float = 0.0,
    horizon: float = 1.0,
    mark_mc: int = 1,
    verifier: str = "general",
    threads: int = 1,
) -> SweepResult:
    """Residual scaling study across ensemble sizes and step counts.

    Runs the chosen verifier over the full window for every (N, steps, seed)
    combination, then fits log mean |residual| against log N (at the largest
    step count) and against log dt (at the largest N).
    """
    if not n_list or not steps_list or not seeds:
        raise ValueError("n_list, steps_list, and seeds must be non-empty")
    tasks = [
        (phi, spec, int(n), int(steps), int(seed), t0, horizon, mark_mc, verifier)
        for n in n_list
        for steps in steps_list
        for seed in seeds
    ]
    from .parallel import run_tasks

    rows = run_tasks(_sweep_task, tasks, threads)

    steps_ref = max(steps_list)
    n_ref = max(n_list)
    mean_by_n = [
        np.mean([abs(r["residual"]) for r in rows if r["N"] == n and r["steps"] == steps_ref])
        for n in n_list
    ]
    mean_by_dt = [
        np.mean([abs(r["residual"]) for r in rows if r["steps"] == s and r["N"] == n_ref])
        for s in steps_list
    ]
    slope_n = _fit_slope(n_list, mean_by_n) if len(n_list) > 1 else None
    dts = [(horizon - t0) / s for s in steps_list]
    slope_dt = _fit_slope(dts, mean_by_dt) if len(steps_list) > 1 else None
    return SweepResult(rows=rows, slope_vs_n=slope_n, slope_vs_dt=slope_dt)
