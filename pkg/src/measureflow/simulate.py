"""Seeded interacting-particle simulation of jump diffusions and mixed
regular-singular dynamics.

The engine advances N coupled particles on a common time grid. Measure
dependence enters only through declared ensemble features (one O(N) reduction
per step), so one step costs O(N) work. Within a step the order of operations
is fixed: drift/diffusion increment first over the whole step, then jumps
applied at the left limit of the post-increment state, in exact event-time
order. Jump counts and times come from exact exponential clocks rather than
per-step thinning, so no O(dt) bias enters through the jump mechanism itself.

Randomness is consumed on a schedule that depends only on (seed, N, grid and
the jump/eta configuration), never on coefficient values or control policies.
Two runs with the same seed therefore share their noise exactly (common random
numbers), and reruns are bit-identical regardless of how the caller
parallelizes surrounding work.

A law (empirical-measure) discontinuity is always *declared* by the scenario:
deterministic schedule jumps and initial reflections move a positive fraction
of particles at once and are logged with kind "common"; per-particle Poisson
or scheduled jumps keep the law continuous in time and are logged with kind
"idiosyncratic". Verifiers key the indicator terms of the measure-flow
calculus off this declaration, never off a statistical test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coefficients import FeatureSpec, InitialSampler, JumpCoefficient, MarkLaw
from .measures import EmpiricalMeasure
from .rng import substream
from .timegrid import TimeGrid

__all__ = [
    "JumpDiffusionSpec",
    "SingularSpec",
    "DeterministicEtaSchedule",
    "IdiosyncraticEta",
    "ReflectionEta",
    "PathBundle",
    "SimSummary",
    "SimulationError",
    "simulate_jump_diffusion",
    "simulate_singular",
    "marginal",
]

JUMP_IDIOSYNCRATIC = 0
JUMP_COMMON = 1


class SimulationError(RuntimeError):
    """Raised when the particle system leaves the realm of finite numbers."""


# -----------------------------------------------------------------------------
# Specs
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class JumpDiffusionSpec:
    """McKean-Vlasov jump-diffusion scenario.

    drift/diffusion follow the coefficient protocol ``(t, x, a, features)``
    with x of shape (N, d). The diffusion is diagonal: it returns the d
    per-coordinate volatilities (full-matrix outputs of shape (N, d, d) are
    also accepted from custom objects). Jumps arrive at total rate
    ``jump_rate`` per particle with marks drawn from ``mark_law``.
    """

    dimension: int
    drift: object
    diffusion: object
    initial: InitialSampler
    jump: JumpCoefficient | None = None
    jump_rate: float = 0.0
    mark_law: MarkLaw | None = None
    control: object | None = None
    features: FeatureSpec = field(default_factory=FeatureSpec)

    def __post_init__(self):
        if self.jump_rate < 0:
            raise ValueError("jump rate must be nonnegative")
        if self.jump_rate > 0 and (self.jump is None or self.mark_law is None):
            raise ValueError("positive jump rate needs a jump coefficient and a mark law")


@dataclass(frozen=True)
class DeterministicEtaSchedule:
    """Common singular schedule: scheduled jumps shared by every particle plus
    an optional absolutely continuous rate, both deterministic.

    jumps: sequence of (time, size) with size a d-vector (or scalar in d = 1).
    rate: constant d-vector rate of the continuous part, or None.
    Scheduled jump times must be grid nodes (use TimeGrid mandatory_times).
    """

    jumps: tuple = ()
    rate: tuple | None = None


@dataclass(frozen=True)
class IdiosyncraticEta:
    """Per-particle singular schedule; keeps the empirical law continuous.

    mode "poisson_rate": jumps of the given size at an exponential clock of
    the given rate. mode "one_uniform": exactly one jump per particle at an
    independent uniform time in (t0, T].
    """

    mode: str = "poisson_rate"
    size: float = 1.0
    rate: float = 1.0


@dataclass(frozen=True)
class ReflectionEta:
    """Caller-supplied projection policy enforcing a state constraint.

    policy(t, x, features) -> (x_projected, delta_eta) with componentwise
    delta_eta >= 0 and x_projected = x + lambda * delta_eta. Applied after
    every step, and once at t0 before stepping; a positive initial projection
    is a genuine law jump and is logged with kind "common".
    """

    policy: object = None


@dataclass(frozen=True)
class SingularSpec:
    """Mixed regular-singular scenario dX = b dt + sigma dW + lambda d(eta)."""

    dimension: int
    drift: object
    diffusion: object
    initial: InitialSampler
    lam: tuple = (1.0,)
    eta: object = None
    control: object | None = None
    features: FeatureSpec = field(default_factory=FeatureSpec)

    def lam_vector(self) -> np.ndarray:
        lam = np.asarray(self.lam, dtype=float).reshape(-1)
        if lam.shape[0] != self.dimension:
            if lam.shape[0] == 1:
                lam = np.full(self.dimension, lam[0])
            else:
                raise ValueError("lambda must have one entry per coordinate")
        if np.any(lam < 0):
            raise ValueError("lambda entries must be nonnegative")
        return lam


# -----------------------------------------------------------------------------
# Results
# -----------------------------------------------------------------------------
class PathBundle:
    """Recorded particle trajectories on a common grid.

    ``states[k]`` holds the post-jump values at node k; the left limit at a
    node is reconstructed by undoing that node's logged jumps. Quadratic
    variation increments are the model values sigma sigma^T dt accumulated per
    step, stored per step when the diffusion is particle-independent and per
    particle otherwise.
    """

    def __init__(
        self,
        grid,
        states,
        jump_node,
        jump_particle,
        jump_delta,
        jump_kind,
        jump_time,
        qv,
        qv_per_particle,
        seed,
        jump_delta_eta=None,
        eta_cont=None,
        eta_cont_shared=None,
        eta_total=None,
    ):
        self.grid = grid
        self.states = states
        self.jump_node = jump_node
        self.jump_particle = jump_particle
        self.jump_delta = jump_delta
        self.jump_kind = jump_kind
        self.jump_time = jump_time
        self.qv = qv
        self.qv_per_particle = qv_per_particle
        self.seed = seed
        self.jump_delta_eta = jump_delta_eta
        self.eta_cont = eta_cont
        self.eta_cont_shared = eta_cont_shared
        self.eta_total = eta_total
        # row ranges per node; jump rows are already sorted by (node, time)
        self._node_starts = np.searchsorted(jump_node, np.arange(len(grid.nodes) + 1))

    # -- basic geometry --------------------------------------------------------
    @property
    def N(self) -> int:
        return self.states.shape[1]

    @property
    def dimension(self) -> int:
        return self.states.shape[2]

    @property
    def n_nodes(self) -> int:
        return self.states.shape[0]

    # -- jumps -----------------------------------------------------------------
    def jump_rows_at(self, node: int):
        return slice(self._node_starts[node], self._node_starts[node + 1])

    def has_common_jump(self, node: int) -> bool:
        rows = self.jump_rows_at(node)
        return bool(np.any(self.jump_kind[rows] == JUMP_COMMON))

    def jump_nodes(self) -> np.ndarray:
        return np.unique(self.jump_node)

    # -- states -----------------------------------------------------------------
    def right_states(self, node: int, lo: int = 0, hi: int | None = None) -> np.ndarray:
        return self.states[node, lo : self.N if hi is None else hi]

    def left_states(self, node: int, lo: int = 0, hi: int | None = None) -> np.ndarray:
        """Pre-jump values at a node for the particle range [lo, hi)."""
        hi = self.N if hi is None else hi
        rows = self.jump_rows_at(node)
        if rows.start == rows.stop:
            return self.states[node, lo:hi]
        parts = self.jump_particle[rows]
        keep = (parts >= lo) & (parts < hi)
        if not keep.any():
            return self.states[node, lo:hi]
        left = self.states[node, lo:hi].copy()
        np.subtract.at(left, parts[keep] - lo, self.jump_delta[rows][keep])
        return left

    def jump_rows_in_range(self, node: int, lo: int, hi: int):
        """(local particle indices, deltas, delta_etas, times) at a node."""
        rows = self.jump_rows_at(node)
        parts = self.jump_particle[rows]
        keep = (parts >= lo) & (parts < hi)
        deta = self.jump_delta_eta[rows][keep] if self.jump_delta_eta is not None else None
        return parts[keep] - lo, self.jump_delta[rows][keep], deta

    def step_qv(self, k: int) -> np.ndarray:
        """Quadratic-variation increment of step k: (d,) or (N, d) diagonal."""
        return self.qv[k]

    def eta_cont_step(self, k: int):
        """Continuous eta increment of step k: (d,) shared or (N, d)."""
        if self.eta_cont_shared is not None:
            return self.eta_cont_shared[k]
        if self.eta_cont is not None:
            return self.eta_cont[k]
        return None

    # -- export -----------------------------------------------------------------
    def save_npz(self, path) -> None:
        """Binary columnar export of everything needed to rebuild the bundle."""
        np.savez_compressed(
            path,
            nodes=self.grid.nodes,
            states=self.states,
            jump_node=self.jump_node,
            jump_particle=self.jump_particle,
            jump_delta=self.jump_delta,
            jump_kind=self.jump_kind,
            jump_time=self.jump_time,
            seed=np.int64(self.seed),
        )

    def summary_rows(self):
        """Per-node ensemble mean / variance / jump count rows for CSV export."""
        rows = []
        for k in range(self.n_nodes):
            x = self.states[k]
            mean = x.mean(axis=0)
            dev = x - mean
            var = float(np.mean(np.sum(dev * dev, axis=1)))
            rows.append(
                {
                    "node": k,
                    "time": float(self.grid.nodes[k]),
                    "mean": float(mean[0]) if self.dimension == 1 else float(np.linalg.norm(mean)),
                    "variance": var,
                    "jumps": int(self._node_starts[k + 1] - self._node_starts[k]),
                }
            )
        return rows


@dataclass
class SimSummary:
    """Light result of a non-recording run."""

    terminal: np.ndarray
    eta_total: np.ndarray | None = None
    n_jumps: int = 0


def marginal(bundle: PathBundle, node_index: int, side: str = "right") -> EmpiricalMeasure:
    """Empirical marginal at a node; side "left" gives the pre-jump cloud."""
    if not (0 <= node_index < bundle.n_nodes):
        raise IndexError(f"node index {node_index} out of range")
    if side == "right":
        return EmpiricalMeasure(bundle.right_states(node_index))
    if side == "left":
        return EmpiricalMeasure(bundle.left_states(node_index))
    raise ValueError("side must be 'left' or 'right'")


# -----------------------------------------------------------------------------
# Shared helpers
# -----------------------------------------------------------------------------
def _exponential_event_times(rng, n, rate, t0, T):
    """All exponential-clock event times per particle, globally time sorted.

    Each wave draws one inter-arrival for every particle so that consumption
    of the stream never depends on which particles are still active.
    """
    times, particles = [], []
    current = np.full(n, t0)
    while True:
        mask = current <= T
        if not mask.any():
            break
        current = current + rng.exponential(1.0 / rate, size=n)
        hit = mask & (current <= T)
        if hit.any():
            idx = np.nonzero(hit)[0]
            times.append(current[idx].copy())
            particles.append(idx)
    if not times:
        return np.empty(0), np.empty(0, dtype=np.int64)
    t = np.concatenate(times)
    p = np.concatenate(particles)
    order = np.lexsort((p, t))
    return t[order], p[order]


def _eval_sigma(diffusion, t, x, a, feats):
    s = np.asarray(diffusion(t, x, a, feats), dtype=float)
    if s.ndim == 3:
        raise NotImplementedError("full-matrix diffusions are not supported; use diagonal")
    return s  # (N, d) diagonal entries


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(x))
        p, c = int(bad[0][0]), int(bad[0][1])
        raise SimulationError(
            f"non-finite state at step {step}, particle {p}, coordinate {c}"
        )


def _sigma_is_shared(diffusion) -> bool:
    dep = getattr(diffusion, "depends_on_state_or_control", None)
    return dep is False


# -----------------------------------------------------------------------------
# Jump diffusion
# -----------------------------------------------------------------------------
def simulate_jump_diffusion(
    spec: JumpDiffusionSpec,
    N: int,
    grid: TimeGrid,
    seed: int,
    record: bool = True,
    observer=None,
):
    """Euler-Maruyama particle run of a jump-diffusion scenario.

    Returns a :class:`PathBundle` when recording, else a :class:`SimSummary`.
    The observer, if any, is called as ``observer(k, t, x, a, feats)`` at every
    node with the post-jump state and the control evaluated there.
    """
    if N < 1:
        raise ValueError("need at least one particle")
    d = spec.dimension
    nodes = grid.nodes
    n_steps = len(nodes) - 1

    x = spec.initial.sample(substream(seed, "initial"), N, d)
    rng_w = substream(seed, "brownian")

    # Exact jump clocks, globally sorted; marks drawn in event order.
    if spec.jump_rate > 0:
        jt, jp = _exponential_event_times(
            substream(seed, "jump_times"), N, spec.jump_rate, grid.t0, grid.T
        )
        marks = spec.mark_law.sample(substream(seed, "marks"), len(jt))
        jump_node_of = np.searchsorted(nodes, jt, side="left")
    else:
        jt = np.empty(0)
        jp = np.empty(0, dtype=np.int64)
        marks = np.empty(0)
        jump_node_of = np.empty(0, dtype=np.int64)

    shared_sigma = _sigma_is_shared(spec.diffusion)
    states = np.empty((n_steps + 1, N, d)) if record else None
    qv_store = [] if record else None
    log_node, log_part, log_delta, log_time = [], [], [], []

    if record:
        states[0] = x
    feats = spec.features.compute(x)
    a = spec.control(nodes[0], x, feats) if spec.control is not None else None
    if observer is not None:
        observer(0, nodes[0], x, a, feats)

    ptr = 0  # next unprocessed jump event
    for k in range(n_steps):
        t, t_next = nodes[k], nodes[k + 1]
        dt = t_next - t
        b = np.asarray(spec.drift(t, x, a, feats), dtype=float)
        s = _eval_sigma(spec.diffusion, t, x, a, feats)
        dw = rng_w.standard_normal((N, d)) * np.sqrt(dt)
        x = x + b * dt + s * dw
        if record:
            qv_store.append((s[0] * s[0] * dt) if shared_sigma else (s * s * dt))
        _check_finite(x, k + 1)

        # jumps assigned to the closing node, at post-increment left limits
        end = ptr
        while end < len(jt) and jump_node_of[end] == k + 1:
            end += 1
        if end > ptr:
            feats_left = spec.features.compute(x)
            a_left = (
                spec.control(t_next, x, feats_left) if spec.control is not None else None
            )
            parts = jp[ptr:end]
            if len(np.unique(parts)) == end - ptr:
                # no particle jumps twice in this step: vectorized apply
                xs = x[parts]
                als = a_left[parts] if a_left is not None else None
                deltas = spec.jump(xs, als, feats_left, marks[ptr:end][:, None])
                x[parts] += deltas
                for j in range(end - ptr):
                    log_node.append(k + 1)
                    log_part.append(int(parts[j]))
                    log_delta.append(deltas[j].copy())
                    log_time.append(float(jt[ptr + j]))
            else:
                for j in range(ptr, end):
                    i = int(jp[j])
                    xi = x[i : i + 1]
                    ai = a_left[i : i + 1] if a_left is not None else None
                    delta = spec.jump(xi, ai, feats_left, marks[j])[0]
                    x[i] = x[i] + delta
                    log_node.append(k + 1)
                    log_part.append(i)
                    log_delta.append(delta.copy())
                    log_time.append(float(jt[j]))
            ptr = end
            _check_finite(x, k + 1)

        if record:
            states[k + 1] = x
        feats = spec.features.compute(x)
        a = spec.control(t_next, x, feats) if spec.control is not None else None
        if observer is not None:
            observer(k + 1, t_next, x, a, feats)

    n_jumps = len(log_node)
    if not record:
        return SimSummary(terminal=x, n_jumps=n_jumps)

    qv = np.asarray(qv_store) if qv_store else np.zeros((n_steps, d))
    return PathBundle(
        grid=grid,
        states=states,
        jump_node=np.asarray(log_node, dtype=np.int64),
        jump_particle=np.asarray(log_part, dtype=np.int64),
        jump_delta=(
            np.asarray(log_delta).reshape(n_jumps, d) if n_jumps else np.empty((0, d))
        ),
        jump_kind=np.full(n_jumps, JUMP_IDIOSYNCRATIC, dtype=np.uint8),
        jump_time=np.asarray(log_time),
        qv=qv,
        qv_per_particle=not shared_sigma,
        seed=seed,
    )


# -----------------------------------------------------------------------------
# Mixed regular-singular dynamics
# -----------------------------------------------------------------------------
def simulate_singular(
    spec: SingularSpec,
    N: int,
    grid: TimeGrid,
    seed: int,
    record: bool = True,
    observer=None,
):
    """Euler-Maruyama plus the singular term lambda d(eta).

    Deterministic schedule jumps are common to every particle and logged as
    law jumps; per-particle schedules keep the law continuous. A reflection
    policy is applied after every step (and once at t0, where a positive
    projection is logged as a common jump).
    """
    if N < 1:
        raise ValueError("need at least one particle")
    d = spec.dimension
    lam = spec.lam_vector()
    nodes = grid.nodes
    n_steps = len(nodes) - 1

    x = spec.initial.sample(substream(seed, "initial"), N, d)
    rng_w = substream(seed, "brownian")

    eta = spec.eta
    det_jumps = {}
    det_rate = None
    idio_t = np.empty(0)
    idio_p = np.empty(0, dtype=np.int64)
    idio_node_of = np.empty(0, dtype=np.int64)
    idio_size = None
    policy = None
    if isinstance(eta, DeterministicEtaSchedule):
        for tj, size in eta.jumps:
            size = np.asarray(size, dtype=float).reshape(-1)
            if size.shape[0] == 1 and d > 1:
                size = np.full(d, size[0])
            if np.any(size < 0):
                raise ValueError("decreasing eta detected in schedule")
            det_jumps[grid.index_of(tj)] = size
        if eta.rate is not None:
            det_rate = np.asarray(eta.rate, dtype=float).reshape(-1)
            if det_rate.shape[0] == 1 and d > 1:
                det_rate = np.full(d, det_rate[0])
            if np.any(det_rate < 0):
                raise ValueError("decreasing eta detected in continuous rate")
    elif isinstance(eta, IdiosyncraticEta):
        if eta.size < 0:
            raise ValueError("decreasing eta detected in jump size")
        rng_e = substream(seed, "eta")
        if eta.mode == "poisson_rate":
            idio_t, idio_p = _exponential_event_times(rng_e, N, eta.rate, grid.t0, grid.T)
        elif eta.mode == "one_uniform":
            idio_t = grid.t0 + (grid.T - grid.t0) * rng_e.uniform(size=N)
            idio_p = np.arange(N, dtype=np.int64)
            order = np.lexsort((idio_p, idio_t))
            idio_t, idio_p = idio_t[order], idio_p[order]
        else:
            raise ValueError(f"unknown idiosyncratic eta mode {eta.mode!r}")
        idio_node_of = np.searchsorted(nodes, idio_t, side="left")
        idio_size = float(eta.size)
    elif isinstance(eta, ReflectionEta):
        policy = eta.policy
    elif eta is not None:
        raise TypeError("eta scenario must be one of the supported schedule types")

    shared_sigma = _sigma_is_shared(spec.diffusion)
    shared_eta_cont = policy is None  # deterministic rate is common to particles
    states = np.empty((n_steps + 1, N, d)) if record else None
    qv_store = [] if record else None
    eta_cont_store = [] if record else None
    log_node, log_part, log_delta, log_deta, log_kind, log_time = [], [], [], [], [], []
    eta_total = np.zeros((N, d))

    feats = spec.features.compute(x)

    # Initial projection: a cloud starting in the forbidden region jumps at once.
    if policy is not None:
        x_proj, d_eta0 = policy(nodes[0], x, feats)
        if np.any(d_eta0 < 0):
            raise ValueError("decreasing eta detected in initial projection")
        moved = np.nonzero(np.any(d_eta0 > 0, axis=1))[0]
        if moved.size:
            for i in moved:
                log_node.append(0)
                log_part.append(int(i))
                log_delta.append((lam * d_eta0[i]).copy())
                log_deta.append(d_eta0[i].copy())
                log_kind.append(JUMP_COMMON)
                log_time.append(float(nodes[0]))
            eta_total += d_eta0
            x = x_proj
            feats = spec.features.compute(x)

    if record:
        states[0] = x
    a = spec.control(nodes[0], x, feats) if spec.control is not None else None
    if observer is not None:
        observer(0, nodes[0], x, a, feats)

    ptr = 0
    for k in range(n_steps):
        t, t_next = nodes[k], nodes[k + 1]
        dt = t_next - t
        b = np.asarray(spec.drift(t, x, a, feats), dtype=float)
        s = _eval_sigma(spec.diffusion, t, x, a, feats)
        dw = rng_w.standard_normal((N, d)) * np.sqrt(dt)
        x = x + b * dt + s * dw
        if record:
            qv_store.append((s[0] * s[0] * dt) if shared_sigma else (s * s * dt))

        # continuous deterministic eta over the step (left-point in time)
        if det_rate is not None:
            d_eta = det_rate * dt
            x = x + lam * d_eta
            eta_total += d_eta
            if record:
                eta_cont_store.append(d_eta)
        elif record and shared_eta_cont:
            eta_cont_store.append(np.zeros(d))
        _check_finite(x, k + 1)

        # per-particle scheduled eta jumps at the closing node
        end = ptr
        while end < len(idio_t) and idio_node_of[end] == k + 1:
            end += 1
        for j in range(ptr, end):
            i = int(idio_p[j])
            d_eta = np.full(d, idio_size)
            x[i] = x[i] + lam * d_eta
            eta_total[i] += d_eta
            log_node.append(k + 1)
            log_part.append(i)
            log_delta.append((lam * d_eta).copy())
            log_deta.append(d_eta.copy())
            log_kind.append(JUMP_IDIOSYNCRATIC)
            log_time.append(float(idio_t[j]))
        ptr = end

        # common scheduled jump exactly at this node
        if (k + 1) in det_jumps:
            size = det_jumps[k + 1]
            x = x + lam * size
            eta_total += size
            for i in range(N):
                log_node.append(k + 1)
                log_part.append(i)
                log_delta.append((lam * size).copy())
                log_deta.append(size.copy())
                log_kind.append(JUMP_COMMON)
                log_time.append(float(t_next))

        # reflection policy keeps the cloud inside the admissible region
        if policy is not None:
            feats_mid = spec.features.compute(x)
            x_proj, d_eta = policy(t_next, x, feats_mid)
            if np.any(d_eta < 0):
                raise ValueError("decreasing eta detected in projection")
            x = x_proj
            eta_total += d_eta
            if record:
                eta_cont_store.append(d_eta.copy())

        _check_finite(x, k + 1)
        if record:
            states[k + 1] = x
        feats = spec.features.compute(x)
        a = spec.control(t_next, x, feats) if spec.control is not None else None
        if observer is not None:
            observer(k + 1, t_next, x, a, feats)

    n_jumps = len(log_node)
    if not record:
        return SimSummary(terminal=x, eta_total=eta_total, n_jumps=n_jumps)

    qv = np.asarray(qv_store) if qv_store else np.zeros((n_steps, d))
    eta_cont_arr = np.asarray(eta_cont_store) if eta_cont_store else None
    return PathBundle(
        grid=grid,
        states=states,
        jump_node=np.asarray(log_node, dtype=np.int64),
        jump_particle=np.asarray(log_part, dtype=np.int64),
        jump_delta=(
            np.asarray(log_delta).reshape(n_jumps, d) if n_jumps else np.empty((0, d))
        ),
        jump_kind=np.asarray(log_kind, dtype=np.uint8)
        if n_jumps
        else np.empty(0, dtype=np.uint8),
        jump_time=np.asarray(log_time),
        qv=qv,
        qv_per_particle=not shared_sigma,
        seed=seed,
        jump_delta_eta=(
            np.asarray(log_deta).reshape(n_jumps, d) if n_jumps else np.empty((0, d))
        ),
        eta_cont=None if shared_eta_cont else eta_cont_arr,
        eta_cont_shared=eta_cont_arr if shared_eta_cont else None,
        eta_total=eta_total,
    )
