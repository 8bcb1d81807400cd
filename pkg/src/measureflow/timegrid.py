"""Time grids with exact inclusion of scheduled event times."""

from __future__ import annotations

import numpy as np

__all__ = ["TimeGrid"]


class TimeGrid:
    """Uniform base grid on [t0, T] refined to contain mandatory times exactly.

    Parameters
    ----------
    t0, T : float
        Interval endpoints, t0 < T.
    steps : int
        Number of uniform base steps.
    mandatory_times : sequence of float, optional
        Times in (t0, T] that must appear as grid nodes (for example scheduled
        common jump times). They are inserted exactly; a base node closer than
        a relative 1e-12 is replaced by the mandatory value.
    """

    __slots__ = ("t0", "T", "steps", "mandatory_times", "nodes")

    def __init__(self, t0: float, T: float, steps: int, mandatory_times=()):
        if not (t0 < T):
            raise ValueError("need t0 < T")
        if steps < 1:
            raise ValueError("need at least one step")
        self.t0 = float(t0)
        self.T = float(T)
        self.steps = int(steps)
        mand = np.sort(np.asarray(list(mandatory_times), dtype=float))
        if mand.size and (mand[0] <= self.t0 or mand[-1] > self.T):
            raise ValueError("mandatory times must lie in (t0, T]")
        if mand.size and np.any(np.diff(mand) == 0.0):
            mand = np.unique(mand)
        self.mandatory_times = mand

        base = self.t0 + (self.T - self.t0) * np.arange(self.steps + 1) / self.steps
        base[-1] = self.T
        nodes = list(base)
        tol = 1e-12 * (self.T - self.t0)
        for m in mand:
            j = int(np.argmin(np.abs(np.asarray(nodes) - m)))
            if abs(nodes[j] - m) <= tol:
                nodes[j] = float(m)
            else:
                nodes.append(float(m))
        nodes = np.array(sorted(nodes))
        self.nodes = nodes
        self.nodes.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def dt(self) -> np.ndarray:
        """Step lengths between consecutive nodes."""
        return np.diff(self.nodes)

    @property
    def base_dt(self) -> float:
        return (self.T - self.t0) / self.steps

    def index_of(self, t: float) -> int:
        """Index of the grid node equal to t (within 1e-12 relative)."""
        j = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[j] - t) > 1e-12 * max(1.0, self.T - self.t0):
            raise ValueError(f"{t} is not a grid node")
        return j

    def __repr__(self):
        return f"TimeGrid([{self.t0}, {self.T}], steps={self.steps}, nodes={self.n_nodes})"
