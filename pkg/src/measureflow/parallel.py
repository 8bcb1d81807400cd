"""Deterministic task fan-out.

Independent experiment units (sweep cells, perturbed policies) are seeded
individually and combined in task order, so the worker count can never change
a numeric result; ``threads=1`` runs the same list serially.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

__all__ = ["run_tasks"]


def run_tasks(fn, payloads, threads: int = 1):
    """Apply fn to each payload, preserving payload order in the result list."""
    payloads = list(payloads)
    if threads <= 1 or len(payloads) <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=min(threads, len(payloads))) as pool:
        return list(pool.map(fn, payloads))
