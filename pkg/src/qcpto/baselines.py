"""Comparison schemes: greedy capacity filling and uniform count maximization.

Both ignore pairwise quality entirely. Range filtering (the ``allowed``
mask) applies exactly as it does to the quality-aware solvers; the instance
carries user-worker distances when nearest-first selection is wanted.
"""
from __future__ import annotations

from .model import Assignment
from .qmkp import QmkpInstance


def _distance(inst: QmkpInstance, i: int, j: int) -> float:
    if inst.distance is None:
        return 0.0
    return float(inst.distance[i, j])


def solve_go(inst: QmkpInstance) -> Assignment:
    """Greedy offloading: users in id order onto the nearest eligible worker."""
    caps = [int(c) for c in inst.capacity]
    counts = [0] * inst.m
    placed: dict[int, int] = {}
    for u in range(inst.n):
        cands = [j for j in range(inst.m)
                 if counts[j] < caps[j] and inst.is_allowed(u, j)]
        if not cands:
            continue
        j = min(cands, key=lambda j: (_distance(inst, u, j), j))
        placed[u] = j
        counts[j] += 1
    return Assignment(placed)


def solve_cpto(inst: QmkpInstance) -> Assignment:
    """Uniform offloading: maximize served count by least-loaded spreading."""
    caps = [int(c) for c in inst.capacity]
    counts = [0] * inst.m
    placed: dict[int, int] = {}
    for u in range(inst.n):
        cands = [j for j in range(inst.m)
                 if counts[j] < caps[j] and inst.is_allowed(u, j)]
        if not cands:
            continue
        j = min(cands, key=lambda j: (counts[j], j))
        placed[u] = j
        counts[j] += 1
    return Assignment(placed)
