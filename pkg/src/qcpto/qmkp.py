"""Quadratic multiple knapsack instances and shared solver machinery.

An instance holds the pairwise quality matrix, per-worker capacities, and
optionally the latency data needed for density sorting and strict deadline
checks. The default weight model is "count": every user weighs one unit and
capacities are collaborator counts derived from the deadline bound. The
alternative "latency" model weighs a user by its response time at the
post-admission load and budgets each worker by the deadline.

The exhaustive enumerator here is the correctness oracle for the exact
solver: it scores every feasible assignment by brute force and never shares
code with the branch-and-bound search.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .geometry import QualityMatrix
from .model import Assignment

WEIGHT_COUNT = "count"
WEIGHT_LATENCY = "latency"


@dataclass(frozen=True)
class QmkpInstance:
    quality: QualityMatrix
    capacity: tuple[float, ...]                 # per-worker capacity (count or seconds)
    weight_mode: str = WEIGHT_COUNT
    allowed: Optional[np.ndarray] = None        # (n, m) bool, comm-range eligibility
    distance: Optional[np.ndarray] = None       # (n, m) meters, used by baselines
    compute_unit: Optional[np.ndarray] = None   # (n, m) seconds at eta=1 (l_i / C_j)
    transmit: Optional[np.ndarray] = None       # (n, m) seconds (lambda_i / R_ij)
    kappa: Optional[np.ndarray] = None          # (n,) per-user deadline, seconds

    def __post_init__(self):
        if self.weight_mode not in (WEIGHT_COUNT, WEIGHT_LATENCY):
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")
        caps = tuple(float(c) for c in self.capacity)
        if any(c < 0 for c in caps):
            raise ValueError("capacities must be >= 0")
        object.__setattr__(self, "capacity", caps)
        for name in ("allowed", "distance", "compute_unit", "transmit"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr)
                if arr.shape != (self.n, self.m):
                    raise ValueError(f"{name} must have shape (n, m)")
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        if self.kappa is not None:
            k = np.asarray(self.kappa, dtype=float)
            if k.shape != (self.n,):
                raise ValueError("kappa must have shape (n,)")
            k.setflags(write=False)
            object.__setattr__(self, "kappa", k)
        if self.weight_mode == WEIGHT_LATENCY and not self.has_latency:
            raise ValueError("latency weight mode needs compute_unit and transmit")

    @property
    def n(self) -> int:
        return self.quality.n

    @property
    def m(self) -> int:
        return len(self.capacity)

    @property
    def has_latency(self) -> bool:
        return self.compute_unit is not None and self.transmit is not None

    def is_allowed(self, i: int, j: int) -> bool:
        return True if self.allowed is None else bool(self.allowed[i, j])

    def latency_of(self, i: int, j: int, eta: int) -> float:
        """Response latency of user i on worker j when eta users share it."""
        if not self.has_latency:
            raise DomainError("instance carries no latency data")
        return float(self.compute_unit[i, j]) * eta + float(self.transmit[i, j])

    def weight_of(self, i: int, j: int, eta_after: int) -> float:
        """Knapsack weight of admitting user i to worker j (post-admission load)."""
        if self.weight_mode == WEIGHT_COUNT:
            return 1.0
        return self.latency_of(i, j, eta_after)


@dataclass(frozen=True)
class Solution:
    assignment: Assignment
    objective: float
    feasible: bool
    nodes: int = 0
    iterations: int = 0
    wall_time_s: float = 0.0
    budget_exceeded: bool = False
    trajectory: tuple[float, ...] = ()  # best-so-far objective per iteration


def evaluate_objective(assignment: Assignment, quality) -> float:
    """Sum of q_ik over unordered co-assigned pairs.

    Pairs are accumulated in global (i, k) id order so that assignments
    realizing the same pair set produce bit-identical objectives.
    """
    q = quality.q if isinstance(quality, QualityMatrix) else np.asarray(quality)
    users = assignment.assigned_users()
    total = 0.0
    for a, i in enumerate(users):
        wi = assignment.worker_of(i)
        for k in users[a + 1:]:
            if assignment.worker_of(k) == wi:
                total += float(q[i, k])
    return total


def check_feasible(assignment: Assignment, inst: QmkpInstance,
                   strict_deadline: bool = False) -> tuple[bool, list[str]]:
    """Verify min-pair, capacity, eligibility and optionally deadlines."""
    violations: list[str] = []
    eta = assignment.eta()
    for j, count in sorted(eta.items()):
        if j < 0 or j >= inst.m:
            violations.append(f"worker {j} does not exist")
            continue
        if count == 1:
            violations.append(f"worker {j} hosts a single user (needs >= 2)")
        if inst.weight_mode == WEIGHT_COUNT and count > inst.capacity[j]:
            violations.append(
                f"worker {j} hosts {count} users, capacity {inst.capacity[j]:g}")
    if inst.weight_mode == WEIGHT_LATENCY:
        for j in assignment.used_workers():
            load = sum(inst.weight_of(i, j, eta[j]) for i in assignment.users_of(j))
            if load > inst.capacity[j] + 1e-9:
                violations.append(
                    f"worker {j} load {load:.6f} exceeds budget {inst.capacity[j]:g}")
    for u, j in assignment.items():
        if u < 0 or u >= inst.n:
            violations.append(f"user {u} does not exist")
        elif not inst.is_allowed(u, j):
            violations.append(f"user {u} not eligible for worker {j}")
    if strict_deadline and inst.has_latency and inst.kappa is not None:
        for u, j in assignment.items():
            t = inst.latency_of(u, j, eta[j])
            if t > float(inst.kappa[u]) + 1e-12:
                violations.append(
                    f"user {u} response time {t:.6f} s exceeds deadline {inst.kappa[u]:g} s")
    return (not violations, violations)


def repair_min_pair(assignment: Assignment) -> Assignment:
    """Evict users that sit alone on a worker."""
    lone = [u for j, count in assignment.eta().items() if count == 1
            for u in assignment.users_of(j)]
    return assignment.drop(lone) if lone else assignment


def _contribution_within(assignment: Assignment, i: int, quality: np.ndarray) -> float:
    j = assignment.worker_of(i)
    return sum(float(quality[i, k]) for k in assignment.users_of(j) if k != i)


def repair_deadline(assignment: Assignment, inst: QmkpInstance,
                    enforce_min_pair: bool = True) -> Assignment:
    """Evict lowest-contribution users until every response time meets its deadline.

    Evictions can leave singletons, so schemes bound by the two-user minimum
    finish with a min-pair pass; baselines that ignore that constraint pass
    ``enforce_min_pair=False``.
    """
    if not inst.has_latency or inst.kappa is None:
        return repair_min_pair(assignment) if enforce_min_pair else assignment
    q = inst.quality.q
    current = assignment
    while True:
        eta = current.eta()
        offenders = [u for u, j in current.items()
                     if inst.latency_of(u, j, eta[j]) > float(inst.kappa[u]) + 1e-12]
        if not offenders:
            break
        victim = min(offenders,
                     key=lambda u: (_contribution_within(current, u, q), u))
        current = current.drop([victim])
    return repair_min_pair(current) if enforce_min_pair else current


def instance_to_json(inst: QmkpInstance) -> str:
    """Serialize for test corpora: n, m, upper-triangle q, capacities."""
    n = inst.n
    iu, ik = np.triu_indices(n, 1)
    doc = {
        "n": n,
        "m": inst.m,
        "q": [float(v) for v in inst.quality.q[iu, ik]],
        "capacities": list(inst.capacity),
    }
    if inst.weight_mode != WEIGHT_COUNT:
        doc["weight_mode"] = inst.weight_mode
    if inst.allowed is not None:
        doc["allowed"] = inst.allowed.astype(int).tolist()
    return json.dumps(doc, sort_keys=True)


def instance_from_json(text: str) -> QmkpInstance:
    doc = json.loads(text)
    n = int(doc["n"])
    q = np.zeros((n, n))
    iu, ik = np.triu_indices(n, 1)
    vals = np.asarray(doc["q"], dtype=float)
    q[iu, ik] = vals
    q[ik, iu] = vals
    allowed = None
    if "allowed" in doc:
        allowed = np.asarray(doc["allowed"], dtype=bool)
    return QmkpInstance(
        quality=QualityMatrix(q),
        capacity=tuple(doc["capacities"]),
        weight_mode=doc.get("weight_mode", WEIGHT_COUNT),
        allowed=allowed,
    )


def random_instance(rng: np.random.Generator, max_n: int = 10,
                    max_m: int = 3) -> QmkpInstance:
    """Random count-mode instance for oracle corpora."""
    n = int(rng.integers(2, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    upper = rng.uniform(0.0, 1.0, size=(n, n))
    q = np.triu(upper, 1)
    q = q + q.T
    caps = tuple(int(rng.integers(0, n + 1)) for _ in range(m))
    return QmkpInstance(quality=QualityMatrix(q), capacity=caps)


def enumerate_optimal(inst: QmkpInstance, chunk_size: int = 1 << 16) -> Solution:
    """Brute-force optimum over all (m+1)^n assignments.

    Independent of the branch-and-bound path: every assignment is scored
    directly. The winner's objective is re-evaluated canonically so it is
    comparable bit-for-bit with other solvers.
    """
    if inst.weight_mode != WEIGHT_COUNT:
        raise DomainError("enumeration supports count capacities only")
    n, m = inst.n, inst.m
    q = inst.quality.q
    caps = np.asarray(inst.capacity)
    total = (m + 1) ** n
    iu, ik = np.triu_indices(n, 1)
    pair_q = q[iu, ik]
    allowed_ext = np.ones((n, m + 1), dtype=bool)
    if inst.allowed is not None:
        allowed_ext[:, :m] = inst.allowed
    radix = (m + 1) ** np.arange(n)[::-1]

    # keep every row scoring within a tiny band of the running max, then pick
    # the true winner by canonical re-evaluation
    band = 1e-9
    max_candidates = 4096
    best_vec = -np.inf
    candidates: list[tuple[float, np.ndarray]] = []
    for start in range(0, total, chunk_size):
        idx = np.arange(start, min(start + chunk_size, total), dtype=np.int64)
        digits = (idx[:, None] // radix[None, :]) % (m + 1)
        feas = np.all(allowed_ext[np.arange(n)[None, :], digits], axis=1)
        for j in range(m):
            cnt = (digits == j).sum(axis=1)
            feas &= (cnt <= caps[j]) & (cnt != 1)
        if not feas.any():
            continue
        digits = digits[feas]
        same = (digits[:, iu] == digits[:, ik]) & (digits[:, iu] != m)
        obj = same @ pair_q
        chunk_best = float(obj.max())
        if chunk_best > best_vec:
            best_vec = chunk_best
            candidates = [(s, r) for s, r in candidates if s >= best_vec - band]
        for pos in np.nonzero(obj >= best_vec - band)[0]:
            candidates.append((float(obj[pos]), digits[pos].copy()))
        if len(candidates) > max_candidates:
            candidates.sort(key=lambda sr: -sr[0])
            del candidates[max_candidates:]

    best_sol: Optional[Assignment] = None
    best_obj = -math.inf
    for _, row in candidates:
        a = Assignment({u: int(row[u]) for u in range(n) if row[u] != m})
        val = evaluate_objective(a, q)
        if val > best_obj or (val == best_obj and
                              (best_sol is None or a.key(n) < best_sol.key(n))):
            best_obj = val
            best_sol = a
    if best_sol is None:  # only possible when nothing is feasible except empty
        best_sol, best_obj = Assignment.empty(), 0.0
    return Solution(best_sol, best_obj, True, nodes=total)
