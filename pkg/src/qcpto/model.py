"""Domain types shared by all modules.

Conventions used everywhere in this package: user and worker ids are dense
integers 0..n-1 / 0..m-1, tie-breaking is always "lowest id first", and all
types are immutable value objects after construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

TWO_PI = 2.0 * math.pi


def normalize_heading(theta: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    t = math.fmod(float(theta), TWO_PI)
    if t < 0.0:
        t += TWO_PI
    return 0.0 if t == TWO_PI else t


class Turn(Enum):
    LEFT = "left"
    RIGHT = "right"
    STRAIGHT = "straight"


@dataclass(frozen=True)
class VehicleState:
    """Kinematic record of one user at one time slot."""

    user_id: int
    position: tuple[float, float]  # meters
    heading: float                 # rad, wrapped to [0, 2pi)
    speed: float                   # m/s
    slot: int

    def __post_init__(self):
        object.__setattr__(self, "position",
                           (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "heading", normalize_heading(self.heading))
        object.__setattr__(self, "speed", float(self.speed))


@dataclass(frozen=True)
class TaskProfile:
    """Computation and communication demand of one perception task."""

    workload_l: float         # CPU cycles
    frame_size_lambda: float  # bits
    deadline_kappa: float     # seconds


@dataclass(frozen=True)
class User:
    """A requesting vehicle with its task and sensor footprint."""

    id: int
    task: TaskProfile
    data_rate: Mapping[int, float]  # worker id -> bits/s
    fov_range: float                # meters
    fov_half_angle: float           # rad, apex half-angle of the sensor triangle


@dataclass(frozen=True)
class Worker:
    """An edge server attached to a roadside unit."""

    id: int
    position: tuple[float, float]
    cpu_capacity: float  # cycles/s
    comm_range: float    # meters

    def __post_init__(self):
        object.__setattr__(self, "position",
                           (float(self.position[0]), float(self.position[1])))


@dataclass(frozen=True)
class Roi:
    """Triangular region of interest aligned with a predicted turn.

    A STRAIGHT turn carries no triangle (``triangle is None``).
    """

    triangle: Optional[tuple[tuple[float, float], ...]]
    turn: Turn

    def __post_init__(self):
        if self.triangle is not None:
            tri = tuple((float(x), float(y)) for x, y in self.triangle)
            if len(tri) != 3:
                raise ValueError("triangle needs exactly 3 vertices")
            object.__setattr__(self, "triangle", tri)

    @property
    def empty(self) -> bool:
        return self.triangle is None


class Assignment:
    """User -> worker decision map; each user served by at most one worker.

    Immutable: updates return new objects. Unassigned users are simply
    absent from the map.
    """

    __slots__ = ("_map",)

    def __init__(self, mapping: Mapping[int, Optional[int]] | None = None):
        m: dict[int, int] = {}
        if mapping:
            for u, w in mapping.items():
                if w is None:
                    continue
                m[int(u)] = int(w)
        object.__setattr__(self, "_map", m)

    @classmethod
    def empty(cls) -> "Assignment":
        return cls()

    def worker_of(self, user: int) -> Optional[int]:
        return self._map.get(user)

    def assigned_users(self) -> tuple[int, ...]:
        return tuple(sorted(self._map))

    def users_of(self, worker: int) -> tuple[int, ...]:
        return tuple(sorted(u for u, w in self._map.items() if w == worker))

    def used_workers(self) -> tuple[int, ...]:
        return tuple(sorted(set(self._map.values())))

    def eta(self) -> dict[int, int]:
        """Per-worker collaborator counts, recomputed from the map."""
        counts: dict[int, int] = {}
        for w in self._map.values():
            counts[w] = counts.get(w, 0) + 1
        return counts

    def items(self) -> tuple[tuple[int, int], ...]:
        return tuple(sorted(self._map.items()))

    def assign(self, user: int, worker: int) -> "Assignment":
        m = dict(self._map)
        m[int(user)] = int(worker)
        return Assignment(m)

    def drop(self, users: Iterable[int]) -> "Assignment":
        gone = set(users)
        return Assignment({u: w for u, w in self._map.items() if u not in gone})

    def key(self, n: int) -> tuple[int, ...]:
        """Canonical id-order vector for lexicographic comparisons.

        Unassigned encodes as -1 so that, on objective ties, leaving a user
        out is preferred over offloading it without benefit.
        """
        return tuple(self._map.get(u, -1) for u in range(n))

    def __len__(self) -> int:
        return len(self._map)

    def __eq__(self, other) -> bool:
        return isinstance(other, Assignment) and self._map == other._map

    def __hash__(self) -> int:
        return hash(self.items())

    def __repr__(self) -> str:
        body = ", ".join(f"{u}->{w}" for u, w in self.items())
        return f"Assignment({{{body}}})"


def _positive(value, name: str, out: list[str], entity: str):
    if not value > 0:
        out.append(f"{entity}: {name} must be strictly positive, got {value}")


def validate_scenario(users: Sequence[User], workers: Sequence[Worker],
                      region: tuple[float, float],
                      states: Sequence[VehicleState] | None = None,
                      margin: float = 10.0) -> list[str]:
    """Check every type invariant; returns violations instead of raising."""
    out: list[str] = []
    for u in users:
        tag = f"user {u.id}"
        _positive(u.task.workload_l, "workload_l", out, tag)
        _positive(u.task.frame_size_lambda, "frame_size_lambda", out, tag)
        _positive(u.task.deadline_kappa, "deadline_kappa", out, tag)
        _positive(u.fov_range, "fov_range", out, tag)
        if not 0.0 < u.fov_half_angle < math.pi / 2:
            out.append(f"{tag}: fov_half_angle must be in (0, pi/2), got {u.fov_half_angle}")
        for wid, rate in u.data_rate.items():
            if not rate > 0:
                out.append(f"{tag}: data_rate to worker {wid} must be strictly positive, got {rate}")
    w_region, h_region = region
    for w in workers:
        tag = f"worker {w.id}"
        _positive(w.cpu_capacity, "cpu_capacity", out, tag)
        _positive(w.comm_range, "comm_range", out, tag)
        x, y = w.position
        if not (-margin <= x <= w_region + margin and -margin <= y <= h_region + margin):
            out.append(f"{tag}: position {w.position} outside region plus {margin} m margin")
    if states is not None:
        for s in states:
            tag = f"state (user {s.user_id}, slot {s.slot})"
            if s.speed < 0:
                out.append(f"{tag}: speed must be >= 0, got {s.speed}")
            x, y = s.position
            if not (-margin <= x <= w_region + margin and -margin <= y <= h_region + margin):
                out.append(f"{tag}: position {s.position} outside region plus {margin} m margin")
    return out
