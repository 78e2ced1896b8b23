"""Decision-epoch control loop: predict, queue, build the instance, solve, score.

Each epoch updates every user's filter with the slot's measurements, flags
the users predicted to turn into the offloading queue, builds the quadratic
knapsack instance over that queue (pairwise quality, capacity bound,
comm-range eligibility, latency data), solves it with the selected scheme,
applies the repair passes, and records the metrics. Filters of users absent
from a slot coast without measurements for a few slots before being reset.
"""
from __future__ import annotations

import dataclasses
import math
import os
import random
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .baselines import solve_cpto, solve_go
from .config import RunConfig, SCHEMES
from .geometry import GridSpec, build_quality_matrix, fov_triangle
from .latency import worker_capacity
from .metrics import EpochReport, RunReport, epoch_metrics, run_aggregate
from .model import Assignment, TaskProfile, Turn, User, VehicleState, Worker
from .predict import PredictorConfig, coast, run_predictor
from .qmkp import (QmkpInstance, WEIGHT_COUNT, evaluate_objective,
                   repair_deadline)
from .solve_exact import solve_exact
from .solve_heur import HeurConfig, solve_heuristic
from .trace import ScenarioConfig, Trace, synth_intersection


def scenario_config(cfg: RunConfig) -> ScenarioConfig:
    sc = cfg.scenario
    return ScenarioConfig(
        region_w=sc.region_w, region_h=sc.region_h,
        lanes_per_direction=sc.lanes_per_direction, lane_width=sc.lane_width,
        max_speed=sc.max_speed_kmh / 3.6, duration=sc.duration_s,
        delta=sc.delta_s, arc_radius=sc.arc_radius_m, n_vehicles=sc.n_vehicles,
        turn_probs=tuple(sc.turn_probs), spawn_window_frac=sc.spawn_window_frac,
        speed_frac=tuple(sc.speed_frac), turn_speed_frac=sc.turn_speed_frac,
        slow_margin_m=sc.slow_margin_m,
        heading_settle_slots=sc.heading_settle_slots,
        spawn_jitter_m=sc.spawn_jitter_m,
    )


def predictor_config(cfg: RunConfig) -> PredictorConfig:
    p = cfg.predictor
    return PredictorConfig(
        delta=cfg.scenario.delta_s,
        p0_diag=tuple(p.p0_diag), q_diag=tuple(p.q_diag), r_diag=tuple(p.r_diag),
        theta_turn=math.radians(p.theta_turn_deg),
        warmup_slots=p.warmup_slots, roi_height=p.roi_height_m,
        measurement_noise_std=p.measurement_noise_std,
    )


def grid_spec(cfg: RunConfig) -> GridSpec:
    return GridSpec.for_region(cfg.scenario.region_w, cfg.scenario.region_h,
                               cfg.geometry.cell_size_m)


def _boundary_point(d: float, w: float, h: float) -> tuple[float, float]:
    """Point at ccw boundary distance d from the origin corner."""
    d = d % (2 * (w + h))
    if d <= w:
        return (d, 0.0)
    d -= w
    if d <= h:
        return (w, d)
    d -= h
    if d <= w:
        return (w - d, h)
    return (0.0, h - (d - w))


def default_workers(cfg: RunConfig, seed: int) -> list[Worker]:
    """Workers placed uniformly along the region boundary, seeded CPU draw."""
    sc = cfg.scenario
    rng = random.Random(seed)
    base = sc.worker_base_cpu_ghz * 1e9
    step = sc.worker_cpu_step_ghz * 1e9
    perimeter = 2 * (sc.region_w + sc.region_h)
    workers = []
    for j in range(sc.n_workers):
        pos = _boundary_point(j * perimeter / sc.n_workers, sc.region_w, sc.region_h)
        cpu = base + step * (1 + rng.randrange(3))
        workers.append(Worker(id=j, position=pos, cpu_capacity=cpu,
                              comm_range=sc.comm_range_m))
    return workers


def build_users(user_ids: Sequence[int], workers: Sequence[Worker],
                cfg: RunConfig, seed: int) -> dict[int, User]:
    """Users with the configured task profile and seeded per-worker data rates."""
    sc = cfg.scenario
    geo = cfg.geometry
    task = TaskProfile(workload_l=sc.workload_cycles,
                       frame_size_lambda=sc.frame_bits,
                       deadline_kappa=sc.deadline_s)
    rng = np.random.default_rng(seed)
    lo, hi = sc.rate_mbps
    ids = sorted(user_ids)
    rates = rng.uniform(lo * 1e6, hi * 1e6, size=(len(ids), len(workers)))
    users = {}
    for row, uid in enumerate(ids):
        users[uid] = User(
            id=uid, task=task,
            data_rate={w.id: float(rates[row, k]) for k, w in enumerate(workers)},
            fov_range=geo.fov_range_m,
            fov_half_angle=math.radians(geo.fov_half_angle_deg),
        )
    return users


@dataclass(frozen=True)
class EpochContext:
    """Everything the solver sees for one decision epoch."""

    slot: int
    queue_ids: tuple[int, ...]  # flagged users, ascending; instance row i = queue_ids[i]
    rois: dict
    fovs: dict
    instance: Optional[QmkpInstance]


def build_epoch(slot: int, outputs: dict, states: dict, users: dict,
                workers: Sequence[Worker], cfg: RunConfig,
                gspec: GridSpec) -> EpochContext:
    """Assemble the offloading instance for the flagged queue of one slot."""
    queue_ids = tuple(sorted(uid for uid, out in outputs.items()
                             if out.turn is not Turn.STRAIGHT))
    rois = {uid: outputs[uid].roi for uid in queue_ids}
    fovs = {uid: fov_triangle(states[uid], users[uid].fov_range,
                              users[uid].fov_half_angle) for uid in queue_ids}
    if not queue_ids:
        return EpochContext(slot, queue_ids, rois, fovs, None)

    quality = build_quality_matrix(queue_ids, rois, fovs, gspec,
                                   mode=cfg.geometry.pair_mode)
    n, m = len(queue_ids), len(workers)
    l_bar = sum(users[u].task.workload_l for u in queue_ids) / n
    kappa_bar = sum(users[u].task.deadline_kappa for u in queue_ids) / n
    caps = tuple(float(worker_capacity(kappa_bar, w.cpu_capacity, l_bar))
                 for w in workers)
    allowed = np.zeros((n, m), dtype=bool)
    dist = np.zeros((n, m))
    compute_unit = np.zeros((n, m))
    transmit = np.zeros((n, m))
    kappa = np.zeros(n)
    for i, uid in enumerate(queue_ids):
        ux, uy = states[uid].position
        kappa[i] = users[uid].task.deadline_kappa
        for j, w in enumerate(workers):
            d = math.hypot(ux - w.position[0], uy - w.position[1])
            dist[i, j] = d
            allowed[i, j] = d <= w.comm_range
            compute_unit[i, j] = users[uid].task.workload_l / w.cpu_capacity
            transmit[i, j] = users[uid].task.frame_size_lambda / users[uid].data_rate[w.id]
    inst = QmkpInstance(
        quality=quality, capacity=caps, weight_mode=WEIGHT_COUNT,
        allowed=allowed, distance=dist, compute_unit=compute_unit,
        transmit=transmit, kappa=kappa,
    )
    return EpochContext(slot, queue_ids, rois, fovs, inst)


def solve_epoch(ctx: EpochContext, scheme: str, cfg: RunConfig,
                seed: int) -> Assignment:
    """Run the selected scheme on an epoch instance and apply the repairs.

    Returns an assignment over instance indices (queue positions).
    """
    inst = ctx.instance
    if inst is None:
        return Assignment.empty()
    sol_cfg = cfg.solver
    # the two-user minimum is a constraint of the quality-aware formulation;
    # baselines ignore it and are evaluated on their raw assignments
    min_pair = scheme in ("exact", "heuristic")
    if scheme == "exact":
        a = solve_exact(inst, budget=sol_cfg.node_budget).assignment
    elif scheme == "heuristic":
        heur = HeurConfig(alpha=sol_cfg.alpha, max_iters=sol_cfg.max_iters,
                          patience=sol_cfg.patience, seed=seed,
                          regen_alpha_each_iter=sol_cfg.regen_alpha_each_iter,
                          memory_capacity=sol_cfg.memory_capacity)
        a = solve_heuristic(inst, heur).assignment
    elif scheme == "go":
        a = solve_go(inst)
    elif scheme == "cpto":
        a = solve_cpto(inst)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if sol_cfg.strict_deadline:
        a = repair_deadline(a, inst, enforce_min_pair=min_pair)
    return a


@dataclass(frozen=True)
class EpochLog:
    report: EpochReport
    objective: float
    assignment: Assignment  # in user-id space
    queue: tuple[int, ...]
    decision_time_s: float


def run_simulation(trace: Trace, workers: Sequence[Worker], scheme: str,
                   cfg: RunConfig, seed: int) -> tuple[RunReport, list[EpochLog]]:
    """Simulate every decision epoch of a trace under one offloading scheme."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if trace.n_slots == 0:
        raise ValueError("trace is empty")
    if not workers:
        raise ValueError("need at least one worker")

    pcfg = predictor_config(cfg)
    gspec = grid_spec(cfg)
    users = build_users(trace.user_ids(), workers, cfg, seed + 2)
    noise_rng = np.random.default_rng(seed + 3)

    banks: dict[int, object] = {}
    missed: dict[int, int] = {}
    coast_slots = cfg.predictor.coast_slots
    epochs: list[EpochLog] = []
    first = trace.first_slot or 0

    for rec in trace.records:
        slot = rec.slot
        outputs = run_predictor(trace, slot, banks, pcfg, noise_rng)
        for uid in list(banks):
            if uid not in outputs:
                missed[uid] = missed.get(uid, 0) + 1
                if missed[uid] > coast_slots:
                    del banks[uid]
                    missed.pop(uid, None)
                else:
                    banks[uid] = coast(banks[uid])
        for uid, out in outputs.items():
            banks[uid] = out.state
            missed[uid] = 0

        states = {s.user_id: s for s in rec.states}
        ctx = build_epoch(slot, outputs, states, users, workers, cfg, gspec)
        t0 = time.perf_counter()
        try:
            inst_assignment = solve_epoch(ctx, scheme, cfg, seed * 1_000_003 + slot)
        except Exception as exc:
            exc.args = (f"epoch {slot}: {exc}",)
            raise
        decision_time = time.perf_counter() - t0
        assignment = Assignment({ctx.queue_ids[i]: j
                                 for i, j in inst_assignment.items()})
        objective = (evaluate_objective(inst_assignment, ctx.instance.quality)
                     if ctx.instance is not None else 0.0)
        report = epoch_metrics(
            slot, assignment, ctx.rois, ctx.fovs,
            [users[u] for u in ctx.queue_ids], workers, gspec,
            phi=cfg.metrics.phi, assigned_only=cfg.metrics.assigned_only)
        epochs.append(EpochLog(report, objective, assignment, ctx.queue_ids,
                               decision_time))

    return run_aggregate([e.report for e in epochs]), epochs


def run_scenario(cfg: RunConfig, scheme: str, seed: int) -> tuple[RunReport, list[EpochLog]]:
    """Synthesize the scenario for a seed and simulate it under one scheme."""
    trace = synth_intersection(scenario_config(cfg), seed)
    workers = default_workers(cfg, seed + 1)
    return run_simulation(trace, workers, scheme, cfg, seed)


def make_synthetic_instance(n_users: int, seed: int,
                            cfg: Optional[RunConfig] = None) -> QmkpInstance:
    """One offloading instance with n turning users placed near the intersection.

    Mirrors the geometry of the synthetic scenario; used for solver scaling
    studies at a fixed instance size.
    """
    from .predict import estimate_roi

    cfg = cfg or RunConfig()
    rng = random.Random(seed)
    gspec = grid_spec(cfg)
    workers = default_workers(cfg, seed + 1)
    cx, cy = cfg.scenario.region_w / 2.0, cfg.scenario.region_h / 2.0
    states = {}
    rois = {}
    for uid in range(n_users):
        pos = (cx + rng.uniform(-40.0, 40.0), cy + rng.uniform(-40.0, 40.0))
        heading = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(5.0, cfg.scenario.max_speed_kmh / 3.6)
        st = VehicleState(uid, pos, heading, speed, 0)
        states[uid] = st
        turn = Turn.LEFT if rng.random() < 0.5 else Turn.RIGHT
        rois[uid] = estimate_roi(st, turn, cfg.predictor.roi_height_m)
    users = build_users(range(n_users), workers, cfg, seed + 2)
    outputs = {uid: _FakeOutput(rois[uid]) for uid in range(n_users)}
    ctx = build_epoch(0, outputs, states, users, workers, cfg, gspec)
    assert ctx.instance is not None
    return ctx.instance


@dataclass(frozen=True)
class _FakeOutput:
    roi: object

    @property
    def turn(self):
        return self.roi.turn


def _apply_experiment(cfg: RunConfig, experiment: str, value) -> RunConfig:
    sc = cfg.scenario
    if experiment == "CpuCapacity":
        sc = dataclasses.replace(sc, worker_base_cpu_ghz=float(value))
    elif experiment == "Deadline":
        sc = dataclasses.replace(sc, deadline_s=float(value))
    elif experiment in ("UserCount", "Runtime"):
        sc = dataclasses.replace(sc, n_vehicles=int(value))
    else:
        raise ValueError(f"unknown experiment {experiment!r}")
    return dataclasses.replace(cfg, scenario=sc)


def _sweep_job(args) -> dict:
    experiment, value, scheme, seed, cfg = args
    job_cfg = _apply_experiment(cfg, experiment, value)
    report, epochs = run_scenario(job_cfg, scheme, seed)
    record = {
        "experiment": experiment,
        "value": value,
        "scheme": scheme,
        "seed": seed,
        "report": report.to_dict(),
    }
    if experiment == "Runtime":
        times = [e.decision_time_s for e in epochs if e.queue]
        record["mean_decision_time_s"] = sum(times) / len(times) if times else 0.0
    return record


def sweep(experiment: str, grid: Sequence, seeds: Sequence[int],
          cfg: RunConfig, schemes: Optional[Sequence[str]] = None) -> list[dict]:
    """One run per (grid value, scheme, seed); canonical result order.

    The QCPTO_THREADS environment variable caps process parallelism;
    unset or 1 runs sequentially.
    """
    schemes = list(schemes if schemes is not None else cfg.sweep.schemes)
    jobs = [(experiment, value, scheme, seed, cfg)
            for value in grid for scheme in schemes for seed in seeds]
    threads = int(os.environ.get("QCPTO_THREADS", "1") or "1")
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_sweep_job, jobs))
    else:
        records = [_sweep_job(job) for job in jobs]
    return records
