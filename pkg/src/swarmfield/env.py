"""Stochastic 3-D multi-UAV world.

UAVs are kinematic point masses that track a planned position under a speed
cap. Spherical hazardous areas teleport to fresh random locations every
``change_interval`` steps and never spawn on top of a UAV.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np


class PlacementError(RuntimeError):
    """Raised when UAV start/target positions cannot be placed."""


class SamplingExhaustedError(RuntimeError):
    """Raised when hazard rejection sampling runs out of attempts."""


class EpisodeFinishedError(RuntimeError):
    pass


HEADING_CHANGE_DEG = 15.0
MAX_HAZARD_ATTEMPTS = 1000
MAX_PLACEMENT_ATTEMPTS = 1000


@dataclass
class EnvConfig:
    n_uavs: int = 6
    n_destinations: int = 4
    k_min: int = 3
    k_max: int = 5
    change_interval: int = 15
    rho_u: float = 0.1
    rho_o: float = 0.3
    d_nei: float = 1.5
    d_thr: float = 0.2
    d_com: float = 0.2
    dt: float = 0.1
    v_max: float = 1.0
    le_min: float = 0.01
    le_total: float = 50.0
    h_min: float = 0.2
    h_max: float = 2.5
    t_max: int = 300
    r_a: float = 1.0
    r_b: float = 5.0
    r_c: float = 1.0
    arena: tuple[float, float, float] = (5.0, 5.0, 3.0)

    def __post_init__(self):
        self.arena = tuple(float(a) for a in self.arena)
        self.validate()

    def validate(self):
        if self.n_uavs < 1:
            raise ValueError("n_uavs must be >= 1")
        if not 1 <= self.n_destinations:
            raise ValueError("n_destinations must be >= 1")
        if not 0 <= self.k_min <= self.k_max:
            raise ValueError("need 0 <= k_min <= k_max")
        if self.change_interval < 1:
            raise ValueError("change_interval must be >= 1")
        if not self.h_min < self.h_max:
            raise ValueError("h_min must be < h_max")
        if not (self.le_min > 0 and self.d_com > 0 and self.d_thr > 0):
            raise ValueError("le_min, d_com and d_thr must be positive")
        if not self.d_nei > self.rho_u + self.rho_o:
            raise ValueError("d_nei must exceed rho_u + rho_o")
        if self.rho_u <= 0 or self.rho_o <= 0 or self.dt < 0 or self.v_max <= 0:
            raise ValueError("radii and v_max must be positive, dt non-negative")
        if len(self.arena) != 3 or min(self.arena) <= 0:
            raise ValueError("arena must be three positive extents")

    @property
    def rho_ij(self) -> float:
        return 2.0 * self.rho_u

    @property
    def rho_ik(self) -> float:
        return self.rho_u + self.rho_o

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class UavState:
    id: int
    p: np.ndarray
    p_start: np.ndarray
    p_end: np.ndarray
    v: np.ndarray
    path_length_total: float = 0.0
    done: bool = False
    collisions: int = 0


@dataclass
class Hazard:
    p: np.ndarray
    radius: float


@dataclass
class ConstraintStatus:
    violated: bool = False
    which: frozenset = frozenset()
    segment_length: float = 0.0


@dataclass
class RewardBreakdown:
    r_int: float
    r_avo: float
    r_con: float

    @property
    def r_path(self) -> float:
        return self.r_int + self.r_avo + self.r_con


@dataclass
class WorldState:
    config: EnvConfig
    uavs: list[UavState]
    hazards: list[Hazard]
    rng: np.random.Generator
    t: int = 0
    collisions: int = 0
    hazard_epoch: int = 0

    @property
    def positions(self) -> np.ndarray:
        return np.array([u.p for u in self.uavs])

    @property
    def hazard_positions(self) -> np.ndarray:
        if not self.hazards:
            return np.zeros((0, 3))
        return np.array([h.p for h in self.hazards])

    @property
    def all_done(self) -> bool:
        return all(u.done for u in self.uavs)

    @property
    def finished(self) -> bool:
        return self.all_done or self.t >= self.config.t_max

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)


def _sample_separated(rng, n, low, high, min_sep, attempts=MAX_PLACEMENT_ATTEMPTS):
    pts = []
    for _ in range(n):
        for _ in range(attempts):
            cand = rng.uniform(low, high)
            if all(np.linalg.norm(cand - q) > min_sep for q in pts):
                pts.append(cand)
                break
        else:
            raise PlacementError(f"could not place {n} points with separation > {min_sep}")
    return pts


def init_instance(config: EnvConfig, seed: int) -> WorldState:
    """Build a random instance: starts on the low-x side, destinations on the high-x side.

    UAV ``i`` flies to destination ``i % n_destinations``. Identical
    ``(config, seed)`` pairs give identical worlds.
    """
    rng = np.random.default_rng(seed)
    lx, ly, _ = config.arena
    margin = config.rho_u
    z_lo = config.h_min + margin
    z_hi = min(config.h_max, config.arena[2]) - margin
    if z_hi < z_lo:
        raise PlacementError("arena height leaves no room between altitude bounds")
    start_lo = np.array([margin, margin, z_lo])
    start_hi = np.array([max(margin, 0.25 * lx), ly - margin, z_hi])
    goal_lo = np.array([min(lx - margin, 0.75 * lx), margin, z_lo])
    goal_hi = np.array([lx - margin, ly - margin, z_hi])
    if np.any(start_hi < start_lo) or np.any(goal_hi < goal_lo):
        raise PlacementError("arena too small for UAV placement")

    starts = _sample_separated(rng, config.n_uavs, start_lo, start_hi, 2 * config.rho_u)
    n_dest = min(config.n_destinations, config.n_uavs)
    goals = _sample_separated(rng, n_dest, goal_lo, goal_hi, 2 * config.d_com)
    uavs = [
        UavState(id=i, p=starts[i].copy(), p_start=starts[i].copy(),
                 p_end=goals[i % n_dest].copy(), v=np.zeros(3))
        for i in range(config.n_uavs)
    ]
    world = WorldState(config=config, uavs=uavs, hazards=[], rng=rng)
    world.hazards = _draw_hazards(world)
    return world


def _draw_hazards(world: WorldState) -> list[Hazard]:
    cfg = world.config
    rng = world.rng
    lx, ly, _ = cfg.arena
    count = int(rng.integers(cfg.k_min, cfg.k_max + 1))
    lo = np.array([0.3 * lx, 0.0, cfg.h_min])
    hi = np.array([0.7 * lx, ly, min(cfg.h_max, cfg.arena[2])])
    uav_pos = world.positions
    clearance = cfg.rho_o + cfg.rho_u
    hazards = []
    for _ in range(count):
        for _ in range(MAX_HAZARD_ATTEMPTS):
            cand = rng.uniform(lo, hi)
            if np.all(np.linalg.norm(uav_pos - cand, axis=1) > clearance):
                hazards.append(Hazard(p=cand, radius=cfg.rho_o))
                break
        else:
            raise SamplingExhaustedError(
                f"no valid hazard placement after {MAX_HAZARD_ATTEMPTS} attempts")
    return hazards


def regenerate_hazards(world: WorldState) -> WorldState:
    """Replace the hazard set in place; draws come from ``world.rng`` only."""
    world.hazards = _draw_hazards(world)
    world.hazard_epoch += 1
    return world


def neighbor_sets(world: WorldState, i: int) -> tuple[list[int], list[int]]:
    """UAV and hazard ids strictly closer than ``d_nei`` to UAV ``i``, ordered by distance."""
    cfg = world.config
    p = world.uavs[i].p
    return _within(np.array([u.p for u in world.uavs]), p, cfg.d_nei, skip=i), \
        _within(np.array([h.p for h in world.hazards]).reshape(-1, 3), p, cfg.d_nei)


def _within(points: np.ndarray, p: np.ndarray, radius: float, skip: int | None = None) -> list[int]:
    # ids with distance < radius, sorted by (distance, id)
    if len(points) == 0:
        return []
    diff = points - p
    d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    ids = np.nonzero(d < radius)[0]
    if skip is not None:
        ids = ids[ids != skip]
    order = np.lexsort((ids, d[ids]))
    return ids[order].tolist()


def _angle_deg(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    c = float(np.dot(a, b) / (na * nb))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def check_path_constraints(uav: UavState, p_next, config: EnvConfig) -> ConstraintStatus:
    # the segment-length bound only bites when the heading turns more than HEADING_CHANGE_DEG
    p_next = np.asarray(p_next, dtype=float)
    seg = p_next - uav.p
    le = float(np.sqrt(np.dot(seg, seg)))
    which = set()
    if le > 0 and _angle_deg(uav.v, seg) > HEADING_CHANGE_DEG and le < config.le_min:
        which.add("segment")
    if not config.h_min <= p_next[2] <= config.h_max:
        which.add("altitude")
    if uav.path_length_total + le > config.le_total:
        which.add("total_length")
    return ConstraintStatus(violated=bool(which), which=frozenset(which), segment_length=le)


def threat_penalty(dist: float, rho: float, d_thr: float, r_a: float) -> float:
    """Avoidance penalty against one neighbor; zero at or beyond the threat boundary."""
    if dist < rho + d_thr:
        return (dist - (rho + d_thr)) / rho - r_a
    return 0.0


def compute_reward(world: WorldState, i: int, constraint: ConstraintStatus,
                   intrinsic: bool = True) -> RewardBreakdown:
    cfg = world.config
    uav = world.uavs[i]
    uav_ids, haz_ids = neighbor_sets(world, i)
    r_avo1 = sum(
        threat_penalty(float(np.linalg.norm(uav.p - world.hazards[k].p)), cfg.rho_ik, cfg.d_thr, cfg.r_a)
        for k in haz_ids)
    r_avo2 = sum(
        threat_penalty(float(np.linalg.norm(uav.p - world.uavs[j].p)), cfg.rho_ij, cfg.d_thr, cfg.r_a)
        for j in uav_ids)
    r_int = 0.0
    if intrinsic:
        dist = float(np.linalg.norm(uav.p - uav.p_end))
        span = float(np.linalg.norm(uav.p_start - uav.p_end))
        r_int = -dist / span if span > 0 else 0.0
        if dist < cfg.d_com:
            r_int += cfg.r_b
    r_con = -cfg.r_c if constraint.violated else 0.0
    return RewardBreakdown(r_int=r_int, r_avo=r_avo1 + r_avo2, r_con=r_con)


def cap_displacement(p: np.ndarray, target: np.ndarray, max_step: float) -> np.ndarray:
    d = target - p
    n = float(np.linalg.norm(d))
    if n > max_step:
        d = d * (max_step / n)
    return p + d


def count_collisions(world: WorldState) -> list[tuple]:
    """Offending pairs this step: ``('uav', i, j)`` and ``('hazard', i, k)``."""
    cfg = world.config
    pos = world.positions
    events = []
    for i in range(len(pos)):
        for j in range(i + 1, len(pos)):
            if np.linalg.norm(pos[i] - pos[j]) < cfg.rho_ij:
                events.append(("uav", i, j))
        for k, h in enumerate(world.hazards):
            if np.linalg.norm(pos[i] - h.p) < cfg.rho_ik:
                events.append(("hazard", i, k))
    return events


def step(world: WorldState, planned_positions):
    """Advance the world one sampling period in place.

    ``planned_positions`` has one entry per UAV; entries for done UAVs are
    ignored (they hold position). Returns ``(world, rewards, dones)``.
    """
    cfg = world.config
    if world.all_done:
        raise EpisodeFinishedError("all UAVs already reached their targets")
    if world.t >= cfg.t_max:
        raise EpisodeFinishedError("t_max reached")
    if len(planned_positions) != len(world.uavs):
        raise ValueError("need one planned position per UAV")

    max_step = cfg.v_max * cfg.dt
    lo = np.zeros(3)
    hi = np.asarray(cfg.arena)
    statuses = []
    was_done = [u.done for u in world.uavs]
    for uav, target in zip(world.uavs, planned_positions):
        if uav.done or target is None:
            statuses.append(ConstraintStatus())
            uav.v = np.zeros(3)
            continue
        p_new = np.clip(cap_displacement(uav.p, np.asarray(target, dtype=float), max_step), lo, hi)
        status = check_path_constraints(uav, p_new, cfg)
        statuses.append(status)
        uav.v = (p_new - uav.p) / cfg.dt if cfg.dt > 0 else np.zeros(3)
        uav.path_length_total += status.segment_length
        uav.p = p_new
    world.t += 1

    for kind, i, other in count_collisions(world):
        world.collisions += 1
        world.uavs[i].collisions += 1
        if kind == "uav":
            world.uavs[other].collisions += 1

    rewards = []
    for i, uav in enumerate(world.uavs):
        rb = compute_reward(world, i, statuses[i], intrinsic=not was_done[i])
        rewards.append(rb)
        if not uav.done and np.linalg.norm(uav.p - uav.p_end) < cfg.d_com:
            uav.done = True

    if world.t % cfg.change_interval == 0 and not world.all_done:
        regenerate_hazards(world)
    return world, rewards, [u.done for u in world.uavs]
