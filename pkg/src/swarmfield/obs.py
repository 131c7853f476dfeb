"""Local and mean-field extended observations plus their flat encoding.

Flat layout of one local observation (``H`` hazard slots)::

    [0:3]            own position p
    [3:3+4H]         hazard slots, each (dx, dy, dz, valid) relative to p
    [3+4H:6+4H]      start position
    [6+4H:9+4H]      end position
    [9+4H:12+4H]     velocity

An extended observation is ``own | neighbour_mean | neighbour_count``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import WorldState, neighbor_sets

H_MAX = 3
EPS_DIST = 1e-3


def layout_version(h_max: int = H_MAX, include_neighbor_hazards: bool = True) -> str:
    return f"obs-v1-h{h_max}-{'full' if include_neighbor_hazards else 'kin'}"


def local_dim(h_max: int = H_MAX) -> int:
    return 12 + 4 * h_max


def extended_dim(h_max: int = H_MAX) -> int:
    return 2 * local_dim(h_max) + 1


def offsets(h_max: int = H_MAX) -> dict[str, slice]:
    s = 3 + 4 * h_max
    return {
        "p": slice(0, 3),
        "hazards": slice(3, s),
        "p_start": slice(s, s + 3),
        "p_end": slice(s + 3, s + 6),
        "v": slice(s + 6, s + 9),
    }


@dataclass
class LocalObservation:
    p: np.ndarray
    hazard_rel: np.ndarray    # (H, 3)
    hazard_valid: np.ndarray  # (H,), floats in [0, 1]
    p_start: np.ndarray
    p_end: np.ndarray
    v: np.ndarray

    @property
    def h_max(self) -> int:
        return len(self.hazard_valid)

    @classmethod
    def sentinel(cls, h_max: int = H_MAX) -> "LocalObservation":
        z = np.zeros(3)
        return cls(z.copy(), np.zeros((h_max, 3)), np.zeros(h_max), z.copy(), z.copy(), z.copy())

    def vector(self) -> np.ndarray:
        slots = np.concatenate([self.hazard_rel, self.hazard_valid[:, None]], axis=1).ravel()
        return np.concatenate([self.p, slots, self.p_start, self.p_end, self.v]).astype(float)

    @classmethod
    def from_vector(cls, vec, h_max: int = H_MAX) -> "LocalObservation":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (local_dim(h_max),):
            raise ValueError(f"expected length {local_dim(h_max)}, got {vec.shape}")
        off = offsets(h_max)
        slots = vec[off["hazards"]].reshape(h_max, 4)
        return cls(vec[off["p"]].copy(), slots[:, :3].copy(), slots[:, 3].copy(),
                   vec[off["p_start"]].copy(), vec[off["p_end"]].copy(), vec[off["v"]].copy())


@dataclass
class ExtendedObservation:
    own: LocalObservation
    neighbor_mean: LocalObservation
    neighbor_count: int


def local_observation(world: WorldState, i: int, h_max: int = H_MAX) -> LocalObservation:
    uav = world.uavs[i]
    _, haz_ids = neighbor_sets(world, i)  # already sorted by distance, then index
    obs = LocalObservation.sentinel(h_max)
    for slot, k in enumerate(haz_ids[:h_max]):
        obs.hazard_rel[slot] = world.hazards[k].p - uav.p
        obs.hazard_valid[slot] = 1.0
    obs.p = uav.p.copy()
    obs.p_start = uav.p_start.copy()
    obs.p_end = uav.p_end.copy()
    obs.v = uav.v.copy()
    return obs


def neighbor_weights(p_i, neighbor_positions, eps: float = EPS_DIST) -> np.ndarray:
    """Inverse-distance weights normalised to sum to one."""
    if len(neighbor_positions) == 0:
        return np.zeros(0)
    d = np.linalg.norm(np.asarray(neighbor_positions, dtype=float) - np.asarray(p_i, dtype=float), axis=1)
    w = 1.0 / np.maximum(d, eps)
    return w / w.sum()


def extend_observation(z_i: LocalObservation, neighbor_obs, weights,
                       include_neighbor_hazards: bool = True) -> ExtendedObservation:
    if len(neighbor_obs) != len(weights):
        raise ValueError("one weight per neighbour observation required")
    h = z_i.h_max
    if len(neighbor_obs) == 0:
        return ExtendedObservation(z_i, LocalObservation.sentinel(h), 0)
    stacked = np.array([z.vector() for z in neighbor_obs])
    w = np.asarray(weights, dtype=float)
    mean = LocalObservation.from_vector(w @ stacked / w.sum(), h)
    if not include_neighbor_hazards:
        mean.hazard_rel[:] = 0.0
        mean.hazard_valid[:] = 0.0
    return ExtendedObservation(z_i, mean, len(neighbor_obs))


def encode_observation(obs) -> np.ndarray:
    if isinstance(obs, LocalObservation):
        return obs.vector()
    return np.concatenate([obs.own.vector(), obs.neighbor_mean.vector(), [float(obs.neighbor_count)]])


def decode_extended(vec, h_max: int = H_MAX) -> ExtendedObservation:
    vec = np.asarray(vec, dtype=float)
    d = local_dim(h_max)
    if vec.shape != (extended_dim(h_max),):
        raise ValueError(f"expected length {extended_dim(h_max)}, got {vec.shape}")
    return ExtendedObservation(LocalObservation.from_vector(vec[:d], h_max),
                               LocalObservation.from_vector(vec[d:2 * d], h_max),
                               int(round(vec[-1])))


def build_observations(world: WorldState, extended: bool, h_max: int = H_MAX,
                       include_neighbor_hazards: bool = True) -> list[np.ndarray]:
    """Encoded actor observations for every UAV, local or mean-field extended."""
    local = [local_observation(world, i, h_max) for i in range(len(world.uavs))]
    if not extended:
        return [z.vector() for z in local]
    return [encode_observation(observe_extended(world, i, local, h_max, include_neighbor_hazards))
            for i in range(len(world.uavs))]


def observe_extended(world: WorldState, i: int, local=None, h_max: int = H_MAX,
                     include_neighbor_hazards: bool = True) -> ExtendedObservation:
    nbr, _ = neighbor_sets(world, i)
    if local is None:
        # decentralised path: UAV i only ever touches itself and its neighbours
        local = {j: local_observation(world, j, h_max) for j in [i, *nbr]}
    w = neighbor_weights(world.uavs[i].p, [world.uavs[j].p for j in nbr])
    return extend_observation(local[i], [local[j] for j in nbr], w, include_neighbor_hazards)
