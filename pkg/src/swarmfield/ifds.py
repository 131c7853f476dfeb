"""Interfered fluid dynamical system (IFDS) planner driven by learned gains.

The free flow ``u`` points at the goal with speed ``v_cruise``. Each nearby
sphere (hazard or neighbouring UAV) bends it through the modulation matrix

    M = I - n n^T / (G^(1/eta) n^T n) + t n^T / (G^(1/tau) |t| |n|)

with ``n = p - p_c``, ``t = kappa x n`` and ``G = (|n| / rho)^2``. The learned
action sets the repulsive gain ``eta``, the tangential gain ``tau`` and the
horizontal tangent direction ``kappa``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

PSI_BOUNDS = (0.1, 3.0)
THETA_BOUNDS = (0.1, 3.0)
PHI_BOUNDS = (-math.pi, math.pi)
EXP_CLAMP = 50.0
APPROACH_FRACTION = 0.5


class PenetrationError(ValueError):
    """The UAV is inside (or on) the obstacle sphere."""


class GoalReached(Exception):
    pass


@dataclass(frozen=True)
class ShapingAction:
    psi: float
    theta: float
    phi: float

    def __post_init__(self):
        if not PSI_BOUNDS[0] <= self.psi <= PSI_BOUNDS[1]:
            raise ValueError(f"psi={self.psi} outside {PSI_BOUNDS}")
        if not THETA_BOUNDS[0] <= self.theta <= THETA_BOUNDS[1]:
            raise ValueError(f"theta={self.theta} outside {THETA_BOUNDS}")
        if not PHI_BOUNDS[0] <= self.phi <= PHI_BOUNDS[1]:
            raise ValueError(f"phi={self.phi} outside {PHI_BOUNDS}")

    @classmethod
    def from_unit(cls, a) -> "ShapingAction":
        """Map a vector in [-1, 1]^3 affinely onto the action box."""
        a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
        lows = (PSI_BOUNDS[0], THETA_BOUNDS[0], PHI_BOUNDS[0])
        highs = (PSI_BOUNDS[1], THETA_BOUNDS[1], PHI_BOUNDS[1])
        vals = [lo + (x + 1.0) * 0.5 * (hi - lo) for x, lo, hi in zip(a, lows, highs)]
        vals = [min(max(v, lo), hi) for v, lo, hi in zip(vals, lows, highs)]
        return cls(*vals)


@dataclass(frozen=True)
class FlowParams:
    eta: float
    tau: float
    kappa: np.ndarray


def shaping_params(p_i, p_end, p_c, rho, action: ShapingAction, d_com: float = 0.0) -> FlowParams:
    p_i, p_end, p_c = (np.asarray(x, dtype=float) for x in (p_i, p_end, p_c))
    d_goal = float(np.linalg.norm(p_i - p_end))
    gap = float(np.linalg.norm(p_i - p_c)) - rho
    if gap <= 0:
        raise PenetrationError(f"inside obstacle by {-gap:.4g}")
    if d_goal <= 0 or d_goal < d_com:
        raise GoalReached()
    arg = 1.0 - 1.0 / (d_goal * gap)
    if abs(arg) > EXP_CLAMP:
        log.debug("shaping exponent saturated (%.3g)", arg)
        arg = max(-EXP_CLAMP, min(EXP_CLAMP, arg))
    scale = math.exp(arg)
    kappa = np.array([math.cos(action.phi), math.sin(action.phi), 0.0])
    return FlowParams(eta=scale * action.psi, tau=scale * action.theta, kappa=kappa)


def free_flow(p_i, p_end, v_cruise: float) -> np.ndarray:
    d = np.asarray(p_end, dtype=float) - np.asarray(p_i, dtype=float)
    n = float(np.linalg.norm(d))
    if n == 0:
        return np.zeros(3)
    return v_cruise * d / n


def _safe_pow(base: float, inv_exp: float) -> float:
    # base >= 1 here, so the power only overflows upward
    try:
        return float(base) ** float(inv_exp)
    except OverflowError:
        return math.inf


def modulation_matrix(p_i, p_c, rho: float, flow: FlowParams) -> np.ndarray:
    n = np.asarray(p_i, dtype=float) - np.asarray(p_c, dtype=float)
    nn = float(n @ n)
    gamma = nn / (rho * rho)
    m = np.eye(3)
    rep = _safe_pow(gamma, 1.0 / flow.eta)
    m -= np.outer(n, n) / (rep * nn)
    # t = kappa x n, written out; np.cross is slow on length-3 vectors
    kx, ky, kz = (float(k) for k in flow.kappa)
    nx, ny, nz = float(n[0]), float(n[1]), float(n[2])
    t = np.array([ky * nz - kz * ny, kz * nx - kx * nz, kx * ny - ky * nx])
    tn = math.sqrt(float(t @ t))
    if tn > 1e-12 * math.sqrt(nn):
        tan = _safe_pow(gamma, 1.0 / flow.tau)
        m += np.outer(t, n) / (tan * tn * math.sqrt(nn))
    return m


def disturbed_speed(p_i, p_end, p_c, rho: float, flow: FlowParams, v_cruise: float) -> np.ndarray:
    p_i = np.asarray(p_i, dtype=float)
    if np.linalg.norm(p_i - np.asarray(p_c, dtype=float)) <= rho:
        raise PenetrationError("inside obstacle")
    u = free_flow(p_i, p_end, v_cruise)
    return modulation_matrix(p_i, p_c, rho, flow) @ u


def escape_velocity(p_i, p_c, speed: float) -> np.ndarray:
    n = np.asarray(p_i, dtype=float) - np.asarray(p_c, dtype=float)
    nn = float(np.linalg.norm(n))
    if nn == 0:
        return np.array([0.0, 0.0, speed])
    return speed * n / nn


def clamp_norm(v: np.ndarray, limit: float) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n > limit:
        return v * (limit / n)
    return v


def next_position(p_i, contributions, dt: float, v_max: float, free=None) -> np.ndarray:
    """Average the per-obstacle velocities, cap at ``v_max`` and integrate one step.

    With no contributions the free-flow velocity ``free`` is used instead.
    """
    p_i = np.asarray(p_i, dtype=float)
    if len(contributions) == 0:
        vel = np.zeros(3) if free is None else np.asarray(free, dtype=float)
    else:
        vel = np.mean(np.asarray(contributions, dtype=float), axis=0)
    return p_i + clamp_norm(vel, v_max) * dt


def limit_approach(p_i, p_next, obstacles, fraction: float = APPROACH_FRACTION) -> np.ndarray:
    """Shrink the step so it closes at most ``fraction`` of the gap to any sphere.

    The gains vanish near a surface, leaving a boundary layer thinner than one
    integration step; without this guard an Euler step can tunnel through it.
    """
    p_i = np.asarray(p_i, dtype=float)
    step = np.asarray(p_next, dtype=float) - p_i
    for p_c, rho in obstacles:
        n = p_i - np.asarray(p_c, dtype=float)
        dist = float(np.linalg.norm(n))
        gap = dist - rho
        if gap <= 0 or dist == 0:
            continue
        n_hat = n / dist
        approach = -float(step @ n_hat)
        if approach > fraction * gap:
            step = step + (approach - fraction * gap) * n_hat
    return p_i + step


def plan(p_i, p_end, obstacles, action: ShapingAction, dt: float, v_max: float,
         v_cruise: float | None = None, d_com: float = 0.0) -> np.ndarray:
    """Next planned position for one UAV.

    ``obstacles`` is a sequence of ``(center, radius)`` pairs; hazards use
    ``rho_u + rho_o`` and neighbouring UAVs ``2 rho_u``.
    """
    p_i = np.asarray(p_i, dtype=float)
    v_cruise = v_max if v_cruise is None else v_cruise
    if np.linalg.norm(p_i - np.asarray(p_end)) < d_com:
        return p_i.copy()
    u = free_flow(p_i, p_end, v_cruise)
    contribs = obstacle_velocities(p_i, p_end, obstacles, action, u, v_max)
    p_next = next_position(p_i, contribs, dt, v_max, free=u)
    return limit_approach(p_i, p_next, obstacles)


def obstacle_velocities(p_i, p_end, obstacles, action: ShapingAction, u, v_max: float) -> np.ndarray:
    """Disturbed velocity ``M_k u`` for every obstacle ``k`` at once, shape ``(K, 3)``.

    Same result as :func:`modulation_matrix` per obstacle, expanded as
    ``u - n (n.u) / (G^(1/eta) |n|^2) + t (n.u) / (G^(1/tau) |t| |n|)``.
    Obstacles that contain ``p_i`` contribute the radial escape velocity.
    The caller must already have handled the goal-reached case.
    """
    if len(obstacles) == 0:
        return np.zeros((0, 3))
    p_i = np.asarray(p_i, dtype=float)
    centers = np.array([c for c, _ in obstacles], dtype=float).reshape(-1, 3)
    rho = np.array([r for _, r in obstacles], dtype=float)
    n = p_i - centers
    nn = np.einsum("ij,ij->i", n, n)
    dist = np.sqrt(nn)
    inside = dist - rho <= 0
    out = np.empty_like(n)
    if np.any(inside):
        for k in np.nonzero(inside)[0]:
            out[k] = escape_velocity(p_i, centers[k], v_max)
    ok = ~inside
    if not np.any(ok):
        return out
    n, nn, dist, rho = n[ok], nn[ok], dist[ok], rho[ok]
    d_goal = float(np.linalg.norm(p_i - np.asarray(p_end, dtype=float)))
    arg = 1.0 - 1.0 / (d_goal * (dist - rho))
    if np.any(np.abs(arg) > EXP_CLAMP):
        log.debug("shaping exponent saturated")
        arg = np.clip(arg, -EXP_CLAMP, EXP_CLAMP)
    scale = np.exp(arg)
    gamma = nn / (rho * rho)
    with np.errstate(over="ignore"):
        rep = gamma ** (1.0 / (scale * action.psi))
        tan = gamma ** (1.0 / (scale * action.theta))
    kappa = np.array([math.cos(action.phi), math.sin(action.phi), 0.0])
    t = np.cross(kappa, n)
    tn = np.sqrt(np.einsum("ij,ij->i", t, t))
    nu = n @ u
    vel = u - n * (nu / (rep * nn))[:, None]
    has_t = tn > 1e-12 * dist
    coef = np.zeros_like(nu)
    coef[has_t] = nu[has_t] / (tan[has_t] * tn[has_t] * dist[has_t])
    vel += t * coef[:, None]
    out[ok] = vel
    return out
