"""MADDPG-style actors and critics over IFDS shaping actions.

Actions are stored and fed to critics in the unit box ``[-1, 1]^3``; the
planner maps them onto the gain ranges with :meth:`ShapingAction.from_unit`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ifds import ShapingAction
from .nets import Adam, Mlp, hard_update, soft_update

log = logging.getLogger(__name__)

ACT_DIM = 3
MODES = ("ctpde", "ctfde", "ctfde-mpc", "dec-ddpg")


@dataclass
class Batch:
    obs: np.ndarray        # (B, I, D)
    act: np.ndarray        # (B, I, 3), unit box
    rew: np.ndarray        # (B, I)
    next_obs: np.ndarray   # (B, I, D)
    done: np.ndarray       # (B,), episode-terminal flag

    def __len__(self):
        return len(self.rew)


class ReplayBuffer:
    def __init__(self, capacity: int, n_agents: int, obs_dim: int, act_dim: int = ACT_DIM):
        self.capacity = capacity
        self.obs = np.zeros((capacity, n_agents, obs_dim))
        self.act = np.zeros((capacity, n_agents, act_dim))
        self.rew = np.zeros((capacity, n_agents))
        self.next_obs = np.zeros((capacity, n_agents, obs_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.head = 0

    def __len__(self):
        return self.size

    def add(self, obs, act, rew, next_obs, done: bool):
        k = self.head
        self.obs[k] = obs
        self.act[k] = act
        self.rew[k] = rew
        self.next_obs[k] = next_obs
        self.done[k] = done
        self.head = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def take(self, idx) -> Batch:
        return Batch(self.obs[idx], self.act[idx], self.rew[idx], self.next_obs[idx], self.done[idx])


def sample_batch(buffer: ReplayBuffer, size: int, rng: np.random.Generator) -> Batch | None:
    """Uniform draw without replacement; ``None`` means "not enough data yet"."""
    if len(buffer) < size:
        return None
    idx = rng.choice(len(buffer), size=size, replace=False)
    return buffer.take(idx)


@dataclass
class GaussianNoise:
    sigma: float = 0.3
    decay: float = 0.995
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def sample(self, shape=(ACT_DIM,)) -> np.ndarray:
        return self.rng.normal(0.0, self.sigma, size=shape)

    def end_episode(self):
        self.sigma *= self.decay


@dataclass
class AgentConfig:
    actor_hidden: tuple = (64, 64)
    critic_hidden: tuple = (128, 128)
    lr: float = 1e-3
    gamma: float = 0.99
    zeta: float = 0.99
    critic_extended: bool = False


class AgentSet:
    """Per-UAV actors with centralised (or, for Dec-DDPG, independent) critics."""

    def __init__(self, n_agents: int, obs_dim: int, mode: str, rng: np.random.Generator,
                 config: AgentConfig | None = None, critic_obs_dim: int | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.n = n_agents
        self.obs_dim = obs_dim
        self.mode = mode
        self.cfg = config or AgentConfig()
        # own-observation slice the critic sees; CTFDE defaults to the raw local part
        self.critic_obs_dim = obs_dim if critic_obs_dim is None else critic_obs_dim
        self.actors = [Mlp.init([obs_dim, *self.cfg.actor_hidden, ACT_DIM], rng) for _ in range(n_agents)]
        self.critics = [Mlp.init([self.critic_dim, *self.cfg.critic_hidden, 1], rng) for _ in range(n_agents)]
        self.actor_targets = [a.copy() for a in self.actors]
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_opts = [Adam(lr=self.cfg.lr) for _ in range(n_agents)]
        self.critic_opts = [Adam(lr=self.cfg.lr) for _ in range(n_agents)]

    @property
    def centralized(self) -> bool:
        return self.mode != "dec-ddpg"

    @property
    def critic_dim(self) -> int:
        if self.centralized:
            return self.n * (self.critic_obs_dim + ACT_DIM)
        return self.critic_obs_dim + ACT_DIM

    # --- acting -----------------------------------------------------------
    def act_unit(self, i: int, obs, noise: GaussianNoise | None = None, target: bool = False) -> np.ndarray:
        net = self.actor_targets[i] if target else self.actors[i]
        raw = net.forward(obs)
        if noise is not None:
            raw = raw + noise.sample(raw.shape)
        return np.tanh(raw)

    def act(self, i: int, obs, noise: GaussianNoise | None = None) -> ShapingAction:
        return ShapingAction.from_unit(self.act_unit(i, obs, noise))

    def joint_actions(self, obs, target: bool = True) -> np.ndarray:
        """Noise-free actions for joint observations ``(..., I, D)``."""
        obs = np.asarray(obs)
        return np.stack([self.act_unit(i, obs[..., i, :], target=target) for i in range(self.n)], axis=-2)

    # --- critic plumbing --------------------------------------------------
    def critic_input(self, i: int, obs, act) -> np.ndarray:
        """``obs`` ``(..., I, D)``, ``act`` ``(..., I, 3)`` -> critic features for agent ``i``."""
        obs = np.asarray(obs)[..., : self.critic_obs_dim]
        act = np.asarray(act)
        if self.centralized:
            lead = obs.shape[:-2]
            return np.concatenate([obs.reshape(*lead, -1), act.reshape(*lead, -1)], axis=-1)
        return np.concatenate([obs[..., i, :], act[..., i, :]], axis=-1)

    def td_targets(self, batch: Batch) -> np.ndarray:
        """Single-step targets ``y`` of shape ``(B, I)`` from the target networks."""
        a_next = self.joint_actions(batch.next_obs, target=True)
        mask = 1.0 - batch.done.astype(float)
        ys = []
        for i in range(self.n):
            q_next = self.critic_targets[i].forward(self.critic_input(i, batch.next_obs, a_next))[:, 0]
            ys.append(batch.rew[:, i] + self.cfg.gamma * mask * q_next)
        return np.stack(ys, axis=1)

    def critic_step(self, i: int, x: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None,
                    n_rows: int | None = None) -> float:
        """Gradient step on ``sum(w (Q(x) - y)^2) / n_rows``; returns the pre-step loss."""
        q, acts = self.critics[i].forward_cache(x)
        err = q[:, 0] - y
        w = np.ones_like(err) if weights is None else weights
        n_rows = len(err) if n_rows is None else n_rows
        loss = float(np.sum(w * err * err) / n_rows)
        if not np.isfinite(loss):
            log.warning("non-finite critic loss for agent %d, step skipped", i)
            return loss
        grads, _ = self.critics[i].backward(acts, (2.0 * w * err / n_rows)[:, None])
        self.critic_opts[i].step(self.critics[i], grads)
        return loss

    def actor_step(self, i: int, obs: np.ndarray, act: np.ndarray) -> float:
        """Ascend ``Q_i`` with agent ``i``'s action replaced by its current policy."""
        b = len(obs)
        raw, a_acts = self.actors[i].forward_cache(obs[:, i, :])
        a_i = np.tanh(raw)
        joint = np.array(act, copy=True)
        joint[:, i, :] = a_i
        x = self.critic_input(i, obs, joint)
        q, c_acts = self.critics[i].forward_cache(x)
        loss = -float(np.mean(q))
        if not np.isfinite(loss):
            log.warning("non-finite actor loss for agent %d, step skipped", i)
            return loss
        _, dx = self.critics[i].backward(c_acts, np.full((b, 1), -1.0 / b))
        if self.centralized:
            start = self.n * self.critic_obs_dim + i * ACT_DIM
        else:
            start = self.critic_obs_dim
        d_a = dx[:, start:start + ACT_DIM]
        grads, _ = self.actors[i].backward(a_acts, d_a * (1.0 - a_i ** 2))
        self.actor_opts[i].step(self.actors[i], grads)
        return loss

    def soft_update_targets(self):
        for t, o in zip(self.actor_targets + self.critic_targets, self.actors + self.critics):
            soft_update(t, o, self.cfg.zeta)

    def hard_update_targets(self):
        for t, o in zip(self.actor_targets + self.critic_targets, self.actors + self.critics):
            hard_update(t, o)

    def networks(self) -> dict:
        nets = {}
        for i in range(self.n):
            nets[f"actor{i}"] = self.actors[i]
            nets[f"actor_target{i}"] = self.actor_targets[i]
            nets[f"critic{i}"] = self.critics[i]
            nets[f"critic_target{i}"] = self.critic_targets[i]
        return nets


def critic_update(agents: AgentSet, batch: Batch) -> list[float]:
    """One TD step per agent against single-step targets."""
    y = agents.td_targets(batch)
    return [agents.critic_step(i, agents.critic_input(i, batch.obs, batch.act), y[:, i])
            for i in range(agents.n)]


def actor_update(agents: AgentSet, batch: Batch) -> list[float]:
    return [agents.actor_step(i, batch.obs, batch.act) for i in range(agents.n)]


def dec_ddpg_update(agents: AgentSet, batch: Batch) -> tuple[list[float], list[float]]:
    if agents.mode != "dec-ddpg":
        raise ValueError("dec_ddpg_update needs an AgentSet in dec-ddpg mode")
    return critic_update(agents, batch), actor_update(agents, batch)
