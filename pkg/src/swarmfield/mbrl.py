"""Learned environment model and multi-step value-expansion critic targets.

A transition net predicts the next joint observation and a reward net the
per-UAV rewards. Their batch losses set a deviation score ``F`` that shrinks
the imagined rollout horizon when the model is poor.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .agents import ACT_DIM, AgentSet, Batch
from .nets import Adam, Mlp

log = logging.getLogger(__name__)


@dataclass
class HorizonConfig:
    eps1: float = 0.25
    eps2: float = 0.66
    n_base: int = 6
    n_max: int = 5

    def __post_init__(self):
        if not 0.0 <= self.eps1 <= 1.0:
            raise ValueError("eps1 must lie in [0, 1]")
        if self.eps2 < 0 or self.n_base < 1 or self.n_max < 1:
            raise ValueError("need eps2 >= 0, n_base >= 1, n_max >= 1")


class VirtualModel:
    """Joint transition net ``(z, a) -> z'`` and reward net ``(z, a) -> r``."""

    def __init__(self, n_agents: int, obs_dim: int, rng: np.random.Generator | None = None,
                 hidden=(128, 128), lr: float = 1e-3, zero: bool = False):
        self.n = n_agents
        self.obs_dim = obs_dim
        d_in = n_agents * (obs_dim + ACT_DIM)
        t_sizes = [d_in, *hidden, n_agents * obs_dim]
        r_sizes = [d_in, *hidden, n_agents]
        if zero:
            self.transition, self.reward = Mlp.zeros(t_sizes), Mlp.zeros(r_sizes)
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            self.transition, self.reward = Mlp.init(t_sizes, rng), Mlp.init(r_sizes, rng)
        self.transition_opt = Adam(lr=lr)
        self.reward_opt = Adam(lr=lr)

    def features(self, z, a) -> np.ndarray:
        z, a = np.asarray(z, dtype=float), np.asarray(a, dtype=float)
        if z.shape[-2:] != (self.n, self.obs_dim) or a.shape[-2:] != (self.n, ACT_DIM):
            raise ValueError(f"bad joint shapes {z.shape}, {a.shape}")
        lead = z.shape[:-2]
        return np.concatenate([z.reshape(*lead, -1), a.reshape(*lead, -1)], axis=-1)

    def predict(self, z, a):
        x = self.features(z, a)
        lead = x.shape[:-1]
        z_next = self.transition.forward(x).reshape(*lead, self.n, self.obs_dim)
        return z_next, self.reward.forward(x)

    def networks(self) -> dict:
        return {"model_transition": self.transition, "model_reward": self.reward}


def model_predict(model, z, a):
    return model.predict(z, a)


def model_losses(model: VirtualModel, batch: Batch) -> tuple[float, float]:
    z_hat, r_hat = model.predict(batch.obs, batch.act)
    b = len(batch)
    l_lam = float(np.sum((z_hat - batch.next_obs) ** 2) / b)
    l_mu = float(np.sum((r_hat - batch.rew) ** 2) / b)
    return l_lam, l_mu


def model_update(model: VirtualModel, batch: Batch) -> tuple[float, float]:
    """One gradient step on each net; returns the losses measured before the step."""
    x = model.features(batch.obs, batch.act)
    b = len(batch)
    z_hat, t_acts = model.transition.forward_cache(x)
    r_hat, r_acts = model.reward.forward_cache(x)
    dz = z_hat - batch.next_obs.reshape(b, -1)
    dr = r_hat - batch.rew
    l_lam = float(np.sum(dz ** 2) / b)
    l_mu = float(np.sum(dr ** 2) / b)
    if np.isfinite(l_lam):
        grads, _ = model.transition.backward(t_acts, 2.0 * dz / b)
        model.transition_opt.step(model.transition, grads)
    else:
        log.warning("non-finite transition loss, step skipped")
    if np.isfinite(l_mu):
        grads, _ = model.reward.backward(r_acts, 2.0 * dr / b)
        model.reward_opt.step(model.reward, grads)
    else:
        log.warning("non-finite reward loss, step skipped")
    return l_lam, l_mu


def deviation(l_lam: float, l_mu: float, eps1: float) -> float:
    return eps1 * l_lam + (1.0 - eps1) * l_mu


def raw_horizon(f: float, cfg: HorizonConfig) -> int:
    return math.floor(-cfg.eps2 * f + cfg.n_base)


def adaptive_horizon(f: float, cfg: HorizonConfig) -> int:
    if not np.isfinite(f):
        return 1
    return int(min(max(raw_horizon(f, cfg), 1), cfg.n_max))


@dataclass
class RolloutTrace:
    """Imagined trajectory of horizon ``N`` starting at a real batch sample.

    ``obs[n]``/``act[n]`` for n = 0..N (index 0 is the real pair) and
    ``rew[n]`` for n = 0..N-1, the model reward at ``(obs[n], act[n])``.
    """
    obs: list
    act: list
    rew: list

    @property
    def horizon(self) -> int:
        return len(self.rew)


def rollout(model, agents: AgentSet, z_c, a_c, n: int) -> RolloutTrace:
    if n < 1:
        raise ValueError("horizon must be >= 1")
    obs, act, rew = [np.asarray(z_c, dtype=float)], [np.asarray(a_c, dtype=float)], []
    for _ in range(n):
        z_next, r_hat = model.predict(obs[-1], act[-1])
        if not (np.all(np.isfinite(z_next)) and np.all(np.isfinite(r_hat))):
            log.warning("non-finite model prediction, rollout truncated at %d", len(rew))
            break
        rew.append(r_hat)
        obs.append(z_next)
        act.append(agents.joint_actions(z_next, target=True))
    if not rew:
        raise FloatingPointError("model produced no finite prediction")
    return RolloutTrace(obs, act, rew)


def multistep_targets(trace: RolloutTrace, agents: AgentSet, gamma: float, done=None) -> np.ndarray:
    """Value-expansion targets ``y[n]`` for n in 0..N-1, shape ``(N, B, I)``.

    ``y[n] = sum_{m=n}^{N-1} gamma^(m-n) r[m] + gamma^(N-n) Q^-(obs[N], act[N])``.
    Terminal rows (``done``) drop the bootstrap and keep only ``y[0] = r[0]``.
    """
    n_h = trace.horizon
    rew = np.stack(trace.rew)  # (N, B, I)
    boot = np.stack([agents.critic_targets[i].forward(agents.critic_input(i, trace.obs[n_h], trace.act[n_h]))[..., 0]
                     for i in range(agents.n)], axis=-1)
    y = np.empty_like(rew)
    for n in range(n_h):
        disc = gamma ** np.arange(n_h - n)
        y[n] = np.tensordot(disc, rew[n:], axes=1) + gamma ** (n_h - n) * boot
    if done is not None:
        done = np.asarray(done, dtype=bool)
        y[0][done] = rew[0][done]
    return y


def multistep_critic_update(agents: AgentSet, model, batch: Batch, hcfg: HorizonConfig,
                            horizon: int | None = None, losses: tuple | None = None):
    """Critic step on the summed multi-step loss; returns (per-agent losses, info).

    ``horizon`` forces ``N``; otherwise it comes from the model's deviation on
    this batch (``losses`` may carry precomputed model losses).
    """
    if horizon is None:
        l_lam, l_mu = losses if losses is not None else model_losses(model, batch)
        f = deviation(l_lam, l_mu, hcfg.eps1)
        n = adaptive_horizon(f, hcfg)
        raw = raw_horizon(f, hcfg) if np.isfinite(f) else None
    else:
        f, raw, n = float("nan"), None, horizon
    trace = rollout(model, agents, batch.obs, batch.act, n)
    n_eff = trace.horizon
    y = multistep_targets(trace, agents, agents.cfg.gamma, batch.done)
    b = len(batch)
    w = np.ones((n_eff, b))
    w[1:, batch.done] = 0.0
    out = []
    for i in range(agents.n):
        x = np.concatenate([agents.critic_input(i, trace.obs[k], trace.act[k]) for k in range(n_eff)])
        out.append(agents.critic_step(i, x, y[:, :, i].reshape(-1), w.reshape(-1), n_rows=b))
    return out, {"F": f, "N": n_eff, "N_raw": raw, "trace": trace}
