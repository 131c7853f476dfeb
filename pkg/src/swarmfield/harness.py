"""Training loop, evaluation and generalisation runs."""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import obs as obsmod
from .agents import AgentSet, Batch, GaussianNoise, ReplayBuffer, actor_update, critic_update, sample_batch
from .config import ConfigError, RunConfig, dump_config
from .env import EnvConfig, WorldState, init_instance, neighbor_sets, step
from .ifds import ShapingAction, plan
from .mbrl import VirtualModel, model_losses, model_update, multistep_critic_update
from .nets import Checkpoint, LayoutMismatchError, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.bin"
CURVE_COLUMNS = ["episode", "instance", "return", "collisions", "steps", "critic_loss", "actor_loss"]
MBRL_COLUMNS = ["episode", "L_lambda", "L_mu", "F", "mean_N", "mean_N_raw"]


class ModeError(ValueError):
    pass


def instance_seeds(seed: int, count: int, stream: int = 0) -> list[int]:
    ss = np.random.SeedSequence([seed, stream])
    return [int(s) for s in ss.generate_state(count, dtype=np.uint32)]


def obstacles_for(world: WorldState, i: int) -> list[tuple]:
    cfg = world.config
    uav_ids, haz_ids = neighbor_sets(world, i)
    obs = [(world.hazards[k].p, cfg.rho_ik) for k in haz_ids]
    obs += [(world.uavs[j].p, cfg.rho_ij) for j in uav_ids]
    return obs


def plan_uav(world: WorldState, i: int, action: ShapingAction) -> np.ndarray:
    cfg = world.config
    uav = world.uavs[i]
    return plan(uav.p, uav.p_end, obstacles_for(world, i), action, cfg.dt, cfg.v_max, d_com=cfg.d_com)


@dataclass
class TrajectoryLog:
    starts: list
    ends: list
    positions: list = field(default_factory=list)   # [t][i] -> xyz
    hazards: list = field(default_factory=list)     # [{"t": t, "hazards": [[x, y, z, r], ...]}]
    rewards: list = field(default_factory=list)     # [t][i] -> [r_int, r_avo, r_con]

    @classmethod
    def start(cls, world: WorldState) -> "TrajectoryLog":
        log_ = cls(starts=[u.p_start.tolist() for u in world.uavs], ends=[u.p_end.tolist() for u in world.uavs])
        log_.record_positions(world)
        log_.record_hazards(world)
        return log_

    def record_positions(self, world: WorldState):
        self.positions.append([u.p.tolist() for u in world.uavs])

    def record_hazards(self, world: WorldState):
        self.hazards.append({"t": world.t, "hazards": [[*h.p.tolist(), h.radius] for h in world.hazards]})

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrajectoryLog":
        return cls(**json.loads(text))


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------

@dataclass
class TrainResult:
    curve: list
    mbrl: list
    agents: AgentSet
    model: VirtualModel | None
    out_dir: Path | None


def _dims(cfg: RunConfig) -> tuple[int, int]:
    h = cfg.train.h_max
    if cfg.train.extended:
        obs_dim = obsmod.extended_dim(h)
        critic_obs_dim = obs_dim if cfg.agent.critic_extended else obsmod.local_dim(h)
    else:
        obs_dim = critic_obs_dim = obsmod.local_dim(h)
    return obs_dim, critic_obs_dim


def layout_for(cfg: RunConfig) -> str:
    kind = "ext" if cfg.train.extended else "local"
    return f"{obsmod.layout_version(cfg.train.h_max, cfg.train.include_neighbor_hazards)}-{kind}"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if not np.isfinite(v) else repr(round(v, 10))
    return str(v)


def _write_rows(path: Path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in columns) + "\n")


def train_run(cfg: RunConfig, out_dir=None, progress=None) -> TrainResult:
    """Train one mode end to end.

    Each episode visits one instance; instances cycle round-robin. Writes
    ``curve.csv``, ``mbrl.csv``, ``config.toml`` and ``checkpoint.bin`` to
    ``out_dir`` when given.
    """
    tc, ec = cfg.train, cfg.env
    if tc.mode == "ctpde" and tc.decentralized_execution:
        raise ConfigError("ctpde cannot run with decentralized execution")
    if out_dir is not None:
        out_dir = Path(out_dir)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
        if not os.access(out_dir, os.W_OK):
            raise OSError(f"output directory {out_dir} is not writable")

    seeds = np.random.SeedSequence(tc.seed).spawn(4)
    net_rng, noise_rng, sample_rng, model_rng = (np.random.default_rng(s) for s in seeds)
    inst_seeds = instance_seeds(tc.seed, tc.instances)
    obs_dim, critic_obs_dim = _dims(cfg)
    n = ec.n_uavs
    agents = AgentSet(n, obs_dim, tc.mode, net_rng, cfg.agent, critic_obs_dim=critic_obs_dim)
    model = VirtualModel(n, obs_dim, model_rng, lr=cfg.agent.lr) if tc.mpc else None
    buffer = ReplayBuffer(tc.buffer_capacity, n, obs_dim)
    noise = GaussianNoise(tc.noise_sigma, tc.noise_decay, noise_rng)
    t_limit = min(tc.steps or ec.t_max, ec.t_max)

    def observe(world):
        return np.array(obsmod.build_observations(world, tc.extended, tc.h_max, tc.include_neighbor_hazards))

    curve, mbrl_rows = [], []
    for episode in range(tc.episodes):
        inst = episode % tc.instances
        world = init_instance(ec, inst_seeds[inst])
        z = observe(world)
        ep_return = 0.0
        c_losses, a_losses, model_log = [], [], []
        steps = 0
        while not world.finished and steps < t_limit:
            acts = np.array([agents.act_unit(i, z[i], noise) for i in range(n)])
            planned = [None if u.done else plan_uav(world, i, ShapingAction.from_unit(acts[i]))
                       for i, u in enumerate(world.uavs)]
            _, rewards, _ = step(world, planned)
            z_next = observe(world)
            r = np.array([rb.r_path for rb in rewards])
            ep_return += float(r.sum())
            buffer.add(z, acts, r, z_next, world.all_done)
            z = z_next
            steps += 1

            batch = sample_batch(buffer, tc.batch_size, sample_rng)
            if batch is None:
                continue
            if tc.mpc:
                losses = model_losses(model, batch)
                cl, info = multistep_critic_update(agents, model, batch, cfg.horizon, losses=losses)
                model_log.append((*losses, info["F"], info["N"], info["N_raw"]))
            else:
                cl = critic_update(agents, batch)
            al = actor_update(agents, batch)
            if tc.mpc and tc.actor_model_states and info["N"] > 1:
                tr = info["trace"]
                imagined = Batch(np.concatenate(tr.obs[1:-1]), np.concatenate(tr.act[1:-1]),
                                 np.concatenate(tr.rew[1:]), np.concatenate(tr.obs[2:]),
                                 np.zeros(len(batch) * (info["N"] - 1), dtype=bool))
                actor_update(agents, imagined)
            agents.soft_update_targets()
            if tc.mpc:
                model_update(model, batch)
            c_losses.append(np.mean(cl))
            a_losses.append(np.mean(al))
        noise.end_episode()

        row = {"episode": episode, "instance": inst, "return": ep_return, "collisions": world.collisions,
               "steps": steps, "critic_loss": float(np.mean(c_losses)) if c_losses else float("nan"),
               "actor_loss": float(np.mean(a_losses)) if a_losses else float("nan")}
        curve.append(row)
        if tc.mpc:
            arr = np.array(model_log, dtype=float) if model_log else np.full((1, 5), np.nan)
            mbrl_rows.append({"episode": episode, "L_lambda": float(np.mean(arr[:, 0])),
                              "L_mu": float(np.mean(arr[:, 1])), "F": float(np.mean(arr[:, 2])),
                              "mean_N": float(np.mean(arr[:, 3])), "mean_N_raw": float(np.mean(arr[:, 4]))})
        if progress is not None:
            progress(row)
        if out_dir is not None and ((episode + 1) % tc.checkpoint_every == 0 or episode + 1 == tc.episodes):
            save_run_checkpoint(out_dir / CHECKPOINT_NAME, cfg, agents, model, episode + 1,
                                {"noise": noise_rng.bit_generator.state, "sample": sample_rng.bit_generator.state},
                                noise.sigma)

    if out_dir is not None:
        _write_rows(out_dir / "curve.csv", CURVE_COLUMNS, curve)
        if tc.mpc:
            _write_rows(out_dir / "mbrl.csv", MBRL_COLUMNS, mbrl_rows)
        (out_dir / "config.toml").write_text(dump_config(cfg), encoding="utf-8")
    return TrainResult(curve, mbrl_rows, agents, model, out_dir)


def save_run_checkpoint(path, cfg: RunConfig, agents: AgentSet, model, episode: int, rng_state: dict,
                        noise_sigma: float):
    nets = agents.networks()
    if model is not None:
        nets.update(model.networks())
    meta = {"config": cfg.to_dict(), "mode": cfg.train.mode, "episode": episode, "n_agents": agents.n,
            "obs_dim": agents.obs_dim, "critic_obs_dim": agents.critic_obs_dim, "rng": rng_state,
            "noise_sigma": noise_sigma}
    save_checkpoint(path, nets, layout_for(cfg), cfg.env.digest(), meta)


def resolve_checkpoint(path) -> Path:
    path = Path(path)
    return path / CHECKPOINT_NAME if path.is_dir() else path


@dataclass
class Policy:
    """Actor networks plus what is needed to rebuild observations."""
    mode: str
    actors: list
    config: RunConfig
    layout: str

    @classmethod
    def load(cls, path) -> "Policy":
        ck: Checkpoint = load_checkpoint(resolve_checkpoint(path))
        cfg = RunConfig.from_dict(ck.meta["config"])
        if ck.layout != layout_for(cfg):
            raise LayoutMismatchError(f"checkpoint layout {ck.layout!r} does not match {layout_for(cfg)!r}")
        actors = [ck.nets[f"actor{i}"] for i in range(ck.meta["n_agents"])]
        return cls(ck.meta["mode"], actors, cfg, ck.layout)

    @property
    def extended(self) -> bool:
        return self.mode in ("ctfde", "ctfde-mpc")

    def actor_for(self, i: int):
        return self.actors[i % len(self.actors)]


# --------------------------------------------------------------------------
# evaluation
# --------------------------------------------------------------------------

@dataclass
class EpisodeResult:
    instance_id: int
    seed: int
    time_s: float
    ret: float
    collisions: int
    steps: int
    decisions: int
    trajectory: TrajectoryLog

    @property
    def per_decision_s(self) -> float:
        return self.time_s / max(self.decisions, 1)


def run_episode(policy: Policy, env_cfg: EnvConfig, seed: int, instance_id: int = 0,
                t_limit: int | None = None) -> EpisodeResult:
    """Noise-free rollout; only observation building, actor forward and IFDS are timed."""
    tc = policy.config.train
    world = init_instance(env_cfg, seed)
    traj = TrajectoryLog.start(world)
    t_limit = min(t_limit or env_cfg.t_max, env_cfg.t_max)
    decision_time = 0.0
    decisions = 0
    ret = 0.0
    epoch = world.hazard_epoch
    while not world.finished and world.t < t_limit:
        # each UAV builds its local observation once and shares it with its neighbours
        t0 = time.perf_counter()
        local = [obsmod.local_observation(world, j, tc.h_max) for j in range(len(world.uavs))]
        decision_time += time.perf_counter() - t0
        planned = []
        for i, uav in enumerate(world.uavs):
            if uav.done:
                planned.append(None)
                continue
            t0 = time.perf_counter()
            if policy.extended:
                z = obsmod.encode_observation(
                    obsmod.observe_extended(world, i, local, tc.h_max, tc.include_neighbor_hazards))
            else:
                z = local[i].vector()
            a = np.tanh(policy.actor_for(i).forward(z))
            planned.append(plan_uav(world, i, ShapingAction.from_unit(a)))
            decision_time += time.perf_counter() - t0
            decisions += 1
        _, rewards, _ = step(world, planned)
        ret += sum(rb.r_path for rb in rewards)
        traj.record_positions(world)
        traj.rewards.append([[rb.r_int, rb.r_avo, rb.r_con] for rb in rewards])
        if world.hazard_epoch != epoch:
            epoch = world.hazard_epoch
            traj.record_hazards(world)
    return EpisodeResult(instance_id, seed, decision_time, ret, world.collisions, world.t, decisions, traj)


def _metric_row(res: EpisodeResult, method: str, uavs: int, interval: int) -> dict:
    return {"instance_id": res.instance_id, "method": method, "uavs": uavs, "interval": interval,
            "seed": res.seed, "time_s": res.time_s, "return": res.ret, "collisions": res.collisions}


@dataclass
class RunMetrics:
    rows: list
    results: list

    def summary(self) -> dict:
        rets = np.array([r["return"] for r in self.rows], dtype=float)
        cols = np.array([r["collisions"] for r in self.rows], dtype=float)
        times = np.array([r["time_s"] for r in self.rows], dtype=float)
        per_dec = np.array([r.per_decision_s for r in self.results], dtype=float)
        return {"instances": len(self.rows),
                "return_mean": float(rets.mean()), "return_std": float(rets.std()),
                "collisions_mean": float(cols.mean()), "collisions_std": float(cols.std()),
                "time_mean": float(times.mean()), "time_std": float(times.std()),
                "per_uav_step_latency_s": float(np.median(per_dec))}


def evaluate_run(checkpoint, instances: int, interval: int | None = None, uavs: int | None = None,
                 seed: int = 12345, out_dir=None, t_limit: int | None = None,
                 policy: Policy | None = None) -> RunMetrics:
    policy = policy or Policy.load(checkpoint)
    env_cfg = policy.config.env
    changes = {}
    if interval is not None:
        changes["change_interval"] = interval
    if uavs is not None and uavs != env_cfg.n_uavs:
        if policy.mode == "ctpde":
            raise ModeError("ctpde checkpoints are bound to their training UAV count")
        changes["n_uavs"] = uavs
    if changes:
        env_cfg = replace(env_cfg, **changes)
    seeds = instance_seeds(seed, instances, stream=1)
    results = [run_episode(policy, env_cfg, s, k, t_limit) for k, s in enumerate(seeds)]
    rows = [_metric_row(r, policy.mode, env_cfg.n_uavs, env_cfg.change_interval) for r in results]
    metrics = RunMetrics(rows, results)
    if out_dir is not None:
        from .artifacts import export_artifacts
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        export_artifacts(rows, out_dir / "metrics.csv", "csv")
        export_artifacts(rows, out_dir / "metrics.json", "json")
        for r in results:
            (out_dir / f"trajectory_{r.instance_id:03d}.json").write_text(r.trajectory.to_json(), encoding="utf-8")
        (out_dir / "summary.json").write_text(json.dumps(metrics.summary(), indent=2, sort_keys=True),
                                              encoding="utf-8")
    return metrics


def generalize_run(checkpoint, uavs=(8, 10, 12), intervals=(5, 10, 15), instances: int = 5,
                   seed: int = 12345, out_dir=None, t_limit: int | None = None) -> dict:
    """Deploy a decentralised policy unchanged on larger swarms; returns {(I, V): RunMetrics}."""
    policy = Policy.load(checkpoint)
    if policy.mode == "ctpde":
        raise ModeError("ctpde policies need the central planner and cannot be redeployed at another size")
    grid = {}
    rows = []
    for n in uavs:
        for v in intervals:
            m = evaluate_run(None, instances, v, n, seed, None, t_limit, policy=policy)
            grid[(n, v)] = m
            rows.extend(m.rows)
    if out_dir is not None:
        from .artifacts import export_artifacts
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        export_artifacts(rows, out_dir / "generalization.csv", "csv")
        export_artifacts(rows, out_dir / "generalization.json", "json")
        table = [{"uavs": n, "interval": v, **m.summary()} for (n, v), m in grid.items()]
        (out_dir / "table.json").write_text(json.dumps(table, indent=2, sort_keys=True), encoding="utf-8")
    return grid
