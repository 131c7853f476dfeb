"""Run configuration and the dotted-key config file reader.

A config file is TOML with flat dotted keys, e.g.::

    env.n_uavs = 2
    env.k_min = 1
    train.episodes = 30
    horizon.eps2 = 0.66
    agent.zeta = 0.99

Every key must name a field of the matching section; unknown keys are errors.
``SWARM_SEED`` in the environment overrides ``train.seed``.
"""
from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace

from .agents import MODES, AgentConfig
from .env import EnvConfig
from .mbrl import HorizonConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    mode: str = "ctfde-mpc"
    seed: int = 0
    episodes: int = 30
    steps: int | None = None  # per episode; None -> env.t_max
    instances: int = 100
    batch_size: int = 128
    buffer_capacity: int = 100_000
    noise_sigma: float = 0.3
    noise_decay: float = 0.995
    h_max: int = 3
    include_neighbor_hazards: bool = True
    actor_model_states: bool = False
    decentralized_execution: bool | None = None
    checkpoint_every: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.instances < 1 or self.episodes < 1:
            raise ConfigError("instances and episodes must be >= 1")
        if self.mode == "ctpde" and self.decentralized_execution:
            raise ConfigError("ctpde routes execution through the central planner; "
                              "decentralized_execution cannot be set")

    @property
    def extended(self) -> bool:
        return self.mode in ("ctfde", "ctfde-mpc")

    @property
    def mpc(self) -> bool:
        return self.mode == "ctfde-mpc"


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    horizon: HorizonConfig = field(default_factory=HorizonConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)

    def to_dict(self) -> dict:
        return {"env": asdict(self.env), "train": asdict(self.train),
                "horizon": asdict(self.horizon), "agent": asdict(self.agent)}

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(**{name: _build(kind, data.get(name, {}), name) for name, kind in SECTIONS.items()})

    def with_overrides(self, **sections) -> "RunConfig":
        kw = {}
        for name, changes in sections.items():
            if name not in SECTIONS:
                raise ConfigError(f"unknown section {name!r}")
            try:
                kw[name] = replace(getattr(self, name), **changes)
            except TypeError as exc:
                raise ConfigError(str(exc)) from exc
        return replace(self, **kw)


SECTIONS = {"env": EnvConfig, "train": TrainConfig, "horizon": HorizonConfig, "agent": AgentConfig}
_TUPLE_FIELDS = {"arena", "actor_hidden", "critic_hidden"}


def _build(kind, values: dict, section: str):
    known = {f.name for f in fields(kind)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(section + '.' + k for k in unknown)}")
    values = {k: tuple(v) if k in _TUPLE_FIELDS else v for k, v in values.items()}
    try:
        return kind(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(unknown)}")
    for name, body in data.items():
        if not isinstance(body, dict):
            raise ConfigError(f"{name} must be a section of dotted keys")
        nested = [k for k, v in body.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"unknown keys: {', '.join(name + '.' + k for k in nested)}")
    cfg = RunConfig.from_dict(data)
    seed = os.environ.get("SWARM_SEED")
    if seed is not None:
        try:
            cfg = cfg.with_overrides(train={"seed": int(seed)})
        except ValueError as exc:
            raise ConfigError(f"SWARM_SEED must be an integer, got {seed!r}") from exc
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for section, values in cfg.to_dict().items():
        for key, value in values.items():
            if value is None:
                continue
            lines.append(f"{section}.{key} = {_toml_value(value)}")
    return "\n".join(lines) + "\n"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return repr(v)


def desk_config(mode: str = "ctfde-mpc", seed: int = 0, **train) -> RunConfig:
    """Small scenario used by the acceptance suite: two UAVs, one or two hazards."""
    env = EnvConfig(n_uavs=2, n_destinations=2, k_min=1, k_max=2, change_interval=15,
                    arena=(4.0, 2.0, 1.5), t_max=80)
    tcfg = TrainConfig(**{"mode": mode, "seed": seed, "episodes": 30, "instances": 5, **train})
    return RunConfig(env=env, train=tcfg)
