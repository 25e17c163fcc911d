"""Run configuration: a nested JSON document plus the built-in named presets."""

from __future__ import annotations

import copy
import json
import zlib
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..critic import CriticSpec
from ..mpc import MpcConfig
from ..nominal import NominalGains
from ..scenario import PRESETS, HotSpot, Scenario, get_preset

AGENT_KINDS = ("calf", "sarsa_m", "nominal", "mpc")


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


@dataclass(frozen=True)
class AgentConfig:
    kind: str = "calf"
    critic: dict = field(default_factory=dict)
    gains: dict = field(default_factory=dict)
    mpc: dict = field(default_factory=dict)
    anchor: str = "midpoint"
    exploration_std: tuple[float, float] | None = None
    grid: tuple[int, int] = (15, 15)
    carry_weights: bool = True
    top_sign_only: bool = False


@dataclass(frozen=True)
class RunConfig:
    preset: str = "preset-A"
    scenario: dict = field(default_factory=dict)
    agent: AgentConfig = field(default_factory=AgentConfig)
    seeds: tuple[int, ...] = tuple(range(1, 21))
    episodes: int = 40
    noise_std: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative")
        if self.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        if self.agent.kind not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {self.agent.kind!r}; expected one of {AGENT_KINDS}")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown scenario preset {self.preset!r}; expected one of {sorted(PRESETS)}")
        # surface bad hyper-parameters at load time rather than inside a worker
        try:
            self.build_scenario()
            self.critic_spec()
            self.gains()
            self.mpc_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def build_scenario(self) -> Scenario:
        return get_preset(self.preset, **_scenario_kwargs(self.scenario))

    def critic_spec(self) -> CriticSpec:
        kw = dict(self.agent.critic)
        if "weight_bounds" in kw:
            kw["weight_bounds"] = tuple(kw["weight_bounds"])
        return CriticSpec(**kw)

    def gains(self) -> NominalGains:
        return NominalGains(**self.agent.gains)

    def mpc_config(self) -> MpcConfig:
        kw = dict(self.agent.mpc)
        if "grid_shape" in kw:
            kw["grid_shape"] = tuple(kw["grid_shape"])
        return MpcConfig(**kw)

    def to_dict(self) -> dict:
        a = self.agent
        return {
            "preset": self.preset,
            "scenario": copy.deepcopy(self.scenario),
            "agent": {
                "kind": a.kind,
                "critic": dict(a.critic),
                "gains": dict(a.gains),
                "mpc": dict(a.mpc),
                "anchor": a.anchor,
                "exploration_std": list(a.exploration_std) if a.exploration_std is not None else None,
                "grid": list(a.grid),
                "carry_weights": a.carry_weights,
                "top_sign_only": a.top_sign_only,
            },
            "seeds": list(self.seeds),
            "episodes": self.episodes,
            "noise_std": list(self.noise_std),
        }

    def with_overrides(self, *, seeds=None, episodes=None, agent=None, preset=None) -> "RunConfig":
        d = self.to_dict()
        if seeds is not None:
            d["seeds"] = list(seeds)
        if episodes is not None:
            d["episodes"] = episodes
        if agent is not None:
            d["agent"]["kind"] = agent
        if preset is not None:
            d["preset"] = preset
        return from_dict(d)


def _scenario_kwargs(overrides: dict) -> dict:
    kw = dict(overrides)
    for key in ("cost_coeffs", "initial_state"):
        if key in kw:
            kw[key] = tuple(kw[key])
    if "hot_spot" in kw:
        kw["hot_spot"] = HotSpot(**kw["hot_spot"])
    return kw


def from_dict(d: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    agent = dict(d.get("agent", {}))
    known_agent = {f.name for f in fields(AgentConfig)}
    if set(agent) - known_agent:
        raise ConfigError(f"unknown agent keys: {sorted(set(agent) - known_agent)}")
    if agent.get("exploration_std") is not None:
        agent["exploration_std"] = tuple(agent["exploration_std"])
    if "grid" in agent:
        agent["grid"] = tuple(agent["grid"])
    kw = {k: v for k, v in d.items() if k != "agent"}
    if "seeds" in kw:
        kw["seeds"] = tuple(int(s) for s in kw["seeds"])
    if "noise_std" in kw:
        kw["noise_std"] = tuple(kw["noise_std"])
    try:
        return RunConfig(agent=AgentConfig(**agent), **kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# -- named presets ----------------------------------------------------------------

_CALF_CRITIC = {"features": "state-linear", "c_low": 0.1, "c_up": 1e3, "nu_bar": 1e-6,
                "nu_bar_max": 0.1, "gamma": 0.9, "replay_len": 8, "reg": 1e-3}
_SARSA_CRITIC = dict(_CALF_CRITIC, c_up=5e2)
_TABLE_GAINS = {"k_rho": 0.2, "k_alpha": 1.5, "k_beta": -0.15}


def _preset_dicts() -> dict[str, dict]:
    out = {}
    for scen_name, tag in (("preset-A", "a"), ("preset-B", "b")):
        base = {"preset": scen_name, "seeds": list(range(1, 21)), "episodes": 40}
        out[f"preset-{tag}-calf"] = dict(base, agent={
            "kind": "calf", "critic": _CALF_CRITIC, "gains": _TABLE_GAINS, "anchor": "lower"})
        out[f"preset-{tag}-sarsa-m"] = dict(base, agent={
            "kind": "sarsa_m", "critic": _SARSA_CRITIC, "anchor": "lower"})
        # nothing learns, so one episode per seed carries all the information
        out[f"preset-{tag}-nominal"] = dict(base, episodes=1, agent={"kind": "nominal", "gains": _TABLE_GAINS})
        for horizon in (10, 15, 25):
            suffix = "" if horizon == 10 else str(horizon)
            out[f"preset-{tag}-mpc{suffix}"] = dict(base, seeds=[1], episodes=1, agent={
                "kind": "mpc", "mpc": {"horizon": horizon, "substeps": 4}, "gains": _TABLE_GAINS})
    return out


PRESET_CONFIGS = _preset_dicts()


def load_config(source: str | Path) -> RunConfig:
    """Named preset or path to a JSON file."""
    name = str(source)
    if name in PRESET_CONFIGS:
        return from_dict(copy.deepcopy(PRESET_CONFIGS[name]))
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    if "extends" in data:
        base = data.pop("extends")
        if base not in PRESET_CONFIGS:
            raise ConfigError(f"config {path} extends unknown preset {base!r}")
        data = _merge(copy.deepcopy(PRESET_CONFIGS[base]), data)
    return from_dict(data)


def _merge(base: dict, top: dict) -> dict:
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            base[k] = _merge(base[k], v)
        else:
            base[k] = v
    return base


def parse_seeds(text: str) -> list[int]:
    """``"1-20"``, ``"1,3,5"`` or a mix such as ``"1-3,7"``."""
    seeds = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            elif part:
                seeds.append(int(part))
    except ValueError as exc:
        raise ConfigError(f"bad seed list {text!r}") from exc
    if not seeds:
        raise ConfigError(f"bad seed list {text!r}")
    return seeds


# -- seed streams -----------------------------------------------------------------

STREAMS = ("restarts", "exploration", "process-noise", "bootstrap")


def stream_rng(seed: int, label: str) -> np.random.Generator:
    """Generator for one named random source of one seed.

    The label is hashed into the seed sequence, so each stream depends only on
    (seed, label) and adding a new label leaves the others untouched.
    """
    if label not in STREAMS:
        raise ValueError(f"unknown stream {label!r}")
    return np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(label.encode())]))
