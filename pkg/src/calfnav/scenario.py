"""Problem instance for the differential-drive navigation task.

Holds the cost field (quadratic bowl plus a Gaussian hot spot), the
speed-limited zone around the spot, the goal disk and the actuator bounds.
Everything here is a pure value or a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal, NamedTuple


class State(NamedTuple):
    """Robot pose in the world frame; ``theta`` is not wrapped."""

    x: float
    y: float
    theta: float


class Action(NamedTuple):
    v: float
    omega: float


@dataclass(frozen=True)
class HotSpot:
    mu_x: float
    mu_y: float
    sigma_x: float = 0.1
    sigma_y: float = 0.1
    weight: float = 10.0
    zone_radius: float = 0.1
    zone_speed_cap: float = 0.01

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValueError("hot spot standard deviations must be positive")
        if self.zone_radius < 0 or self.zone_speed_cap < 0:
            raise ValueError("zone radius and speed cap must be non-negative")


GoalNorm = Literal["planar", "full-state"]


@dataclass(frozen=True)
class Scenario:
    hot_spot: HotSpot
    cost_coeffs: tuple[float, float, float] = (1.0, 1.0, 0.1)
    goal_radius: float = 0.2
    goal_norm: GoalNorm = "planar"
    v_max: float = 0.22
    omega_max: float = 2.84
    initial_state: State = field(default_factory=lambda: State(-1.0, -1.0, math.pi / 2))
    dt: float = 0.1
    episode_duration: float = 30.0
    non_reaching_penalty: float = 600.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.goal_radius <= 0:
            raise ValueError("goal_radius must be positive")
        if self.v_max <= 0 or self.omega_max <= 0:
            raise ValueError("actuator bounds must be positive")
        if self.goal_norm not in ("planar", "full-state"):
            raise ValueError(f"unknown goal norm {self.goal_norm!r}")
        n = self.episode_duration / self.dt
        if self.episode_duration <= 0 or abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ValueError("episode_duration must be a positive multiple of dt")
        object.__setattr__(self, "cost_coeffs", tuple(float(c) for c in self.cost_coeffs))
        object.__setattr__(self, "initial_state", State(*map(float, self.initial_state)))

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_duration / self.dt))

    def with_overrides(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)


def hot_spot_density(x: float, y: float, spot: HotSpot) -> float:
    """Bivariate Gaussian density (axis-aligned) centred on the spot."""
    dx = (x - spot.mu_x) / spot.sigma_x
    dy = (y - spot.mu_y) / spot.sigma_y
    return math.exp(-0.5 * (dx * dx + dy * dy)) / (2.0 * math.pi * spot.sigma_x * spot.sigma_y)


def stage_cost(s: State, a: Action | None, scen: Scenario) -> float:
    # the cost carries no action term; ``a`` is accepted for interface symmetry
    cx, cy, ct = scen.cost_coeffs
    x, y, theta = s
    spot = scen.hot_spot
    return cx * x * x + cy * y * y + ct * theta * theta + spot.weight * hot_spot_density(x, y, spot)


def in_goal(s: State, scen: Scenario) -> bool:
    x, y, theta = s
    if scen.goal_norm == "planar":
        return math.sqrt(x * x + y * y) <= scen.goal_radius
    return math.sqrt(x * x + y * y + theta * theta) <= scen.goal_radius


def in_zone(s: State, spot: HotSpot) -> bool:
    dx = s[0] - spot.mu_x
    dy = s[1] - spot.mu_y
    return dx * dx + dy * dy <= spot.zone_radius * spot.zone_radius


def preset_a(**overrides) -> Scenario:
    """Light quadratic cost, spot at (-0.6, -0.5) with weight 10, 30 s episodes."""
    spot = HotSpot(mu_x=-0.6, mu_y=-0.5, weight=10.0)
    scen = Scenario(
        hot_spot=spot,
        cost_coeffs=(1.0, 1.0, 0.1),
        initial_state=State(-1.0, -1.0, math.pi / 2),
        episode_duration=30.0,
    )
    return replace(scen, **overrides) if overrides else scen


def preset_b(**overrides) -> Scenario:
    """Heavy quadratic cost, spot at (-0.5, -0.5) with weight 100, 50 s episodes."""
    spot = HotSpot(mu_x=-0.5, mu_y=-0.5, weight=100.0)
    scen = Scenario(
        hot_spot=spot,
        cost_coeffs=(100.0, 100.0, 1.0),
        initial_state=State(-1.0, -1.0, 0.0),
        episode_duration=50.0,
    )
    return replace(scen, **overrides) if overrides else scen


PRESETS = {"preset-A": preset_a, "preset-B": preset_b}


def get_preset(name: str, **overrides) -> Scenario:
    key = {"a": "preset-A", "b": "preset-B"}.get(name.lower().removeprefix("preset-").removeprefix("preset_"))
    if key is None:
        raise KeyError(f"unknown scenario preset {name!r}")
    return PRESETS[key](**overrides)
