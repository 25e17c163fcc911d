"""Discrete-time simulation of the differential-drive robot."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .scenario import Action, Scenario, State, in_goal, in_zone, stage_cost

Policy = Callable[[int, State], Action]
Integrator = Literal["euler", "rk4"]

TRAJECTORY_COLUMNS = (
    "t_index", "x", "y", "theta", "v_cmd", "omega_cmd",
    "v_app", "omega_app", "cost", "in_zone", "in_goal",
)


class EpisodeAborted(RuntimeError):
    """Raised when the policy fails or the state stops being finite.

    ``log`` holds the steps taken so far, marked as a failed episode with the
    non-reaching penalty charged.
    """

    def __init__(self, message: str, log: "EpisodeLog | None" = None):
        super().__init__(message)
        self.log = log


def _clip(value: float, bound: float) -> float:
    return min(max(value, -bound), bound)


def saturate(a: Action, scen: Scenario, s: State) -> Action:
    """Clamp to the actuator box, then apply the zone speed cap if ``s`` is inside it."""
    v = _clip(float(a[0]), scen.v_max)
    omega = _clip(float(a[1]), scen.omega_max)
    if in_zone(s, scen.hot_spot):
        v = _clip(v, scen.hot_spot.zone_speed_cap)
    return Action(v, omega)


def _field(theta: float, v: float, omega: float) -> tuple[float, float, float]:
    return v * math.cos(theta), v * math.sin(theta), omega


def step(s: State, a_applied: Action, dt: float, method: Integrator = "euler") -> State:
    x, y, theta = s
    v, omega = a_applied
    if method == "euler":
        return State(x + dt * v * math.cos(theta), y + dt * v * math.sin(theta), theta + dt * omega)
    if method == "rk4":
        # the field depends on theta only, and theta is linear in time
        k1 = _field(theta, v, omega)
        k2 = _field(theta + 0.5 * dt * k1[2], v, omega)
        k3 = _field(theta + 0.5 * dt * k2[2], v, omega)
        k4 = _field(theta + dt * k3[2], v, omega)
        return State(
            x + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
            y + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
            theta + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
        )
    raise ValueError(f"unknown integrator {method!r}")


@dataclass(frozen=True)
class NoiseConfig:
    """Additive zero-mean Gaussian process noise on (x, y, theta)."""

    std: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def active(self) -> bool:
        return any(s > 0 for s in self.std)


@dataclass(frozen=True)
class StepRecord:
    t_index: int
    state: State
    action_commanded: Action
    action_applied: Action
    cost: float
    in_zone: bool
    in_goal: bool


@dataclass
class EpisodeLog:
    records: list[StepRecord] = field(default_factory=list)
    total_cost: float = 0.0
    reached_goal: bool = False
    reach_time: float | None = None
    seed: int = 0
    aborted: str | None = None
    final_state: State | None = None

    @property
    def step_cost_sum(self) -> float:
        return math.fsum(r.cost for r in self.records)

    def states(self) -> np.ndarray:
        pts = [r.state for r in self.records]
        if self.final_state is not None:
            pts.append(self.final_state)
        return np.asarray(pts, dtype=float).reshape(-1, 3)

    def to_csv(self, extra: dict[str, Sequence] | None = None) -> str:
        """One row per step; ``extra`` appends per-step columns (e.g. agent mode)."""
        extra = extra or {}
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRAJECTORY_COLUMNS + tuple(extra))
        for i, r in enumerate(self.records):
            row = [
                r.t_index, *(fmt(v) for v in r.state),
                *(fmt(v) for v in r.action_commanded),
                *(fmt(v) for v in r.action_applied),
                fmt(r.cost), int(r.in_zone), int(r.in_goal),
            ]
            row.extend(fmt(col[i]) if isinstance(col[i], float) else col[i] for col in extra.values())
            writer.writerow(row)
        return buf.getvalue()


def fmt(value: float) -> str:
    """Nine significant digits, the fixed float format of every CSV output."""
    return format(float(value), ".9g")


def _abort(log: EpisodeLog, s: State, costs: list[float], scen: Scenario, msg: str) -> EpisodeLog:
    log.aborted = msg
    log.final_state = s
    log.total_cost = math.fsum(costs) + scen.non_reaching_penalty
    return log


def _finite(s: State) -> bool:
    return all(math.isfinite(c) for c in s)


def run_episode(
    policy: Policy,
    scen: Scenario,
    seed: int = 0,
    noise: NoiseConfig | None = None,
    method: Integrator = "euler",
    rng: np.random.Generator | None = None,
) -> EpisodeLog:
    """Roll out ``policy`` for at most ``scen.max_steps`` steps.

    The stage cost is charged at the pre-transition state with the applied
    action and summed without dt weighting. The episode stops the first time
    the state is inside the goal set; on timeout the non-reaching penalty is
    added to the total. A policy exception or a non-finite state raises
    :class:`EpisodeAborted`.
    """
    noise = noise or NoiseConfig()
    if noise.active and rng is None:
        rng = np.random.default_rng(seed)
    log = EpisodeLog(seed=seed)
    s = scen.initial_state
    costs = []
    for t in range(scen.max_steps):
        goal = in_goal(s, scen)
        if goal:
            log.reached_goal = True
            log.reach_time = t * scen.dt
            break
        try:
            a_cmd = Action(*(float(c) for c in policy(t, s)))
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            msg = f"policy failed at step {t} in state {tuple(s)}: {exc!r}"
            raise EpisodeAborted(msg, _abort(log, s, costs, scen, msg)) from exc
        a_app = saturate(a_cmd, scen, s)
        cost = stage_cost(s, a_app, scen)
        costs.append(cost)
        log.records.append(StepRecord(t, s, a_cmd, a_app, cost, in_zone(s, scen.hot_spot), goal))
        s = step(s, a_app, scen.dt, method)
        if noise.active:
            s = State(*(np.asarray(s) + rng.normal(0.0, noise.std)).tolist())
        if not _finite(s):
            msg = f"non-finite state after step {t}: {tuple(s)}"
            raise EpisodeAborted(msg, _abort(log, s, costs, scen, msg))
    else:
        if in_goal(s, scen):
            log.reached_goal = True
            log.reach_time = scen.max_steps * scen.dt
    log.final_state = s
    log.total_cost = math.fsum(costs)
    if not log.reached_goal:
        log.total_cost += scen.non_reaching_penalty
    return log
