"""Receding-horizon baseline on the Euler-discretized kinematics.

The MPC is a privileged baseline: its model includes the true cost with the
hot spot and the zone speed limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .env import saturate, step
from .nominal import NominalGains, nominal_action
from .scenario import Action, Scenario, State, stage_cost

Optimizer = Literal["auto", "multistart-projected-gradient", "grid-first-stage"]


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 10
    substeps: int = 4
    optimizer: Optimizer = "auto"
    iterations: int = 100
    restarts: int = 5
    fd_step: float = 1e-4
    grid_shape: tuple[int, int] = (15, 15)

    def __post_init__(self):
        if self.horizon < 1 or self.substeps < 1:
            raise ValueError("horizon and substeps must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    @property
    def resolved_optimizer(self) -> str:
        if self.optimizer != "auto":
            return self.optimizer
        return "grid-first-stage" if self.horizon <= 2 else "multistart-projected-gradient"


def predict(s: State, plan: Sequence[Action], cfg: MpcConfig, scen: Scenario) -> list[State]:
    """State after each stage; every stage holds its action for ``substeps`` Euler steps."""
    states = []
    for a in plan:
        for _ in range(cfg.substeps):
            s = step(s, saturate(Action(*a), scen, s), scen.dt, "euler")
        states.append(s)
    return states


def mpc_objective(s: State, plan: Sequence[Action], cfg: MpcConfig, scen: Scenario) -> float:
    """Undiscounted sum of stage costs at the predicted stage states."""
    return math.fsum(stage_cost(sk, a, scen) for sk, a in zip(predict(s, plan, cfg, scen), plan))


# -- batched rollouts for the optimizer ------------------------------------------


def _batched_objective(s: State, plans: np.ndarray, cfg: MpcConfig, scen: Scenario) -> np.ndarray:
    """Objective of many plans at once; ``plans`` has shape (B, N, 2)."""
    B = plans.shape[0]
    x = np.full(B, s[0])
    y = np.full(B, s[1])
    th = np.full(B, s[2])
    spot = scen.hot_spot
    cx, cy, ct = scen.cost_coeffs
    r2 = spot.zone_radius ** 2
    cap = spot.zone_speed_cap
    norm = spot.weight / (2.0 * math.pi * spot.sigma_x * spot.sigma_y)
    total = np.zeros(B)
    v_all = np.clip(plans[:, :, 0], -scen.v_max, scen.v_max)
    om_all = np.clip(plans[:, :, 1], -scen.omega_max, scen.omega_max)
    dt = scen.dt
    for k in range(plans.shape[1]):
        v0, om = v_all[:, k], om_all[:, k]
        for _ in range(cfg.substeps):
            zone = (x - spot.mu_x) ** 2 + (y - spot.mu_y) ** 2 <= r2
            v = np.where(zone, np.clip(v0, -cap, cap), v0)
            x, y, th = x + dt * v * np.cos(th), y + dt * v * np.sin(th), th + dt * om
        dx = (x - spot.mu_x) / spot.sigma_x
        dy = (y - spot.mu_y) / spot.sigma_y
        total += cx * x * x + cy * y * y + ct * th * th + norm * np.exp(-0.5 * (dx * dx + dy * dy))
    return total


def _nominal_plan(s: State, cfg: MpcConfig, scen: Scenario, gains: NominalGains) -> list[Action]:
    plan = []
    for _ in range(cfg.horizon):
        a = saturate(nominal_action(s, gains), scen, s)
        plan.append(Action(*a))
        s = predict(s, [a], cfg, scen)[0]
    return plan


def seeded_candidates(s: State, cfg: MpcConfig, scen: Scenario, warm_start=None, gains=None) -> list[list[Action]]:
    """Zero plan, nominal closed-loop plan and the shifted previous plan (when given)."""
    gains = gains or NominalGains()
    cands = [[Action(0.0, 0.0)] * cfg.horizon, _nominal_plan(s, cfg, scen, gains)]
    if warm_start is not None and len(warm_start):
        shifted = [Action(*a) for a in warm_start[1:]] + [Action(*warm_start[-1])]
        shifted = (shifted + [shifted[-1]] * cfg.horizon)[: cfg.horizon]
        cands.append(shifted)
    return cands


def _box(scen: Scenario, cfg: MpcConfig) -> tuple[np.ndarray, np.ndarray]:
    hi = np.tile([scen.v_max, scen.omega_max], (cfg.horizon, 1))
    return -hi, hi


def first_stage_grid(scen: Scenario, cfg: MpcConfig) -> np.ndarray:
    """Row-major (v outer, omega inner) grid over the actuator box."""
    vs = np.linspace(-scen.v_max, scen.v_max, cfg.grid_shape[0])
    oms = np.linspace(-scen.omega_max, scen.omega_max, cfg.grid_shape[1])
    return np.array([(v, o) for v in vs for o in oms])


def _grid_plans(scen: Scenario, cfg: MpcConfig, tails: list[list[Action]]) -> list[list[Action]]:
    """Every grid action as first stage, followed by each tail in turn."""
    first = first_stage_grid(scen, cfg)
    return [[Action(float(v), float(o))] + tail[1:] for tail in tails for v, o in first]


_LADDER = 0.5 ** np.arange(12)


def _projected_gradient(s, cfg, scen, starts: np.ndarray) -> np.ndarray:
    """Normalized projected gradient descent with central-difference gradients.

    All starts advance together. The step along the normalized descent
    direction is picked from a halving ladder of fractions of the action box;
    a start stops moving once no ladder step improves it.
    """
    lo, hi = _box(scen, cfg)
    half = hi
    R, N, _ = starts.shape
    n = 2 * N
    X = np.clip(starts, lo, hi)
    f = _batched_objective(s, X, cfg, scen)
    h = cfg.fd_step
    eye = np.eye(n).reshape(n, N, 2) * h
    active = np.ones(R, dtype=bool)
    for _ in range(cfg.iterations):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        Xa = X[idx]
        pert = np.concatenate([Xa[:, None] + eye[None], Xa[:, None] - eye[None]], axis=1)
        fp = _batched_objective(s, pert.reshape(-1, N, 2), cfg, scen).reshape(len(idx), 2 * n)
        grad = ((fp[:, :n] - fp[:, n:]) / (2 * h)).reshape(len(idx), N, 2)
        scale = np.abs(grad / half).max(axis=(1, 2))
        scale[scale == 0] = 1.0
        direction = -grad / half / scale[:, None, None] * half
        trial = np.clip(Xa[:, None] + _LADDER[None, :, None, None] * direction[:, None], lo, hi)
        ft = _batched_objective(s, trial.reshape(-1, N, 2), cfg, scen).reshape(len(idx), len(_LADDER))
        best = ft.argmin(axis=1)
        fbest = ft[np.arange(len(idx)), best]
        improved = fbest < f[idx]
        X[idx[improved]] = trial[np.flatnonzero(improved), best[improved]]
        f[idx[improved]] = fbest[improved]
        active[idx[~improved]] = False
    return X


def optimize_plan(
    s: State,
    cfg: MpcConfig,
    scen: Scenario,
    rng: np.random.Generator,
    warm_start=None,
    gains: NominalGains | None = None,
) -> tuple[list[Action], float]:
    """Best plan found and its objective.

    The final pick is made with :func:`mpc_objective` over a list of
    candidates that always ends with the seeded ones, so the result never
    scores worse than any seeded candidate. Ties go to the earliest
    candidate. With the grid optimizer the list is fully enumerated: every
    grid action as first stage (row-major) combined with the zero tail and,
    when there is one, the shifted warm-start tail.
    """
    seeded = seeded_candidates(s, cfg, scen, warm_start, gains)
    if cfg.resolved_optimizer == "grid-first-stage":
        tails = [seeded[0]] + seeded[2:]
        candidates = _grid_plans(scen, cfg, tails)
    else:
        lo, hi = _box(scen, cfg)
        starts = [np.clip(np.asarray(p, dtype=float).reshape(cfg.horizon, 2), lo, hi) for p in seeded]
        while len(starts) < cfg.restarts:
            starts.append(rng.uniform(lo, hi))
        found = _projected_gradient(s, cfg, scen, np.array(starts))
        candidates = [[Action(float(v), float(o)) for v, o in p] for p in found]
    candidates += seeded
    best, best_val = None, math.inf
    for plan in candidates:
        val = mpc_objective(s, plan, cfg, scen)
        if val < best_val:
            best, best_val = plan, val
    return best, best_val


def mpc_action(
    s: State,
    cfg: MpcConfig,
    scen: Scenario,
    seed: int = 0,
    warm_start=None,
    gains: NominalGains | None = None,
) -> Action:
    plan, _ = optimize_plan(s, cfg, scen, np.random.default_rng(seed), warm_start, gains)
    return plan[0]


class MpcPolicy:
    """Receding-horizon policy callable ``(t, state) -> Action`` with a warm-started plan."""

    def __init__(self, cfg: MpcConfig, scen: Scenario, rng: np.random.Generator | None = None,
                 gains: NominalGains | None = None):
        self.cfg = cfg
        self.scen = scen
        self.rng = rng or np.random.default_rng(0)
        self.gains = gains
        self.plan: list[Action] | None = None
        self.objective_log: list[float] = []

    def reset(self) -> None:
        self.plan = None
        self.objective_log = []

    def __call__(self, t: int, s: State) -> Action:
        if t == 0:
            self.reset()
        self.plan, val = optimize_plan(s, self.cfg, self.scen, self.rng, self.plan, self.gains)
        self.objective_log.append(val)
        return self.plan[0]
