"""CALF agent and its SARSA-m ablation.

Both agents act greedily on the incumbent critic and try a constrained
critic update every step. They differ only when that update is infeasible:
CALF hands the step to the baseline policy, SARSA-m fires the greedy action
anyway.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .critic import (
    FEASIBILITY_TOL,
    CriticSpec,
    ReplayBuffer,
    constrained_update,
    features,
    initial_weights,
    kappa_bounds,
    q_value,
)
from .env import fmt
from .scenario import Action, Scenario, State, in_zone, stage_cost

AgentKind = Literal["calf", "sarsa_m"]
Mode = Literal["learned", "recovery"]
Anchor = Literal["midpoint", "lower"]
Baseline = Callable[[int, State], Action]


class CertificateViolation(AssertionError):
    """A runtime check of the update-count bound or the critic certificates failed."""


def t_hat_bound(q_dagger_initial: float, nu_bar: float) -> float:
    """Worst-case number of successful critic updates before the baseline takes over for good."""
    if nu_bar <= 0:
        raise ValueError("nu_bar must be positive")
    return max((q_dagger_initial - nu_bar) / nu_bar, 0.0)


def action_grid(scen: Scenario, n_v: int = 15, n_omega: int = 15) -> np.ndarray:
    """Uniform (n_v * n_omega, 2) grid over the actuator box, row-major in v."""
    vs = np.linspace(-scen.v_max, scen.v_max, n_v)
    oms = np.linspace(-scen.omega_max, scen.omega_max, n_omega)
    vv, oo = np.meshgrid(vs, oms, indexing="ij")
    return np.column_stack([vv.ravel(), oo.ravel()])


def grid_scores(w, s_t: State, grid: np.ndarray, spec: CriticSpec, scen: Scenario) -> np.ndarray:
    """Score of every grid action under the critic ``w``.

    State-only critics cannot rank actions by themselves; an action is then
    scored by the critic at the one-step Euler prediction plus the current
    stage cost.
    """
    w = np.asarray(w, dtype=float)
    if not spec.state_only:
        return features(s_t, grid, spec) @ w
    v = np.clip(grid[:, 0], -scen.v_max, scen.v_max)
    om = np.clip(grid[:, 1], -scen.omega_max, scen.omega_max)
    if in_zone(s_t, scen.hot_spot):
        cap = scen.hot_spot.zone_speed_cap
        v = np.clip(v, -cap, cap)
    x, y, th = s_t
    dt = scen.dt
    nxt = np.column_stack([x + dt * v * math.cos(th), y + dt * v * math.sin(th), th + dt * om])
    return features(nxt, None, spec) @ w + stage_cost(s_t, None, scen)


def select_action(w, s_t: State, spec: CriticSpec, scen: Scenario, grid: np.ndarray) -> Action:
    """Greedy grid action; ties go to the lowest (row-major) grid index."""
    k = int(np.argmin(grid_scores(w, s_t, grid, spec, scen)))
    return Action(float(grid[k, 0]), float(grid[k, 1]))


@dataclass
class CalfState:
    w_dagger: np.ndarray
    s_dagger: State
    a_dagger: Action
    q_dagger: float
    q_initial: float
    nu_bar: float
    successful_updates: int = 0
    recovery_invocations: int = 0
    mode_log: list[Mode] = field(default_factory=list)
    q_trace: list[float] = field(default_factory=list)
    success_q: list[float] = field(default_factory=list)
    success_states: list[State] = field(default_factory=list)

    @property
    def update_bound(self) -> int:
        return math.ceil(t_hat_bound(self.q_initial, self.nu_bar))


class CalfAgent:
    """Policy callable ``(t, state) -> Action`` running CALF or SARSA-m.

    Episode bookkeeping (``s_dagger``, ``a_dagger``, ``q_dagger`` and the
    replay buffer) restarts in :meth:`reset`; the critic weights carry over
    between episodes unless ``carry_weights`` is false.

    ``anchor`` fixes the initial critic value of each episode. With
    ``"midpoint"`` the carried weights are kept if they satisfy the kappa
    sandwich at the new initial pair and are projected onto the geometric
    midpoint otherwise. With ``"lower"`` they are always projected onto
    ``(1 + anchor_margin) * kappa_low(s0) + nu_bar``, just above the lower
    bound, which makes the decrease constraint bite from the first step.
    An explicit ``q_init`` overrides both.
    """

    def __init__(
        self,
        spec: CriticSpec,
        scen: Scenario,
        kind: AgentKind = "calf",
        baseline: Baseline | None = None,
        grid_shape: tuple[int, int] = (15, 15),
        exploration_std: tuple[float, float] | None = None,
        q_init: float | None = None,
        carry_weights: bool = True,
        rng_restarts: np.random.Generator | None = None,
        rng_exploration: np.random.Generator | None = None,
        solver: Literal["auto", "pgd"] = "auto",
        check_certificates: bool = True,
        anchor: Anchor = "midpoint",
        anchor_margin: float = 0.01,
    ):
        if kind not in ("calf", "sarsa_m"):
            raise ValueError(f"unknown agent kind {kind!r}")
        if kind == "calf" and baseline is None:
            raise ValueError("CALF needs a baseline policy")
        if anchor not in ("midpoint", "lower"):
            raise ValueError(f"unknown anchor {anchor!r}")
        self.spec = spec
        self.scen = scen
        self.kind = kind
        self.baseline = baseline
        self.grid = action_grid(scen, *grid_shape)
        self.exploration_std = exploration_std
        self.q_init = q_init
        self.carry_weights = carry_weights
        self.rng_restarts = rng_restarts or np.random.default_rng(0)
        self.rng_exploration = rng_exploration or np.random.default_rng(1)
        self.solver = solver
        self.check_certificates = check_certificates
        self.anchor = anchor
        self.anchor_margin = anchor_margin
        self.buffer = ReplayBuffer(spec.replay_len)
        self.weights: np.ndarray | None = None
        self.state: CalfState | None = None
        self.weight_log: list[tuple[int, np.ndarray, bool]] = []

    # -- episode lifecycle ------------------------------------------------------

    def reset(self, s0: State | None = None) -> None:
        s0 = State(*(s0 if s0 is not None else self.scen.initial_state))
        self.buffer.clear()
        self.weight_log = []
        w_prev = self.weights if self.carry_weights else None
        if self.baseline is not None:
            a0 = Action(*self.baseline(0, s0))
        else:
            w_tmp = w_prev if w_prev is not None else initial_weights(s0, Action(0.0, 0.0), self.spec)
            a0 = select_action(w_tmp, s0, self.spec, self.scen, self.grid)
        a0 = self._clip(a0)
        w0 = self._anchor(s0, a0, w_prev)
        q0 = q_value(w0, s0, a0, self.spec)
        self.weights = w0
        self.state = CalfState(w0, s0, a0, q0, q0, self.spec.nu_bar)
        self._a0 = a0

    def _anchor(self, s0: State, a0: Action, w_prev) -> np.ndarray:
        if self.q_init is not None:
            return initial_weights(s0, a0, self.spec, w_start=w_prev, target=self.q_init)
        if self.anchor == "lower":
            k_low, _ = kappa_bounds(s0, self.spec)
            target = (1.0 + self.anchor_margin) * k_low + self.spec.nu_bar
            return initial_weights(s0, a0, self.spec, w_start=w_prev, target=target)
        if w_prev is not None:
            k_low, k_up = kappa_bounds(s0, self.spec)
            if k_low <= q_value(w_prev, s0, a0, self.spec) <= k_up:
                return np.array(w_prev, dtype=float)
        return initial_weights(s0, a0, self.spec, w_start=w_prev)

    def _clip(self, a: Action) -> Action:
        return Action(
            min(max(a[0], -self.scen.v_max), self.scen.v_max),
            min(max(a[1], -self.scen.omega_max), self.scen.omega_max),
        )

    # -- stepping ---------------------------------------------------------------

    def __call__(self, t: int, s_t: State) -> Action:
        if t == 0 or self.state is None:
            self.reset(s_t)
            return self._first_action(s_t)
        return self.calf_step(t, s_t)

    def _first_action(self, s0: State) -> Action:
        cs = self.state
        cost = stage_cost(s0, self._a0, self.scen)
        self.buffer.push(s0, self._a0, cost)
        # a0 comes from the baseline when there is one
        mode: Mode = "recovery" if self.baseline is not None else "learned"
        if mode == "recovery":
            cs.recovery_invocations += 1
        cs.mode_log.append(mode)
        cs.q_trace.append(cs.q_dagger)
        self.weight_log.append((0, cs.w_dagger.copy(), True))
        if self.baseline is not None:
            return Action(*self.baseline(0, s0))
        return self._a0

    def calf_step(self, t: int, s_t: State) -> Action:
        cs = self.state
        spec = self.spec
        a_star = select_action(cs.w_dagger, s_t, spec, self.scen, self.grid)
        if self.exploration_std is not None:
            a_star = Action(*(np.asarray(a_star) + self.rng_exploration.normal(0.0, self.exploration_std)))
        a_star = self._clip(a_star)
        self.buffer.push(s_t, a_star, stage_cost(s_t, a_star, self.scen))
        nu = spec.nu_at(t / max(self.scen.max_steps - 1, 1))
        result = constrained_update(
            cs.w_dagger, cs.q_dagger, s_t, a_star, self.buffer, spec,
            rng=self.rng_restarts, nu=nu, method=self.solver,
        )
        if result.feasible:
            q_new = q_value(result.weights, s_t, a_star, spec)
            if self.check_certificates:
                self._certify(s_t, q_new, nu)
            cs.w_dagger = result.weights
            cs.s_dagger, cs.a_dagger, cs.q_dagger = s_t, a_star, q_new
            cs.successful_updates += 1
            cs.success_q.append(q_new)
            cs.success_states.append(s_t)
            self.weights = result.weights
            mode: Mode = "learned"
            action = a_star
        elif self.kind == "calf":
            action = Action(*self.baseline(t, s_t))
            self.buffer.replace_last_action(self._clip(action))
            cs.recovery_invocations += 1
            mode = "recovery"
        else:
            mode = "learned"
            action = a_star
        if self.check_certificates and cs.successful_updates > cs.update_bound:
            raise CertificateViolation(
                f"{cs.successful_updates} successful updates exceed the bound {cs.update_bound}"
            )
        cs.mode_log.append(mode)
        cs.q_trace.append(cs.q_dagger)
        self.weight_log.append((t, cs.w_dagger.copy(), result.feasible))
        return action

    def _certify(self, s_t: State, q_new: float, nu: float) -> None:
        cs = self.state
        k_low, k_up = kappa_bounds(s_t, self.spec)
        if q_new - cs.q_dagger > -nu + FEASIBILITY_TOL:
            raise CertificateViolation(f"critic decrease {cs.q_dagger - q_new} below {nu}")
        if not (k_low - FEASIBILITY_TOL <= q_new <= k_up + FEASIBILITY_TOL):
            raise CertificateViolation(f"critic value {q_new} outside [{k_low}, {k_up}]")

    # -- exports ----------------------------------------------------------------

    def trace_columns(self) -> dict[str, list]:
        cs = self.state
        return {"mode": list(cs.mode_log), "q_dagger": [float(q) for q in cs.q_trace]}

    def weights_csv(self, episode: int) -> str:
        """Incumbent weights after every step of the current episode, with the update verdict."""
        n = self.spec.n_features
        lines = [",".join(["episode", "t", *(f"w{i + 1}" for i in range(n)), "feasible"])]
        for t, w, ok in self.weight_log:
            lines.append(",".join([str(episode), str(t), *(fmt(x) for x in w), str(int(ok))]))
        return "\n".join(lines) + "\n"
