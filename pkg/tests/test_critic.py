import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from calfnav.critic import (
    FEASIBILITY_TOL,
    CriticSpec,
    InsufficientReplay,
    ReplayBuffer,
    constrained_update,
    features,
    initial_weights,
    kappa_bounds,
    project_feasible,
    q_value,
    td1_loss,
)
from calfnav.scenario import Action, State, preset_a, stage_cost

LINEAR = CriticSpec("state-linear")
QUAD = CriticSpec("state-quadratic")
SAQ = CriticSpec("state-action-quadratic")
SPECS = [LINEAR, QUAD, SAQ]


def test_q_value_examples():
    s = State(-1, -1, math.pi / 2)
    assert q_value([1, 2, 3], s, None, LINEAR) == pytest.approx(1.7123890, abs=1e-7)
    for spec in SPECS:
        assert q_value(np.zeros(spec.n_features), s, Action(0.1, 0.2), spec) == 0


def test_quadratic_features_match_cost():
    scen = preset_a()
    s = State(0.3, -0.7, 1.2)
    far = scen.with_overrides(hot_spot=type(scen.hot_spot)(1e3, 1e3))
    assert q_value([1, 1, 0.1], s, None, QUAD) == pytest.approx(stage_cost(s, None, far), rel=1e-15)


def test_q_value_dimension_check():
    with pytest.raises(ValueError):
        q_value([1, 2], State(0, 0, 0), None, LINEAR)


def test_state_action_features():
    phi = features(State(2, 3, 4), Action(5, 6), SAQ)
    assert phi.tolist() == [4, 9, 16, 25, 36, 10]


@given(st.lists(st.floats(-10, 10), min_size=6, max_size=6), st.lists(st.floats(-10, 10), min_size=6, max_size=6),
       st.floats(-3, 3), st.floats(-3, 3))
def test_q_value_linear_in_weights(w1, w2, alpha, beta):
    s, a = State(0.3, -1.1, 2.0), Action(0.1, -1.0)
    for spec in SPECS:
        n = spec.n_features
        u, v = np.array(w1[:n]), np.array(w2[:n])
        lhs = q_value(alpha * u + beta * v, s, a, spec)
        rhs = alpha * q_value(u, s, a, spec) + beta * q_value(v, s, a, spec)
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_kappa_bounds():
    lo, up = kappa_bounds(State(-1, -1, math.pi / 2), LINEAR)
    assert lo == pytest.approx(0.4467401, abs=1e-7)
    assert up == pytest.approx(4467.4011, abs=1e-4)
    assert kappa_bounds(State(0, 0, 0), LINEAR) == (0, 0)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_kappa_ordering(x, y, th):
    lo, up = kappa_bounds(State(x, y, th), LINEAR)
    assert 0 <= lo <= up


@pytest.mark.parametrize("kwargs", [
    {"c_low": 0}, {"c_low": 2, "c_up": 1}, {"nu_bar": 0}, {"nu_bar_max": 1e-9},
    {"weight_bounds": (1, -1)}, {"replay_len": -1}, {"gamma": 0}, {"features": "cubic"},
])
def test_invalid_spec(kwargs):
    with pytest.raises(ValueError):
        CriticSpec(**kwargs)


def test_nu_ramp():
    assert LINEAR.nu_at(0.7) == LINEAR.nu_bar
    ramp = CriticSpec(nu_ramp=True, nu_bar=1e-6, nu_bar_max=0.1)
    assert ramp.nu_at(0) == 1e-6 and ramp.nu_at(1) == pytest.approx(0.1) and ramp.nu_at(2) == pytest.approx(0.1)


def _buffer(spec, transitions):
    buf = ReplayBuffer(spec.replay_len)
    for s, a, c in transitions:
        buf.push(s, a, c)
    return buf


def test_replay_buffer_window():
    buf = ReplayBuffer(2)
    for k in range(6):
        buf.push(State(k, 0, 0), Action(0, 0), k)
    assert len(buf) == 4 and [t.cost for t in buf] == [2, 3, 4, 5]
    buf.replace_last_action(Action(0.1, 0.2))
    assert buf[-1].action == (0.1, 0.2)


def test_td1_loss_bellman_consistent_buffer_is_zero():
    spec = CriticSpec("state-linear", reg=1.0)
    w = np.array([0.5, -1.0, 2.0])
    states = [State(k * 0.1, 1 - k * 0.2, 0.3 * k) for k in range(6)]
    # choose costs so every residual vanishes: c_k = Q(s_k) - gamma * Q(s_{k+1})
    q = [float(features(s, None, spec) @ w) for s in states]
    trans = [(states[k], Action(0, 0), q[k] - spec.gamma * q[k + 1] if k + 1 < len(q) else 0.0)
             for k in range(len(states))]
    assert td1_loss(w, w, _buffer(spec, trans), spec) == pytest.approx(0, abs=1e-24)


def test_td1_loss_single_residual():
    spec = CriticSpec("state-linear", reg=0.0, replay_len=0)
    w = np.array([1.0, 0.0, 0.0])
    buf = _buffer(spec, [(State(1, 0, 0), Action(0, 0), 0.25), (State(2, 0, 0), Action(0, 0), 0.0)])
    r = 1.0 - 0.25 - spec.gamma * 2.0
    assert td1_loss(w, w, buf, spec) == pytest.approx(r * r, rel=1e-15)
    undiscounted = CriticSpec("state-linear", reg=0.0, replay_len=0, undiscounted_td=True)
    assert td1_loss(w, w, buf, undiscounted) == pytest.approx((1.0 - 0.25 - 2.0) ** 2, rel=1e-15)


def test_td1_loss_regularizer_only():
    spec = CriticSpec("state-linear", reg=0.3)
    buf = _buffer(spec, [(State(1, 1, 1), Action(0, 0), 0.0)] * 3)
    w, wd = np.array([1.0, 2.0, -1.0]), np.zeros(3)
    # residuals use w, targets use the zero incumbent
    expect = sum((features(State(1, 1, 1), None, spec) @ w) ** 2 for _ in range(2)) + 0.3 * 6.0
    assert td1_loss(w, wd, buf, spec) == pytest.approx(expect)
    zero_phi = _buffer(spec, [(State(0, 0, 0), Action(0, 0), 0.0)] * 3)
    assert td1_loss(w, wd, zero_phi, spec) == pytest.approx(0.3 * float(w @ w))


def test_td1_loss_needs_two_transitions():
    with pytest.raises(InsufficientReplay, match="insufficient replay"):
        td1_loss(np.zeros(3), np.zeros(3), _buffer(LINEAR, [(State(1, 0, 0), Action(0, 0), 1.0)]), LINEAR)


def _random_instance(rng, spec):
    s = State(*rng.uniform(-1.5, 1.5, 3))
    a = Action(rng.uniform(-0.22, 0.22), rng.uniform(-2.84, 2.84))
    buf = ReplayBuffer(spec.replay_len)
    for _ in range(rng.integers(2, spec.replay_len + 3)):
        buf.push(State(*rng.uniform(-1.5, 1.5, 3)), Action(*rng.uniform(-0.2, 0.2, 2)), rng.uniform(0, 5))
    buf.push(s, a, rng.uniform(0, 5))
    w_dagger = rng.normal(0, 3, spec.n_features)
    return s, a, buf, w_dagger


def interval_oracle(s, a, q_dagger, spec):
    """Nonempty iff the achievable range of phi . w over the box meets [lo, hi]."""
    phi = features(s, a, spec)
    k_low, k_up = kappa_bounds(s, spec)
    lo, hi = k_low, min(q_dagger - spec.nu_bar, k_up)
    lb, ub = spec.weight_bounds
    reach_lo = float(np.sum(np.minimum(phi * lb, phi * ub)))
    reach_hi = float(np.sum(np.maximum(phi * lb, phi * ub)))
    return lo <= hi and reach_lo <= hi and reach_hi >= lo


def test_feasibility_matches_interval_oracle():
    rng = np.random.default_rng(11)
    disagreements = 0
    for i in range(1000):
        spec = CriticSpec(
            features=SPECS[i % 3].features,
            nu_bar=float(rng.choice([1e-6, 1e-3, 0.1])),
            weight_bounds=tuple(sorted(rng.choice([-1.0, 1.0]) * rng.uniform(0.05, 50, 2))) if i % 2 else (-1e4, 1e4),
            reg=float(rng.choice([0.0, 1e-3, 1.0])),
        )
        s, a, buf, w_dagger = _random_instance(rng, spec)
        k_low, _ = kappa_bounds(s, spec)
        q_dagger = float(k_low + rng.uniform(-1.0, 3.0) * (1 + k_low))
        res = constrained_update(w_dagger, q_dagger, s, a, buf, spec, rng=rng)
        disagreements += res.feasible != interval_oracle(s, a, q_dagger, spec)
    assert disagreements == 0


def enumerated_optimum(w_dagger, q_dagger, s, a, buf, spec):
    """Exact minimum of the update problem by trying every active set."""
    from calfnav.critic import _td_system

    A, b = _td_system(np.asarray(w_dagger, float), buf, spec)
    n = spec.n_features
    H = A.T @ A + spec.reg * np.eye(n)
    c = A.T @ b + spec.reg * w_dagger
    phi = features(s, a, spec)
    k_low, k_up = kappa_bounds(s, spec)
    lo, hi = k_low, min(q_dagger - spec.nu_bar, k_up)
    lb, ub = spec.weight_bounds
    best = math.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        for slab in (None, lo, hi):
            fixed = [i for i in range(n) if pattern[i]]
            rows, rhs = [], []
            for i in fixed:
                rows.append(np.eye(n)[i])
                rhs.append(lb if pattern[i] == 1 else ub)
            if slab is not None:
                rows.append(phi)
                rhs.append(slab)
            m = len(rows)
            K = np.zeros((n + m, n + m))
            K[:n, :n] = H
            if m:
                K[:n, n:] = np.array(rows).T
                K[n:, :n] = np.array(rows)
            try:
                w = np.linalg.solve(K, np.concatenate([c, rhs]))[:n]
            except np.linalg.LinAlgError:
                continue
            if lo - 1e-9 <= phi @ w <= hi + 1e-9 and np.all(w >= lb - 1e-9) and np.all(w <= ub + 1e-9):
                best = min(best, td1_loss(w, w_dagger, buf, spec))
    return best


def test_updates_satisfy_constraints_and_are_optimal():
    rng = np.random.default_rng(5)
    for i in range(120):
        spec = CriticSpec(features=SPECS[i % 3].features, reg=float(rng.choice([1e-3, 1.0])),
                          weight_bounds=(-1e4, 1e4) if i % 4 else (-2.0, 2.0))
        s, a, buf, w_dagger = _random_instance(rng, spec)
        w_dagger = np.clip(w_dagger, *spec.weight_bounds)
        k_low, k_up = kappa_bounds(s, spec)
        q_dagger = float(k_low + rng.uniform(0.01, 10))
        res = constrained_update(w_dagger, q_dagger, s, a, buf, spec, rng=np.random.default_rng(i))
        if not res.feasible:
            assert not interval_oracle(s, a, q_dagger, spec)
            continue
        q = q_value(res.weights, s, a, spec)
        assert q <= q_dagger - spec.nu_bar + FEASIBILITY_TOL
        assert k_low - FEASIBILITY_TOL <= q <= k_up + FEASIBILITY_TOL
        lb, ub = spec.weight_bounds
        assert np.all(res.weights >= lb - FEASIBILITY_TOL) and np.all(res.weights <= ub + FEASIBILITY_TOL)
        assert res.loss == pytest.approx(td1_loss(res.weights, w_dagger, buf, spec), rel=1e-9)
        assert res.loss <= enumerated_optimum(w_dagger, q_dagger, s, a, buf, spec) * (1 + 1e-8) + 1e-10


def test_pgd_path_is_feasible_and_near_optimal():
    rng = np.random.default_rng(8)
    for i in range(30):
        spec = CriticSpec(features=SPECS[i % 3].features, reg=1.0, weight_bounds=(-2.0, 2.0))
        s, a, buf, w_dagger = _random_instance(rng, spec)
        w_dagger = np.clip(w_dagger, -2, 2)
        k_low, _ = kappa_bounds(s, spec)
        q_dagger = float(k_low + rng.uniform(0.01, 10))
        res = constrained_update(w_dagger, q_dagger, s, a, buf, spec, rng=rng, method="pgd")
        assert res.feasible == interval_oracle(s, a, q_dagger, spec)
        if res.feasible:
            exact = enumerated_optimum(w_dagger, q_dagger, s, a, buf, spec)
            assert res.loss <= exact * (1 + 1e-3) + 1e-6


def test_update_infeasible_when_decrease_hits_floor():
    s = State(-1, -1, math.pi / 2)
    spec = CriticSpec(nu_bar=0.1)
    k_low, _ = kappa_bounds(s, spec)
    buf = _buffer(spec, [(s, Action(0, 0), 1.0), (s, Action(0, 0), 1.0)])
    res = constrained_update(np.zeros(3), k_low + spec.nu_bar / 2, s, Action(0, 0), buf, spec)
    assert not res.feasible


def test_update_feasible_with_wide_interval():
    s = State(-1, -1, math.pi / 2)
    _, k_up = kappa_bounds(s, LINEAR)
    buf = _buffer(LINEAR, [(State(-1.02, -1, 1.5), Action(0, 0), 2.0), (s, Action(0, 0), 2.0)])
    res = constrained_update(np.zeros(3), k_up, s, Action(0, 0), buf, LINEAR)
    assert res.feasible
    assert q_value(res.weights, s, None, LINEAR) <= k_up - LINEAR.nu_bar


def test_projection_onto_slab_and_box():
    rng = np.random.default_rng(3)
    for _ in range(300):
        n = 3
        phi = rng.normal(size=n)
        lower, upper = -rng.uniform(0.5, 2, n), rng.uniform(0.5, 2, n)
        lo = rng.uniform(-1, 1)
        hi = lo + rng.uniform(0, 0.5)
        z = rng.normal(0, 3, n)
        w = project_feasible(z, phi, lo, hi, lower, upper)
        if w is None:
            continue
        u = phi @ w
        assert lo - 1e-9 <= u <= hi + 1e-9
        assert np.all(w >= lower) and np.all(w <= upper)
        # no feasible random point is closer to z
        for _ in range(50):
            p = np.clip(w + rng.normal(0, 0.05, n), lower, upper)
            if lo <= phi @ p <= hi:
                assert np.linalg.norm(p - z) >= np.linalg.norm(w - z) - 1e-9


def test_initial_weights_target():
    s0, a0 = State(-1, -1, math.pi / 2), Action(0.1, 0.2)
    for spec in SPECS:
        k_low, k_up = kappa_bounds(s0, spec)
        w = initial_weights(s0, a0, spec)
        assert q_value(w, s0, a0, spec) == pytest.approx(math.sqrt(k_low * k_up), rel=1e-12)
        w = initial_weights(s0, a0, spec, target=2 * k_low)
        assert q_value(w, s0, a0, spec) == pytest.approx(2 * k_low, rel=1e-12)
    with pytest.raises(ValueError):
        initial_weights(s0, a0, CriticSpec(weight_bounds=(-0.01, 0.01)), target=1e3)
