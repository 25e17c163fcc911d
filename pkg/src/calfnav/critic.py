"""Affine-in-weights critics and the constrained critic update.

The critic is ``Q(s, a) = w . phi(s, a)``. Every constraint of the update is
therefore linear in ``w``: the decrease condition and the kappa sandwich both
bound the single scalar ``phi(s_t, a_t) . w``, and the weight box is a box.
The update is a linearly constrained least-squares problem.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Literal, NamedTuple

import numpy as np

from .scenario import Action, State

FeatureSet = Literal["state-linear", "state-quadratic", "state-action-quadratic"]

FEASIBILITY_TOL = 1e-9

_N_FEATURES = {"state-linear": 3, "state-quadratic": 3, "state-action-quadratic": 6}
_STATE_ONLY = {"state-linear", "state-quadratic"}


class InsufficientReplay(ValueError):
    pass


@dataclass(frozen=True)
class CriticSpec:
    features: FeatureSet = "state-linear"
    c_low: float = 0.1
    c_up: float = 1e3
    nu_bar: float = 1e-6
    nu_bar_max: float = 0.1
    weight_bounds: tuple[float, float] = (-1e4, 1e4)
    replay_len: int = 4
    reg: float = 1.0
    gamma: float = 0.9
    undiscounted_td: bool = False
    nu_ramp: bool = False

    def __post_init__(self):
        if self.features not in _N_FEATURES:
            raise ValueError(f"unknown feature set {self.features!r}")
        if not 0 < self.c_low < self.c_up:
            raise ValueError("need 0 < c_low < c_up")
        if self.nu_bar <= 0:
            raise ValueError("nu_bar must be positive")
        if self.nu_bar_max < self.nu_bar:
            raise ValueError("nu_bar_max must be >= nu_bar")
        lo, hi = self.weight_bounds
        if not lo < hi:
            raise ValueError("empty weight box")
        if self.replay_len < 0 or self.reg < 0:
            raise ValueError("replay_len and reg must be non-negative")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")

    @property
    def n_features(self) -> int:
        return _N_FEATURES[self.features]

    @property
    def state_only(self) -> bool:
        return self.features in _STATE_ONLY

    @property
    def discount(self) -> float:
        return 1.0 if self.undiscounted_td else self.gamma

    def nu_at(self, fraction: float) -> float:
        """Required decrease, optionally ramped linearly to ``nu_bar_max`` over an episode."""
        if not self.nu_ramp:
            return self.nu_bar
        fraction = min(max(fraction, 0.0), 1.0)
        return self.nu_bar + fraction * (self.nu_bar_max - self.nu_bar)

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_features
        return np.full(n, float(self.weight_bounds[0])), np.full(n, float(self.weight_bounds[1]))


def features(s, a, spec: CriticSpec) -> np.ndarray:
    """Feature vector; ``s`` of shape (..., 3) and ``a`` of shape (..., 2) are broadcast."""
    s = np.asarray(s, dtype=float)
    x, y, th = s[..., 0], s[..., 1], s[..., 2]
    if spec.features == "state-linear":
        return np.stack([x, y, th], axis=-1)
    if spec.features == "state-quadratic":
        return np.stack([x * x, y * y, th * th], axis=-1)
    a = np.asarray(a, dtype=float)
    v, om = a[..., 0], a[..., 1]
    x, y, th, v, om = np.broadcast_arrays(x, y, th, v, om)
    return np.stack([x * x, y * y, th * th, v * v, om * om, x * v], axis=-1)


def q_value(w, s: State, a: Action | None, spec: CriticSpec) -> float:
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.n_features,):
        raise ValueError(f"expected {spec.n_features} weights, got shape {w.shape}")
    return float(features(s, (0.0, 0.0) if a is None else a, spec) @ w)


def kappa_bounds(s: State, spec: CriticSpec) -> tuple[float, float]:
    sq = s[0] * s[0] + s[1] * s[1] + s[2] * s[2]
    return spec.c_low * sq, spec.c_up * sq


class Transition(NamedTuple):
    state: State
    action: Action
    cost: float


class ReplayBuffer:
    """Most recent ``replay_len + 2`` (state, action, cost) triples, oldest first."""

    def __init__(self, replay_len: int):
        self.replay_len = replay_len
        self._items: deque[Transition] = deque(maxlen=replay_len + 2)

    def push(self, s: State, a: Action, cost: float) -> None:
        self._items.append(Transition(State(*s), Action(*a), float(cost)))

    def replace_last_action(self, a: Action) -> None:
        last = self._items[-1]
        self._items[-1] = last._replace(action=Action(*a))

    def clear(self) -> None:
        self._items.clear()

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i) -> Transition:
        return self._items[i]


def _td_system(w_dagger: np.ndarray, buf: ReplayBuffer | Iterable[Transition], spec: CriticSpec):
    """Design matrix and targets of the TD(1) residuals ``phi_k . w - target_k``."""
    items = list(buf)
    if len(items) < 2:
        raise InsufficientReplay(f"insufficient replay: need >= 2 transitions, have {len(items)}")
    last = min(spec.replay_len, len(items) - 2)
    items = items[-(last + 2):]
    s = np.array([it.state for it in items])
    a = np.array([it.action for it in items])
    c = np.array([it.cost for it in items])
    phi = features(s, a, spec)
    targets = c[:-1] + spec.discount * (phi[1:] @ w_dagger)
    return phi[:-1], targets


def td1_loss(w, w_dagger, buf, spec: CriticSpec) -> float:
    w = np.asarray(w, dtype=float)
    w_dagger = np.asarray(w_dagger, dtype=float)
    A, b = _td_system(w_dagger, buf, spec)
    r = A @ w - b
    d = w - w_dagger
    return float(r @ r + spec.reg * (d @ d))


# -- projection onto {w in box : lo <= phi . w <= hi} ---------------------------


def _project_hyperplane_box(z, phi, c, lower, upper):
    """Euclidean projection of ``z`` onto ``{w in [lower, upper] : phi . w = c}``.

    The minimizer has the form ``clip(z - mu * phi)``; ``phi . clip(z - mu * phi)``
    is piecewise linear and non-increasing in ``mu``, so ``mu`` is located on
    the sorted breakpoints and interpolated exactly. Returns None if ``c`` is
    out of reach.
    """
    nz = phi != 0.0
    if not nz.any():
        w = np.clip(z, lower, upper)
        return w if abs(c) <= FEASIBILITY_TOL else None
    bps = np.concatenate([(z[nz] - lower[nz]) / phi[nz], (z[nz] - upper[nz]) / phi[nz]])
    bps = np.unique(bps)

    def g(mu):
        return float(phi @ np.clip(z - mu * phi, lower, upper))

    vals = np.array([g(mu) for mu in bps])
    # vals is non-increasing along bps
    if c > vals[0] + FEASIBILITY_TOL or c < vals[-1] - FEASIBILITY_TOL:
        return None
    if c >= vals[0]:
        mu = bps[0]
    elif c <= vals[-1]:
        mu = bps[-1]
    else:
        k = int(np.searchsorted(-vals, -c, side="left"))
        k = min(max(k, 1), len(bps) - 1)
        g0, g1 = vals[k - 1], vals[k]
        mu = bps[k - 1] if g0 == g1 else bps[k - 1] + (g0 - c) * (bps[k] - bps[k - 1]) / (g0 - g1)
    w = np.clip(z - mu * phi, lower, upper)
    # repair the last ulp-level drift along a free coordinate
    free = nz & (w > lower) & (w < upper)
    if free.any():
        i = int(np.argmax(np.abs(phi) * free))
        w[i] = min(max(w[i] + (c - float(phi @ w)) / phi[i], lower[i]), upper[i])
    return w


def project_feasible(z, phi, lo, hi, lower, upper):
    """Projection onto the slab-box intersection, or None when it is empty."""
    z = np.asarray(z, dtype=float)
    if lo > hi:
        return None
    w = np.clip(z, lower, upper)
    u = float(phi @ w)
    if lo <= u <= hi:
        return w
    return _project_hyperplane_box(z, phi, lo if u < lo else hi, lower, upper)


# -- the constrained update -----------------------------------------------------


class UpdateResult(NamedTuple):
    weights: np.ndarray | None
    loss: float

    @property
    def feasible(self) -> bool:
        return self.weights is not None


INFEASIBLE = UpdateResult(None, math.inf)


def _constraints_hold(w, phi, lo, hi, lower, upper) -> bool:
    u = float(phi @ w)
    return (
        lo - FEASIBILITY_TOL <= u <= hi + FEASIBILITY_TOL
        and bool(np.all(w >= lower - FEASIBILITY_TOL))
        and bool(np.all(w <= upper + FEASIBILITY_TOL))
    )


def _kkt_candidate(A, b, w_dagger, reg, phi, lo, hi):
    """Exact minimizer with the weight box ignored (needs a nonsingular Hessian)."""
    H = A.T @ A + reg * np.eye(len(w_dagger))
    rhs = A.T @ b + reg * w_dagger
    try:
        Hinv_phi, w_u = np.linalg.solve(H, np.column_stack([phi, rhs])).T
    except np.linalg.LinAlgError:
        return None
    u = float(phi @ w_u)
    if lo <= u <= hi:
        return w_u
    denom = float(phi @ Hinv_phi)
    if denom <= 0:
        return None
    c = lo if u < lo else hi
    return w_u - (u - c) / denom * Hinv_phi


def _active_set(H, c, G, h, w, max_iter=100, tol=1e-12):
    """Primal active-set method for ``min 0.5 w.H.w - c.w`` subject to ``G w >= h``.

    Starts from a feasible ``w``. Returns None when a KKT system is singular
    or the iteration budget runs out.
    """
    work: list[int] = []
    for i in np.flatnonzero(np.abs(G @ w - h) <= tol * (1.0 + np.abs(h))):
        if np.linalg.matrix_rank(G[work + [i]]) == len(work) + 1:
            work.append(int(i))
    n = len(w)
    for _ in range(max_iter):
        g = H @ w - c
        m = len(work)
        K = np.zeros((n + m, n + m))
        K[:n, :n] = H
        K[:n, n:] = -G[work].T
        K[n:, :n] = G[work]
        try:
            sol = np.linalg.solve(K, np.concatenate([-g, np.zeros(m)]))
        except np.linalg.LinAlgError:
            return None
        p, lam = sol[:n], sol[n:]
        if np.linalg.norm(p) <= tol * (1.0 + np.linalg.norm(w)):
            if m == 0 or lam.min() >= -tol * (1.0 + np.abs(lam).max()):
                return w
            work.pop(int(np.argmin(lam)))
            continue
        alpha, block = 1.0, None
        Gp = G @ p
        for i in np.flatnonzero(Gp < 0):
            if i in work:
                continue
            a_i = max((h[i] - G[i] @ w) / Gp[i], 0.0)
            if a_i < alpha:
                alpha, block = a_i, int(i)
        w = w + alpha * p
        if block is not None:
            work.append(block)
    return None


def _pgd(w0, A, b, w_dagger, reg, project, iterations, tol=1e-12):
    """Projected gradient descent with backtracking on 0.5 * loss."""

    def f(w):
        r = A @ w - b
        d = w - w_dagger
        return 0.5 * float(r @ r + reg * (d @ d))

    w = w0
    fw = f(w)
    step = 1.0
    for _ in range(iterations):
        grad = A.T @ (A @ w - b) + reg * (w - w_dagger)
        while True:
            cand = project(w - step * grad)
            diff = cand - w
            fc = f(cand)
            if fc <= fw + float(grad @ diff) + float(diff @ diff) / (2 * step) + 1e-15 * abs(fw):
                break
            step *= 0.5
            if step < 1e-20:
                return w, fw
        moved = float(np.sqrt(diff @ diff))
        w, fw = cand, fc
        step *= 2.0
        if moved <= tol * (1.0 + float(np.sqrt(w @ w))):
            break
    return w, fw


def constrained_update(
    w_dagger,
    q_dagger: float,
    s_t: State,
    a_t: Action,
    buf,
    spec: CriticSpec,
    rng: np.random.Generator | None = None,
    nu: float | None = None,
    method: Literal["auto", "pgd"] = "auto",
    iterations: int = 200,
    restarts: int = 4,
) -> UpdateResult:
    """Minimize the TD(1) loss subject to the decrease and sandwich constraints at ``(s_t, a_t)``.

    Returns :data:`INFEASIBLE` when the constraint set is empty. With
    ``method="auto"`` the closed-form KKT point is tried first and returned
    when it lies inside the weight box, since the problem is convex; next an
    active-set solve handles an active weight box exactly. If both fail (a
    singular Hessian), or with ``method="pgd"``, projected gradient descent
    runs from ``w_dagger`` and ``restarts`` random perturbations of it, and
    the lowest-loss end point wins.
    """
    w_dagger = np.asarray(w_dagger, dtype=float)
    nu = spec.nu_bar if nu is None else nu
    phi = features(s_t, a_t, spec)
    k_low, k_up = kappa_bounds(s_t, spec)
    lo, hi = k_low, min(q_dagger - nu, k_up)
    lower, upper = spec.box()
    if lo > hi + FEASIBILITY_TOL:
        return INFEASIBLE
    hi = max(hi, lo)

    A, b = _td_system(w_dagger, buf, spec)

    def loss(w):
        r = A @ w - b
        d = w - w_dagger
        return float(r @ r + spec.reg * (d @ d))

    if method == "auto":
        w = _kkt_candidate(A, b, w_dagger, spec.reg, phi, lo, hi)
        if w is not None and _constraints_hold(w, phi, lo, hi, lower, upper):
            return UpdateResult(w, loss(w))

    def project(z):
        return project_feasible(z, phi, lo, hi, lower, upper)

    start = project(w_dagger)
    if start is None:
        return INFEASIBLE
    if method == "auto":
        n = len(w_dagger)
        G = np.vstack([np.eye(n), -np.eye(n), phi, -phi])
        h = np.concatenate([lower, -upper, [lo, -hi]])
        H = A.T @ A + spec.reg * np.eye(n)
        w = _active_set(H, A.T @ b + spec.reg * w_dagger, G, h, start)
        if w is not None and _constraints_hold(w, phi, lo, hi, lower, upper):
            return UpdateResult(w, loss(w))
    starts = [start]
    if restarts:
        rng = rng if rng is not None else np.random.default_rng(0)
        scale = 0.1 * (1.0 + np.abs(w_dagger))
        for _ in range(restarts):
            p = project(w_dagger + scale * rng.standard_normal(w_dagger.shape))
            if p is not None:
                starts.append(p)
    best, best_loss = None, math.inf
    for w0 in starts:
        w, _ = _pgd(w0, A, b, w_dagger, spec.reg, project, iterations)
        if not _constraints_hold(w, phi, lo, hi, lower, upper):
            continue
        val = loss(w)
        if val < best_loss:
            best, best_loss = w, val
    if best is None:
        return INFEASIBLE
    return UpdateResult(best, best_loss)


def initial_weights(s0: State, a0: Action, spec: CriticSpec, w_start=None, target: float | None = None):
    """Closest weights to ``w_start`` whose critic value at ``(s0, a0)`` equals ``target``.

    ``target`` defaults to the geometric midpoint of the kappa sandwich.
    """
    n = spec.n_features
    w_start = np.zeros(n) if w_start is None else np.asarray(w_start, dtype=float)
    k_low, k_up = kappa_bounds(s0, spec)
    if target is None:
        target = math.sqrt(k_low * k_up)
    lower, upper = spec.box()
    phi = features(s0, a0, spec)
    w = _project_hyperplane_box(w_start, phi, target, lower, upper)
    if w is None:
        raise ValueError(f"no weights in the box reach critic value {target} at {tuple(s0)}")
    return w
