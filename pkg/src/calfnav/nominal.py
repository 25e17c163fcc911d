"""Polar-coordinate exponential stabilizer used as the baseline policy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .scenario import Action, State


class PolarState(NamedTuple):
    rho: float
    alpha: float
    beta: float


@dataclass(frozen=True)
class NominalGains:
    k_rho: float = 0.2
    k_alpha: float = 1.5
    k_beta: float = -0.15

    def __post_init__(self):
        if not (self.k_rho > 0 and self.k_beta < 0 and self.k_alpha - self.k_rho > 0):
            raise ValueError(
                f"gains must satisfy k_rho > 0, k_beta < 0, k_alpha > k_rho; got {self}"
            )


def wrap_angle(angle: float) -> float:
    """Reduce to (-pi, pi]."""
    wrapped = math.fmod(angle + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


def to_polar(s: State) -> PolarState:
    x, y, theta = s
    rho = math.hypot(x, y)
    bearing = math.atan2(y, x) if rho > 0.0 else 0.0
    alpha = wrap_angle(-theta + bearing)
    return PolarState(rho, alpha, -theta - alpha)


def nominal_action(s: State, gains: NominalGains, top_sign_only: bool = False) -> Action:
    """Stabilizer output before saturation.

    ``alpha`` is measured from the heading to the outward radial direction,
    so ``rho`` shrinks under negative ``v`` while alpha is in (-pi/2, pi/2]:
    there the robot backs toward the origin. Otherwise the origin is ahead,
    ``v`` is positive and alpha is reflected by pi toward zero. Reflecting
    the heading by the same pi leaves beta as it is. ``top_sign_only``
    disables that second branch.
    """
    rho, alpha, beta = to_polar(s)
    if top_sign_only or -math.pi / 2 < alpha <= math.pi / 2:
        return Action(-gains.k_rho * rho, gains.k_alpha * alpha + gains.k_beta * beta)
    alpha_ahead = alpha - math.copysign(math.pi, alpha)
    return Action(gains.k_rho * rho, gains.k_alpha * alpha_ahead + gains.k_beta * beta)


class NominalPolicy:
    """Callable ``(t, state) -> Action`` wrapper around :func:`nominal_action`."""

    def __init__(self, gains: NominalGains | None = None, top_sign_only: bool = False):
        self.gains = gains or NominalGains()
        self.top_sign_only = top_sign_only

    def __call__(self, t: int, s: State) -> Action:
        return nominal_action(s, self.gains, self.top_sign_only)
