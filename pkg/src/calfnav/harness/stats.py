"""Aggregates over the per-episode table: top-quartile medians, bootstrap CIs, success rates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

N_RESAMPLES = 2000
BOOTSTRAP_SEED = 0


class NoDataError(ValueError):
    """Raised when there is nothing to summarize."""


@dataclass(frozen=True)
class EpisodeRow:
    seed: int
    episode: int
    total_cost: float
    reached_goal: bool
    reach_time_s: float  # nan when the goal was not reached
    successful_updates: int
    recovery_invocations: int


@dataclass(frozen=True)
class SummaryRow:
    episode: int
    median_top25_cost: float
    ci_low: float
    ci_high: float
    success_rate: float


def top_quartile_size(n: int) -> int:
    return max(1, math.ceil(n / 4))


def top25_median(costs: Sequence[float]) -> float:
    """Median of the ceil(n/4) lowest costs."""
    c = np.sort(np.asarray(costs, dtype=float))
    if c.size == 0:
        raise NoDataError("no data")
    return float(np.median(c[: top_quartile_size(c.size)]))


def bootstrap_ci(costs: Sequence[float], rng: np.random.Generator,
                 n_resamples: int = N_RESAMPLES, level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval of :func:`top25_median`."""
    c = np.asarray(costs, dtype=float)
    n = c.size
    if n == 0:
        raise NoDataError("no data")
    samples = np.sort(c[rng.integers(0, n, size=(n_resamples, n))], axis=1)
    stats = np.median(samples[:, : top_quartile_size(n)], axis=1)
    tail = 100.0 * (1.0 - level) / 2.0
    lo, hi = np.percentile(stats, [tail, 100.0 - tail])
    return float(lo), float(hi)


def summarize(rows: Iterable[EpisodeRow], bootstrap_seed: int = BOOTSTRAP_SEED) -> list[SummaryRow]:
    """One row per episode index, in ascending order.

    The result depends only on the rows as a set: they are keyed by
    (seed, episode) before any computation, and each episode index draws its
    bootstrap resamples from its own stream.
    """
    by_episode: dict[int, list[EpisodeRow]] = {}
    for r in sorted(rows, key=lambda r: (r.episode, r.seed)):
        by_episode.setdefault(r.episode, []).append(r)
    if not by_episode:
        raise NoDataError("no data")
    out = []
    for ep, group in sorted(by_episode.items()):
        costs = [r.total_cost for r in group]
        rng = np.random.default_rng(np.random.SeedSequence([bootstrap_seed, ep]))
        lo, hi = bootstrap_ci(costs, rng)
        out.append(SummaryRow(
            episode=ep,
            median_top25_cost=top25_median(costs),
            ci_low=lo,
            ci_high=hi,
            success_rate=sum(r.reached_goal for r in group) / len(group),
        ))
    return out


def success_rate(rows: Iterable[EpisodeRow]) -> float:
    rows = list(rows)
    if not rows:
        raise NoDataError("no data")
    return sum(r.reached_goal for r in rows) / len(rows)


def accumulated_cost_bands(
    step_costs: Sequence[Sequence[float]],
    dt: float,
    rng: np.random.Generator | None = None,
    n_resamples: int = N_RESAMPLES,
) -> np.ndarray:
    """Median and 95% bootstrap band of accumulated cost against time.

    Traces of unequal length are truncated at the shortest one so every time
    point aggregates the same set of episodes. Returns columns
    (t, median, ci_low, ci_high).
    """
    if not step_costs:
        raise NoDataError("no data")
    n_steps = min(len(c) for c in step_costs)
    acc = np.array([np.cumsum(np.asarray(c[:n_steps], dtype=float)) for c in step_costs])
    rng = rng or np.random.default_rng(BOOTSTRAP_SEED)
    k = acc.shape[0]
    boot = np.median(acc[rng.integers(0, k, size=(n_resamples, k))], axis=1)
    lo, hi = np.percentile(boot, [2.5, 97.5], axis=0)
    t = dt * np.arange(1, n_steps + 1)
    return np.column_stack([t, np.median(acc, axis=0), lo, hi])
