"""Multi-seed, multi-episode experiment execution."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..agents import CalfAgent, CertificateViolation
from ..env import EpisodeAborted, EpisodeLog, NoiseConfig, run_episode
from ..mpc import MpcPolicy
from ..nominal import NominalPolicy
from . import io as tables
from .config import RunConfig, stream_rng
from .stats import EpisodeRow, SummaryRow, accumulated_cost_bands, summarize


@dataclass
class SeedResult:
    seed: int
    rows: list[EpisodeRow]
    best_episode: int
    best_trajectory_csv: str
    best_step_costs: list[float] = field(default_factory=list)
    best_weights_csv: str = ""


@dataclass
class RunResult:
    config: RunConfig
    raw: list[EpisodeRow]
    summary: list[SummaryRow]
    seeds: list[SeedResult]

    @property
    def success_rate(self) -> float:
        return sum(r.reached_goal for r in self.raw) / len(self.raw)


def make_policy(cfg: RunConfig, seed: int):
    scen = cfg.build_scenario()
    a = cfg.agent
    if a.kind == "nominal":
        return NominalPolicy(cfg.gains(), a.top_sign_only)
    if a.kind == "mpc":
        return MpcPolicy(cfg.mpc_config(), scen, rng=stream_rng(seed, "restarts"), gains=cfg.gains())
    return CalfAgent(
        cfg.critic_spec(),
        scen,
        kind=a.kind,
        baseline=NominalPolicy(cfg.gains(), a.top_sign_only) if a.kind == "calf" else None,
        grid_shape=a.grid,
        exploration_std=a.exploration_std,
        carry_weights=a.carry_weights,
        rng_restarts=stream_rng(seed, "restarts"),
        rng_exploration=stream_rng(seed, "exploration"),
        anchor=a.anchor,
    )


def _agent_counts(policy) -> tuple[int, int]:
    state = getattr(policy, "state", None)
    if state is None:
        return 0, 0
    return state.successful_updates, state.recovery_invocations


def _agent_traces(policy, n_steps: int, episode: int) -> tuple[dict, str]:
    if not isinstance(policy, CalfAgent) or policy.state is None:
        return {}, ""
    cols = policy.trace_columns()
    return {k: v[:n_steps] for k, v in cols.items()}, policy.weights_csv(episode)


def run_seed(cfg: RunConfig, seed: int) -> SeedResult:
    """All episodes of one seed, in order; the agent carries its learning between them."""
    scen = cfg.build_scenario()
    policy = make_policy(cfg, seed)
    noise = NoiseConfig(tuple(cfg.noise_std))
    noise_rng = stream_rng(seed, "process-noise")
    rows = []
    best: tuple[float, int, EpisodeLog, tuple[dict, str]] | None = None
    for ep in range(cfg.episodes):
        try:
            log = run_episode(policy, scen, seed=seed, noise=noise, rng=noise_rng)
        except EpisodeAborted as exc:
            if isinstance(exc.__cause__, CertificateViolation):
                raise exc.__cause__
            log = exc.log
        updates, recoveries = _agent_counts(policy)
        rows.append(EpisodeRow(
            seed=seed,
            episode=ep,
            total_cost=log.total_cost,
            reached_goal=log.reached_goal,
            reach_time_s=tables.reach_time_or_nan(log.reach_time),
            successful_updates=updates,
            recovery_invocations=recoveries,
        ))
        if best is None or log.total_cost < best[0]:
            best = (log.total_cost, ep, log, _agent_traces(policy, len(log.records), ep))
    _, ep, log, (traces, weights) = best
    return SeedResult(seed, rows, ep, log.to_csv(traces), [r.cost for r in log.records], weights)


def _run_seed_star(args) -> SeedResult:
    return run_seed(*args)


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None, workers: int = 1) -> RunResult:
    """Run every seed, merge by seed and summarize; write the CSV outputs if ``out_dir`` is given.

    Seeds are independent, so with ``workers > 1`` they run in separate
    processes. Results are keyed by seed before merging, which keeps every
    output identical for any worker count.
    """
    seeds = sorted(set(cfg.seeds))
    jobs = [(cfg, s) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_seed_star, jobs))
    else:
        results = [run_seed(*job) for job in jobs]
    results.sort(key=lambda r: r.seed)
    # summarize what the raw CSV holds, so re-summarizing the file reproduces it exactly
    raw_text = tables.raw_csv(row for r in results for row in r.rows)
    raw = tables.parse_raw(raw_text)
    summary = summarize(raw)
    result = RunResult(cfg, raw, summary, results)
    if out_dir is not None:
        write_outputs(result, Path(out_dir), raw_text)
    return result


def write_outputs(result: RunResult, out: Path, raw_text: str | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    tables.write_text(out / "raw.csv", raw_text or tables.raw_csv(result.raw))
    tables.write_text(out / "summary.csv", tables.summary_csv(result.summary))
    tables.write_text(out / "config.json", json.dumps(result.config.to_dict(), indent=2, sort_keys=True) + "\n")
    for r in result.seeds:
        tables.write_text(out / "trajectories" / f"seed_{r.seed}.csv", r.best_trajectory_csv)
        if r.best_weights_csv:
            tables.write_text(out / "trajectories" / f"seed_{r.seed}_weights.csv", r.best_weights_csv)
    reached = [r.best_step_costs for r in result.seeds if _reached(r)]
    if reached:
        dt = result.config.build_scenario().dt
        tables.write_text(out / "accumulated_cost.csv", tables.curve_csv(accumulated_cost_bands(reached, dt)))


def _reached(seed_result: SeedResult) -> bool:
    row = next(r for r in seed_result.rows if r.episode == seed_result.best_episode)
    return row.reached_goal and not math.isnan(row.reach_time_s)
