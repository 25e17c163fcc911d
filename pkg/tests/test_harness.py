import json
import math

import numpy as np
import pytest

from calfnav.env import run_episode
from calfnav.harness import io as tables
from calfnav.harness.config import (
    PRESET_CONFIGS,
    ConfigError,
    from_dict,
    load_config,
    parse_seeds,
    stream_rng,
)
from calfnav.harness.runner import run_experiment, run_seed
from calfnav.harness.stats import (
    EpisodeRow,
    NoDataError,
    accumulated_cost_bands,
    bootstrap_ci,
    success_rate,
    summarize,
    top25_median,
)
from calfnav.nominal import NominalPolicy
from calfnav.scenario import preset_a


def rows(costs, episode=0, reached=True):
    return [EpisodeRow(seed, episode, c, reached, 1.0 if reached else math.nan, 0, 0)
            for seed, c in enumerate(costs, start=1)]


def test_top25_examples():
    assert top25_median([1, 2, 3, 4]) == 1
    assert top25_median(range(1, 9)) == 1.5
    assert top25_median([7]) == 7
    (s,) = summarize(rows([5] * 8))
    assert (s.median_top25_cost, s.ci_low, s.ci_high, s.success_rate) == (5, 5, 5, 1)
    (s,) = summarize(rows(range(1, 9)))
    assert s.median_top25_cost == 1.5


def test_summarize_errors_on_empty():
    with pytest.raises(NoDataError, match="no data"):
        summarize([])
    with pytest.raises(NoDataError):
        top25_median([])
    with pytest.raises(NoDataError):
        success_rate([])


def test_summarize_is_order_independent_and_deterministic():
    rng = np.random.default_rng(0)
    table = [r for ep in range(3) for r in rows(rng.uniform(50, 500, 20), episode=ep)]
    a = summarize(table)
    b = summarize(list(reversed(table)))
    assert a == b
    assert all(s.ci_low <= s.ci_high for s in a)


def test_bootstrap_ci_brackets_statistic():
    costs = np.random.default_rng(1).normal(100, 10, 40)
    lo, hi = bootstrap_ci(costs, np.random.default_rng(2))
    assert lo < hi
    assert lo <= top25_median(costs) <= hi + 5


def test_success_rate_per_episode():
    table = rows([1, 2], reached=True) + [EpisodeRow(3, 0, 9.0, False, math.nan, 0, 0)]
    (s,) = summarize(table)
    assert s.success_rate == pytest.approx(2 / 3)


def test_accumulated_cost_bands_truncate_at_shortest():
    bands = accumulated_cost_bands([[1, 1, 1, 1], [2, 2], [1, 3, 5]], dt=0.1)
    assert bands.shape == (2, 4)
    assert bands[:, 0] == pytest.approx([0.1, 0.2])
    assert bands[:, 1] == pytest.approx([1, 4])
    with pytest.raises(NoDataError):
        accumulated_cost_bands([], 0.1)


def test_raw_csv_roundtrip():
    table = rows([1.0 / 3, 2.5]) + [EpisodeRow(9, 1, 600.123456789012, False, math.nan, 3, 4)]
    text = tables.raw_csv(table)
    assert text.splitlines()[0] == ",".join(tables.RAW_COLUMNS)
    back = tables.parse_raw(text)
    assert back[0].total_cost == float("0.333333333")
    assert not back[-1].reached_goal and math.isnan(back[-1].reach_time_s)
    assert tables.raw_csv(back) == text


def test_parse_rejects_bad_tables():
    with pytest.raises(tables.TableFormatError):
        tables.parse_raw("a,b\n1,2\n")
    with pytest.raises(tables.TableFormatError, match="line 2"):
        tables.parse_raw(",".join(tables.RAW_COLUMNS) + "\n1,0,abc,1,1,0,0\n")


def test_presets_load():
    for name in PRESET_CONFIGS:
        cfg = load_config(name)
        assert cfg.seeds and cfg.episodes >= 1
    cfg = load_config("preset-a-calf")
    assert cfg.seeds == tuple(range(1, 21)) and cfg.episodes == 40
    spec = cfg.critic_spec()
    assert (spec.nu_bar, spec.nu_bar_max, spec.c_low, spec.c_up, spec.gamma) == (1e-6, 0.1, 0.1, 1e3, 0.9)
    assert load_config("preset-a-sarsa-m").critic_spec().c_up == 5e2
    assert load_config("preset-b-mpc25").mpc_config().horizon == 25


def test_config_file_and_errors(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"extends": "preset-a-calf", "episodes": 3, "agent": {"exploration_std": [0.01, 0.1]}}))
    cfg = load_config(path)
    assert cfg.episodes == 3 and cfg.agent.exploration_std == (0.01, 0.1) and cfg.agent.anchor == "lower"
    assert from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError, match="missing.json"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="bad.json"):
        load_config(bad)
    for d in ({"seeds": []}, {"episodes": 0}, {"agent": {"kind": "ppo"}}, {"colour": 1},
              {"agent": {"critic": {"c_low": -1}}}, {"preset": "preset-Z"}, {"seeds": [-1]}):
        with pytest.raises(ConfigError):
            from_dict(d)


def test_parse_seeds():
    assert parse_seeds("1-3,7") == [1, 2, 3, 7]
    assert parse_seeds("5") == [5]
    with pytest.raises(ConfigError):
        parse_seeds("a-b")


def test_stream_rng_labels():
    a = stream_rng(3, "exploration").random(4)
    assert np.array_equal(a, stream_rng(3, "exploration").random(4))
    assert not np.array_equal(a, stream_rng(3, "restarts").random(4))
    assert not np.array_equal(a, stream_rng(4, "exploration").random(4))
    with pytest.raises(ValueError):
        stream_rng(1, "weather")


def test_nominal_run_matches_env():
    cfg = from_dict({"preset": "preset-A", "seeds": [1], "episodes": 1, "agent": {"kind": "nominal"}})
    result = run_experiment(cfg)
    env_log = run_episode(NominalPolicy(), preset_a())
    assert result.seeds[0].rows[0].total_cost == env_log.total_cost
    assert result.success_rate == 1.0
    assert result.raw[0].total_cost == float(tables.fmt(env_log.total_cost))


def test_outputs_and_pure_summary(tmp_path):
    cfg = load_config("preset-a-calf").with_overrides(seeds=[1, 2, 3], episodes=4)
    result = run_experiment(cfg, tmp_path)
    for name in ("raw.csv", "summary.csv", "config.json", "accumulated_cost.csv"):
        assert (tmp_path / name).exists()
    assert sorted(p.name for p in (tmp_path / "trajectories").iterdir()) == [
        f"seed_{k}{suffix}.csv" for k in (1, 2, 3) for suffix in ("", "_weights")]
    raw = tables.read_raw(tmp_path / "raw.csv")
    assert tables.summary_csv(summarize(raw)) == (tmp_path / "summary.csv").read_text()
    stored = tables.read_summary(tmp_path / "summary.csv")
    for ep, s in enumerate(stored):
        per_ep = [r for r in raw if r.episode == ep]
        assert s.success_rate == pytest.approx(sum(r.reached_goal for r in per_ep) / len(per_ep))
    assert len(result.raw) == 12
    header = (tmp_path / "trajectories" / "seed_1.csv").read_text().splitlines()[0]
    assert header.endswith("mode,q_dagger")
    weights = (tmp_path / "trajectories" / "seed_1_weights.csv").read_text().splitlines()
    assert weights[0] == "episode,t,w1,w2,w3,feasible"
    assert int(weights[1].split(",")[0]) == result.seeds[0].best_episode


def test_worker_count_does_not_change_outputs(tmp_path):
    base = PRESET_CONFIGS["preset-a-calf"]
    cfg = from_dict({**base, "seeds": [2, 1, 3], "episodes": 3, "noise_std": [0.002, 0.002, 0.005],
                     "agent": {**base["agent"], "exploration_std": [0.02, 0.3]}})
    run_experiment(cfg, tmp_path / "one", workers=1)
    run_experiment(cfg, tmp_path / "two", workers=2)
    for name in ("raw.csv", "summary.csv", "trajectories/seed_3.csv", "trajectories/seed_3_weights.csv",
                 "accumulated_cost.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_aborted_episode_is_recorded_not_fatal():
    cfg = from_dict({"preset": "preset-A", "seeds": [1], "episodes": 2, "agent": {"kind": "nominal"},
                     "noise_std": [math.inf, 0, 0]})
    result = run_seed(cfg, 1)
    assert [r.reached_goal for r in result.rows] == [False, False]
    assert all(r.total_cost >= 600 for r in result.rows)
