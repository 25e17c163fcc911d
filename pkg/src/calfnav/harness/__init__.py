"""Experiment orchestration, statistics and file outputs."""

from .config import PRESET_CONFIGS, ConfigError, RunConfig, load_config, parse_seeds, stream_rng
from .runner import RunResult, make_policy, run_experiment, run_seed
from .stats import NoDataError, summarize, top25_median
