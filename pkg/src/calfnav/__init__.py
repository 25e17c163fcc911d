"""Critic-as-Lyapunov-function navigation of a differential-drive robot."""

from .agents import CalfAgent, CertificateViolation, action_grid, select_action, t_hat_bound
from .critic import CriticSpec, ReplayBuffer, constrained_update, features, kappa_bounds, q_value
from .env import EpisodeAborted, EpisodeLog, NoiseConfig, run_episode, saturate, step
from .mpc import MpcConfig, MpcPolicy, mpc_action, mpc_objective, predict
from .nominal import NominalGains, NominalPolicy, nominal_action, to_polar, wrap_angle
from .scenario import Action, HotSpot, Scenario, State, get_preset, preset_a, preset_b, stage_cost

__version__ = "0.1.0"
