"""Defender learners: double DQN with prioritised replay, and advantage actor-critic."""
from .actor_critic import ActorCriticAgent, ActorCriticConfig, ac_gradients, ac_update, n_step_returns
from .ddqn import DdqnAgent, DdqnConfig, ddqn_targets, ddqn_train_step, learn, select_action
from .pipeline import EpisodeRecord, Rollout, apply_interceptors, greedy_rollout, run_pipeline
from .replay import EmptyBufferError, PerBuffer
from .training import ALGORITHMS, Schedule, TrainResult, make_agent, train

__all__ = [
    "ALGORITHMS", "ActorCriticAgent", "ActorCriticConfig", "DdqnAgent", "DdqnConfig", "EmptyBufferError",
    "EpisodeRecord", "PerBuffer", "Rollout", "Schedule", "TrainResult", "ac_gradients", "ac_update",
    "apply_interceptors", "ddqn_targets", "ddqn_train_step", "greedy_rollout", "learn", "make_agent",
    "n_step_returns", "run_pipeline", "select_action", "train",
]
