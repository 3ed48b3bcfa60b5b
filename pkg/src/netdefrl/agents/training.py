"""Training loops with periodic greedy evaluation and best-checkpoint selection."""
from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace

import numpy as np

from ..environment import EnvConfig, NetworkDefenceEnv
from ..neuralnet import Mlp
from ..topology import Topology
from .actor_critic import ActorCriticAgent, ActorCriticConfig, Worker
from .ddqn import DdqnAgent, DdqnConfig, ddqn_train_step
from .pipeline import greedy_rollout

ALGORITHMS = ("ddqn", "actor_critic")


@dataclass
class Schedule:
    total_steps: int = 20_000
    eval_every: int = 100
    eval_seed: int = 2**31 - 1
    eval_episodes: int = 1

    def __post_init__(self):
        if self.total_steps < 0 or self.eval_every < 1 or self.eval_episodes < 1:
            raise ValueError("total_steps must be >= 0, eval_every and eval_episodes >= 1")


@dataclass
class Evaluation:
    episode: int
    step: int
    score: float


@dataclass
class TrainResult:
    agent: object
    model: Mlp
    curve: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)


def make_agent(kind: str, env: NetworkDefenceEnv, agent_config=None, seed: int = 0):
    if kind == "ddqn":
        return DdqnAgent(env.obs_dim, env.n_actions, agent_config or DdqnConfig(), seed=seed)
    if kind == "actor_critic":
        return ActorCriticAgent(env.obs_dim, env.n_actions, agent_config or ActorCriticConfig(), seed=seed)
    raise ValueError(f"unknown algorithm {kind!r}")


class _BestKeeper:
    """Greedy-evaluate the live net and remember the best-scoring parameters.

    The evaluation runs on its own environment copy, reset with the same
    ``eval_episodes`` seeds every time and scored by the mean return, through the same interceptors as training: the defender
    only ever sees what reaches it.  Ties go to the later checkpoint.
    """

    def __init__(self, net: Mlp, topology: Topology, env_config: EnvConfig, schedule: Schedule, interceptors):
        self.net = net
        self.env = NetworkDefenceEnv(topology, replace(env_config, seed=schedule.eval_seed))
        self.seeds = [schedule.eval_seed - j for j in range(schedule.eval_episodes)]
        self.interceptors = interceptors
        self.best = net.copy()
        self.best_score = -np.inf
        self.evaluations = []

    def evaluate(self, episode: int, step: int, net: Mlp | None = None) -> None:
        net = self.net if net is None else net
        score = float(np.mean([greedy_rollout(net, self.env, seed=s, interceptors=self.interceptors).perceived_ret
                               for s in self.seeds]))
        self.evaluations.append(Evaluation(episode, step, score))
        if score >= self.best_score:
            self.best_score = score
            self.best = net.copy()


def train(kind: str, topology: Topology, env_config: EnvConfig | None = None, agent_config=None,
          schedule: Schedule | None = None, interceptors=None, seed: int = 0) -> TrainResult:
    """Train one defender.

    ``interceptors`` is a list of experience transforms, or a callable that
    receives the freshly built agent and returns that list (needed by stages
    that read the defender's own network).  DDQN runs are deterministic for a
    given seed; actor-critic runs are deterministic only with one worker.
    """
    env_config = env_config or EnvConfig()
    schedule = schedule or Schedule()
    env = NetworkDefenceEnv(topology, replace(env_config, seed=seed))
    agent = make_agent(kind, env, agent_config, seed)
    stages = interceptors(agent) if callable(interceptors) else list(interceptors or ())
    keeper = _BestKeeper(agent.net, topology, env_config, schedule, stages)
    if kind == "ddqn":
        curve = _train_ddqn(agent, env, schedule, stages, keeper)
    else:
        curve = _train_actor_critic(agent, env, topology, env_config, schedule, stages, keeper, seed)
    if schedule.total_steps == 0:
        return TrainResult(agent, agent.net.copy(), curve, keeper.evaluations)
    keeper.evaluate(len(curve), schedule.total_steps)
    return TrainResult(agent, keeper.best, curve, keeper.evaluations)


def _train_ddqn(agent: DdqnAgent, env, schedule: Schedule, stages, keeper: _BestKeeper):
    agent.attach(env)
    seen = 0
    for _ in range(schedule.total_steps):
        ddqn_train_step(agent, stages)
        n = len(agent.tracker.records)
        if n != seen:
            seen = n
            if n % schedule.eval_every == 0:
                keeper.evaluate(n, agent.steps)
    return agent.tracker.records


def _train_actor_critic(agent: ActorCriticAgent, env, topology, env_config, schedule, stages, keeper, seed):
    n_workers = agent.config.workers
    seeds = np.random.SeedSequence([seed, 1]).generate_state(2 * n_workers)
    workers = []
    for i in range(n_workers):
        wenv = env if i == 0 else NetworkDefenceEnv(topology, replace(env_config, seed=int(seeds[2 * i])))
        workers.append(Worker(agent, wenv, int(seeds[2 * i + 1]), stages))
    budget = {"left": schedule.total_steps}
    budget_lock = threading.Lock()
    eval_lock = threading.Lock()
    seen = [0]

    def claim(n):
        with budget_lock:
            take = min(n, budget["left"])
            budget["left"] -= take
            return take

    def work(w: Worker, evaluates: bool):
        while True:
            take = claim(agent.config.rollout_length)
            if take == 0:
                return
            done = w.run_rollout(take)
            with budget_lock:
                budget["left"] += take - done
                agent.steps += done
            n = len(w.tracker.records)
            if evaluates and n != seen[0]:
                seen[0] = n
                if n % schedule.eval_every == 0:
                    with eval_lock:
                        keeper.evaluate(n, agent.steps, agent.snapshot())

    if n_workers == 1:
        work(workers[0], True)
    else:
        threads = [threading.Thread(target=work, args=(w, i == 0), daemon=True) for i, w in enumerate(workers)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
    curve = []
    for w in workers:
        curve.extend(w.tracker.records)
    for i, rec in enumerate(curve):
        rec.episode = i
    return curve
