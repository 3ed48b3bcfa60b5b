"""Advantage actor-critic with worker threads sharing one parameter store."""
from __future__ import annotations

import threading
from dataclasses import asdict, dataclass

import numpy as np

from ..environment import Experience, NetworkDefenceEnv
from ..neuralnet import Adam, Mlp, log_softmax
from .pipeline import EpisodeTracker, run_pipeline


@dataclass
class ActorCriticConfig:
    hidden: tuple = (128, 128)
    gamma: float = 0.95
    lr: float = 3e-4
    workers: int = 1
    rollout_length: int = 5
    entropy_coef: float = 0.01
    value_coef: float = 0.5

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class ActorCriticAgent:
    """Shared policy/value net.  Gradients are applied one worker at a time."""

    def __init__(self, obs_dim: int, n_actions: int, config: ActorCriticConfig | None = None, seed: int = 0):
        self.config = config or ActorCriticConfig()
        net_seed, rng_seed = np.random.SeedSequence(seed).generate_state(2)
        self.net = Mlp([obs_dim, *self.config.hidden, n_actions + 1], head="actor_critic", seed=int(net_seed))
        self.opt = Adam(self.net.flat, lr=self.config.lr)
        self.lock = threading.Lock()
        self.rng = np.random.default_rng(int(rng_seed))
        self.n_actions = n_actions
        self.steps = 0
        self.updates = 0

    def snapshot(self) -> Mlp:
        with self.lock:
            return self.net.copy()

    def apply_gradients(self, grads) -> None:
        with self.lock:
            self.opt.step(self.net.flat, grads)
            self.updates += 1

    def act(self, obs: np.ndarray, mode: str = "greedy", rng: np.random.Generator | None = None,
            net: Mlp | None = None) -> int:
        net = self.net if net is None else net
        logits = net.forward(obs)[:-1]
        if mode == "greedy":
            return int(np.argmax(logits))
        if mode != "sample":
            raise ValueError(f"unknown mode {mode!r}")
        rng = self.rng if rng is None else rng
        p = np.exp(log_softmax(logits))
        return int(min(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"), len(p) - 1))


def n_step_returns(rewards, gamma: float, bootstrap: float) -> np.ndarray:
    out = np.empty(len(rewards))
    g = bootstrap
    for i in range(len(rewards) - 1, -1, -1):
        g = rewards[i] + gamma * g
        out[i] = g
    return out


def ac_gradients(net: Mlp, rollout, done: bool, cfg: ActorCriticConfig):
    """Loss components and parameter gradients for one rollout.

    ``done`` means the rollout ended in a terminal state, so the return is
    not bootstrapped from the value head.
    """
    s = np.stack([e.s for e in rollout])
    a = np.array([e.a for e in rollout])
    bootstrap = 0.0 if done else float(net.forward(rollout[-1].s_next)[-1])
    returns = n_step_returns([e.r for e in rollout], cfg.gamma, bootstrap)
    out, acts = net.forward_cached(s)
    logits, v = out[:, :-1], out[:, -1]
    logp = log_softmax(logits)
    p = np.exp(logp)
    rows = np.arange(len(rollout))
    adv = returns - v
    T = len(rollout)
    policy_loss = float(-np.mean(logp[rows, a] * adv))
    value_loss = float(np.mean(adv * adv))
    ent_rows = -(p * logp).sum(axis=1)
    entropy = float(np.mean(ent_rows))

    g_logits = p * adv[:, None]
    g_logits[rows, a] -= adv
    # d(-H)/dz = p * (log p + H)
    g_logits += cfg.entropy_coef * p * (logp + ent_rows[:, None])
    g_out = np.empty_like(out)
    g_out[:, :-1] = g_logits / T
    g_out[:, -1] = cfg.value_coef * 2.0 * (v - returns) / T
    grads = net.backward_flat(acts, g_out)
    return (policy_loss, value_loss, entropy), grads, returns, adv


def ac_update(agent: ActorCriticAgent, rollout, done: bool):
    """Compute n-step advantage gradients on a snapshot and apply them to the shared net.

    Returns ``(policy_loss, value_loss, entropy)``.
    """
    if not rollout:
        raise ValueError("empty rollout")
    net = agent.snapshot()
    losses, grads, _, _ = ac_gradients(net, rollout, done, agent.config)
    agent.apply_gradients(grads)
    return losses


class Worker:
    """One environment instance feeding rollouts to the shared agent."""

    def __init__(self, agent: ActorCriticAgent, env: NetworkDefenceEnv, seed: int, interceptors=()):
        self.agent = agent
        self.env = env
        self.rng = np.random.default_rng(seed)
        self.interceptors = interceptors
        self.obs = None
        self.tracker = EpisodeTracker()

    def run_rollout(self, max_steps: int) -> int:
        agent, env = self.agent, self.env
        if self.obs is None or env.done:
            self.obs = env.reset()
            self.tracker.begin()
        net = agent.snapshot()
        rollout = []
        steps = 0
        done = terminal = False
        while steps < min(agent.config.rollout_length, max_steps) and not done:
            a = agent.act(self.obs, "sample", self.rng, net=net)
            obs2, r, done = env.step(a)
            info = env.info
            exp = Experience(self.obs, a, obs2, r, done, info.terminal, info.t, info.critical, info.valid)
            out, seen = run_pipeline(self.interceptors, exp)
            rollout.extend(out)
            self.obs = seen.s_next
            terminal = info.terminal
            steps += 1
            self.tracker.record(r, done, env)
        if rollout:
            ac_update(agent, rollout, terminal)
        return steps
