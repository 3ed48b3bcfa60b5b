"""Double DQN with prioritised replay and an experience-interceptor hook."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..environment import Experience, NetworkDefenceEnv
from ..neuralnet import Adam, Mlp
from .pipeline import EpisodeTracker, run_pipeline
from .replay import PerBuffer


@dataclass
class DdqnConfig:
    hidden: tuple = (128, 128)
    gamma: float = 0.95
    lr: float = 1e-4
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 10_000
    target_sync: int = 500
    batch_size: int = 32
    buffer_capacity: int = 50_000
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    per_floor: float = 1e-3
    learning_starts: int = 32

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.batch_size < 1 or self.target_sync < 1:
            raise ValueError("batch_size and target_sync must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


class DdqnAgent:
    def __init__(self, obs_dim: int, n_actions: int, config: DdqnConfig | None = None, seed: int = 0):
        self.config = config or DdqnConfig()
        cfg = self.config
        net_seed, rng_seed = np.random.SeedSequence(seed).generate_state(2)
        self.main = Mlp([obs_dim, *cfg.hidden, n_actions], head="q", seed=int(net_seed))
        self.target = self.main.copy()
        self.opt = Adam(self.main.flat, lr=cfg.lr)
        self.replay = PerBuffer(cfg.buffer_capacity, alpha=cfg.per_alpha, floor=cfg.per_floor)
        self.rng = np.random.default_rng(int(rng_seed))
        self.n_actions = n_actions
        self.steps = 0
        self.updates = 0
        self.env: NetworkDefenceEnv | None = None
        self.obs: np.ndarray | None = None
        self.tracker = EpisodeTracker()

    @property
    def net(self) -> Mlp:
        return self.main

    def attach(self, env: NetworkDefenceEnv) -> None:
        self.env = env
        self.obs = None

    def epsilon(self) -> float:
        cfg = self.config
        frac = min(1.0, self.steps / max(1, cfg.epsilon_decay_steps))
        return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start)

    def per_beta(self) -> float:
        cfg = self.config
        frac = min(1.0, self.steps / max(1, cfg.epsilon_decay_steps))
        return cfg.per_beta_start + frac * (cfg.per_beta_end - cfg.per_beta_start)

    def act(self, obs: np.ndarray, mode: str = "greedy", rng: np.random.Generator | None = None) -> int:
        return select_action(self, obs, mode, rng)


def select_action(agent: DdqnAgent, obs: np.ndarray, mode: str = "greedy",
                  rng: np.random.Generator | None = None, epsilon: float | None = None) -> int:
    """Greedy (lowest index on ties) or epsilon-greedy action index."""
    if mode == "epsilon":
        rng = agent.rng if rng is None else rng
        eps = agent.epsilon() if epsilon is None else epsilon
        if rng.random() < eps:
            return int(rng.integers(agent.n_actions))
    elif mode != "greedy":
        raise ValueError(f"unknown mode {mode!r}")
    return int(np.argmax(agent.main.forward(obs)))


def ddqn_targets(agent: DdqnAgent, batch, terminal=None) -> np.ndarray:
    """``r + gamma * Q_target(s', argmax_a Q_main(s', a))``, or ``r`` at terminal entries."""
    r = np.array([e.r for e in batch], dtype=np.float64)
    if terminal is None:
        terminal = [e.terminal for e in batch]
    term = np.asarray(terminal, dtype=bool)
    s2 = np.stack([e.s_next for e in batch])
    pick = np.argmax(agent.main.forward(s2), axis=1)
    q_next = agent.target.forward(s2)[np.arange(len(batch)), pick]
    return r + agent.config.gamma * np.where(term, 0.0, q_next)


def learn(agent: DdqnAgent) -> float:
    """One importance-weighted squared-TD gradient step on a prioritised batch."""
    cfg = agent.config
    idx, _, w = agent.replay.sample(cfg.batch_size, agent.rng, agent.per_beta())
    s, a, s2, r, term = agent.replay.columns(idx)
    n = len(idx)
    rows = np.arange(n)
    # one pass of the main net over s and s' together
    out, acts = agent.main.forward_cached(np.concatenate([s, s2]))
    pick = np.argmax(out[n:], axis=1)
    q_next = agent.target.forward(s2)[rows, pick]
    y = r + cfg.gamma * np.where(term, 0.0, q_next)
    td = out[rows, a] - y
    loss = float(np.mean(w * td * td))
    grad_out = np.zeros_like(out)
    grad_out[rows, a] = 2.0 * w * td / n
    grads = agent.main.backward_flat(acts, grad_out)
    agent.opt.step(agent.main.flat, grads)
    agent.replay.update_priorities(idx, td)
    agent.updates += 1
    return loss


def ddqn_train_step(agent: DdqnAgent, interceptors=()) -> float | None:
    """Act once (epsilon-greedy), store the intercepted experience, learn once.

    Returns the batch loss, or ``None`` while the buffer is still filling.
    """
    env = agent.env
    if env is None:
        raise RuntimeError("attach an environment first")
    if agent.obs is None or env.done:
        agent.obs = env.reset()
        agent.tracker.begin()
    a = select_action(agent, agent.obs, "epsilon")
    obs2, r, done = env.step(a)
    info = env.info
    exp = Experience(agent.obs, a, obs2, r, done, info.terminal, info.t, info.critical, info.valid)
    out, seen = run_pipeline(interceptors, exp)
    for e in out:
        agent.replay.add(e)
    agent.obs = seen.s_next
    agent.steps += 1
    agent.tracker.record(r, done, env)
    loss = None
    if len(agent.replay) >= max(agent.config.learning_starts, 1):
        loss = learn(agent)
    if agent.steps % agent.config.target_sync == 0:
        agent.target.set_params(agent.main.flat)
    return loss
