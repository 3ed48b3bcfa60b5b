"""Experience interceptors, episode bookkeeping and evaluation rollouts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..environment import Experience, NetworkDefenceEnv, is_valid


def run_pipeline(interceptors, exp: Experience):
    """Run ``exp`` through each stage in order.

    A stage is any callable taking one experience and returning either an
    experience or a list of them.  Stages whose ``channel`` attribute is
    false (the defence) only rewrite training data; every other stage sits
    on the observation channel.  Returns ``(experiences, seen)`` where
    ``seen`` is the last experience produced by a channel stage: what the
    defender actually observed.
    """
    batch = [exp]
    seen = exp
    for stage in interceptors or ():
        nxt = []
        for e in batch:
            out = stage(e)
            if isinstance(out, Experience):
                nxt.append(out)
            else:
                nxt.extend(out)
        if not nxt:
            raise ValueError("interceptor pipeline dropped the experience")
        batch = nxt
        if getattr(stage, "channel", True):
            seen = batch[-1]
    return batch, seen


def apply_interceptors(interceptors, exp: Experience) -> list:
    return run_pipeline(interceptors, exp)[0]


@dataclass
class EpisodeRecord:
    episode: int
    ret: float
    preserved: int
    critical_compromised: bool


@dataclass
class EpisodeTracker:
    records: list = field(default_factory=list)
    ret: float = 0.0

    def begin(self):
        self.ret = 0.0

    def record(self, r: float, done: bool, env: NetworkDefenceEnv):
        self.ret += r
        if done:
            crit = bool(env.info.critical_compromised)
            self.records.append(EpisodeRecord(len(self.records), self.ret, 0 if crit else env.preserved(), crit))


@dataclass
class Rollout:
    ret: float
    perceived_ret: float
    preserved: int
    critical_compromised: bool
    actions: list


def valid_mask(env: NetworkDefenceEnv) -> np.ndarray:
    space = env.action_space
    return np.array([is_valid(env.topology, env.state, space.decode(i)) for i in range(space.n)])


def greedy_rollout(net, env: NetworkDefenceEnv, seed: int | None = None, interceptors=(),
                   mask_invalid: bool = False) -> Rollout:
    """Play one episode taking ``argmax`` of the net's action head.

    With interceptors the net acts on what the observation channel delivers
    and ``perceived_ret`` sums the rewards seen there; ``ret`` is always the
    environment's own reward.
    """
    obs = env.reset(seed)
    ret = perceived = 0.0
    actions = []
    done = False
    n_act = env.n_actions
    while not done:
        out = net.forward(obs)[:n_act]
        if mask_invalid:
            out = np.where(valid_mask(env), out, -np.inf)
        a = int(np.argmax(out))
        obs2, r, done = env.step(a)
        actions.append(env.action_space.decode(a))
        ret += r
        if interceptors:
            info = env.info
            exp = Experience(obs, a, obs2, r, done, info.terminal, info.t, info.critical, info.valid)
            seen = run_pipeline(interceptors, exp)[1]
            perceived += seen.r
            obs = seen.s_next
        else:
            perceived += r
            obs = obs2
    crit = bool(env.info.critical_compromised)
    return Rollout(ret, perceived, 0 if crit else env.preserved(), crit, actions)
