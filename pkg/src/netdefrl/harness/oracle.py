"""Exhaustive search over defender action sequences."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..environment import Action, EnvConfig, NetState, NetworkDefenceEnv
from ..topology import Topology

GUARD = 10**7


class SearchTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class OracleResult:
    actions: tuple
    preserved: int
    critical_compromised: bool
    explored: int


def max_depth_for(n_actions: int, guard: int = GUARD) -> int:
    return int(math.floor(math.log(guard) / math.log(n_actions) + 1e-9)) if n_actions > 1 else 64


def oracle_config(config: EnvConfig) -> EnvConfig:
    """The deterministic setting the search runs in: greedy attacker, perfect detection."""
    return replace(config, attacker_policy="greedy", detection_rate=1.0)


def brute_force_optimum(topology: Topology, config: EnvConfig | None = None, max_depth: int | None = None,
                        guard: int = GUARD) -> OracleResult:
    """Best preserved count over all action sequences of length ``max_depth``.

    After the searched prefix the defender plays no-op until the episode
    ends.  Ties prefer a no-op, then the smallest action index.  Raises
    :class:`SearchTooLarge` when ``n_actions ** max_depth`` exceeds ``guard``.
    """
    config = oracle_config(config or EnvConfig())
    env = NetworkDefenceEnv(topology, config)
    n_act = env.n_actions
    if max_depth is None:
        max_depth = max_depth_for(n_act, guard)
    if max_depth < 0 or n_act ** max_depth > guard:
        raise SearchTooLarge(f"{n_act}^{max_depth} sequences exceed the guard of {guard}")
    env.reset(0)
    noop = env.action_space.noop_index
    order = [noop] + [a for a in range(n_act) if a != noop]
    memo = {}
    counter = [0]

    def advance(state: NetState, a: int):
        env.state = state.copy()
        env.done = False
        env.step(a)
        counter[0] += 1
        return env.state, env.done, env.info.critical_compromised

    def finish(state: NetState, done: bool, crit: bool):
        while not done:
            state, done, crit = advance(state, noop)
        if crit:
            return 0, True
        env.state = state
        return env.preserved(), False

    def search(state: NetState, depth: int):
        key = (state.key(), depth)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if depth == 0:
            best = (*finish(state, False, False), ())
        else:
            best = None
            for a in order:
                nxt, done, crit = advance(state, a)
                if done:
                    cand = (*finish(nxt, True, crit), (a,))
                else:
                    sub = search(nxt, depth - 1)
                    cand = (sub[0], sub[1], (a,) + sub[2])
                if best is None or cand[0] > best[0]:
                    best = cand
        memo[key] = best
        return best

    preserved, crit, seq = search(env.state.copy(), max_depth)
    actions = tuple(env.action_space.decode(a) for a in seq)
    return OracleResult(actions, preserved, crit, counter[0])


def rollout_sequence(topology: Topology, config: EnvConfig, actions) -> tuple:
    """Play ``actions`` then no-ops in the oracle setting; returns (preserved, critical_compromised)."""
    env = NetworkDefenceEnv(topology, oracle_config(config))
    env.reset(0)
    seq = list(actions)
    done = False
    while not done:
        a = seq.pop(0) if seq else Action.parse("noop")
        _, _, done = env.step(a)
    crit = env.info.critical_compromised
    return (0 if crit else env.preserved()), crit
