"""Inversion defence: undo suspected bit flips before an experience is learned from.

The defender does not know which nodes the attacker can see or target, so
it trials a flip of every node bit of ``s'``.  Reported-compromised bits
are suspected false positives and trialled as clean; reported-clean bits
are suspected false negatives and trialled as compromised.  The flips that
raise the score of the model's preferred action the most are reverted.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .adversary import REWARD_MODES, flip_scores, retag
from .environment import Experience, RewardParams
from .topology import Topology

KEEP_POLICIES = ("corrected_only", "keep_both")


@dataclass
class DefenceConfig:
    """Defender-side settings.  Nothing here describes the attacker."""

    limit_estimate: int = 2
    keep_policy: str = "corrected_only"
    strict_improvement: bool = True
    scorer: object = None
    topology: Topology | None = None
    reward: RewardParams = field(default_factory=RewardParams)
    reward_mode: str = "recompute"

    def __post_init__(self):
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        if self.limit_estimate < 1:
            raise ValueError("limit_estimate must be >= 1")
        if self.keep_policy not in KEEP_POLICIES:
            raise ValueError(f"keep_policy must be one of {KEEP_POLICIES}")


@dataclass(frozen=True)
class Correction:
    reverted_to_clean: frozenset
    reverted_to_compromised: frozenset

    @property
    def n_flips(self) -> int:
        return len(self.reverted_to_clean) + len(self.reverted_to_compromised)


def correct(exp: Experience, cfg: DefenceConfig):
    """Corrected experience plus the reverted flips (node ids)."""
    if cfg.scorer is None or cfg.topology is None:
        raise ValueError("the defence needs a scorer and the topology")
    topo = cfg.topology
    s_next = np.asarray(exp.s_next, dtype=np.float64)
    n = topo.n_nodes
    positions = np.arange(n, dtype=np.int64)
    action = cfg.scorer.best_action(s_next)
    bits = s_next[:n] > 0.5
    scores = flip_scores(s_next, positions, np.ones(n, dtype=bool), cfg.scorer, action)
    ok = np.ones(n, dtype=bool)
    if cfg.strict_improvement:
        ok = scores > cfg.scorer.score(s_next[None, :], action)[0]
    to_clean = positions[kernels.topk(scores, bits & ok, cfg.limit_estimate, True)]
    to_comp = positions[kernels.topk(scores, ~bits & ok, cfg.limit_estimate, True)]
    fix = Correction(frozenset(topo.nodes[p] for p in to_clean), frozenset(topo.nodes[p] for p in to_comp))
    if fix.n_flips == 0:
        return exp, fix
    fixed = s_next.copy()
    fixed[to_clean] = 0.0
    fixed[to_comp] = 1.0
    return retag(exp, fixed, topo, cfg.reward, cfg.reward_mode), fix


def invert(exp: Experience, cfg: DefenceConfig) -> list:
    """One or two experiences per ``keep_policy`` (tampered first when both are kept).

    When no flip is reverted the input comes back alone either way.
    """
    fixed, fix = correct(exp, cfg)
    if fix.n_flips == 0:
        return [exp]
    if cfg.keep_policy == "keep_both":
        return [exp, fixed]
    return [fixed]


class DefenceInterceptor:
    """Pipeline stage wrapping :func:`invert`, with simple counters.

    It rewrites training data only; the defender keeps acting on what it
    observed.
    """

    channel = False

    def __init__(self, cfg: DefenceConfig):
        self.cfg = cfg
        self.seen = 0
        self.corrected = 0
        self.flips = 0

    def __call__(self, exp: Experience) -> list:
        fixed, fix = correct(exp, self.cfg)
        self.seen += 1
        if fix.n_flips == 0:
            return [exp]
        self.corrected += 1
        self.flips += fix.n_flips
        return [exp, fixed] if self.cfg.keep_policy == "keep_both" else [fixed]


def defence_interceptor(cfg: DefenceConfig) -> DefenceInterceptor:
    return DefenceInterceptor(cfg)


__all__ = ["Correction", "DefenceConfig", "DefenceInterceptor", "correct", "defence_interceptor", "invert"]
