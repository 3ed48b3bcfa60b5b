"""Training-time poisoning of the defender's observations.

The attacker sits between the environment and the defender's learner.  For
each experience it picks a few observable node bits of ``s'`` to flip so
that the action the model currently likes best at ``s'`` looks worse:
clean nodes are reported compromised (false positives) and compromised
nodes are hidden (false negatives).
"""
from __future__ import annotations

import collections
import functools
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .agents.ddqn import DdqnConfig
from .agents.training import Schedule, train
from .environment import ActionSpace, EnvConfig, Experience, NetworkDefenceEnv, RewardParams, observed_reward
from .neuralnet import Mlp
from .scoring import MappedScorer, scorer_for
from .topology import Topology, TopologyError, observable_subgraph

TARGET_STYLES = ("q_min", "policy_min")
REWARD_MODES = ("recompute", "copy")


@dataclass
class AttackConfig:
    """What the attacker may flip and how it scores flips.

    ``scorer`` works on defender-space observations (wrap a surrogate in
    :class:`~netdefrl.scoring.MappedScorer`).  ``reward_mode`` decides the
    reward of a tampered experience: ``"recompute"`` derives it from the
    tampered observation, ``"copy"`` keeps the original.
    """

    topology: Topology
    l_fp: tuple = ()
    l_fn: tuple = ()
    limit: int = 2
    scorer: object = None
    target_style: str = "q_min"
    reward: RewardParams = field(default_factory=RewardParams)
    reward_mode: str = "recompute"

    def __post_init__(self):
        self.l_fp = tuple(sorted({int(n) for n in self.l_fp}))
        self.l_fn = tuple(sorted({int(n) for n in self.l_fn}))
        if self.limit < 1:
            raise ValueError("limit must be >= 1")
        if self.target_style not in TARGET_STYLES:
            raise ValueError(f"target_style must be one of {TARGET_STYLES}")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        outside = (set(self.l_fp) | set(self.l_fn)) - self.topology.observable_nodes
        if outside:
            raise ValueError(f"candidate nodes {sorted(outside)} are not observable")


@dataclass(frozen=True)
class TamperRecord:
    flipped_to_compromised: frozenset
    flipped_to_uncompromised: frozenset
    original: np.ndarray
    tampered: np.ndarray

    @property
    def n_flips(self) -> int:
        return len(self.flipped_to_compromised) + len(self.flipped_to_uncompromised)


@functools.lru_cache(maxsize=32)
def _space(topology: Topology) -> ActionSpace:
    return ActionSpace(topology)


def retag(exp: Experience, s_next: np.ndarray, topology: Topology, params: RewardParams,
          mode: str = "recompute") -> Experience:
    """Replace ``s'`` and set the reward the defender would compute from it."""
    if mode == "copy":
        return exp.with_next(s_next, exp.r)
    action = _space(topology).decode(exp.a)
    r = observed_reward(topology, params, exp.s, s_next, action, exp.t, exp.critical, exp.valid)
    return exp.with_next(s_next, r)


def flip_scores(s_next: np.ndarray, positions: np.ndarray, ok: np.ndarray, scorer, action: int) -> np.ndarray:
    """Score of ``action`` after flipping each single bit ``positions[i]`` with ``ok[i]`` set (NaN elsewhere)."""
    scores = np.full(positions.shape[0], np.nan)
    if ok.any():
        trial_pos = positions[ok]
        trials = np.repeat(s_next[None, :], trial_pos.shape[0], axis=0)
        rows = np.arange(trial_pos.shape[0])
        trials[rows, trial_pos] = 1.0 - trials[rows, trial_pos]
        scores[ok] = scorer.score(trials, action)
    return scores


def select_flips(s_next: np.ndarray, positions: np.ndarray, fp_ok: np.ndarray, fn_ok: np.ndarray,
                 scorer, action: int, limit: int, largest: bool):
    """Score every admissible single-bit flip and keep ``limit`` per kind.

    ``positions`` are node positions in ascending id order; ``fp_ok`` marks
    those that may be flipped to compromised and ``fn_ok`` those that may be
    flipped to clean.  Kept flips are the lowest scores (``largest=False``)
    or highest, ties going to the earlier position.  Returns
    ``(fp_positions, fn_positions, scores)``.
    """
    scores = flip_scores(s_next, positions, fp_ok | fn_ok, scorer, action)
    fp = kernels.topk(scores, fp_ok, limit, largest)
    fn = kernels.topk(scores, fn_ok, limit, largest)
    return positions[fp], positions[fn], scores


def _craft(exp: Experience, cfg: AttackConfig):
    topo = cfg.topology
    s_next = np.asarray(exp.s_next, dtype=np.float64)
    action = cfg.scorer.best_action(s_next)
    positions = np.array(sorted(topo.node_pos[n] for n in topo.observable_nodes), dtype=np.int64)
    bits = s_next[positions] > 0.5
    fp_ok = ~bits & topo.node_mask(cfg.l_fp)[positions]
    fn_ok = bits & topo.node_mask(cfg.l_fn)[positions]
    fp, fn, _ = select_flips(s_next, positions, fp_ok, fn_ok, cfg.scorer, action, cfg.limit, largest=False)
    tampered = s_next.copy()
    tampered[fp] = 1.0
    tampered[fn] = 0.0
    record = TamperRecord(frozenset(topo.nodes[p] for p in fp), frozenset(topo.nodes[p] for p in fn),
                          s_next, tampered)
    if record.n_flips == 0:
        return exp, record
    return retag(exp, tampered, topo, cfg.reward, cfg.reward_mode), record


def craft_poison_q(exp: Experience, cfg: AttackConfig):
    """Flip bits to lower ``Q(s', a')`` where ``a'`` is the scorer's favourite at ``s'``."""
    if cfg.scorer is None or cfg.scorer.kind != "q":
        raise ValueError("craft_poison_q needs a Q scorer")
    return _craft(exp, cfg)


def craft_poison_policy(exp: Experience, cfg: AttackConfig):
    """Flip bits to lower ``pi(a' | s')`` where ``a'`` is the policy's favourite at ``s'``."""
    if cfg.scorer is None or cfg.scorer.kind != "policy":
        raise ValueError("craft_poison_policy needs a policy scorer")
    return _craft(exp, cfg)


def craft(exp: Experience, cfg: AttackConfig):
    if cfg.target_style == "q_min":
        return craft_poison_q(exp, cfg)
    return craft_poison_policy(exp, cfg)


def random_perturb(exp: Experience, k: int, rng: np.random.Generator, positions=None,
                   topology: Topology | None = None, reward: RewardParams | None = None) -> Experience:
    """Flip ``k`` distinct node bits of ``s'`` chosen uniformly from ``positions``.

    With a topology the reward is recomputed from the perturbed observation.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return exp
    if positions is None:
        if topology is None:
            raise ValueError("need candidate positions or a topology")
        positions = sorted(topology.node_pos[n] for n in topology.observable_nodes)
    positions = np.asarray(positions, dtype=np.int64)
    pick = rng.choice(positions, size=min(k, positions.size), replace=False)
    s_next = np.array(exp.s_next, dtype=np.float64)
    s_next[pick] = 1.0 - s_next[pick]
    if topology is None:
        return exp.with_next(s_next, exp.r)
    return retag(exp, s_next, topology, reward or RewardParams(), "recompute")


class AttackInterceptor:
    """Pipeline stage applying the crafted attack and tallying its flips."""

    def __init__(self, cfg: AttackConfig, keep_records: bool = False):
        self.cfg = cfg
        self.keep_records = keep_records
        self.records = []
        self.fp_counts = collections.Counter()
        self.fn_counts = collections.Counter()
        self.tampered = 0
        self.seen = 0

    def __call__(self, exp: Experience) -> Experience:
        out, rec = craft(exp, self.cfg)
        self.seen += 1
        if rec.n_flips:
            self.tampered += 1
        self.fp_counts.update(rec.flipped_to_compromised)
        self.fn_counts.update(rec.flipped_to_uncompromised)
        if self.keep_records:
            self.records.append(rec)
        return out


class RandomInterceptor:
    """Baseline stage flipping ``k`` random observable node bits."""

    def __init__(self, topology: Topology, k: int, seed: int = 0, reward: RewardParams | None = None):
        self.topology = topology
        self.k = k
        self.rng = np.random.default_rng(seed)
        self.reward = reward or RewardParams()
        self.positions = sorted(topology.node_pos[n] for n in topology.observable_nodes)

    def __call__(self, exp: Experience) -> Experience:
        return random_perturb(exp, self.k, self.rng, self.positions, self.topology, self.reward)


# --------------------------------------------------------------------------
# surrogate
# --------------------------------------------------------------------------

@dataclass
class Surrogate:
    """A model trained on the attacker's view plus the column map into defender space."""

    net: Mlp
    subgraph: Topology
    columns: np.ndarray

    def scorer(self):
        return MappedScorer(scorer_for(self.net), self.columns)


def surrogate_columns(topology: Topology, sub: Topology) -> np.ndarray:
    """Defender-observation column for each surrogate input."""
    n = topology.n_nodes
    cols = [topology.node_pos[v] for v in sub.nodes]
    cols += [n + topology.link_pos[lid] for lid in sub.link_ids]
    return np.array(cols, dtype=np.int64)


def train_surrogate(topology: Topology, agent_config: DdqnConfig | None = None, seed: int = 0,
                    env_config: EnvConfig | None = None, schedule: Schedule | None = None) -> Surrogate:
    """Train a DDQN on the observable part of ``topology`` only."""
    sub = observable_subgraph(topology)
    if len(sub.nodes) < 2:
        raise TopologyError("observable subgraph has fewer than two nodes")
    if not sub.critical:
        raise TopologyError("the critical server is not observable; the surrogate game is undefined")
    res = train("ddqn", sub, env_config, agent_config, schedule, seed=seed)
    return Surrogate(res.model, sub, surrogate_columns(topology, sub))


def derive_candidates(env: NetworkDefenceEnv, scorer, episodes: int, top_fp: int, top_fn: int, seed: int = 0,
                      limit: int = 1):
    """Most frequently chosen FP and FN nodes under an unrestricted attack.

    The defender side plays uniformly random actions; each step the attacker
    may flip any observable node (``limit`` per kind) and the choices are
    tallied.  Lists are filled up with unchosen observable nodes by id.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    topo = env.topology
    everyone = tuple(sorted(topo.observable_nodes))
    cfg = AttackConfig(topo, everyone, everyone, limit, scorer,
                       "q_min" if scorer.kind == "q" else "policy_min", env.config.reward)
    stage = AttackInterceptor(cfg)
    rng = np.random.default_rng(seed)
    env.rng = np.random.default_rng(rng.integers(2**63))
    for _ in range(episodes):
        obs = env.reset()
        done = False
        while not done:
            a = int(rng.integers(env.n_actions))
            obs2, r, done = env.step(a)
            info = env.info
            out = stage(Experience(obs, a, obs2, r, done, info.terminal, info.t, info.critical, info.valid))
            obs = out.s_next

    def top(counts, k):
        ranked = sorted(everyone, key=lambda n: (-counts.get(n, 0), n))
        return tuple(ranked[:k])

    return top(stage.fp_counts, top_fp), top(stage.fn_counts, top_fn)


__all__ = [
    "AttackConfig", "AttackInterceptor", "RandomInterceptor", "Surrogate", "TamperRecord", "craft",
    "craft_poison_policy", "craft_poison_q", "derive_candidates", "random_perturb", "retag",
    "flip_scores", "select_flips", "surrogate_columns", "train_surrogate",
]
