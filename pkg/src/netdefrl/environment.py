"""Attack/defence game on a :class:`~netdefrl.topology.Topology`.

Each step the defender acts first (isolate-and-patch, reconnect, migrate the
critical server, or nothing), then the attacker compromises up to ``k``
frontier nodes over links it can observe.  Detection is a per-node Bernoulli
trial at compromise time, retried on every later attacker move.

Node and link arguments of the public functions are node ids; arrays inside
:class:`NetState` are indexed by position in ``topology.nodes`` /
``topology.link_ids``.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import kernels
from .topology import Topology, reachable_mask_dist

UNREACHABLE_DISTANCE = np.iinfo(np.int64).max


class EpisodeOver(RuntimeError):
    """step() called after the episode finished."""


class ActionKind(enum.IntEnum):
    ISOLATE = 0
    RECONNECT = 1
    MIGRATE = 2
    NOOP = 3


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    node: int | None = None

    def __str__(self):
        if self.kind is ActionKind.NOOP:
            return "noop"
        return f"{self.kind.name.lower()}({self.node})"

    @classmethod
    def parse(cls, text: str) -> "Action":
        text = text.strip().lower()
        if text == "noop":
            return cls(ActionKind.NOOP)
        name, _, rest = text.partition("(")
        return cls(ActionKind[name.upper()], int(rest.rstrip(")")))


class ActionSpace:
    """Dense action indexing.

    ``[0, N)`` isolate, ``[N, 2N)`` reconnect, then one migrate action per
    migration target in ascending id order, and finally no-op.
    """

    def __init__(self, topology: Topology):
        self.topology = topology
        self.n_nodes = topology.n_nodes
        self.migration = tuple(sorted(topology.migration_targets))
        self.n = 2 * self.n_nodes + len(self.migration) + 1
        self.noop_index = self.n - 1

    def __len__(self):
        return self.n

    def decode(self, index: int) -> Action:
        index = int(index)
        n = self.n_nodes
        if not 0 <= index < self.n:
            raise IndexError(f"action index {index} out of range [0, {self.n})")
        if index < n:
            return Action(ActionKind.ISOLATE, self.topology.nodes[index])
        if index < 2 * n:
            return Action(ActionKind.RECONNECT, self.topology.nodes[index - n])
        if index < self.noop_index:
            return Action(ActionKind.MIGRATE, self.migration[index - 2 * n])
        return Action(ActionKind.NOOP)

    def encode(self, action: Action) -> int:
        pos = self.topology.node_pos
        if action.kind is ActionKind.ISOLATE:
            return pos[action.node]
        if action.kind is ActionKind.RECONNECT:
            return self.n_nodes + pos[action.node]
        if action.kind is ActionKind.MIGRATE:
            return 2 * self.n_nodes + self.migration.index(action.node)
        return self.noop_index


@dataclass(frozen=True)
class RewardParams:
    alpha: float = 1.0
    beta: float = 1.01
    r_c: float = 0.05
    r_m: float = 0.1

    def __post_init__(self):
        if self.alpha < 1.0 or self.beta < 1.0:
            raise ValueError("alpha and beta must be >= 1.0")
        if self.r_c < 0 or self.r_m < 0:
            raise ValueError("r_c and r_m must be >= 0")


ATTACKER_POLICIES = ("greedy", "random")


@dataclass(frozen=True)
class EnvConfig:
    reward: RewardParams = field(default_factory=RewardParams)
    detection_rate: float = 0.9
    attacker_policy: str = "greedy"
    k: int = 1
    t_max: int = 50
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.detection_rate <= 1.0:
            raise ValueError("detection_rate must lie in [0, 1]")
        if self.attacker_policy not in ATTACKER_POLICIES:
            raise ValueError(f"unknown attacker policy {self.attacker_policy!r}")
        if self.k < 1 or self.t_max < 1:
            raise ValueError("k and t_max must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        d = dict(d)
        if "reward" in d:
            d["reward"] = RewardParams(**d["reward"])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class NetState:
    compromised: np.ndarray
    isolated: np.ndarray
    link_up: np.ndarray
    critical: int
    detected: np.ndarray
    t: int = 0

    def copy(self) -> "NetState":
        return NetState(self.compromised.copy(), self.isolated.copy(), self.link_up.copy(),
                        self.critical, self.detected.copy(), self.t)

    def __eq__(self, other):
        if not isinstance(other, NetState):
            return NotImplemented
        return (self.critical == other.critical and self.t == other.t
                and np.array_equal(self.compromised, other.compromised)
                and np.array_equal(self.isolated, other.isolated)
                and np.array_equal(self.link_up, other.link_up)
                and np.array_equal(self.detected, other.detected))

    def key(self) -> tuple:
        """Hashable summary of the dynamics-relevant state (detection excluded)."""
        return (self.compromised.tobytes(), self.isolated.tobytes(), self.critical, self.t)


def initial_state(topology: Topology) -> NetState:
    n = topology.n_nodes
    critical = min(topology.critical)
    return NetState(
        compromised=topology.node_mask(topology.initial_compromised),
        isolated=np.zeros(n, dtype=bool),
        link_up=np.ones(topology.n_links, dtype=bool),
        critical=topology.node_pos[critical],
        detected=np.zeros(n, dtype=bool),
    )


# --------------------------------------------------------------------------
# observation
# --------------------------------------------------------------------------

def encode(topology: Topology, state: NetState, perceived_compromised) -> np.ndarray:
    """Binary observation: node bits (1 = compromised) then link bits (1 = up)."""
    if isinstance(perceived_compromised, np.ndarray) and perceived_compromised.dtype == bool:
        nodes = perceived_compromised
    else:
        nodes = topology.node_mask(perceived_compromised)
    return np.concatenate([nodes, state.link_up]).astype(np.float64)


# --------------------------------------------------------------------------
# rules
# --------------------------------------------------------------------------

def is_valid(topology: Topology, state: NetState, action: Action) -> bool:
    kind = action.kind
    if kind is ActionKind.NOOP:
        return True
    pos = topology.node_pos.get(action.node)
    if pos is None:
        return False
    if kind is ActionKind.ISOLATE:
        return not state.isolated[pos]
    if kind is ActionKind.RECONNECT:
        return bool(state.isolated[pos])
    return (action.node in topology.migration_targets and pos != state.critical
            and not state.isolated[pos] and not state.compromised[pos])


def reward(topology: Topology, params: RewardParams, t: int, U_t: int, C_t: int, action: Action,
           critical_compromised: bool, action_valid: bool) -> float:
    if critical_compromised or not action_valid:
        return -1.0
    growth = params.beta ** t
    migrate = 1.0 if action.kind is ActionKind.MIGRATE else 0.0
    return (1.0 - params.alpha * (U_t / topology.n_nodes) * growth) - C_t * params.r_c * growth - migrate * params.r_m


def links_from_isolation(topology: Topology, isolated: np.ndarray) -> np.ndarray:
    return ~(isolated[topology.src] | isolated[topology.dst])


def defender_apply(topology: Topology, state: NetState, action: Action) -> NetState:
    """Apply a defender action; invalid actions leave the state unchanged."""
    out = state.copy()
    if not is_valid(topology, state, action):
        return out
    kind = action.kind
    if kind is ActionKind.NOOP:
        return out
    pos = topology.node_pos[action.node]
    if kind is ActionKind.ISOLATE:
        out.isolated[pos] = True
        out.compromised[pos] = False
        out.detected[pos] = False
    elif kind is ActionKind.RECONNECT:
        out.isolated[pos] = False
    else:
        out.critical = pos
        return out
    out.link_up = links_from_isolation(topology, out.isolated)
    return out


def frontier_mask(topology: Topology, state: NetState, observable_links: np.ndarray) -> np.ndarray:
    return kernels.frontier(topology.src, topology.dst, observable_links & state.link_up,
                            state.compromised, state.isolated)


def attack_distances(topology: Topology, state: NetState, observable_links: np.ndarray) -> np.ndarray:
    """Observable-hop distance of every node to the critical server (-1 when cut off)."""
    return reachable_mask_dist(topology, observable_links & state.link_up, ~state.isolated, state.critical)


def attacker_apply(topology: Topology, state: NetState, policy: str, rng: np.random.Generator,
                   k: int = 1, detection_rate: float = 0.9, observable_links: np.ndarray | None = None):
    """One attacker move.  Returns the new state and the newly compromised node ids."""
    if observable_links is None:
        observable_links = topology.link_mask(topology.observable_links)
    out = state.copy()
    pending = np.flatnonzero(out.compromised & ~out.detected)
    if pending.size:
        hit = rng.random(pending.size) < detection_rate
        out.detected[pending[hit]] = True
    front = np.flatnonzero(frontier_mask(topology, state, observable_links))
    if front.size == 0:
        return out, frozenset()
    if policy == "greedy":
        dist = attack_distances(topology, state, observable_links)[front]
        dist = np.where(dist < 0, UNREACHABLE_DISTANCE, dist)
        chosen = front[np.lexsort((front, dist))[:k]]
    elif policy == "random":
        chosen = np.sort(rng.choice(front, size=min(k, front.size), replace=False))
    else:
        raise ValueError(f"unknown attacker policy {policy!r}")
    out.compromised[chosen] = True
    hit = rng.random(chosen.size) < detection_rate
    out.detected[chosen[hit]] = True
    return out, frozenset(topology.nodes[i] for i in chosen)


def reachable_count(topology: Topology, state: NetState) -> int:
    """Nodes reachable from the critical server avoiding isolated and compromised nodes."""
    if state.compromised[state.critical]:
        return 0
    blocked = state.isolated | state.compromised
    dist = reachable_mask_dist(topology, state.link_up, ~blocked, state.critical)
    return int(np.count_nonzero(dist >= 0))


def preserved_count(topology: Topology, state: NetState) -> int:
    return reachable_count(topology, state)


def unreachable_count(topology: Topology, state: NetState) -> int:
    return topology.n_nodes - reachable_count(topology, state)


def observed_reward(topology: Topology, params: RewardParams, s: np.ndarray, s_next: np.ndarray,
                    action: Action, t: int, critical: int, action_valid: bool) -> float:
    """Reward as the defender would compute it from its own observations.

    Used for experiences whose next observation was altered after the fact.
    ``critical`` is a node position.
    """
    n = topology.n_nodes
    seen = s_next[:n] > 0.5
    if seen[critical]:
        return reward(topology, params, t, n, 0, action, True, action_valid)
    new = int(np.count_nonzero(seen & ~(s[:n] > 0.5)))
    links = s_next[n:] > 0.5
    dist = reachable_mask_dist(topology, links, ~seen, critical)
    u = n - int(np.count_nonzero(dist >= 0))
    return reward(topology, params, t, u, new, action, False, action_valid)


@dataclass(frozen=True)
class Experience:
    """One transition ``(s, a, s', r)`` plus the bookkeeping needed to recompute ``r``.

    ``a`` is an action index, ``critical`` the critical server's position
    after the move, ``terminal`` whether bootstrapping stops here.
    """

    s: np.ndarray
    a: int
    s_next: np.ndarray
    r: float
    done: bool = False
    terminal: bool = False
    t: int = 0
    critical: int = 0
    valid: bool = True

    def __post_init__(self):
        if self.s.shape != self.s_next.shape:
            raise ValueError("s and s_next must have the same length")

    def with_next(self, s_next: np.ndarray, r: float) -> "Experience":
        return replace(self, s_next=s_next, r=r)


# --------------------------------------------------------------------------
# episode wrapper
# --------------------------------------------------------------------------

@dataclass
class StepInfo:
    t: int
    action: Action
    valid: bool
    critical: int
    newly_compromised: frozenset
    critical_compromised: bool
    truncated: bool
    terminal: bool


class NetworkDefenceEnv:
    """Single-threaded episode driver.

    ``step`` returns ``(observation, reward, done)``; the details of the last
    transition are kept in :attr:`info`.
    """

    def __init__(self, topology: Topology, config: EnvConfig | None = None):
        self.topology = topology
        self.config = config or EnvConfig()
        self.action_space = ActionSpace(topology)
        self.observable_links = topology.link_mask(topology.observable_links)
        self.obs_dim = topology.n_nodes + topology.n_links
        self.state: NetState | None = None
        self.done = True
        self.info: StepInfo | None = None
        self.rng = np.random.default_rng(self.config.seed)

    @property
    def n_actions(self) -> int:
        return self.action_space.n

    def observe(self) -> np.ndarray:
        return encode(self.topology, self.state, self.state.detected)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.state = initial_state(self.topology)
        comp = np.flatnonzero(self.state.compromised)
        hit = self.rng.random(comp.size) < self.config.detection_rate
        self.state.detected[comp[hit]] = True
        self.done = False
        self.info = None
        return self.observe()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self.done:
            raise EpisodeOver("episode is over; call reset()")
        if not isinstance(action, Action):
            action = self.action_space.decode(action)
        cfg = self.config
        topo = self.topology
        t = self.state.t
        valid = is_valid(topo, self.state, action)
        state = defender_apply(topo, self.state, action)
        state, new = attacker_apply(topo, state, cfg.attacker_policy, self.rng, cfg.k,
                                    cfg.detection_rate, self.observable_links)
        crit_hit = bool(state.compromised[state.critical])
        u = topo.n_nodes if crit_hit else unreachable_count(topo, state)
        r = reward(topo, cfg.reward, t, u, len(new), action, crit_hit, valid)
        state.t = t + 1
        self.state = state
        eradicated = not state.compromised.any()
        terminal = crit_hit or eradicated
        truncated = not terminal and state.t >= cfg.t_max
        self.done = terminal or truncated
        self.info = StepInfo(t, action, valid, state.critical, new, crit_hit, truncated, terminal)
        return self.observe(), r, self.done

    def preserved(self) -> int:
        return preserved_count(self.topology, self.state)

    def clone(self) -> "NetworkDefenceEnv":
        other = NetworkDefenceEnv(self.topology, self.config)
        other.state = None if self.state is None else self.state.copy()
        other.done = self.done
        other.info = self.info
        other.rng = np.random.default_rng()
        other.rng.bit_generator.state = self.rng.bit_generator.state
        return other


def with_detection(config: EnvConfig, rate: float) -> EnvConfig:
    return replace(config, detection_rate=rate)
