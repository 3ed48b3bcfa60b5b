"""Network graphs with defender roles and an attacker observability mask."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import kernels

FORMAT_VERSION = 1

_SET_FIELDS = (
    "critical",
    "migration_targets",
    "initial_compromised",
    "observable_nodes",
    "observable_links",
)


class TopologyError(ValueError):
    """Raised for unparseable topology files and violated invariants."""


class GenerationError(TopologyError):
    """Raised when a generator spec cannot be realised."""


@dataclass(frozen=True)
class Topology:
    """Immutable network graph.

    ``nodes`` is a sorted tuple of node ids and ``link_ids`` the ids of the
    entries of ``links``.  Generated and loaded topologies use dense ids
    ``0..n-1``; :func:`observable_subgraph` keeps the parent's ids, so code
    that needs array positions goes through :attr:`node_pos` /
    :attr:`link_pos`.
    """

    nodes: tuple
    links: tuple
    critical: frozenset
    migration_targets: frozenset
    initial_compromised: frozenset
    observable_nodes: frozenset
    observable_links: frozenset
    link_ids: tuple = None
    # derived, excluded from equality
    node_pos: dict = field(init=False, repr=False, compare=False)
    link_pos: dict = field(init=False, repr=False, compare=False)
    src: np.ndarray = field(init=False, repr=False, compare=False)
    dst: np.ndarray = field(init=False, repr=False, compare=False)
    indptr: np.ndarray = field(init=False, repr=False, compare=False)
    nbr: np.ndarray = field(init=False, repr=False, compare=False)
    nbr_link: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        put = object.__setattr__
        put(self, "nodes", tuple(int(n) for n in self.nodes))
        put(self, "links", tuple(_norm_pair(p) for p in self.links))
        if self.link_ids is None:
            put(self, "link_ids", tuple(range(len(self.links))))
        else:
            ids = [int(i) for i in self.link_ids]
            if len(ids) == len(self.links):
                order = sorted(range(len(ids)), key=ids.__getitem__)
                put(self, "links", tuple(self.links[i] for i in order))
                ids = [ids[i] for i in order]
            put(self, "link_ids", tuple(ids))
        for name in _SET_FIELDS:
            put(self, name, frozenset(int(x) for x in getattr(self, name)))
        self._check_structure()
        node_pos = {n: i for i, n in enumerate(self.nodes)}
        link_pos = {l: i for i, l in enumerate(self.link_ids)}
        src = np.array([node_pos[a] for a, _ in self.links], dtype=np.int64)
        dst = np.array([node_pos[b] for _, b in self.links], dtype=np.int64)
        n = len(self.nodes)
        deg = np.bincount(np.concatenate([src, dst]), minlength=n) if self.links else np.zeros(n, np.int64)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=indptr[1:])
        nbr = np.empty(2 * len(self.links), dtype=np.int64)
        nbr_link = np.empty(2 * len(self.links), dtype=np.int64)
        fill = indptr[:-1].copy()
        for e, (a, b) in enumerate(zip(src, dst)):
            nbr[fill[a]], nbr_link[fill[a]] = b, e
            fill[a] += 1
            nbr[fill[b]], nbr_link[fill[b]] = a, e
            fill[b] += 1
        for k, v in (("node_pos", node_pos), ("link_pos", link_pos), ("src", src), ("dst", dst),
                     ("indptr", indptr), ("nbr", nbr), ("nbr_link", nbr_link)):
            put(self, k, v)

    # -- invariants -----------------------------------------------------------

    def _check_structure(self):
        nodes = self.nodes
        if list(nodes) != sorted(set(nodes)):
            raise TopologyError("nodes must be distinct and sorted ascending")
        if any(n < 0 for n in nodes):
            raise TopologyError("node ids must be non-negative")
        if len(self.link_ids) != len(self.links) or len(set(self.link_ids)) != len(self.link_ids):
            raise TopologyError("link ids must be distinct, one per link")
        valid = set(nodes)
        seen = set()
        for lid, (a, b) in zip(self.link_ids, self.links):
            if a == b:
                raise TopologyError(f"self-loop: link {lid} joins node {a} to itself")
            if a not in valid or b not in valid:
                raise TopologyError(f"invalid endpoint: link {lid} = ({a}, {b}) references an unknown node")
            if (a, b) in seen:
                raise TopologyError(f"duplicate link: ({a}, {b}) appears more than once")
            seen.add((a, b))
        for name in ("critical", "migration_targets", "initial_compromised", "observable_nodes"):
            unknown = getattr(self, name) - valid
            if unknown:
                raise TopologyError(f"{name} references unknown nodes {sorted(unknown)}")
        unknown = self.observable_links - set(self.link_ids)
        if unknown:
            raise TopologyError(f"observable_links references unknown links {sorted(unknown)}")
        roles = (("critical", self.critical), ("migration_targets", self.migration_targets),
                 ("initial_compromised", self.initial_compromised))
        for i in range(3):
            for j in range(i + 1, 3):
                both = roles[i][1] & roles[j][1]
                if both:
                    raise TopologyError(f"role overlap: {roles[i][0]} and {roles[j][0]} share {sorted(both)}")
        pair = dict(zip(self.link_ids, self.links))
        for lid in self.observable_links:
            a, b = pair[lid]
            if a not in self.observable_nodes or b not in self.observable_nodes:
                raise TopologyError(f"observable link {lid} = ({a}, {b}) has an unobservable endpoint")

    def check_connected(self):
        if not self.nodes:
            raise TopologyError("topology has no nodes")
        if len(reachable_set(self, self.link_ids, (), self.nodes[0])) != len(self.nodes):
            raise TopologyError("graph is not connected")

    # -- conveniences -------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def node_mask(self, ids: Iterable[int]) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        for n in ids:
            mask[self.node_pos[n]] = True
        return mask

    def link_mask(self, ids: Iterable[int]) -> np.ndarray:
        mask = np.zeros(self.n_links, dtype=bool)
        for l in ids:
            mask[self.link_pos[l]] = True
        return mask

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "nodes": list(self.nodes),
            "links": [list(p) for p in self.links],
            "link_ids": list(self.link_ids),
            "critical": sorted(self.critical),
            "migration_targets": sorted(self.migration_targets),
            "initial_compromised": sorted(self.initial_compromised),
            "observable_nodes": sorted(self.observable_nodes),
            "observable_links": sorted(self.observable_links),
        }


def _norm_pair(p):
    a, b = (int(x) for x in p)
    return (a, b) if a <= b else (b, a)


# --------------------------------------------------------------------------
# file format
# --------------------------------------------------------------------------

def dump_topology(t: Topology) -> str:
    """Canonical text form: every list sorted ascending, links in id order.

    ``link_ids`` is written only when the ids are not simply ``0..L-1``.
    """
    doc = t.to_dict()
    if doc["link_ids"] == list(range(t.n_links)):
        del doc["link_ids"]
    body = ",\n".join(f" {json.dumps(k)}: {json.dumps(v)}" for k, v in doc.items())
    return "{\n" + body + "\n}\n"


def load_topology(text: str) -> Topology:
    """Parse a topology document and validate it, connectivity included."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TopologyError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise TopologyError("parse error: top level must be an object")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise TopologyError(f"field 'version': unsupported value {version!r}")
    for key in ("nodes", "links", *_SET_FIELDS):
        if key not in doc:
            raise TopologyError(f"field '{key}': missing")
        if not isinstance(doc[key], list):
            raise TopologyError(f"field '{key}': expected a list")
    nodes = _int_list(doc["nodes"], "nodes")
    links = []
    for i, pair in enumerate(doc["links"]):
        if not (isinstance(pair, list) and len(pair) == 2):
            raise TopologyError(f"field 'links[{i}]': expected a pair of node ids")
        links.append(tuple(_int_list(pair, f"links[{i}]")))
    link_ids = doc.get("link_ids")
    if link_ids is not None:
        link_ids = _int_list(link_ids, "link_ids")
    kw = {key: _int_list(doc[key], key) for key in _SET_FIELDS}
    if sorted(nodes) != nodes:
        nodes = sorted(nodes)
    t = Topology(nodes=tuple(nodes), links=tuple(links), link_ids=link_ids, **kw)
    t.check_connected()
    return t


def _int_list(values, name):
    out = []
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, int):
            raise TopologyError(f"field '{name}[{i}]': expected an integer, got {v!r}")
        out.append(v)
    return out


def save_topology(t: Topology, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_topology(t))


def read_topology(path) -> Topology:
    with open(path, encoding="utf-8") as fh:
        return load_topology(fh.read())


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorSpec:
    node_count: int
    link_count: int
    critical_count: int = 1
    migration_count: int = 1
    initial_compromised_count: int = 1
    observable_fraction: float = 1.0
    seed: int = 0

    def validate(self):
        n = self.node_count
        if n < 1:
            raise GenerationError("node_count must be positive")
        if self.link_count < n - 1:
            raise GenerationError(f"cannot connect {n} nodes with {self.link_count} links")
        if self.link_count > n * (n - 1) // 2:
            raise GenerationError(f"{self.link_count} links exceed the simple-graph maximum for {n} nodes")
        counts = (self.critical_count, self.migration_count, self.initial_compromised_count)
        if min(counts) < 1:
            raise GenerationError("role counts must be positive")
        if sum(counts) > n:
            raise GenerationError("role counts do not fit in node_count")
        if not 0.0 < self.observable_fraction <= 1.0:
            raise GenerationError("observable_fraction must lie in (0, 1]")


def generate_topology(spec: GeneratorSpec) -> Topology:
    """Seeded random topology.

    Random recursive spanning tree, then extra links sampled uniformly from
    the remaining pairs.  The observable set grows outward from a random
    foothold in randomised breadth-first order; the initial compromised
    nodes are the first nodes of that order and the critical server is drawn
    from the far half of the observable set.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.node_count

    perm = rng.permutation(n)
    edges = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.add(_norm_pair((perm[i], perm[j])))
    extra = spec.link_count - len(edges)
    if extra:
        candidates = [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in edges]
        pick = rng.choice(len(candidates), size=extra, replace=False)
        edges.update(candidates[i] for i in np.sort(pick))
    links = tuple(sorted(edges))

    adj = [[] for _ in range(n)]
    for a, b in links:
        adj[a].append(b)
        adj[b].append(a)
    order = [int(rng.integers(0, n))]
    inside = {order[0]}
    boundary = sorted(set(adj[order[0]]))
    while boundary:
        nxt = boundary.pop(int(rng.integers(0, len(boundary))))
        order.append(nxt)
        inside.add(nxt)
        boundary = sorted((set(boundary) | set(adj[nxt])) - inside)

    c = spec.initial_compromised_count
    m_obs = max(math.ceil(spec.observable_fraction * n - 1e-9), c)
    compromised = order[:c]
    observable = order[:m_obs]
    obs_rest = observable[c:]
    far = obs_rest[len(obs_rest) // 2:]
    if len(far) < spec.critical_count:
        far = obs_rest
    if len(far) < spec.critical_count:
        far = order[c:]
    crit_pick = rng.choice(len(far), size=spec.critical_count, replace=False)
    critical = [far[i] for i in np.sort(crit_pick)]
    rest = sorted(set(range(n)) - set(compromised) - set(critical))
    if len(rest) < spec.migration_count:
        raise GenerationError("no room for migration targets")
    mig_pick = rng.choice(len(rest), size=spec.migration_count, replace=False)
    migration = [rest[i] for i in np.sort(mig_pick)]

    obs = set(observable)
    obs_links = [i for i, (a, b) in enumerate(links) if a in obs and b in obs]
    t = Topology(
        nodes=tuple(range(n)),
        links=links,
        critical=critical,
        migration_targets=migration,
        initial_compromised=compromised,
        observable_nodes=observable,
        observable_links=obs_links,
    )
    t.check_connected()
    return t


# --------------------------------------------------------------------------
# queries
# --------------------------------------------------------------------------

def observable_subgraph(t: Topology) -> Topology:
    """The part of ``t`` the attacker can see, with ids preserved."""
    nodes = tuple(n for n in t.nodes if n in t.observable_nodes)
    keep = [i for i, lid in enumerate(t.link_ids) if lid in t.observable_links]
    obs = t.observable_nodes
    return Topology(
        nodes=nodes,
        links=tuple(t.links[i] for i in keep),
        link_ids=tuple(t.link_ids[i] for i in keep),
        critical=t.critical & obs,
        migration_targets=t.migration_targets & obs,
        initial_compromised=t.initial_compromised & obs,
        observable_nodes=obs,
        observable_links=t.observable_links,
    )


def reachable_set(t: Topology, up_links, excluded_nodes, source: int) -> frozenset:
    """Node ids reachable from ``source`` over ``up_links`` avoiding ``excluded_nodes``."""
    if source not in t.node_pos:
        raise TopologyError(f"unknown source node {source}")
    if source in set(excluded_nodes):
        raise TopologyError(f"source node {source} is excluded")
    link_ok = up_links if isinstance(up_links, np.ndarray) and up_links.dtype == bool else t.link_mask(up_links)
    node_ok = ~t.node_mask(excluded_nodes)
    dist = reachable_mask_dist(t, link_ok, node_ok, t.node_pos[source])
    return frozenset(t.nodes[i] for i in np.flatnonzero(dist >= 0))


def reachable_mask_dist(t: Topology, link_ok: np.ndarray, node_ok: np.ndarray, source_pos: int) -> np.ndarray:
    """Position-level BFS distances (-1 when unreachable)."""
    return kernels.bfs_distances(t.indptr, t.nbr, t.nbr_link, t.src, t.dst,
                                 np.ascontiguousarray(link_ok, dtype=np.bool_),
                                 np.ascontiguousarray(node_ok, dtype=np.bool_), int(source_pos))
