"""Config-driven experiments: many seeded trainings, one greedy evaluation each."""
from __future__ import annotations

import json
import logging
import os
import time
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources

from ..adversary import (REWARD_MODES, TARGET_STYLES, AttackConfig, AttackInterceptor, RandomInterceptor,
                         derive_candidates, train_surrogate)
from ..agents import ALGORITHMS, ActorCriticConfig, DdqnConfig, Schedule, greedy_rollout, train
from ..defence import DefenceConfig, DefenceInterceptor
from ..environment import EnvConfig, NetworkDefenceEnv
from ..scoring import scorer_for
from ..topology import GeneratorSpec, Topology, generate_topology, load_topology
from .oracle import brute_force_optimum, oracle_config

log = logging.getLogger(__name__)

OUTCOMES = ("no_impact", "fewer_preserved", "compromised")


class ConfigError(ValueError):
    pass


def _pick(cls, block: dict, where: str):
    known = {f.name for f in fields(cls)}
    extra = set(block) - known
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    try:
        return cls(**block)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


# --------------------------------------------------------------------------
# config blocks
# --------------------------------------------------------------------------

@dataclass
class AgentBlock:
    algorithm: str = "ddqn"
    hyper: dict = field(default_factory=dict)
    total_steps: int = 20_000
    eval_every: int = 100
    eval_episodes: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"agent.algorithm must be one of {ALGORITHMS}")
        if self.eval_episodes < 1:
            raise ConfigError("agent.eval_episodes must be >= 1")

    def agent_config(self):
        cls = DdqnConfig if self.algorithm == "ddqn" else ActorCriticConfig
        return _pick(cls, self.hyper, "agent.hyper")

    def schedule(self) -> Schedule:
        return Schedule(total_steps=self.total_steps, eval_every=self.eval_every,
                        eval_episodes=self.eval_episodes)


@dataclass
class AttackBlock:
    """``style`` is ``crafted`` (scored flips) or ``random``.

    ``model`` chooses the scorer for crafted flips: ``white_box`` uses the
    defender's live network, ``surrogate`` a DDQN trained on the observable
    subgraph.  Candidate lists are explicit (``l_fp``/``l_fn``) or derived
    from a surrogate when ``derive`` is given.
    """

    style: str = "crafted"
    model: str = "white_box"
    limit: int = 2
    target_style: str = "q_min"
    reward_mode: str = "recompute"
    l_fp: list = None
    l_fn: list = None
    derive: dict = None
    surrogate_steps: int = None
    k: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.style not in ("crafted", "random"):
            raise ConfigError("attack.style must be 'crafted' or 'random'")
        if self.model not in ("white_box", "surrogate"):
            raise ConfigError("attack.model must be 'white_box' or 'surrogate'")
        if self.limit < 1 or self.k < 0:
            raise ConfigError("attack.limit must be >= 1 and attack.k >= 0")
        if self.target_style not in TARGET_STYLES:
            raise ConfigError(f"attack.target_style must be one of {TARGET_STYLES}")
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"attack.reward_mode must be one of {REWARD_MODES}")
        if self.style == "crafted" and self.derive is None and (self.l_fp is None or self.l_fn is None):
            raise ConfigError("crafted attack needs l_fp and l_fn, or a derive block")
        if self.derive is not None:
            extra = set(self.derive) - {"episodes", "top_fp", "top_fn"}
            if extra:
                raise ConfigError(f"attack.derive: unknown keys {sorted(extra)}")
            if int(self.derive.get("episodes", 1)) < 1:
                raise ConfigError("attack.derive.episodes must be >= 1")


@dataclass
class DefenceBlock:
    limit_estimate: int = 2
    keep_policy: str = "corrected_only"
    strict_improvement: bool = True
    reward_mode: str = "recompute"


@dataclass
class ExperimentConfig:
    topology: dict
    environment: dict = field(default_factory=dict)
    agent: dict = field(default_factory=dict)
    attack: dict = None
    defence: dict = None
    runs: int = 20
    base_seed: int = 0
    output_dir: str = "out"
    name: str = "experiment"
    baseline: int = None
    save_models: bool = False
    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        self.env_config()
        self.agent_block()
        self.attack_block()
        self.defence_block()

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str = ".") -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("experiment config must be a JSON object")
        if "topology" not in doc:
            raise ConfigError("missing 'topology' block")
        return _pick(cls, {**doc, "base_dir": base_dir}, "experiment")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(doc, os.path.dirname(os.path.abspath(path)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def env_config(self) -> EnvConfig:
        try:
            return EnvConfig.from_dict(self.environment)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"environment: {exc}") from exc

    def agent_block(self) -> AgentBlock:
        block = _pick(AgentBlock, self.agent, "agent")
        block.agent_config()
        return block

    def attack_block(self) -> AttackBlock | None:
        return None if self.attack is None else _pick(AttackBlock, self.attack, "attack")

    def defence_block(self) -> DefenceBlock | None:
        if self.defence is None:
            return None
        block = _pick(DefenceBlock, self.defence, "defence")
        _pick(DefenceConfig, {k: v for k, v in asdict(block).items()}, "defence")
        return block

    def load_topology(self) -> Topology:
        return resolve_topology(self.topology, self.base_dir)


def resolve_topology(block: dict, base_dir: str = ".") -> Topology:
    """``{"file": path}``, ``{"builtin": name}`` or ``{"generator": {...}}``."""
    if not isinstance(block, dict) or len(block) != 1:
        raise ConfigError("topology block needs exactly one of 'file', 'builtin', 'generator'")
    (kind, value), = block.items()
    if kind == "file":
        path = value if os.path.isabs(value) else os.path.join(base_dir, value)
        try:
            with open(path, encoding="utf-8") as fh:
                return load_topology(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read topology file {path}: {exc.strerror}") from exc
    if kind == "builtin":
        try:
            text = resources.files("netdefrl").joinpath("data", f"{value}.json").read_text(encoding="utf-8")
        except FileNotFoundError as exc:
            raise ConfigError(f"no built-in topology named {value!r}") from exc
        return load_topology(text)
    if kind == "generator":
        return generate_topology(_pick(GeneratorSpec, value, "topology.generator"))
    raise ConfigError(f"unknown topology source {kind!r}")


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------

@dataclass
class RunResult:
    seed: int
    preserved_nodes: int
    critical_compromised: bool
    actions: list
    wall_time: float = 0.0
    curve: list = field(default_factory=list, repr=False)


@dataclass
class MetricsSummary:
    pct_no_impact: float
    pct_fewer_preserved: float
    pct_compromised: float
    avg_preserved: float
    baseline_preserved: int
    runs: int
    failed: int = 0


def classify_outcome(run: RunResult, baseline_preserved: int) -> str:
    if run.critical_compromised:
        return "compromised"
    if run.preserved_nodes < baseline_preserved:
        return "fewer_preserved"
    return "no_impact"


def summarize(runs, baseline_preserved: int, failed: int = 0) -> MetricsSummary:
    n = len(runs)
    counts = dict.fromkeys(OUTCOMES, 0)
    for r in runs:
        counts[classify_outcome(r, baseline_preserved)] += 1
    pct = {k: (100.0 * v / n if n else 0.0) for k, v in counts.items()}
    avg = sum(r.preserved_nodes for r in runs) / n if n else 0.0
    return MetricsSummary(pct["no_impact"], pct["fewer_preserved"], pct["compromised"], avg,
                          int(baseline_preserved), n, failed)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list
    summary: MetricsSummary
    failed: list = field(default_factory=list)
    candidates: dict = None
    oracle_actions: list = None


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

def prepare_candidates(cfg: ExperimentConfig, topology: Topology):
    """Resolve the attack's FP/FN lists (and surrogate, when one is needed)."""
    block = cfg.attack_block()
    if block is None or block.style != "crafted":
        return None, None
    env_cfg = cfg.env_config()
    agent = cfg.agent_block()
    surrogate = None
    if block.derive is not None or block.model == "surrogate":
        sched = agent.schedule()
        if block.surrogate_steps is not None:
            sched = replace(sched, total_steps=block.surrogate_steps)
        hyper = agent.agent_config() if agent.algorithm == "ddqn" else DdqnConfig()
        surrogate = train_surrogate(topology, hyper, seed=block.seed, env_config=env_cfg, schedule=sched)
    if block.derive is not None:
        d = block.derive
        env = NetworkDefenceEnv(topology, replace(env_cfg, seed=block.seed))
        l_fp, l_fn = derive_candidates(env, surrogate.scorer(), int(d.get("episodes", 50)),
                                       int(d.get("top_fp", 4)), int(d.get("top_fn", 2)), seed=block.seed)
    else:
        l_fp, l_fn = tuple(block.l_fp), tuple(block.l_fn)
    return {"l_fp": list(l_fp), "l_fn": list(l_fn)}, surrogate


def build_interceptors(cfg: ExperimentConfig, topology: Topology, candidates, surrogate, seed: int):
    """Factory handed to :func:`train`; receives the fresh agent."""
    attack = cfg.attack_block()
    defence = cfg.defence_block()
    reward = cfg.env_config().reward

    def factory(agent):
        stages = []
        if attack is not None:
            if attack.style == "random":
                stages.append(RandomInterceptor(topology, attack.k, seed=seed + 7919, reward=reward))
            else:
                scorer = scorer_for(agent.net) if attack.model == "white_box" else surrogate.scorer()
                stages.append(AttackInterceptor(AttackConfig(
                    topology, candidates["l_fp"], candidates["l_fn"], attack.limit, scorer,
                    attack.target_style, reward, attack.reward_mode)))
        if defence is not None:
            stages.append(DefenceInterceptor(DefenceConfig(
                defence.limit_estimate, defence.keep_policy, defence.strict_improvement,
                scorer_for(agent.net), topology, reward, defence.reward_mode)))
        return stages

    return factory


def run_one(cfg: ExperimentConfig, topology: Topology, seed: int, candidates=None, surrogate=None,
            model_dir: str | None = None) -> RunResult:
    start = time.perf_counter()
    agent = cfg.agent_block()
    env_cfg = cfg.env_config()
    res = train(agent.algorithm, topology, env_cfg, agent.agent_config(), agent.schedule(),
                build_interceptors(cfg, topology, candidates, surrogate, seed), seed=seed)
    roll = greedy_rollout(res.model, NetworkDefenceEnv(topology, oracle_config(env_cfg)), seed=seed)
    if model_dir is not None:
        os.makedirs(model_dir, exist_ok=True)
        res.model.save(os.path.join(model_dir, f"run_{seed}.npz"))
    curve = [(r.episode, r.ret, r.preserved, r.critical_compromised) for r in res.curve]
    return RunResult(seed, roll.preserved, roll.critical_compromised, [str(a) for a in roll.actions],
                     time.perf_counter() - start, curve)


def baseline_for(cfg: ExperimentConfig, topology: Topology):
    if cfg.baseline is not None:
        return int(cfg.baseline), None
    opt = brute_force_optimum(topology, cfg.env_config())
    return opt.preserved, [str(a) for a in opt.actions]


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """Train ``cfg.runs`` agents with seeds ``base_seed + i`` and summarise them.

    A run that raises is logged, counted as failed and left out of the
    summary.
    """
    topology = cfg.load_topology()
    baseline, oracle_actions = baseline_for(cfg, topology)
    candidates, surrogate = prepare_candidates(cfg, topology)
    model_dir = os.path.join(cfg.output_dir, "models") if cfg.save_models else None
    runs, failed = [], []
    for i in range(cfg.runs):
        seed = cfg.base_seed + i
        try:
            runs.append(run_one(cfg, topology, seed, candidates, surrogate, model_dir))
        except Exception as exc:  # noqa: BLE001 - a failed run must not sink the experiment
            msg = f"run with seed {seed} failed: {type(exc).__name__}: {exc}"
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            log.warning(msg)
            failed.append({"seed": seed, "error": f"{type(exc).__name__}: {exc}"})
    result = ExperimentResult(cfg, runs, summarize(runs, baseline, len(failed)), failed, candidates,
                              oracle_actions)
    if write:
        from .report import write_all
        write_all(result, cfg.output_dir)
    return result
