"""Acceptance criteria A1-A10.

The desk experiments (A1-A4) train the shipped configs in full: 20 runs per
setting, about twenty minutes on one core.  Each test records one PASS/FAIL
line that is printed in the terminal summary.
"""
import json
import os
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest

from netdefrl.adversary import AttackConfig, craft_poison_q
from netdefrl.agents.ddqn import ddqn_targets
from netdefrl.agents.replay import PerBuffer
from netdefrl.defence import DefenceConfig, invert
from netdefrl.environment import Action, ActionKind, Experience, RewardParams, reward
from netdefrl.harness.experiment import ExperimentConfig, run_experiment
from netdefrl.topology import GeneratorSpec, generate_topology, reachable_set

from cases import REWARD_CASES
from conftest import REPO, line
from gradcheck import ARCHITECTURES, layer_sizes, max_relative_error
from linear_cases import best_flip_sets, make_case
from oracles import closure, fixed_batches, hand_targets, table_agent
from verdicts import record

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    """Runs a shipped desk config once per session, keyed by name."""
    cache = {}
    root = tmp_path_factory.mktemp("acceptance")

    def get(name):
        if name not in cache:
            cfg = ExperimentConfig.load(os.path.join(REPO, "configs", f"{name}.json"))
            cfg.output_dir = str(root / name)
            start = time.perf_counter()
            res = run_experiment(cfg)
            cache[name] = (res, time.perf_counter() - start)
        return cache[name][0]

    return get


def fmt(s):
    return (f"avg_preserved={s.avg_preserved:.2f} compromised={s.pct_compromised:.0f}% "
            f"fewer={s.pct_fewer_preserved:.0f}% no_impact={s.pct_no_impact:.0f}%")


def test_a1_clean_training_optimality(desk_runs):
    clean = desk_runs("desk_clean")
    first = [r for r in clean.runs if r.seed < 10]
    hits = sum(r.preserved_nodes == clean.summary.baseline_preserved and not r.critical_compromised for r in first)
    minutes = sum(r.wall_time for r in first) / 60
    ok = len(first) == 10 and hits >= 8 and minutes < 10
    assert record("A1", ok, f"{hits}/10 seeds reach the optimum of {clean.summary.baseline_preserved} "
                            f"preserved nodes in {minutes:.1f} min")


def test_a2_attack_effectiveness(desk_runs):
    clean, attacked = desk_runs("desk_clean").summary, desk_runs("desk_attack").summary
    rise = attacked.pct_compromised - clean.pct_compromised
    ok = rise >= 30 and attacked.avg_preserved < clean.avg_preserved
    assert record("A2", ok, f"compromise +{rise:.0f} points; clean {fmt(clean)} | attacked {fmt(attacked)}")


def test_a3_defence_effectiveness(desk_runs):
    attacked = desk_runs("desk_attack").summary.pct_compromised
    parts, ok = [], True
    for limit in (1, 2, 3):
        s = desk_runs(f"desk_attack_defence_L{limit}").summary
        ok &= s.pct_compromised <= attacked / 2
        parts.append(f"L{limit} {s.pct_compromised:.0f}%")
    assert record("A3", ok, f"attack-only {attacked:.0f}% compromised; with defence " + ", ".join(parts)
                            + f" (bound {attacked / 2:.0f}%)")


def test_a4_no_attack_harmlessness(desk_runs):
    clean, defended = desk_runs("desk_clean").summary, desk_runs("desk_defence_only").summary
    gap = clean.avg_preserved - defended.avg_preserved
    ok = abs(gap) <= 1.0
    assert record("A4", ok, f"clean {clean.avg_preserved:.2f} vs defence-only {defended.avg_preserved:.2f} "
                            f"preserved (gap {gap:.2f}, bound 1)")


def test_a5_inversion_identity():
    restored = 0
    for seed in range(100):
        limit = 1 + seed % 3
        topo, s_next, scorer, l_fp, l_fn, fp, fn = make_case(seed, limit)
        e = Experience(np.zeros_like(s_next), 0, s_next, 0.0)
        tampered, rec = craft_poison_q(e, AttackConfig(topo, l_fp, l_fn, limit, scorer, reward_mode="copy"))
        bits = tampered.s_next[:topo.n_nodes]
        up, down, unique = best_flip_sets(scorer, tampered.s_next, np.flatnonzero(bits == 0),
                                          np.flatnonzero(bits == 1), limit, lowest=False)
        fixed = invert(tampered, DefenceConfig(limit, scorer=scorer, topology=topo, reward_mode="copy"))
        restored += (rec.flipped_to_compromised == fp and rec.flipped_to_uncompromised == fn and unique
                     and up == fn and down == fp and len(fixed) == 1
                     and np.array_equal(fixed[0].s_next, s_next))
    assert record("A5", restored == 100, f"{restored}/100 constructed cases restored exactly")


def test_a6_reward_cases():
    worst, branches = 0.0, set()
    for n, alpha, beta, rc, rm, t, u, c, kind, crit, valid, expected in REWARD_CASES:
        got = reward(line(n), RewardParams(alpha, beta, rc, rm), t, u, c,
                     Action(kind, None if kind is ActionKind.NOOP else 1), crit, valid)
        worst = max(worst, abs(got - expected))
        if expected == -1.0:
            branches.add("critical" if crit else "invalid")
    ok = len(REWARD_CASES) >= 20 and worst <= 1e-12 and branches == {"critical", "invalid"}
    assert record("A6", ok, f"{len(REWARD_CASES)} cases, max error {worst:.1e}, -1 branches {sorted(branches)}")


def test_a7_gradient_check():
    worst, where, checked = 0.0, None, 0
    for arch in ARCHITECTURES:
        for head in ("q", "actor_critic"):
            for seed in range(10):
                err, n = max_relative_error(layer_sizes(arch, head), head, seed)
                checked += n
                if err > worst:
                    worst, where = err, f"{arch[0]}-{'x'.join(map(str, arch[1]))}-{arch[2]} {head} seed {seed}"
    ok = worst < 1e-4
    assert record("A7", ok, f"max relative error {worst:.1e} over {checked} coordinates "
                            f"({len(ARCHITECTURES) * 2} architectures x 10 seeds; worst at {where})")


def test_a8_per_and_double_q():
    worst = 0.0
    rng = np.random.default_rng(8)
    cases = [([1.0, 3.0], 1.0)] + [(rng.uniform(0.01, 5.0, int(rng.integers(2, 12))).tolist(), 0.6)
                                   for _ in range(3)]
    for tree in (True, False):
        for prio, alpha in cases:
            buf = PerBuffer(16, alpha=alpha, use_tree=tree)
            for i in range(len(prio)):
                buf.add(Experience(np.zeros(1), 0, np.zeros(1), 0.0))
            buf.set_priorities(prio)
            expected = np.asarray(prio) ** alpha / np.sum(np.asarray(prio) ** alpha)
            idx, _, _ = buf.sample(100_000, np.random.default_rng(len(prio)))
            freq = np.bincount(idx, minlength=len(prio)) / 100_000
            worst = max(worst, float(np.abs(freq - expected).max()))
    exact = 0
    for q_main, q_target, gamma, batch in fixed_batches():
        g = gamma if gamma > 0 else 1e-300
        exact += ddqn_targets(table_agent(q_main, q_target, g), batch).tolist() == hand_targets(q_main, q_target,
                                                                                                g, batch)
    ok = worst <= 0.02 and exact == 10
    assert record("A8", ok, f"PER max frequency deviation {worst:.4f} over 100k draws; "
                            f"double-Q targets exact on {exact}/10 batches")


def test_a9_reachability():
    rng = np.random.default_rng(9)
    exact = 0
    for i in range(50):
        n = int(rng.integers(3, 13))
        links = int(rng.integers(n - 1, min(n * (n - 1) // 2, 2 * n) + 1))
        topo = generate_topology(GeneratorSpec(n, links, 1, 1, 1, 0.5, seed=i))
        up = rng.random(topo.n_links) < 0.7
        source = int(rng.integers(n))
        excluded = set(rng.choice(n, int(rng.integers(0, 3)), replace=False).tolist()) - {source}
        got = reachable_set(topo, [lid for lid, ok in zip(topo.link_ids, up) if ok], excluded, source)
        exact += got == closure(topo.nodes, topo.links, up, excluded, source)
    assert record("A9", exact == 50, f"{exact}/50 random graphs match the closure oracle")


def _cli(args, out):
    cmd = [sys.executable, "-m", "netdefrl.cli", *args, "--out", str(out)]
    subprocess.run(cmd, check=True, capture_output=True, cwd=REPO)
    return (out / "runs.csv").read_bytes()


def test_a10_cli_determinism(tmp_path):
    ac = tmp_path / "ac.json"
    doc = json.load(open(os.path.join(REPO, "configs", "desk_clean.json")))
    doc["agent"] = {"algorithm": "actor_critic", "hyper": {"hidden": [64, 64], "workers": 1},
                    "total_steps": 3000, "eval_every": 20}
    ac.write_text(json.dumps(doc))
    checks = {
        "train ddqn": ["train", "--config", "configs/desk_clean.json", "--runs", "2"],
        "attack-eval": ["attack-eval", "--config", "configs/desk_attack.json", "--runs", "1"],
        "defend-eval": ["defend-eval", "--config", "configs/desk_attack_defence_L2.json", "--runs", "1"],
        "train actor-critic": ["train", "--config", str(ac), "--runs", "2"],
    }
    same = []
    for label, args in checks.items():
        a = _cli(args, tmp_path / f"{label}-a".replace(" ", "_"))
        b = _cli(args, tmp_path / f"{label}-b".replace(" ", "_"))
        if a == b:
            same.append(label)
    ok = len(same) == len(checks)
    assert record("A10", ok, f"byte-identical runs.csv for {len(same)}/{len(checks)} commands ({', '.join(same)})")
