import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netdefrl.agents import run_pipeline
from netdefrl.agents.actor_critic import (ActorCriticAgent, ActorCriticConfig, ac_gradients, ac_update,
                                          n_step_returns)
from netdefrl.agents.ddqn import DdqnAgent, DdqnConfig, ddqn_targets, ddqn_train_step, select_action
from netdefrl.agents.pipeline import greedy_rollout
from netdefrl.agents.replay import EmptyBufferError, PerBuffer
from netdefrl.agents.training import Schedule, train
from netdefrl.harness.oracle import brute_force_optimum
from netdefrl.environment import Action, ActionKind, EnvConfig, Experience, NetworkDefenceEnv
from netdefrl.neuralnet import log_softmax

from conftest import line
from oracles import exp, fixed_batches, hand_targets, table_agent


# -- prioritised replay -------------------------------------------------------

def frequencies(buf, draws, seed=0):
    idx, _, _ = buf.sample(draws, np.random.default_rng(seed))
    return np.bincount(idx, minlength=len(buf)) / draws


@pytest.mark.parametrize("tree", [True, False])
def test_per_two_entry_frequencies(tree):
    buf = PerBuffer(8, alpha=1.0, use_tree=tree)
    for i in range(2):
        buf.add(exp([i], 0, [i], 0.0))
    buf.set_priorities([1.0, 3.0])
    assert np.all(np.abs(frequencies(buf, 100_000) - [0.25, 0.75]) <= 0.02)


@pytest.mark.parametrize("tree", [True, False])
def test_per_alpha_zero_is_uniform(tree):
    buf = PerBuffer(8, alpha=0.0, use_tree=tree)
    for i in range(5):
        buf.add(exp([i], 0, [i], 0.0))
    buf.set_priorities([1, 10, 100, 0.5, 3])
    assert np.all(np.abs(frequencies(buf, 100_000) - 0.2) <= 0.02)


def test_per_weights_closed_form():
    buf = PerBuffer(4, alpha=1.0)
    for i in range(2):
        buf.add(exp([i], 0, [i], 0.0))
    buf.set_priorities([1.0, 3.0])
    idx, _, w = buf.sample(200, np.random.default_rng(0), beta=1.0)
    assert set(np.round(w[idx == 0], 12)) == {1.0}
    assert set(np.round(w[idx == 1], 12)) == {round(1 / 3, 12)}


def test_per_ring_and_priorities():
    buf = PerBuffer(3)
    for i in range(5):
        buf.add(exp([i], i, [i], float(i)))
    assert len(buf) == 3 and [e.a for e in buf.items] == [3, 4, 2]
    s, a, s2, r, term = buf.columns(np.array([0, 2]))
    assert a.tolist() == [3, 2] and r.tolist() == [3.0, 2.0]
    buf.update_priorities([1], [5.0])
    assert buf.max_priority == pytest.approx(5.001)
    assert np.all(buf.scaled[:3] > 0)
    with pytest.raises(EmptyBufferError):
        PerBuffer(2).sample(1, np.random.default_rng(0))


@given(st.lists(st.floats(0.0, 50.0), min_size=1, max_size=40), st.floats(0.0, 1.0))
def test_per_probabilities_follow_priorities(prio, alpha):
    buf = PerBuffer(64, alpha=alpha)
    for i in range(len(prio)):
        buf.add(exp([i], 0, [i], 0.0))
    buf.set_priorities(prio)
    p = np.maximum(prio, buf.floor) ** alpha
    assert np.allclose(buf.probabilities(), p / p.sum(), rtol=1e-12)


# -- double-Q targets ---------------------------------------------------------

def test_ddqn_targets_hand_example():
    agent = table_agent([[1.0, 2.0]], [[0.3, 0.7]], 0.9)
    y = ddqn_targets(agent, [exp([1.0], 0, [1.0], 0.5)])
    assert y[0] == pytest.approx(1.13, abs=1e-15)
    assert ddqn_targets(agent, [exp([1.0], 0, [1.0], -1.0, terminal=True)])[0] == -1.0
    zero = table_agent([[1.0, 2.0]], [[0.3, 0.7]], 1e-300)
    assert ddqn_targets(zero, [exp([1.0], 0, [1.0], 0.25)])[0] == 0.25


def test_ddqn_targets_fixed_batches_exact():
    for q_main, q_target, gamma, batch in fixed_batches():
        agent = table_agent(q_main, q_target, gamma if gamma > 0 else 1e-300)
        got = ddqn_targets(agent, batch)
        want = hand_targets(q_main, q_target, gamma if gamma > 0 else 1e-300, batch)
        assert got.tolist() == want


def test_ddqn_targets_ignore_q_at_s():
    agent = table_agent([[1.0, 2.0], [5.0, -3.0]], [[0.3, 0.7], [0.1, 0.2]], 0.9)
    a = ddqn_targets(agent, [exp([1, 0], 0, [0, 1], 0.5)])
    b = ddqn_targets(agent, [exp([0, 1], 1, [0, 1], 0.5)])
    assert a[0] == b[0] == 0.5 + 0.9 * 0.1


# -- action selection ---------------------------------------------------------

def test_greedy_ties_take_lowest_index():
    agent = table_agent([[1.0, 3.0, 3.0, 2.0]], [[0, 0, 0, 0]], 0.9)
    assert select_action(agent, np.array([1.0])) == 1


def test_epsilon_one_is_uniform():
    agent = table_agent([[0.0, 9.0, 0.0, 0.0, 0.0, 0.0]], [[0] * 6], 0.9)
    rng = np.random.default_rng(5)
    counts = np.bincount([select_action(agent, np.array([1.0]), "epsilon", rng, 1.0) for _ in range(10_000)],
                         minlength=6)
    chi2 = float(((counts - 10_000 / 6) ** 2 / (10_000 / 6)).sum())
    assert chi2 < 20.515          # 0.999 quantile with 5 degrees of freedom


# -- training step ------------------------------------------------------------

def small_config(**kw):
    base = dict(hidden=(16,), lr=1e-3, epsilon_decay_steps=500, target_sync=50, buffer_capacity=2000,
                batch_size=16)
    base.update(kw)
    return DdqnConfig(**base)


def losses(interceptors=(), steps=120, seed=3):
    topo = line(5)
    agent = DdqnAgent(10 - 1, 2 * 5 + 1, small_config(), seed=seed)
    agent.attach(NetworkDefenceEnv(topo, EnvConfig(seed=seed, t_max=10)))
    return [ddqn_train_step(agent, interceptors) for _ in range(steps)], agent


def test_train_step_deterministic_and_identity_interceptor():
    a, agent_a = losses()
    b, _ = losses()
    c, agent_c = losses([lambda e: e])
    assert a == b == c
    assert np.array_equal(agent_a.main.flat, agent_c.main.flat)
    assert a[0] is None or isinstance(a[0], float)


def test_train_step_syncs_target():
    _, agent = losses(steps=50)
    assert np.array_equal(agent.main.flat, agent.target.flat)
    _, agent = losses(steps=51)
    assert not np.array_equal(agent.main.flat, agent.target.flat)


def test_pipeline_order_and_channel():
    calls = []

    def first(e):
        calls.append("first")
        return e.with_next(e.s_next + 1, 1.0)

    class Training:
        channel = False

        def __call__(self, e):
            calls.append("second")
            return [e, e.with_next(e.s_next * 0, 2.0)]

    out, seen = run_pipeline([first, Training()], exp([0.0], 0, [1.0], 0.0))
    assert calls == ["first", "second"]
    assert [e.r for e in out] == [1.0, 2.0] and seen.r == 1.0 and seen.s_next[0] == 2.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ddqn_learns_to_cut_a_line(seed):
    # 3 and 4 start compromised; isolating 3 contains 4 and keeps {0, 1, 2}
    topo = line(5, compromised=(3, 4))
    best = brute_force_optimum(topo, EnvConfig(t_max=10), max_depth=3)
    cfg = small_config(hidden=(64,), epsilon_decay_steps=1500, target_sync=200, buffer_capacity=5000, batch_size=32)
    res = train("ddqn", topo, EnvConfig(t_max=10), cfg, Schedule(3000, 10), seed=seed)
    roll = greedy_rollout(res.model, NetworkDefenceEnv(topo, EnvConfig(t_max=10, detection_rate=1.0)), seed=0)
    assert best.preserved == 3
    assert roll.preserved == best.preserved and not roll.critical_compromised
    assert Action(ActionKind.ISOLATE, 3) in roll.actions


def test_best_checkpoint_scores_mean_over_eval_episodes():
    topo, cfg = line(5, compromised=(3, 4)), EnvConfig(t_max=6, seed=99)
    sched = Schedule(400, 5, eval_seed=1000, eval_episodes=3)
    res = train("ddqn", topo, cfg, DdqnConfig(hidden=(16,), batch_size=8), sched, seed=2)
    env = NetworkDefenceEnv(topo, cfg)
    rets = [greedy_rollout(res.model, env, seed=s).perceived_ret for s in (1000, 999, 998)]
    assert max(e.score for e in res.evaluations) == pytest.approx(np.mean(rets), abs=1e-12)
    with pytest.raises(ValueError):
        Schedule(10, 1, eval_episodes=0)


def test_zero_steps_returns_initial_model():
    res = train("ddqn", line(4), schedule=Schedule(0, 1), seed=1)
    fresh = DdqnAgent(4 + 3, 2 * 4 + 1, seed=1)
    assert np.array_equal(res.model.flat, fresh.main.flat) and res.curve == []


# -- actor-critic -------------------------------------------------------------

def test_n_step_returns_hand():
    assert n_step_returns([1.0, 0.0, 2.0], 0.9, 0.0).tolist() == pytest.approx([1 + 0.81 * 2, 1.8, 2.0])
    assert n_step_returns([1.0, 0.0, 2.0], 0.9, 10.0)[0] == pytest.approx(1 + 0.81 * 2 + 0.729 * 10)


def ac_agent(n_in=3, n_act=4, **kw):
    return ActorCriticAgent(n_in, n_act, ActorCriticConfig(hidden=(8,), **kw), seed=0)


def test_single_done_step_advantage():
    agent = ac_agent()
    agent.net.flat[:] = 0.0
    _, _, returns, adv = ac_gradients(agent.net, [exp([1, 0, 1], 2, [0, 1, 1], 1.0, True)], True, agent.config)
    assert returns.tolist() == [1.0] and adv.tolist() == [1.0]


def test_zero_advantage_leaves_only_value_and_entropy_terms():
    agent = ac_agent(entropy_coef=0.0)
    net = agent.net
    rollout = [exp([1, 0, 1], 1, [0, 1, 1], 0.0)]
    v = float(net.forward(rollout[0].s)[-1])
    # reward chosen so that r + gamma * V(s') == V(s)
    r = v - agent.config.gamma * float(net.forward(rollout[0].s_next)[-1])
    rollout = [exp([1, 0, 1], 1, [0, 1, 1], r)]
    (pl, vl, _), grads, _, adv = ac_gradients(net, rollout, False, agent.config)
    assert abs(adv[0]) < 1e-12 and abs(pl) < 1e-12 and vl < 1e-24
    assert np.abs(grads).max() < 1e-10


def test_ac_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    agent = ac_agent(n_in=5, n_act=3, entropy_coef=0.05)
    net, cfg = agent.net, agent.config
    net.set_params(net.flat + rng.normal(0, 0.05, net.n_params))   # keep pre-activations off the ReLU kink
    rollout = [exp(rng.integers(0, 2, 5), int(rng.integers(3)), rng.integers(0, 2, 5), float(rng.normal()))
               for _ in range(4)]
    _, grads, returns, adv = ac_gradients(net, rollout, False, cfg)
    s = np.stack([e.s for e in rollout])
    a = np.array([e.a for e in rollout])

    def loss():
        out = net.forward(s)
        logp = log_softmax(out[:, :-1])
        ent = -(np.exp(logp) * logp).sum(axis=1)
        return (-np.mean(logp[np.arange(4), a] * adv) + cfg.value_coef * np.mean((returns - out[:, -1]) ** 2)
                - cfg.entropy_coef * np.mean(ent))

    for i in range(net.n_params):
        keep = net.flat[i]
        net.flat[i] = keep + 1e-6
        up = loss()
        net.flat[i] = keep - 1e-6
        down = loss()
        net.flat[i] = keep
        num = (up - down) / 2e-6
        assert abs(num - grads[i]) <= 1e-6 * max(1.0, abs(num))


def test_policy_sums_to_one():
    agent = ac_agent()
    p, _ = agent.net.policy_value(np.random.default_rng(1).random((5, 3)))
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_ac_update_rejects_empty_rollout():
    with pytest.raises(ValueError):
        ac_update(ac_agent(), [], True)


def test_actor_critic_single_worker_is_deterministic():
    cfg = ActorCriticConfig(hidden=(16,), workers=1)
    a = train("actor_critic", line(5), EnvConfig(t_max=8), cfg, Schedule(300, 5), seed=4)
    b = train("actor_critic", line(5), EnvConfig(t_max=8), cfg, Schedule(300, 5), seed=4)
    assert np.array_equal(a.model.flat, b.model.flat)
    assert [r.ret for r in a.curve] == [r.ret for r in b.curve]


def test_actor_critic_workers_share_the_budget():
    cfg = ActorCriticConfig(hidden=(16,), workers=3)
    res = train("actor_critic", line(5), EnvConfig(t_max=8), cfg, Schedule(200, 5), seed=4)
    assert res.agent.steps == 200
