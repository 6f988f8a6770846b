import numpy as np
import pytest
from hypothesis import given, strategies as st

from mixedrl import (ContractError, CrissCross, Dataset, FqiConfig, OccupancyBehavior, QLearnConfig, TabularQ,
                     batch_fqi_asg, build_truncated_mdp, collect_dataset, fqi_fit, policy_value, q_learning,
                     truncated_geometric, value_iteration)
from mixedrl.baselines import RandomPolicy
from mixedrl.core import Transition
from mixedrl.learners import squared_loss
from mixedrl.seeding import derive_rng

from conftest import random_finite_env
from oracles import bellman_backup, exact_frequency_dataset, q_dict_to_array, quarter_kernel_env, zero_q


def test_gamma_zero_fit_is_cost(crisscross, rng):
    data = collect_dataset(crisscross, OccupancyBehavior(lambda s, x: 0, 0.9, 1.0), 300, rng)
    f0 = TabularQ.zeros(crisscross, (20, 20, 20), 0.0, "random", rng)
    f1 = fqi_fit(f0, data, 0.0)
    got = f1.q(data.s, data.x)[np.arange(len(data)), data.a]
    np.testing.assert_array_equal(got, data.r)


def test_exact_frequencies_give_bellman_backups():
    rng = np.random.default_rng(4)
    env = quarter_kernel_env(rng)
    box, gamma = (2,), 0.9
    data = exact_frequency_dataset(env)
    f = TabularQ.zeros(env, box, gamma)
    q = zero_q(env, box)
    for _ in range(5):
        f = fqi_fit(f, data, gamma)
        q = bellman_backup(env, q, box, gamma)
        assert np.abs(f.values - q_dict_to_array(env, q, box)).max() < 1e-9


def test_single_sample_updates_one_cell(crisscross, rng):
    f0 = TabularQ.zeros(crisscross, (4, 4, 4), 0.9, "random", rng)
    t = Transition(crisscross.state(0), (1, 2, 3), 1, 6.0, crisscross.state(2), crisscross.g(0, [1, 2, 3], 1, 2))
    data = Dataset.from_transitions(crisscross, [t])
    f1 = fqi_fit(f0, data, 0.9)
    expect = 6.0 + 0.9 * f0.v([2], [t.x_next])[0]
    assert f1.values[0, 1, 2, 3, 1] == pytest.approx(min(expect, f0.v_max))
    mask = np.ones_like(f1.values, bool)
    mask[0, 1, 2, 3, 1] = False
    np.testing.assert_array_equal(f1.values[mask], f0.values[mask])


def test_fit_rejects_empty(crisscross, rng):
    data = collect_dataset(crisscross, OccupancyBehavior(lambda s, x: 0), 3, rng)
    with pytest.raises(ContractError):
        fqi_fit(TabularQ.zeros(crisscross, (3, 3, 3), 0.9), data.select(np.zeros(3, bool)), 0.9)


def test_fit_clips_to_vmax(crisscross, rng):
    data = collect_dataset(crisscross, OccupancyBehavior(lambda s, x: 0, 0.9, 1.0), 200, rng)
    f0 = TabularQ.zeros(crisscross, (5, 5, 5), 0.9)
    f0.values[:] = 10 * f0.v_max
    f1 = fqi_fit(f0, data, 0.9)
    assert f1.values.max() <= 10 * f0.v_max
    touched = f1.values != f0.values
    assert np.all(f1.values[touched] <= f0.v_max) and touched.any()


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.99))
def test_fit_minimises_squared_loss(seed, gamma):
    rng = np.random.default_rng(seed)
    env = random_finite_env(rng, S=2, L=4, A=2)
    data = collect_dataset(env, OccupancyBehavior(lambda s, x: 0, 0.8, 1.0), 40, rng)
    f0 = TabularQ.zeros(env, (3,), gamma, "random", rng)
    f1 = fqi_fit(f0, data, gamma)
    # targets lie in [0, v_max] here, so clipping never binds
    base = squared_loss(f1, f0, data, gamma)
    for _ in range(5):
        g = f1.copy()
        g.values += rng.normal(0, 0.5, size=g.values.shape)
        assert squared_loss(g, f0, data, gamma) >= base - 1e-12


@given(st.integers(0, 2**31 - 1))
def test_sup_change_contracts_on_fixed_data(seed):
    rng = np.random.default_rng(seed)
    env = random_finite_env(rng, S=2, L=4, A=2)
    data = collect_dataset(env, OccupancyBehavior(lambda s, x: 0, 0.8, 1.0), 30, rng)
    _, diag = batch_fqi_asg(data, FqiConfig(K=15, m=0, gamma=0.9, box=(3,), init="random"), env, rng)
    d = diag.sup_change
    assert all(b <= 0.9 * a + 1e-9 for a, b in zip(d[1:], d[2:]))


def test_uncovered_cells_keep_init(crisscross, rng):
    data = collect_dataset(crisscross, OccupancyBehavior(lambda s, x: 0, 0.0, 1.0), 50, rng)
    assert np.all(data.x == 0)
    _, diag = batch_fqi_asg(data, FqiConfig(K=3, m=0, gamma=0.9, box=(4, 4, 4), init="random"), crisscross,
                            np.random.default_rng(3))
    init, final = diag.init.values, diag.final.values
    changed = np.argwhere(init != final)
    visited = {(0, *x) for x in data.x_next.tolist()} | {(0, 0, 0, 0)}
    assert {tuple(c[:4]) for c in changed} <= visited
    assert diag.covered_cells[0] <= 2


def test_fqi_converges_to_qstar_under_exact_coverage():
    rng = np.random.default_rng(6)
    env = quarter_kernel_env(rng, S=3, L=4)
    gamma, K = 0.8, 60
    data = exact_frequency_dataset(env)
    _, diag = batch_fqi_asg(data, FqiConfig(K=K, m=0, gamma=gamma, box=(3,)), env)
    mdp = build_truncated_mdp(env, (3,), gamma)
    q_star = value_iteration(mdp, 1e-13).q
    v_max = env.cost_bound((3,)) / (1 - gamma)
    assert np.abs(diag.final.values - q_star).max() <= gamma**K * v_max + 1e-9


def test_fqi_asg_near_optimal_on_crisscross():
    env = CrissCross()
    box, gamma = (20, 20, 20), 0.95
    mdp = build_truncated_mdp(env, box, gamma)
    v_star = value_iteration(mdp, 1e-6).v_star
    beh = OccupancyBehavior(RandomPolicy(2, derive_rng(0, "beh")), gamma, 1.0)
    data = collect_dataset(env, beh, 2000, derive_rng(0, "data"))
    cfg = FqiConfig(K=30, m=32, gamma=gamma, box=box, beta=truncated_geometric(0.3, box))
    policy, diag = batch_fqi_asg(data, cfg, env, derive_rng(0, "fqi"))
    assert len(diag.sup_change) == 30 and diag.dataset_size[0] == 2000 * 33
    assert (policy_value(mdp, policy) - v_star) / v_star <= 0.05


def test_greedy_ties_lowest_index(crisscross):
    f = TabularQ.zeros(crisscross, (2, 2, 2), 0.9)
    assert np.all(f.greedy_policy().actions == 0)
    f.values[..., 0] = 1.0
    assert np.all(f.greedy_policy().actions == 1)


@given(st.integers(0, 2**31 - 1))
def test_identical_tables_identical_policies(seed):
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, 3, size=(1, 3, 3, 3, 2)).astype(float)
    a = TabularQ(vals, (2, 2, 2), 10.0).greedy_policy().actions
    b = TabularQ(vals.copy(), (2, 2, 2), 10.0).greedy_policy().actions
    np.testing.assert_array_equal(a, b)


def test_qtable_serialisation_order(crisscross, rng):
    f = TabularQ.zeros(crisscross, (1, 2, 3), 0.9, "random", rng)
    d = f.to_dict()
    assert d["format"] == "mixedrl.qtable/1"
    # row-major: last axis (action) varies fastest
    assert d["values"][1] == f.values[0, 0, 0, 0, 1]
    assert d["values"][2] == f.values[0, 0, 0, 1, 0]
    g = TabularQ.from_dict(d, crisscross)
    np.testing.assert_array_equal(g.values, f.values)


def test_config_contracts():
    with pytest.raises(ContractError):
        FqiConfig(K=0)
    with pytest.raises(ContractError):
        FqiConfig(gamma=1.0)
    with pytest.raises(ContractError):
        QLearnConfig(epsilon=1.5)
    with pytest.raises(ContractError):
        QLearnConfig(alpha=2.0)


# ---------------------------------------------------------------------------
# Q-learning


def test_alpha_zero_freezes_table(crisscross):
    cfg = QLearnConfig(steps=300, m=4, alpha=0.0, box=(5, 5, 5), init="random")
    q, _ = q_learning(crisscross, cfg, truncated_geometric(0.3, (5, 5, 5)), np.random.default_rng(1))
    init = TabularQ.zeros(crisscross, (5, 5, 5), 0.95, "random", np.random.default_rng(1))
    np.testing.assert_array_equal(q.values, init.values)


def test_single_update_is_bellman_backup():
    # deterministic 2-code chain; one step with alpha=1 from each state
    kernel = np.zeros((2, 2, 2))
    kernel[0, 0, 1] = kernel[0, 1, 0] = kernel[1, 0, 0] = kernel[1, 1, 1] = 1
    g = np.zeros((2, 3, 2, 2), int)
    for s in range(2):
        for x in range(3):
            g[s, x, :, :] = (x + s) % 3
    rng = np.random.default_rng(0)
    from mixedrl import FiniteMixedEnv
    env = FiniteMixedEnv(kernel, g, rng.uniform(0, 3, size=(2, 3, 2)))
    gamma = 0.9
    cfg = QLearnConfig(steps=1, m=0, alpha=1.0, epsilon=0.0, gamma=gamma, box=(2,), init="random")
    init = TabularQ.zeros(env, (2,), gamma, "random", np.random.default_rng(5)).values
    q0 = {(s, (x,), a): init[s, x, a] for s in range(2) for x in range(3) for a in range(2)}
    backup = q_dict_to_array(env, bellman_backup(env, q0, (2,), gamma), (2,))
    for s in range(2):
        for x in range(3):
            q, _ = q_learning(env, cfg, None, np.random.default_rng(5), start=(s, np.array([x])))
            a = int(np.argmin(init[s, x]))
            assert q.values[s, x, a] == pytest.approx(backup[s, x, a], abs=1e-12)
            mask = np.ones_like(init, bool)
            mask[s, x, a] = False
            np.testing.assert_array_equal(q.values[mask], init[mask])


def test_virtual_updates_touch_more_cells(crisscross):
    box = (8, 8, 8)
    beta = truncated_geometric(0.3, box)
    q0, _ = q_learning(crisscross, QLearnConfig(steps=200, m=0, box=box), beta, np.random.default_rng(2))
    q8, _ = q_learning(crisscross, QLearnConfig(steps=200, m=8, box=box), beta, np.random.default_rng(2))
    assert np.count_nonzero(q8.values) > 3 * np.count_nonzero(q0.values)


def test_learning_curve_and_determinism(crisscross):
    cfg = QLearnConfig(steps=600, m=2, box=(6, 6, 6), eval_every=200)
    calls = []
    evaluate = lambda pol: calls.append(1) or float(len(calls))
    q1, curve = q_learning(crisscross, cfg, None, np.random.default_rng(3), evaluate)
    q2, _ = q_learning(crisscross, cfg, None, np.random.default_rng(3))
    assert [t for t, _ in curve] == [200, 400, 600]
    np.testing.assert_array_equal(q1.values, q2.values)
