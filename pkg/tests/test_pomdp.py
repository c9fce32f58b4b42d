import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from oracles import pomdp_policy_tree_value
from uniformdp.generators import random_mdp, random_pomdp
from uniformdp.mdp import MDPSpec, lift_values
from uniformdp.model import ModelError
from uniformdp.pomdp import (HR, Measure, POMDPSpec, bayes, explore_p, lift_successors,
                             mixing_policy, value_theta, value_theta_measure, wasserstein1)
from uniformdp.transport import transport
from uniformdp.values import v_n_table


def tiger():
    # listen (a=0) gives a noisy signal about the static state; open (a=1) pays and resets
    q = np.zeros((2, 2, 2, 2))
    q[0, 0, 0, 0], q[0, 0, 1, 0] = 0.85, 0.15
    q[1, 0, 1, 1], q[1, 0, 0, 1] = 0.85, 0.15
    q[:, 1, 0, :] = 0.25
    q[:, 1, 1, :] = 0.25
    g = np.array([[0.4, 1.0], [0.4, 0.0]])
    return POMDPSpec(q, g, [0.5, 0.5])


def lp_w1(u, v):
    n, m = len(u), len(v)
    C = np.abs(u.atoms[:, None] - v.atoms[None]).sum(axis=2)
    A = np.vstack([np.kron(np.eye(n), np.ones(m)), np.kron(np.ones(n), np.eye(m))])
    res = linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([u.weights, v.weights]), method="highs")
    return res.fun


def random_measure(rng, K=2, n_max=5):
    n = int(rng.integers(1, n_max + 1))
    return Measure.canonical(rng.dirichlet(np.ones(K), size=n), rng.dirichlet(np.ones(n)))


def test_bayes_fully_revealing_gives_diracs():
    q, g, p0 = random_mdp(np.random.default_rng(0), k_range=(3, 3))
    s = POMDPSpec.fully_revealing(q, g, p0)
    m = bayes(s, p0, 1)
    assert np.array_equal(m.atoms, np.eye(3)[::-1])
    assert np.allclose(m.weights[::-1], p0 @ q[:, 1])


def test_bayes_uninformative_is_pushforward():
    rng = np.random.default_rng(1)
    P = rng.dirichlet(np.ones(2), size=2)
    s = POMDPSpec(P[:, None, None, :], [[0.3], [0.6]], [0.3, 0.7])
    m = bayes(s, s.p0, 0)
    assert len(m) == 1 and np.allclose(m.atoms[0], s.p0 @ P)


def test_bayes_by_hand():
    s = tiger()
    m = bayes(s, [0.5, 0.5], 0)
    # P(s=0) = 0.5*0.85 + 0.5*0.15 = 0.5; posterior after s=0 is (0.85, 0.15)
    assert np.allclose(m.weights, [0.5, 0.5])
    assert np.allclose(m.atoms, [[0.15, 0.85], [0.85, 0.15]])
    m = bayes(s, [0.85, 0.15], 0)
    p_s0 = 0.85 * 0.85 + 0.15 * 0.15
    assert np.allclose(m.atoms[1], [0.85 * 0.85 / p_s0, 0.15 * 0.15 / p_s0])
    assert m.weights[1] == pytest.approx(p_s0)


def test_hr_single_atom():
    s = tiger()
    u = Measure.dirac([0.85, 0.15])
    h, r = HR(s, u, [1])
    b = bayes(s, [0.85, 0.15], 1)
    assert np.array_equal(h.atoms, b.atoms) and np.allclose(h.weights, b.weights)
    assert r == pytest.approx(0.85)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_hr_reward_is_expected_stage_reward(seed):
    rng = np.random.default_rng(seed)
    q, g, p0 = random_pomdp(rng)
    s = POMDPSpec(q, g, p0)
    u = random_measure(rng)
    f = rng.integers(0, 2, size=len(u))
    h, r = HR(s, u, f)
    want = sum(w * p[k] * g[k, a] for p, w, a in zip(u.atoms, u.weights, f) for k in range(2))
    assert r == pytest.approx(want, abs=1e-12)
    # H's mean belief is the law of the next hidden state
    nxt = sum(w * p[k] * q[k, a].sum(axis=0) for p, w, a in zip(u.atoms, u.weights, f) for k in range(2))
    assert np.allclose(h.mean(), nxt, atol=1e-11)


def test_w1_examples():
    p, q = np.array([0.2, 0.8]), np.array([0.7, 0.3])
    assert wasserstein1(Measure.dirac(p), Measure.dirac(p)) == 0.0
    assert wasserstein1(Measure.dirac(p), Measure.dirac(q)) == pytest.approx(1.0)
    half = Measure.canonical([p, q], [0.5, 0.5])
    assert wasserstein1(half, Measure.dirac(p)) == pytest.approx(0.5)
    assert lp_w1(half, Measure.dirac(p)) == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_w1_matches_lp(seed):
    rng = np.random.default_rng(seed)
    u, v = random_measure(rng, 3, 8), random_measure(rng, 3, 8)
    assert wasserstein1(u, v) == pytest.approx(lp_w1(u, v), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_w1_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    u, v, w = (random_measure(rng, 3) for _ in range(3))
    assert wasserstein1(u, v) == wasserstein1(v, u) or abs(wasserstein1(u, v) - wasserstein1(v, u)) <= 1e-12
    assert wasserstein1(u, w) <= wasserstein1(u, v) + wasserstein1(v, w) + 3e-9
    assert wasserstein1(u, u) <= 1e-12
    if u.key() != v.key():
        assert wasserstein1(u, v) > 0


def test_transport_reports_dual():
    r = transport([0.5, 0.5], [0.25, 0.75], [[0.0, 1.0], [1.0, 0.0]])
    assert r.value == pytest.approx(0.25)
    assert r.dual_residual <= 1e-12 and r.dual_value == pytest.approx(r.value)


def test_explore_p_uninformative_single_path():
    rng = np.random.default_rng(2)
    P = rng.dirichlet(np.ones(2), size=2)
    s = POMDPSpec(P[:, None, None, :], [[0.3], [0.6]], [0.3, 0.7])
    ex = explore_p(s, 4)
    assert ex.model.n_states == 5
    assert all(list(ex.model.successors(i)) == [i + 1] for i in range(4))


@pytest.mark.parametrize("seed", range(4))
def test_explore_p_fully_revealing_matches_mdp_lift(seed):
    q, g, p0 = random_mdp(np.random.default_rng(seed), k_range=(2, 2), a_range=(2, 2))
    # the initial state is revealed too: start from the mixture of Dirac beliefs
    root = Measure.canonical(np.eye(2), p0)
    ex = explore_p(POMDPSpec.fully_revealing(q, g, p0), 4, root=root)
    V = v_n_table(ex.model, 4)[:, 0]
    W, _ = lift_values(MDPSpec(q, g, p0), 4)
    assert np.allclose(V, W, atol=1e-9)


def test_tiger_matches_policy_trees():
    s = tiger()
    V = v_n_table(explore_p(s, 3).model, 3)[:, 0]
    for n in range(1, 4):
        assert V[n] == pytest.approx(pomdp_policy_tree_value(s.q, s.g, s.p0, n), abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_random_specs_match_policy_trees(seed):
    q, g, p0 = random_pomdp(np.random.default_rng(seed))
    s = POMDPSpec(q, g, p0)
    V = v_n_table(explore_p(s, 3).model, 3)[:, 0]
    for n in range(1, 4):
        assert V[n] == pytest.approx(pomdp_policy_tree_value(q, g, p0, n), abs=1e-9)


def test_explore_p_merges_within_delta():
    s = tiger()
    ex = explore_p(s, 4, delta=0.05)
    exact = explore_p(s, 4)
    assert ex.merges and max(m[2] for m in ex.merges) <= 0.05
    assert ex.model.n_states < exact.model.n_states
    dev = np.abs(v_n_table(ex.model, 4)[:, 0] - v_n_table(exact.model, 4)[:, 0]).max()
    assert dev <= ex.error_bound


def test_value_theta_one_stage_and_constant():
    s = tiger()
    p = np.array([0.3, 0.7])
    assert value_theta(s, p, [1.0]) == pytest.approx(max(p @ s.g[:, 0], p @ s.g[:, 1]))
    q, _, p0 = random_pomdp(np.random.default_rng(4))
    c = POMDPSpec(q, np.full((2, 2), 0.35), p0)
    assert value_theta(c, p0, [0.2, 0.5, 0.3]) == pytest.approx(0.35)


@pytest.mark.parametrize("seed", range(3))
def test_value_theta_uniform_matches_lift(seed):
    q, g, p0 = random_pomdp(np.random.default_rng(seed))
    s = POMDPSpec(q, g, p0)
    V = v_n_table(explore_p(s, 3).model, 3)[:, 0]
    for n in range(1, 4):
        assert value_theta(s, p0, np.full(n, 1 / n)) == pytest.approx(V[n], abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_affine_extension(seed):
    rng = np.random.default_rng(seed)
    q, g, p0 = random_pomdp(rng)
    s = POMDPSpec(q, g, p0)
    u = random_measure(rng, 2, 3)
    V = v_n_table(explore_p(s, 2, root=u).model, 2)[:, 0]
    assert V[2] == pytest.approx(value_theta_measure(s, u, [0.5, 0.5]), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.99))
def test_mixing_policy_reproduces_mixture(seed, lam):
    rng = np.random.default_rng(seed)
    q, g, p0 = random_pomdp(rng)
    s = POMDPSpec(q, g, p0)
    u1, u2 = random_measure(rng, 2, 3), random_measure(rng, 2, 3)
    if rng.random() < 0.5:
        u2 = u2.mix(Measure.canonical(u1.atoms[:1], [1.0]), 0.5)    # force a shared atom
    f1 = rng.integers(0, 2, size=len(u1))
    f2 = rng.integers(0, 2, size=len(u2))
    h1, r1 = HR(s, u1, f1)
    h2, r2 = HR(s, u2, f2)
    u, F = mixing_policy(u1, f1, u2, f2, lam, 2)
    h, r = HR(s, u, F)
    assert r == pytest.approx(lam * r1 + (1 - lam) * r2, abs=1e-9)
    assert wasserstein1(h, h1.mix(h2, lam)) <= 1e-9


def test_successor_cap_and_json():
    s = tiger()
    u = Measure.canonical(np.random.default_rng(0).dirichlet([1, 1], size=5), np.full(5, 0.2))
    with pytest.raises(Exception, match="cap"):
        lift_successors(s, u, cap=8)
    t = POMDPSpec.loads(s.dumps())
    assert np.array_equal(t.q, s.q)
    with pytest.raises(ModelError):
        POMDPSpec.loads('{"q": [[[[0.5, 0.6]]]], "g": [[0.1]], "p0": [1.0]}')
