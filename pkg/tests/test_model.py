import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import all_paths, reachable_exact
from uniformdp.generators import random_model
from uniformdp.model import (Model, ModelError, Play, check_nonexpansive, dumps_model, gamma,
                             load_model, nu, reach, reach_union)


def chain(k):
    succ = [[i + 1] for i in range(k)] + [[k]]
    return Model.from_successors(succ, [0.0] * (k + 1))


def test_minimal_model_loads():
    m = load_model('{"states": [{"id": 0, "reward": 1, "successors": [0]}], "initial": 0}')
    assert m.n_states == 1 and m.rewards[0] == 1.0


@pytest.mark.parametrize("text, fragment", [
    ('{"states": [{"id": 0, "reward": 1, "successors": []}], "initial": 0}', "empty successor set"),
    ('{"states": [{"id": 0, "reward": 1.5, "successors": [0]}], "initial": 0}', "outside [0, 1]"),
    ('{"states": [{"id": 0, "reward": 1, "successors": [3]}], "initial": 0}', "unknown state"),
    ('{"states": [{"id": 0, "reward": 1, "successors": [0]}], "initial": 0,\n "x": }', "line 2"),
    ('{"states": [{"id": 0, "successors": [0]}], "initial": 0}', "states[0].reward"),
])
def test_load_errors(text, fragment):
    with pytest.raises(ModelError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
        load_model(text)


def test_metric_triangle_violation_reports_triple():
    d = [[0, 1, 5], [1, 0, 1], [5, 1, 0]]
    with pytest.raises(ModelError, match=r"triple \(0,1,2\)"):
        Model.from_successors([[0], [1], [2]], [0, 0, 0], metric=d)


def test_pseudometric_allows_zero_distance():
    Model.from_successors([[0], [1]], [0, 0], metric=[[0, 0], [0, 0]])


def test_successors_sorted_and_deduplicated():
    m = Model.from_successors([[2, 0, 2], [1], [0]], [0, 0, 0])
    assert m.successors(0).tolist() == [0, 2]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_roundtrip(seed):
    m = random_model(seed, reward_step=None)
    rng = np.random.default_rng(seed)
    if seed % 3 == 0:
        m = Model.from_successors(m.successor_lists(), m.rewards, metric="discrete")
    elif seed % 3 == 1:
        pts = rng.random(m.n_states)
        m = Model.from_successors(m.successor_lists(), m.rewards,
                                  metric=np.abs(pts[:, None] - pts[None, :]))
    back = load_model(dumps_model(m))
    assert back.successor_lists() == m.successor_lists()
    assert np.array_equal(back.rewards, m.rewards)
    assert back.initial == m.initial
    if isinstance(m.metric, np.ndarray):
        assert np.array_equal(back.metric, m.metric)
    else:
        assert back.metric == m.metric
    assert dumps_model(back) == dumps_model(m)


def test_reach_examples():
    loop = Model.from_successors([[0]], [1.0])
    assert reach(loop, 0, 5) == {0}
    assert reach(chain(2), 0, 2) == {2}
    assert reach(chain(2), 0, 0) == {0}
    assert reach_union(loop, 0, math.inf) == {0}
    assert reach_union(chain(3), 0, None) == {0, 1, 2, 3}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 4))
def test_reach_matches_path_enumeration(seed, m):
    model = random_model(seed, n_states=6)
    succ = model.successor_lists()
    for z in range(model.n_states):
        assert reach(model, z, m) == reachable_exact(succ, z, m)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_reach_union_chain_and_fixpoint(seed):
    model = random_model(seed)
    n = model.n_states
    succ = model.successor_lists()
    for z in range(n):
        full = reach_union(model, z)
        sets = [reach_union(model, z, m) for m in range(n + 1)]
        for a, b in zip(sets, sets[1:]):
            assert a <= b <= full
        assert sets[n - 1] == full
        by_paths = {z} | {p[-1] for k in range(1, n + 1) for p in all_paths(succ, z, k)}
        assert full == by_paths


def test_gamma_nu_examples():
    s = [1, 0, 1, 0]
    assert gamma(s, 0, 2) == 0.5
    assert gamma(s, 1, 2) == 0.5
    assert nu([1, 0, 1], 0, 3) == 0.5
    assert gamma([0.3] * 9, 2, 5) == pytest.approx(0.3)
    assert nu([0.3] * 9, 2, 5) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        gamma(s, 3, 2)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.data())
def test_nu_matches_naive_loop_and_lies_below_gamma(stream, data):
    m = data.draw(st.integers(0, len(stream) - 1))
    n = data.draw(st.integers(1, len(stream) - m))
    naive = min(sum(stream[m:m + t]) / t for t in range(1, n + 1))
    assert nu(stream, m, n) == pytest.approx(naive, abs=1e-12)
    assert nu(stream, m, n) <= gamma(stream, m, n) + 1e-12


def test_nonexpansive_examples():
    rng = np.random.default_rng(0)
    pts = rng.random(5)
    d = np.abs(pts[:, None] - pts[None, :])
    ident = Model.from_successors([[z] for z in range(5)], [0] * 5, metric=d)
    assert check_nonexpansive(ident) is None
    disc = Model.from_successors(random_model(3, n_states=6).successor_lists(), [0] * 6,
                                 metric="discrete")
    assert check_nonexpansive(disc) is None


def test_nonexpansive_witness_is_a_real_violation():
    # two nearby states whose successors are far apart
    d = np.array([[0, .1, 1, 1], [.1, 0, 1, 1], [1, 1, 0, 1], [1, 1, 1, 0]], float)
    m = Model.from_successors([[2], [3], [2], [3]], [0] * 4, metric=d)
    z, zp, z1 = check_nonexpansive(m)
    assert z1 in m.successors(z)
    assert min(d[z1, y] for y in m.successors(zp)) > d[z, zp]


def test_play_validation_and_text():
    m = chain(3)
    p = Play(0, (1, 2, 3), cycle_start=2)
    p.validate(m)
    assert Play.loads(p.dumps()) == p
    with pytest.raises(ModelError):
        Play(0, (2,)).validate(m)
    with pytest.raises(ModelError, match="cycle"):
        Play(0, (1, 2), cycle_start=0).validate(m)
    assert p.states(6).tolist() == [1, 2, 3, 3, 3, 3]
