import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import shifted_values
from uniformdp.generators import random_model
from uniformdp.minavg import (feasible, w_from_sources, w_mn, w_mn_table, w_n, w_n_table)
from uniformdp.model import Model, nu
from uniformdp.values import brute_force_table, v_mn_table, v_n_table

TOL = 1e-9
JUMP = Model.from_successors([[0, 1], [1]], [0.0, 1.0])


def test_feasible_constant_model():
    m = Model.from_successors([[0, 1], [0]], [0.3, 0.3])
    assert feasible(m, 0, 5, 0.3) is not None
    assert feasible(m, 0, 5, 0.31) is None


def test_w_examples():
    one = Model.from_successors([[0]], [1.0])
    assert w_n(one, 0, 4)[0] == 1.0
    # branch a: 0 then 1 forever; branch b: 0.4 forever
    two = Model.from_successors([[1, 3], [2], [2], [3]], [0.0, 0.0, 1.0, 0.4])
    assert w_n(two, 0, 2)[0] == pytest.approx(0.4, abs=TOL)
    for n in (1, 3, 7):
        assert w_mn(JUMP, 0, 1, n)[0] == 1.0
    assert w_mn(two, 0, 0, 2)[0] == w_n(two, 0, 2)[0]


def block_model(K):
    """Start state then blocks of k ones and k zeros, k = 1..K, looping on the last block."""
    r = [0.0]
    starts = []
    for k in range(1, K + 1):
        starts.append(len(r))
        r += [1.0] * k + [0.0] * k
    succ = [[i + 1] for i in range(len(r) - 1)] + [[starts[-1]]]
    return Model.from_successors(succ, r), starts


def test_w_on_block_starts():
    model, starts = block_model(6)
    for k, s in enumerate(starts, 1):
        # from the state just before block k, the next 2k rewards are k ones then k zeros
        assert w_n(model, s - 1, 2 * k)[0] == pytest.approx(0.5, abs=TOL)


@pytest.mark.parametrize("seed", range(15))
def test_w_matches_enumeration(seed):
    model = random_model(seed)
    succ, r = model.successor_lists(), model.rewards.tolist()
    W = w_n_table(model, 5)
    WM = w_mn_table(model, 3, W)
    for z in range(model.n_states):
        _, w_tab = brute_force_table(model, z, 8)
        for m in range(4):
            for n in range(1, 6):
                val, play = w_mn(model, z, m, n)
                ref = w_tab[m, n]
                assert abs(val - ref) <= TOL
                assert abs(WM[m, n, z] - ref) <= TOL
                play.validate(model)
                assert len(play.steps) == m + n
                assert nu(play.rewards(model), m, n) >= val - 2 * TOL
        assert shifted_values(succ, r, z, 1, 3)[1] == pytest.approx(w_tab[1, 3], abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.floats(0, 1))
def test_feasible_agrees_with_thresholded_enumeration(seed, c):
    model = random_model(seed)
    for z in range(model.n_states):
        _, w_tab = brute_force_table(model, z, 4)
        for n in range(1, 5):
            w = w_tab[0, n]
            if abs(w - c) > 1e-9:
                assert (feasible(model, z, n, c) is not None) == (w >= c)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_monotonicity_domination_and_covering(seed):
    model = random_model(seed, reward_step=None)
    Z = model.n_states
    n_max, L = 8, Z
    W = w_n_table(model, n_max)
    WM = w_mn_table(model, max(L, 4), W)
    V = v_n_table(model, n_max)
    VM = v_mn_table(model, 4, V)
    assert np.all(WM[:, 2:] <= WM[:, 1:-1] + 2 * TOL)
    assert np.all(WM[:5, 1:] <= VM[:, 1:] + 2 * TOL)
    for k in (1, 2, 3):
        sup_l = WM[:L + 1, k].max(axis=0)
        for n in range(1, n_max + 1):
            assert np.all(VM[:, n] <= sup_l + (k - 1) / n + 2 * TOL)


def test_search_iterations_are_few_on_exact_values():
    model = random_model(7, n_states=8)
    src = np.zeros(8, dtype=bool)
    src[0] = True
    res = w_from_sources(model, src, 6)
    assert res.iterations < 30
