from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import max_mean_cycle_from
from uniformdp import gallery
from uniformdp.model import check_nonexpansive, dumps_model, load_model
from uniformdp.values import v_n_table


@pytest.mark.parametrize("build", [
    lambda: gallery.square_model(8, 6)[0],
    lambda: gallery.simplex_model([0, 0.25, 0.5], 2)[0],
    lambda: gallery.blocks_model(5),
    lambda: gallery.interval_model(4)[0],
    lambda: gallery.abelgap_model(gallery.abel_stream(200), 0.5),
])
def test_models_pass_load_validation(build):
    m = build()
    again = load_model(dumps_model(m))
    assert np.array_equal(again.indices, m.indices) and np.array_equal(again.rewards, m.rewards)


def test_ramp_reward():
    assert gallery.ramp_reward(Fraction(1, 3)) == 1.0
    assert gallery.ramp_reward(Fraction(2, 3)) == 1.0
    assert gallery.ramp_reward(Fraction(1, 4)) == 0.0
    assert gallery.ramp_reward(Fraction(7, 24)) == pytest.approx(0.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 40), st.integers(1, 12))
def test_square_v2_half(grid_y, speeds):
    model, ys, _ = gallery.square_model(grid_y, speeds)
    assert Fraction(2, 3) in ys
    assert v_n_table(model, 2)[2, 0] >= 0.5


def test_square_every_play_vanishes():
    model, ys, starts = gallery.square_model(16, 8)
    # all cycles are the absorbing states at x = 1, which pay 0
    assert max_mean_cycle_from(model.successor_lists(), model.rewards, 0) == 0.0


def test_square_diagnostics():
    inst = gallery.square()
    assert inst.passed, [d.line() for d in inst.diagnostics if not d.passed]
    rep = inst.extra["chain"]
    assert rep.terms["sup_inf_w"] <= 0.01 and rep.terms["sup_inf_v"] >= 0.45


def test_square_is_not_nonexpansive():
    assert check_nonexpansive(gallery.square_model(8, 4)[0]) is not None


def test_simplex_diagnostics():
    inst = gallery.simplex()
    assert inst.passed, [d.line() for d in inst.diagnostics if not d.passed]


def test_simplex_constant_play_level():
    model, pts, _ = gallery.simplex_model([0, 0.1, 0.2], 1)
    play = gallery.stationary_play(model, pts, 0.1, 1)
    play.validate(model)
    assert gallery.certified_payoff(model, play) == pytest.approx(0.9 / 1.1, abs=1e-3)
    frozen = gallery.stationary_play(model, pts, 0.0, 1)
    assert frozen.steps == (0,) and frozen.cycle_start == 0


def test_simplex_refinement_increases():
    lows = gallery.simplex_refinement()
    assert all(a < b for a, b in zip(lows, lows[1:]))
    assert lows[-1] > 0.97


def test_simplex_limit_matches_iteration():
    p = (1.0, 0.0, 0.0)
    for _ in range(5000):
        p = gallery.simplex_step(p, 0.1)
    assert np.allclose(p, gallery.simplex_limit((1.0, 0.0, 0.0), 0.1), atol=1e-12)


def test_blocks_stream_and_model():
    assert list(gallery.block_stream(3)) == [1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0]
    m = gallery.blocks_model(3)
    play_rewards = m.rewards[[1, 2, 3]]
    assert list(play_rewards) == [1, 0, 1]
    # the tail loops on the last block
    assert list(m.successors(12)) == [7]


def test_blocks_diagnostics():
    inst = gallery.blocks(30)
    assert inst.passed, [d.line() for d in inst.diagnostics if not d.passed]


def test_blocks_cesaro_exact_half():
    u = gallery.block_stream(12)
    ends = np.cumsum([2 * k for k in range(1, 13)])
    assert all(u[:e].sum() * 2 == e for e in ends)


def test_abel_stream_runs():
    a = gallery.abel_stream(1 + 4 + 16 + 3)
    assert list(a) == [1] + [0] * 4 + [1] * 16 + [0] * 3


def test_abelgap_diagnostics():
    inst = gallery.abelgap()
    assert inst.passed, [d.line() for d in inst.diagnostics if not d.passed]
    assert inst.extra["cesaro_max"] - inst.extra["abel_max"] > 0


def test_abelgap_small_model_structure():
    m = gallery.abelgap_model(np.array([1.0, 0.0, 1.0]), 0.25)
    assert list(m.successors(0)) == [0, 1]
    assert [list(m.successors(i)) for i in (1, 2, 3)] == [[2], [3], [3]]
    assert m.rewards[0] == 0.25


def test_interval_diagnostics():
    inst = gallery.interval(8)
    assert inst.passed, [d.line() for d in inst.diagnostics if not d.passed]


def test_interval_nonexpansive_on_grids():
    for grid in (4, 6, 10):
        assert check_nonexpansive(gallery.interval_model(grid)[0]) is None


def test_interval_rejects_coarse_grid():
    with pytest.raises(ValueError):
        gallery.interval_model(3)
