"""Seeded random instances used by tests, demos and the CLI ``check`` verb."""

from __future__ import annotations

import numpy as np

from .model import Model


def random_model(rng: np.random.Generator | int, n_states: int | None = None, max_states: int = 8,
                 max_degree: int = 3, reward_step: float | None = 0.1) -> Model:
    """Random model with out-degree in 1..max_degree.

    Rewards are drawn from the grid {0, step, ..., 1}, or uniformly on [0,1]
    when ``reward_step`` is None.
    """
    rng = np.random.default_rng(rng)
    n = int(n_states) if n_states is not None else int(rng.integers(1, max_states + 1))
    succ = []
    for _ in range(n):
        k = int(rng.integers(1, min(max_degree, n) + 1))
        succ.append(rng.choice(n, size=k, replace=False).tolist())
    if reward_step is None:
        rewards = rng.random(n)
    else:
        levels = int(round(1 / reward_step))
        rewards = rng.integers(0, levels + 1, size=n) / levels
    return Model.from_successors(succ, rewards, initial=0)


def random_mdp(rng: np.random.Generator | int, k_range=(2, 3), a_range=(2, 3)):
    """Random MDP as (q[k, a, k'], g[k, a], p0)."""
    rng = np.random.default_rng(rng)
    K = int(rng.integers(k_range[0], k_range[1] + 1))
    A = int(rng.integers(a_range[0], a_range[1] + 1))
    q = rng.dirichlet(np.ones(K), size=(K, A))
    g = rng.random((K, A))
    p0 = rng.dirichlet(np.ones(K))
    return q, g, p0


def random_pomdp(rng: np.random.Generator | int, K: int = 2, A: int = 2, S: int = 2):
    """Random POMDP as (q[k, a, s, k'], g[k, a], p0)."""
    rng = np.random.default_rng(rng)
    q = rng.dirichlet(np.ones(S * K), size=(K, A)).reshape(K, A, S, K)
    g = rng.random((K, A))
    p0 = rng.dirichlet(np.ones(K))
    return q, g, p0
