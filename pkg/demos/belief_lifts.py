"""Lift a finite MDP and a small POMDP to deterministic problems and compare values."""

import numpy as np

from uniformdp.mdp import MDPSpec, direct_mdp_values, lift_values, mdp_uniform
from uniformdp.pomdp import Measure, POMDPSpec, bayes, explore_p, wasserstein1
from uniformdp.values import v_n_table

# two states, two actions; state 1 pays well but action 1 drifts away from it
q = [[[0.9, 0.1], [0.2, 0.8]], [[0.5, 0.5], [0.0, 1.0]]]
g = [[0.3, 0.0], [1.0, 0.6]]
spec = MDPSpec(q, g, [0.25, 0.75])

_, direct = direct_mdp_values(spec, 6)
exact, _ = lift_values(spec, 6)
pruned, ex = lift_values(spec, 6, delta=1e-2)
print(" n   direct    lift(0)   lift(1e-2)")
for n in range(1, 7):
    print(f"{n:2d}  {direct[n]:.6f}  {exact[n]:.6f}  {pruned[n]:.6f}")
print(f"merges {len(ex.merges)}, error bound {ex.error_bound:.3f}")

res = mdp_uniform(spec, target_gap=0.05)
print(f"uniform value of the lift in [{res.lower:.4f}, {res.upper:.4f}]")

# noisy sensing: listening reveals the hidden state with probability 0.85
q = np.zeros((2, 2, 2, 2))
q[0, 0, 0, 0], q[0, 0, 1, 0] = 0.85, 0.15
q[1, 0, 1, 1], q[1, 0, 0, 1] = 0.85, 0.15
q[:, 1, :, :] = 0.25
pomdp = POMDPSpec(q, [[0.4, 1.0], [0.4, 0.0]], [0.5, 0.5])

post = bayes(pomdp, pomdp.p0, 0)
print("\nposterior beliefs after one listen:", post.atoms.round(3).tolist(), "weights", post.weights.round(3).tolist())
print("W1 from the prior:", round(wasserstein1(Measure.dirac(pomdp.p0), post), 4))

V = v_n_table(explore_p(pomdp, 4).model, 4)[:, 0]
print("lifted v_n at the prior:", ", ".join(f"{v:.4f}" for v in V[1:]))
