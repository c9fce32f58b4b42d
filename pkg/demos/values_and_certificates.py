"""Values of a small random model, its uniform-value interval, and a certified play."""

import numpy as np

from uniformdp.generators import random_model
from uniformdp.minavg import w_n_table
from uniformdp.plays import synthesize, verify_guarantee
from uniformdp.uniform import check_chain, estimate_vstar, max_mean_cycle
from uniformdp.values import v_n_table

model = random_model(10, n_states=6)
z = model.initial
print("successors:", model.successor_lists())
print("rewards:   ", model.rewards.tolist())

V = v_n_table(model, 12)
W = w_n_table(model, 12)
print("\n n   v_n(z0)   w_n(z0)")
for n in (1, 2, 4, 8, 12):
    print(f"{n:2d}  {V[n, z]:.4f}    {W[n, z]:.4f}")

# the interval closes around the best reachable cycle mean
iv = estimate_vstar(model, z, target_gap=0.02)
print(f"\nuniform value in [{iv.lower:.4f}, {iv.upper:.4f}]; max mean cycle {max_mean_cycle(model, z):.4f}")
print("lower certificate:", iv.lower_certificate)

res = synthesize(model, z, alpha=0.1)
print(f"\nsynthesized lasso: prefix {res.play.prefix_length}, cycle {res.play.cycle_length}, level {res.level:.4f}")
rep = verify_guarantee(model, res.play, res.level, 0.01, burn_in=None)
print(f"gamma_T >= level - 0.01 for every T >= {rep.burn_in}")

avg = np.cumsum(res.play.rewards(model, 2000)) / np.arange(1, 2001)
print(f"running average at T = 2000: {avg[-1]:.4f}")

print()
print(check_chain(model, z).table())
