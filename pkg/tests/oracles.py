"""Independent reference computations used only by the tests.

These are deliberately naive: plain Python recursion over successor lists,
no shared code with the package beyond reading a model's lists.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import networkx as nx


def all_paths(succ, z, length):
    """Every z_1..z_length reachable from z, by recursive depth-first search."""
    out = []

    def rec(cur, path):
        if len(path) == length:
            out.append(tuple(path))
            return
        for s in succ[cur]:
            path.append(s)
            rec(s, path)
            path.pop()

    rec(z, [])
    return out


def shifted_values(succ, rewards, z, m, n):
    """(v_{m,n}(z), w_{m,n}(z)) by naive enumeration and explicit loops."""
    best_v, best_w = -1.0, -1.0
    for path in all_paths(succ, z, m + n):
        window = [rewards[s] for s in path[m:]]
        total = 0.0
        running = []
        for t, x in enumerate(window, 1):
            total += x
            running.append(total / t)
        best_v = max(best_v, running[-1])
        best_w = max(best_w, min(running))
    return best_v, best_w


def reachable_exact(succ, z, m):
    return {p[-1] for p in all_paths(succ, z, m)} if m else {z}


def max_mean_cycle_from(succ, rewards, z):
    """Largest mean reward over simple cycles reachable from z (networkx enumeration).

    On a finite deterministic problem this equals the uniform value at z.
    """
    g = nx.DiGraph()
    for a, lst in enumerate(succ):
        for b in lst:
            g.add_edge(a, b)
    reach = nx.descendants(g, z) | {z}
    sub = g.subgraph(reach)
    best = -1.0
    for cyc in nx.simple_cycles(sub):
        best = max(best, sum(rewards[s] for s in cyc) / len(cyc))
    return best


def discounted_by_policies(succ, rewards, lam):
    """Exact discounted values: best positional policy, each evaluated as a lasso."""
    n = len(succ)
    lam = Fraction(lam)
    best = [Fraction(-1)] * n
    for policy in itertools.product(*succ):
        for z in range(n):
            order, first = [z], {z: 0}
            while True:
                nxt = policy[order[-1]]
                if nxt in first:
                    c0, c1 = first[nxt], len(order)
                    order.append(nxt)
                    break
                first[nxt] = len(order)
                order.append(nxt)
            prefix = order[1:c0 + 1] if c0 >= 1 else []
            cycle = order[c0 + 1:c1 + 1]
            val = Fraction(0)
            w = lam
            for s in prefix:
                val += w * Fraction(rewards[s])
                w *= 1 - lam
            cyc = Fraction(0)
            wc = Fraction(1)
            for s in cycle:
                cyc += wc * lam * Fraction(rewards[s])
                wc *= 1 - lam
            val += (w / lam) * cyc / (1 - wc)
            best[z] = max(best[z], val)
    return [float(b) for b in best]


def pomdp_policy_tree_value(q, g, p0, n):
    """Best expected n-stage average over all deterministic signal-history policies.

    Enumerates every map from signal histories of length < n to actions and
    evaluates each exactly by summing over hidden trajectories; no beliefs.
    """
    K, A, S, _ = q.shape
    histories = [h for t in range(n) for h in itertools.product(range(S), repeat=t)]
    best = -1.0
    for acts in itertools.product(range(A), repeat=len(histories)):
        pol = dict(zip(histories, acts))

        def val(k, h):
            a = pol[h]
            total = g[k][a]
            if len(h) + 1 < n:
                for s in range(S):
                    for k2 in range(K):
                        if q[k][a][s][k2] > 0:
                            total += q[k][a][s][k2] * val(k2, h + (s,))
            return total

        best = max(best, sum(p0[k] * val(k, ()) for k in range(K)) / n)
    return best
