"""Deterministic lift of a POMDP onto finitely supported measures over beliefs.

A lifted state (u, y) holds a measure u over beliefs p in Delta(K) and the
last expected stage reward. Choosing an action for every atom of u moves to
(H(u, f), R(u, f)): the mixture of Bayes updates and the expected reward.
Distances between measures are Wasserstein-1 for the l1 ground metric.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .mdp import check_distribution
from .model import BudgetExceeded, Model, ModelError
from .transport import transport

DIGITS = 12


@dataclass(frozen=True, eq=False)
class POMDPSpec:
    q: np.ndarray      # (K, A, S, K): joint law of (signal, next state)
    g: np.ndarray      # (K, A)
    p0: np.ndarray     # (K,)

    def __post_init__(self):
        for name in ("q", "g", "p0"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        K, A = self.g.shape
        if self.q.ndim != 4 or self.q.shape[:2] != (K, A) or self.q.shape[3] != K:
            raise ModelError(f"q: expected shape (K, A, S, K) with K={K}, A={A}; got {self.q.shape}")
        if self.p0.shape != (K,):
            raise ModelError(f"p0: expected {K} entries")
        check_distribution(self.q.reshape(K, A, -1), "q")
        check_distribution(self.p0, "p0")
        if np.any(self.g < 0) or np.any(self.g > 1):
            raise ModelError("g: rewards must lie in [0, 1]")

    @property
    def K(self) -> int:
        return self.g.shape[0]

    @property
    def A(self) -> int:
        return self.g.shape[1]

    @property
    def S(self) -> int:
        return self.q.shape[2]

    @classmethod
    def loads(cls, text: str) -> "POMDPSpec":
        try:
            doc = json.loads(text)
            return cls(doc["q"], doc["g"], doc["p0"])
        except ModelError:
            raise
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"malformed POMDP file: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps({"K": self.K, "A": self.A, "S": self.S, "q": self.q.tolist(),
                           "g": self.g.tolist(), "p0": self.p0.tolist()})

    @classmethod
    def fully_revealing(cls, q_mdp, g, p0) -> "POMDPSpec":
        """The signal is the next state."""
        q_mdp = np.asarray(q_mdp, dtype=float)
        K, A, _ = q_mdp.shape
        q = np.zeros((K, A, K, K))
        idx = np.arange(K)
        q[:, :, idx, idx] = q_mdp
        return cls(q, g, p0)


@dataclass(frozen=True, eq=False)
class Measure:
    """Finitely supported probability over beliefs, atoms sorted lexicographically."""

    atoms: np.ndarray     # (n, K)
    weights: np.ndarray   # (n,)

    @classmethod
    def canonical(cls, atoms, weights) -> "Measure":
        atoms = np.round(np.asarray(atoms, dtype=float), DIGITS) + 0.0
        weights = np.asarray(weights, dtype=float)
        keep = weights > 0
        uniq, inv = np.unique(atoms[keep], axis=0, return_inverse=True)
        w = np.bincount(inv.ravel(), weights=weights[keep], minlength=len(uniq))
        return cls(uniq, w)

    @classmethod
    def dirac(cls, p) -> "Measure":
        return cls.canonical(np.asarray(p, dtype=float)[None, :], [1.0])

    def __len__(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def key(self) -> bytes:
        return self.atoms.tobytes() + self.weights.tobytes()

    def mix(self, other: "Measure", lam: float) -> "Measure":
        return Measure.canonical(np.vstack([self.atoms, other.atoms]),
                                 np.concatenate([lam * self.weights, (1 - lam) * other.weights]))


def bayes(spec: POMDPSpec, p, a: int) -> Measure:
    """q-hat(p, a): posterior beliefs weighted by the probability of their signal."""
    joint = np.einsum("k,ksj->sj", np.asarray(p, dtype=float), spec.q[:, a])
    ps = joint.sum(axis=1)
    live = ps > 0
    return Measure.canonical(joint[live] / ps[live, None], ps[live])


def _policy_matrix(u: Measure, f, A: int) -> np.ndarray:
    f = np.asarray(f)
    if f.ndim == 1:
        if len(f) != len(u):
            raise ValueError("f must assign an action to every atom")
        out = np.zeros((len(u), A))
        out[np.arange(len(u)), f] = 1.0
        return out
    if f.shape != (len(u), A):
        raise ValueError("mixed f must have shape (atoms, actions)")
    return f


def HR(spec: POMDPSpec, u: Measure, f) -> tuple[Measure, float]:
    """(H(u, f), R(u, f)); ``f`` is one action per atom or a row-stochastic (atoms, A) matrix."""
    F = _policy_matrix(u, f, spec.A)
    atoms, weights = [], []
    for p, w, row in zip(u.atoms, u.weights, F):
        for a in np.flatnonzero(row > 0):
            m = bayes(spec, p, a)
            atoms.append(m.atoms)
            weights.append(w * row[a] * m.weights)
    R = float(np.einsum("n,na,nk,ka->", u.weights, F, u.atoms, spec.g))
    return Measure.canonical(np.vstack(atoms), np.concatenate(weights)), min(max(R, 0.0), 1.0)


def ground_cost(u: Measure, v: Measure) -> np.ndarray:
    return np.abs(u.atoms[:, None, :] - v.atoms[None, :, :]).sum(axis=2)


def wasserstein1(u: Measure, v: Measure) -> float:
    if len(u) == 1 or len(v) == 1:
        # the only plan is the product one
        return float(u.weights @ ground_cost(u, v) @ v.weights)
    return transport(u.weights, v.weights, ground_cost(u, v)).value


def lifted_distance(z, z2) -> float:
    (u, y), (u2, y2) = z, z2
    return max(wasserstein1(u, u2), abs(y - y2))


def lift_successors(spec: POMDPSpec, u: Measure, cap: int = 1 << 16):
    """Distinct (H(u, f), R(u, f)) over deterministic f, in lexicographic order of f."""
    if spec.A ** len(u) > cap:
        raise BudgetExceeded(f"{spec.A}^{len(u)} action maps exceed the cap {cap}")
    out, seen = [], set()
    for f in itertools.product(range(spec.A), repeat=len(u)):
        h, r = HR(spec, u, list(f))
        key = (h.key(), r)
        if key not in seen:
            seen.add(key)
            out.append((h, r))
    return out


@dataclass
class PExploration:
    model: Model
    states: list                  # (Measure, y) per model state
    layer: np.ndarray
    merges: list = field(default_factory=list)   # (layer, representative, distance)
    depth: int = 0
    delta: float = 0.0

    @property
    def error_bound(self) -> float:
        return self.depth * self.delta


def explore_p(spec: POMDPSpec, depth: int, delta: float = 0.0, root: Measure | None = None,
              max_states: int = 100_000, cap: int = 1 << 16) -> PExploration:
    """Breadth-first lift from (root, 0), root defaulting to the Dirac mass at p0.

    A new state equal to a retained one (delta = 0), or within lifted
    distance delta of one, is merged into the first such retained state.
    Frontier states loop on themselves, which leaves v_n at the root
    untouched for n <= depth.
    """
    if delta < 0 or depth < 1:
        raise ValueError("need delta >= 0 and depth >= 1")
    root = Measure.dirac(spec.p0) if root is None else root
    states = [(root, 0.0)]
    means = [root.mean()]
    index = {(root.key(), 0.0): 0}
    layer = [0]
    succ: list[list[int]] = [[]]
    merges = []
    frontier = [0]
    for d in range(1, depth + 1):
        nxt = []
        for s in frontier:
            row = []
            for h, r in lift_successors(spec, states[s][0], cap):
                j = index.get((h.key(), r))
                if j is None and delta > 0:
                    j, dist = _nearest_within(states, means, h, r, delta)
                    if j is not None:
                        merges.append((d, j, dist))
                if j is None:
                    j = len(states)
                    if j >= max_states:
                        raise BudgetExceeded(f"exploration exceeds {max_states} states at layer {d}")
                    states.append((h, r))
                    means.append(h.mean())
                    index[(h.key(), r)] = j
                    layer.append(d)
                    succ.append([])
                    nxt.append(j)
                row.append(j)
            succ[s] = sorted(set(row))
        frontier = nxt
    for s in frontier:
        succ[s] = [s]
    model = Model.from_successors(succ, [y for _, y in states], 0, validate=False)
    return PExploration(model, states, np.array(layer), merges, depth, delta)


def _nearest_within(states, means, h: Measure, r: float, delta: float):
    mh = h.mean()
    for j, (u, y) in enumerate(states):
        # |y - y'| and the l1 gap of the means both bound the lifted distance from below
        if abs(y - r) > delta or np.abs(means[j] - mh).sum() > delta + 1e-15:
            continue
        dist = max(wasserstein1(h, u), abs(y - r))
        if dist <= delta:
            return j, dist
    return None, None


def shift_theta(theta) -> np.ndarray | None:
    """theta^+ (stage profile from stage 2 on), or None when theta_1 = 1."""
    theta = np.asarray(theta, dtype=float)
    rest = 1.0 - theta[0]
    if rest <= 1e-15 or len(theta) == 1:
        return None
    return theta[1:] / rest


def value_theta(spec: POMDPSpec, p, theta, budget: int = 1_000_000) -> float:
    """v_[theta](p) by the recursion over the belief tree."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or abs(theta.sum() - 1) > 1e-12:
        raise ValueError("theta must be a probability over stages 1..len(theta)")
    counter = [0]

    def rec(p, th):
        counter[0] += 1
        if counter[0] > budget:
            raise BudgetExceeded(f"belief tree exceeds {budget} nodes")
        plus = shift_theta(th)
        best = -np.inf
        for a in range(spec.A):
            val = th[0] * float(p @ spec.g[:, a])
            if plus is not None:
                m = bayes(spec, p, a)
                val += (1 - th[0]) * sum(w * rec(x, plus) for x, w in zip(m.atoms, m.weights))
            best = max(best, val)
        return best

    return rec(np.asarray(p, dtype=float), theta)


def value_theta_measure(spec: POMDPSpec, u: Measure, theta) -> float:
    """Affine extension: the atom-weighted average of v_[theta]."""
    return float(sum(w * value_theta(spec, p, theta) for p, w in zip(u.atoms, u.weights)))


def mixing_policy(u1: Measure, f1, u2: Measure, f2, lam: float, A: int) -> tuple[Measure, np.ndarray]:
    """Mixed state lam*u1 + (1-lam)*u2 and the action map reproducing the mixed successor.

    Each atom p plays f1(p) with probability lam*u1(p) / (lam*u1(p) + (1-lam)*u2(p))
    and f2(p) otherwise.
    """
    u = u1.mix(u2, lam)
    F = np.zeros((len(u), A))
    for src, f, coef in ((u1, f1, lam), (u2, f2, 1 - lam)):
        Fs = _policy_matrix(src, f, A)
        pos = {a.tobytes(): i for i, a in enumerate(u.atoms)}
        for atom, w, row in zip(src.atoms, src.weights, Fs):
            F[pos[atom.tobytes()]] += coef * w * row
    return u, F / F.sum(axis=1, keepdims=True)
