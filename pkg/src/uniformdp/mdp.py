"""Deterministic lift of a finite MDP onto Delta(K) x [0, 1].

A lifted state (p, y) holds the current distribution over hidden states and
the last expected stage reward. Choosing one action per state in the
support of p moves to (sum_k p^k q(k, a_k), sum_k p^k g(k, a_k)); the reward
of a lifted state is y.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .model import BudgetExceeded, Model, ModelError
from .uniform import Budget, ValueInterval, estimate_vstar
from .values import successor_max

PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MDPSpec:
    q: np.ndarray      # (K, A, K)
    g: np.ndarray      # (K, A)
    p0: np.ndarray     # (K,)

    def __post_init__(self):
        for name in ("q", "g", "p0"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        K, A = self.g.shape
        if self.q.shape != (K, A, K):
            raise ModelError(f"q: expected shape {(K, A, K)}, got {self.q.shape}")
        if self.p0.shape != (K,):
            raise ModelError(f"p0: expected {K} entries")
        check_distribution(self.q, "q")
        check_distribution(self.p0, "p0")
        if np.any(self.g < 0) or np.any(self.g > 1):
            raise ModelError("g: rewards must lie in [0, 1]")

    @property
    def K(self) -> int:
        return self.g.shape[0]

    @property
    def A(self) -> int:
        return self.g.shape[1]

    @classmethod
    def loads(cls, text: str) -> "MDPSpec":
        try:
            doc = json.loads(text)
            spec = cls(doc["q"], doc["g"], doc["p0"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ModelError):
                raise
            raise ModelError(f"malformed MDP file: {exc}") from exc
        if spec.K != doc.get("K", spec.K) or spec.A != doc.get("A", spec.A):
            raise ModelError("K/A do not match the array shapes")
        return spec

    def dumps(self) -> str:
        return json.dumps({"K": self.K, "A": self.A, "q": self.q.tolist(), "g": self.g.tolist(),
                           "p0": self.p0.tolist()})


def check_distribution(x: np.ndarray, name: str) -> None:
    if np.any(x < 0):
        raise ModelError(f"{name}: negative probability")
    sums = x.sum(axis=-1)
    if np.any(np.abs(sums - 1) > PROB_TOL):
        raise ModelError(f"{name}: probabilities must sum to 1 (got {sums.ravel()[0]!r})")


def action_vectors(K: int, A: int) -> np.ndarray:
    """All (a_1..a_K) in lexicographic order, shape (A^K, K)."""
    return np.array(list(itertools.product(range(A), repeat=K)), dtype=np.int64).reshape(-1, K)


def expand(spec: MDPSpec, P: np.ndarray, vectors: np.ndarray | None = None):
    """Successor beliefs and rewards for every action vector: shapes (B, V, K) and (B, V)."""
    vectors = action_vectors(spec.K, spec.A) if vectors is None else vectors
    ks = np.arange(spec.K)
    Qv = spec.q[ks, vectors]               # (V, K, K'): row k of the kernel under a_k
    Gv = spec.g[ks, vectors]               # (V, K)
    Pn = np.einsum("bk,vkj->bvj", P, Qv)
    Y = P @ Gv.T
    return Pn, Y


def lift_successors(spec: MDPSpec, p, y: float = 0.0, cap: int = 1 << 16):
    """Distinct successors of (p, y); only coordinates in the support of p choose actions."""
    p = np.asarray(p, dtype=float)
    supp = np.flatnonzero(p > 0)
    if spec.A ** len(supp) > cap:
        raise BudgetExceeded(f"{spec.A}^{len(supp)} action vectors exceed the cap {cap}")
    sub = action_vectors(len(supp), spec.A)
    vectors = np.zeros((len(sub), spec.K), dtype=np.int64)
    vectors[:, supp] = sub
    Pn, Y = expand(spec, p[None, :], vectors)
    out, seen = [], set()
    for pn, yn in zip(Pn[0], Y[0]):
        key = (pn.tobytes(), float(yn))
        if key not in seen:
            seen.add(key)
            out.append((pn, float(yn)))
    return out


# -- exploration --------------------------------------------------------------------------

@dataclass
class Exploration:
    model: Model
    beliefs: np.ndarray          # (N, K)
    layer: np.ndarray            # (N,) layer at which each retained state was created
    merges: list = field(default_factory=list)   # (layer, candidate index, representative, distance)
    n_candidates: int = 0
    closure_distance: float = 0.0
    depth: int = 0
    delta: float = 0.0

    @property
    def error_bound(self) -> float:
        return self.depth * self.delta


def _keys(P: np.ndarray, Y: np.ndarray, delta: float) -> np.ndarray:
    X = np.column_stack([P, Y])
    if delta == 0:
        return np.ascontiguousarray(X).view(np.int64)
    K = P.shape[1]
    # cells of side delta/K in p and delta in y have diameter < delta in the lifted metric
    scale = np.concatenate([np.full(K, K / delta), [1.0 / delta]])
    return np.floor(X * scale).astype(np.int64)


def explore_layers(expand_fn, root, depth: int, delta: float, max_states: int,
                   distance_fn, close: str = "loop"):
    """Layered exploration shared by the MDP and POMDP lifts.

    ``expand_fn(P)`` maps a batch of points (B, D) to successor points and
    rewards, shapes (B, V, D) and (B, V). A candidate whose cell (its exact
    coordinates when delta = 0) already holds a retained point is merged into
    that point; the first point retained in a cell represents it. Frontier
    states either loop on themselves (``close="loop"``) or send each successor
    to the nearest retained state (``close="nearest"``).
    """
    if delta < 0 or depth < 1:
        raise ValueError("need delta >= 0 and depth >= 1")
    root = np.asarray(root, dtype=float)
    D = len(root)
    pts, rew = [root[None, :]], [np.zeros(1)]
    lay = [np.zeros(1, dtype=np.int64)]
    keys_all = _keys(pts[0], rew[0], delta)
    succ: dict[int, np.ndarray] = {}
    frontier = np.array([0])
    merges = []
    n_cand = 0
    total = 1
    for d in range(1, depth + 1):
        Pn, Yn = expand_fn(np.concatenate(pts)[frontier])
        B, V = Yn.shape
        n_cand += B * V
        flatP, flatY = Pn.reshape(B * V, D), Yn.reshape(B * V)
        ck = _keys(flatP, flatY, delta)
        old = len(keys_all)
        _, first, inv = np.unique(np.concatenate([keys_all, ck]), axis=0,
                                  return_index=True, return_inverse=True)
        rep = first[inv.ravel()[old:]]               # row of each candidate's representative
        new_rows = np.unique(rep[rep >= old])
        n_new = len(new_rows)
        if total + n_new > max_states:
            raise BudgetExceeded(f"exploration exceeds {max_states} states at layer {d}")
        ids = np.empty(old + B * V, dtype=np.int64)
        ids[:old] = np.arange(old)
        ids[new_rows] = total + np.arange(n_new)
        target = ids[rep]
        cand = new_rows - old
        pts.append(flatP[cand])
        rew.append(flatY[cand])
        lay.append(np.full(n_new, d, dtype=np.int64))
        keys_all = np.concatenate([keys_all, ck[cand]])
        total += n_new
        tgt = target.reshape(B, V)
        for i, s in enumerate(frontier):
            succ[int(s)] = np.unique(tgt[i])
        merged = np.flatnonzero(rep != old + np.arange(B * V))
        if delta > 0 and len(merged):
            allP, allY = np.concatenate(pts), np.concatenate(rew)
            dist = distance_fn(flatP[merged], flatY[merged], allP[target[merged]], allY[target[merged]])
            merges.extend(zip([d] * len(merged), merged.tolist(), target[merged].tolist(), dist.tolist()))
        frontier = total - n_new + np.arange(n_new)
    allP, allY = np.concatenate(pts), np.concatenate(rew)
    closure = 0.0
    if close == "loop":
        for s in frontier:
            succ[int(s)] = np.array([int(s)])
    elif close == "nearest":
        if len(frontier):
            Pn, Yn = expand_fn(allP[frontier])
            for i, s in enumerate(frontier):
                dist = distance_fn(Pn[i][:, None, :], Yn[i][:, None], allP[None], allY[None])
                j = dist.argmin(axis=1)
                closure = max(closure, float(dist[np.arange(len(j)), j].max()))
                succ[int(s)] = np.unique(j)
    else:
        raise ValueError(f"unknown closure {close!r}")
    lists = [succ[i] for i in range(total)]
    indptr = np.zeros(total + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(x) for x in lists])
    model = Model(indptr, np.concatenate(lists), np.clip(allY, 0.0, 1.0), 0)
    return model, allP, np.concatenate(lay), merges, n_cand, closure


def l1_distance(P, Y, P2, Y2) -> np.ndarray:
    """Lifted metric max(||p - p'||_1, |y - y'|), broadcast over leading axes."""
    return np.maximum(np.abs(P - P2).sum(axis=-1), np.abs(Y - Y2))


def explore(spec: MDPSpec, depth: int, delta: float = 0.0, max_states: int = 2_000_000,
            close: str = "loop") -> Exploration:
    """Explicit lifted model from (p0, 0) up to ``depth`` transitions.

    For n <= depth the values v_n of the root only see states created in the
    first n layers, so the frontier closure does not affect them.
    """
    vectors = action_vectors(spec.K, spec.A)
    model, P, lay, merges, n_cand, closure = explore_layers(
        lambda X: expand(spec, X, vectors), spec.p0, depth, delta, max_states, l1_distance, close)
    return Exploration(model, P, lay, merges, n_cand, closure, depth, delta)


def direct_mdp_values(spec: MDPSpec, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """(v_n(k) for n <= n_max, sum_k p0^k v_n(k)) by backward induction on the MDP."""
    T = np.zeros((n_max + 1, spec.K))
    for n in range(1, n_max + 1):
        T[n] = (spec.g + spec.q @ T[n - 1]).max(axis=1)
    V = np.zeros_like(T)
    V[1:] = T[1:] / np.arange(1, n_max + 1)[:, None]
    return V, V @ spec.p0


@dataclass
class LiftInterval:
    interval: ValueInterval
    exploration: Exploration
    slack: float

    @property
    def lower(self) -> float:
        return max(0.0, self.interval.lower - self.slack)

    @property
    def upper(self) -> float:
        return min(1.0, self.interval.upper + self.slack)

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def mdp_uniform(spec: MDPSpec, target_gap: float = 0.05, depth: int = 8, delta: float = 1e-3,
                budget: Budget | None = None, max_states: int = 200_000) -> LiftInterval:
    """Uniform value interval of the lifted root on the pruned, closed lift.

    Frontier states send each successor to the nearest retained state; the
    largest such distance is reported on the exploration but not added to
    the depth * delta widening.
    """
    ex = explore(spec, depth, delta, max_states=max_states, close="nearest")
    iv = estimate_vstar(ex.model, 0, target_gap=target_gap, budget=budget)
    return LiftInterval(iv, ex, ex.error_bound)


def _tail_totals(spec: MDPSpec, P: np.ndarray, j: int, vectors: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Exact j-stage totals of the lift from beliefs P, without merging."""
    if j == 0:
        return np.zeros(len(P))
    if j == 1:
        # the best successor reward separates over coordinates of p
        return P @ spec.g.max(axis=1)
    out = np.empty(len(P))
    for a in range(0, len(P), chunk):
        Pn, Y = expand(spec, P[a:a + chunk], vectors)
        B, V, K = Pn.shape
        out[a:a + chunk] = (Y + _tail_totals(spec, Pn.reshape(B * V, K), j - 1, vectors).reshape(B, V)).max(axis=1)
    return out


def lift_values(spec: MDPSpec, depth: int, delta: float = 0.0, exact_tail: int = 1,
                max_states: int = 2_000_000) -> tuple[np.ndarray, Exploration]:
    """v_n of the lifted root for n = 0..depth.

    The first ``depth - exact_tail`` layers are explored and merged exactly
    as in ``explore``; the last ``exact_tail`` layers are evaluated without
    merging and never stored. Skipping merges keeps the depth * delta bound,
    and the stored model stays small where the full pruned model would not.
    """
    if not 1 <= exact_tail <= depth:
        raise ValueError("need 1 <= exact_tail <= depth")
    vectors = action_vectors(spec.K, spec.A)
    head = depth - exact_tail
    if head == 0:
        T = np.array([_tail_totals(spec, spec.p0[None, :], j, vectors)[0] for j in range(depth + 1)])
        ex = Exploration(Model.from_successors([[0]], [0.0]), spec.p0[None, :].copy(),
                         np.zeros(1, dtype=np.int64), [], 0, 0.0, depth, delta)
    else:
        ex = explore(spec, head, delta, max_states=max_states)
        model = ex.model
        frontier = np.flatnonzero(ex.layer == head)
        tails = np.stack([_tail_totals(spec, ex.beliefs[frontier], j, vectors) for j in range(exact_tail + 1)])
        T = np.zeros(depth + 1)
        cur = np.zeros(model.n_states)
        for j in range(1, depth + 1):
            nxt = successor_max(model, model.rewards + cur)
            # frontier states are only reached at stage >= head, so j <= exact_tail there
            nxt[frontier] = tails[j] if j <= exact_tail else np.nan
            cur = nxt
            T[j] = cur[0]
    V = np.zeros(depth + 1)
    V[1:] = T[1:] / np.arange(1, depth + 1)
    if not np.all(np.isfinite(V)):
        raise RuntimeError("root value touched an unexpanded frontier state")
    return V, ex
