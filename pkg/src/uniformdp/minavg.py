"""Min-running-average values w_n and w_{m,n} by threshold feasibility.

For a threshold c the layered DP keeps, per (state, t), the largest prefix
sum S_t reachable while every running average so far is at least c.
Keeping only the largest sum is enough: two prefixes ending at the same
state face the same future rewards, so the larger one satisfies every later
constraint the smaller one does. w is then the largest feasible c, found by
bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Model, Play, bfs_path, nu, reach_layers, reach_union_mask
from .values import successor_max

SLACK = 1e-12
DEFAULT_TOL = 1e-9


def pred_max(model: Model, S: np.ndarray) -> np.ndarray:
    """out[..., y'] = max over predecessors y of S[..., y] (-inf if none)."""
    pptr, pidx = model.predecessors_csr
    out = np.full(S.shape, -np.inf)
    has = np.flatnonzero(np.diff(pptr) > 0)
    if len(has):
        out[..., has] = np.maximum.reduceat(S[..., pidx], pptr[has], axis=-1)
    return out


def threshold_layers(model: Model, sources: np.ndarray, n: int, c, keep: bool = False):
    """Run the feasibility DP from ``sources`` (bool, shape (B, Z) or (Z,)).

    Returns the last layer S_n, or all layers stacked when ``keep`` is set.
    ``c`` is a scalar or one threshold per batch row.
    """
    S = np.where(sources, 0.0, -np.inf)
    c = np.asarray(c, dtype=float)
    if S.ndim == 2 and c.ndim == 1:
        c = c[:, None]
    layers = [S] if keep else None
    r = model.rewards
    for t in range(1, n + 1):
        S = r + pred_max(model, S)
        S = np.where(S >= c * t - SLACK, S, -np.inf)
        if keep:
            layers.append(S)
    return np.stack(layers) if keep else S


@dataclass
class ThresholdDP:
    """Feasible layers of the threshold DP for one source set."""

    threshold: float
    layers: np.ndarray

    @property
    def horizon(self) -> int:
        return self.layers.shape[0] - 1

    def path(self, model: Model) -> tuple[int, list[int]]:
        """(source, y_1..y_n) achieving the threshold; ties go to the lowest index."""
        pptr, pidx = model.predecessors_csr
        L = self.layers
        n = self.horizon
        last = L[n]
        y = int(np.flatnonzero(last == last.max())[0])
        path = [y]
        for t in range(n, 0, -1):
            preds = pidx[pptr[y]:pptr[y + 1]]
            vals = L[t - 1][preds]
            y = int(preds[np.flatnonzero(vals == vals.max())[0]])
            path.append(y)
        path.reverse()
        return path[0], path[1:]


def feasible(model: Model, z: int, n: int, c: float) -> ThresholdDP | None:
    """Witness DP if some play from z keeps every running average up to n at or above c."""
    if not 0 <= c <= 1:
        raise ValueError("threshold must lie in [0, 1]")
    src = np.zeros(model.n_states, dtype=bool)
    src[z] = True
    return _feasible_from(model, src, n, c)


def _feasible_from(model, sources, n, c):
    L = threshold_layers(model, sources, n, c, keep=True)
    return ThresholdDP(c, L) if np.isfinite(L[-1]).any() else None


@dataclass
class MinAvgResult:
    value: float
    source: int
    path: list[int]
    iterations: int

    def nu(self, model: Model) -> float:
        return nu(model.rewards[self.path], 0, len(self.path))


def w_from_sources(model: Model, sources: np.ndarray, n: int, tol: float = DEFAULT_TOL) -> MinAvgResult:
    """max over sources y of w_n(y), with a witness path from the maximising source.

    Bisection on c where every feasible probe lifts the lower end to the
    witness's own min running average, then probes just above it; the search
    ends once the gap is below ``tol``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    r = model.rewards

    def probe(c):
        dp = _feasible_from(model, sources, n, c)
        if dp is None:
            return None
        src, path = dp.path(model)
        return max(c, nu(r[path], 0, n)), src, path

    lo, src, path = probe(0.0)
    hi = 1.0 + tol
    its = 1
    while hi - lo > tol:
        mid = min(lo + tol, hi) if its % 2 == 1 else 0.5 * (lo + hi)
        got = probe(min(mid, 1.0))
        its += 1
        if got is None:
            hi = mid
        else:
            lo, src, path = got
            if lo >= 1.0:
                break
    return MinAvgResult(float(lo), int(src), path, its)


def w_n(model: Model, z: int, n: int, tol: float = DEFAULT_TOL) -> tuple[float, Play]:
    src = np.zeros(model.n_states, dtype=bool)
    src[z] = True
    res = w_from_sources(model, src, n, tol)
    return res.value, Play(z, tuple(res.path))


def w_mn(model: Model, z: int, m: int, n: int, tol: float = DEFAULT_TOL) -> tuple[float, Play]:
    """w_{m,n}(z) = max over F^m(z) of w_n, with a witness play of length m + n."""
    res = w_from_sources(model, reach_layers(model, z, m)[-1], n, tol)
    prefix = bfs_path(model, z, res.source, m) if m else []
    return res.value, Play(z, tuple(prefix + res.path))


def w_union(model: Model, z: int, n: int, tol: float = DEFAULT_TOL, m_max: float | None = None):
    """max over m <= m_max (default: all m) of w_{m,n}(z), with the attaining play."""
    mask = reach_union_mask(model, z, m_max)
    res = w_from_sources(model, mask, n, tol)
    m = shortest_distance(model, z, res.source)
    prefix = bfs_path(model, z, res.source, m) if m else []
    return res.value, Play(z, tuple(prefix + res.path)), m


def shortest_distance(model: Model, z: int, target: int) -> int:
    mask = np.zeros(model.n_states, dtype=bool)
    mask[z] = True
    seen = mask.copy()
    for d in range(model.n_states + 1):
        if mask[target]:
            return d
        mask = successor_mask(model, mask) & ~seen
        seen |= mask
    raise ValueError(f"state {target} is not reachable from {z}")


def successor_mask(model: Model, mask: np.ndarray) -> np.ndarray:
    out = np.zeros(model.n_states, dtype=bool)
    out[model.indices[np.repeat(mask, model.out_degree)]] = True
    return out


def w_n_table(model: Model, n_max: int, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``W[n, z] = w_n(z)`` (row 0 unused), by batched plain bisection."""
    Z = model.n_states
    eye = np.eye(Z, dtype=bool)
    W = np.zeros((n_max + 1, Z))
    iters = max(1, math.ceil(math.log2(1.0 / tol)))
    for n in range(1, n_max + 1):
        hi = np.ones(Z)
        lo = np.where(np.isfinite(threshold_layers(model, eye, n, hi)).any(axis=1), 1.0, 0.0)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            ok = np.isfinite(threshold_layers(model, eye, n, mid)).any(axis=1)
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        W[n] = lo
    return W


def w_mn_table(model: Model, m_max: int, W: np.ndarray) -> np.ndarray:
    """``WM[m, n, z] = w_{m,n}(z)`` via max over F^m(z)."""
    WM = np.empty((m_max + 1,) + W.shape)
    WM[0] = W
    for m in range(1, m_max + 1):
        WM[m] = successor_max(model, WM[m - 1])
    return WM
