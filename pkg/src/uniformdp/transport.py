"""Exact discrete optimal transport by the transportation simplex (MODI method)."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

REDUCED_COST_TOL = 1e-12


class TransportError(RuntimeError):
    pass


@dataclass
class TransportResult:
    value: float
    plan: np.ndarray
    row_potential: np.ndarray
    col_potential: np.ndarray
    dual_value: float
    dual_residual: float       # largest violation of u_i + v_j <= c_ij
    iterations: int


def _northwest(a: np.ndarray, b: np.ndarray):
    n, m = len(a), len(b)
    a, b = a.copy(), b.copy()
    x = np.zeros((n, m))
    basis = []
    i = j = 0
    while len(basis) < n + m - 1:
        t = min(a[i], b[j])
        x[i, j] = t
        a[i] -= t
        b[j] -= t
        basis.append((i, j))
        if i == n - 1:
            j += 1
        elif j == m - 1:
            i += 1
        elif a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return x, basis


def _potentials(C: np.ndarray, basis):
    n, m = C.shape
    adj = [[] for _ in range(n + m)]
    for i, j in basis:
        adj[i].append(n + j)
        adj[n + j].append(i)
    pot = np.full(n + m, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if np.isnan(pot[w]):
                pot[w] = (C[v, w - n] - pot[v]) if v < n else (C[w, v - n] - pot[v])
                queue.append(w)
    return pot[:n], pot[n:], adj


def _tree_path(adj, start: int, goal: int) -> list[int]:
    parent = {start: None}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        if v == goal:
            break
        for w in adj[v]:
            if w not in parent:
                parent[w] = v
                queue.append(w)
    path = [goal]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def transport(a, b, C, max_iterations: int = 10_000) -> TransportResult:
    """Minimise sum C_ij x_ij over plans with row sums a and column sums b.

    ``b`` is rescaled to the total mass of ``a`` so that tiny rounding
    differences between the marginals do not make the problem infeasible.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    C = np.asarray(C, dtype=float)
    if C.shape != (len(a), len(b)):
        raise ValueError("cost matrix shape does not match the marginals")
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("marginals must be nonnegative")
    b = b * (a.sum() / b.sum())
    n, m = C.shape
    x, basis = _northwest(a, b)
    tol = REDUCED_COST_TOL * max(1.0, float(np.abs(C).max()))
    for it in range(max_iterations + 1):
        u, v, adj = _potentials(C, basis)
        red = C - u[:, None] - v[None, :]
        i, j = np.unravel_index(int(np.argmin(red)), red.shape)
        if red[i, j] >= -tol:
            return TransportResult(float((C * x).sum()), x, u, v, float(a @ u + b @ v),
                                   float(max(0.0, -red.min())), it)
        if it == max_iterations:
            break
        # cycle: enter (i, j), then alternate along the tree path from column j back to row i
        path = _tree_path(adj, n + j, i)
        cells = []
        for s, t in zip(path[:-1], path[1:]):
            cells.append((t, s - n) if s >= n else (s, t - n))
        minus = cells[0::2]
        plus = cells[1::2]
        k = min(range(len(minus)), key=lambda r: (x[minus[r]], r))
        theta = x[minus[k]]
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[i, j] += theta
        leave = minus[k]
        x[leave] = 0.0
        basis[basis.index(leave)] = (i, j)
    raise TransportError(f"transport simplex did not converge in {max_iterations} iterations")
