"""Deterministic dynamic programming problems on finite state sets.

A problem is a quadruple (Z, F, r, z0): a finite state set indexed
``0..n-1``, a correspondence F given as non-empty successor lists, a reward
``r(z)`` in [0, 1] collected when the play *enters* z, and an initial state.
Successor lists are held in CSR form (``indptr``/``indices``) so that the
value recursions can run as vectorised reductions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

INF = math.inf
REWARD_TOL = 1e-12
METRIC_TOL = 1e-9


class ModelError(ValueError):
    """Raised when a model (or model file) violates the format or the axioms."""


class BudgetExceeded(RuntimeError):
    """Raised when an enumeration or search exceeds its configured budget."""


@dataclass(frozen=True, eq=False)
class Model:
    indptr: np.ndarray
    indices: np.ndarray
    rewards: np.ndarray
    initial: int = 0
    metric: np.ndarray | str | None = None
    labels: tuple | None = None

    @classmethod
    def from_successors(
        cls,
        successors: Sequence[Iterable[int]],
        rewards: Sequence[float],
        initial: int = 0,
        metric=None,
        labels=None,
        validate: bool = True,
    ) -> "Model":
        """Build a model from per-state successor lists (sorted and deduplicated here)."""
        lists = [sorted(set(int(s) for s in succ)) for succ in successors]
        indptr = np.zeros(len(lists) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(s) for s in lists])
        indices = np.fromiter((s for succ in lists for s in succ), dtype=np.int64, count=int(indptr[-1]))
        if isinstance(metric, (list, tuple)):
            metric = np.asarray(metric, dtype=float)
        model = cls(indptr, indices, np.asarray(rewards, dtype=float), int(initial), metric,
                    tuple(labels) if labels is not None else None)
        if validate:
            model.validate()
        return model

    @classmethod
    def from_csr(cls, indptr, indices, rewards, initial=0, metric=None, labels=None,
                 validate: bool = True) -> "Model":
        """Build from CSR arrays; each row is sorted and deduplicated."""
        indptr = np.asarray(indptr, dtype=np.int64)
        indices = np.asarray(indices, dtype=np.int64)
        n = len(indptr) - 1
        rows = np.repeat(np.arange(n), np.diff(indptr))
        order = np.lexsort((indices, rows))
        rows, cols = rows[order], indices[order]
        keep = np.ones(len(cols), dtype=bool)
        keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        rows, cols = rows[keep], cols[keep]
        new_ptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(new_ptr, rows + 1, 1)
        model = cls(np.cumsum(new_ptr), cols, np.asarray(rewards, dtype=float), int(initial),
                    metric, labels)
        if validate:
            model.validate()
        return model

    # -- structure -----------------------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.indptr) - 1

    def successors(self, z: int) -> np.ndarray:
        return self.indices[self.indptr[z]:self.indptr[z + 1]]

    def successor_lists(self) -> list[list[int]]:
        return [self.successors(z).tolist() for z in range(self.n_states)]

    @cached_property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @cached_property
    def rows(self) -> np.ndarray:
        """Source state of every CSR edge."""
        return np.repeat(np.arange(self.n_states), self.out_degree)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        data = np.ones(len(self.indices), dtype=np.int8)
        return sparse.csr_matrix((data, self.indices, self.indptr), shape=(self.n_states,) * 2)

    @cached_property
    def predecessors_csr(self) -> tuple[np.ndarray, np.ndarray]:
        """(indptr, indices) of the reverse graph, each row sorted ascending."""
        order = np.lexsort((self.rows, self.indices))
        preds = self.rows[order]
        ptr = np.zeros(self.n_states + 1, dtype=np.int64)
        np.add.at(ptr, self.indices + 1, 1)
        return np.cumsum(ptr), preds

    def is_successor(self, z: int, z1: int) -> bool:
        succ = self.successors(z)
        i = np.searchsorted(succ, z1)
        return bool(i < len(succ) and succ[i] == z1)

    def distance(self, z: int, z2: int) -> float:
        if self.metric is None:
            raise ModelError("model has no metric")
        if isinstance(self.metric, str):
            return 0.0 if z == z2 else 1.0
        return float(self.metric[z, z2])

    def metric_matrix(self) -> np.ndarray:
        if self.metric is None:
            raise ModelError("model has no metric")
        if isinstance(self.metric, str):
            return 1.0 - np.eye(self.n_states)
        return np.asarray(self.metric, dtype=float)

    # -- validation ----------------------------------------------------------------

    def validate(self, triangle: bool = True) -> None:
        """Check structure, rewards and metric; ``triangle=False`` skips the O(|Z|^3) triangle pass."""
        n = self.n_states
        if n == 0:
            raise ModelError("model has no states")
        if self.rewards.shape != (n,):
            raise ModelError(f"expected {n} rewards, got shape {self.rewards.shape}")
        empty = np.flatnonzero(self.out_degree == 0)
        if len(empty):
            raise ModelError(f"states[{empty[0]}].successors: empty successor set")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            bad = int(self.rows[np.flatnonzero((self.indices < 0) | (self.indices >= n))[0]])
            raise ModelError(f"states[{bad}].successors: unknown state id")
        bad_r = np.flatnonzero(~((self.rewards >= -REWARD_TOL) & (self.rewards <= 1 + REWARD_TOL)))
        if len(bad_r):
            z = int(bad_r[0])
            raise ModelError(f"states[{z}].reward: {self.rewards[z]!r} outside [0, 1]")
        if not 0 <= self.initial < n:
            raise ModelError(f"initial: {self.initial} is not a state id")
        if self.metric is not None and not isinstance(self.metric, str):
            _check_pseudometric(np.asarray(self.metric, dtype=float), n, triangle)
        elif isinstance(self.metric, str) and self.metric != "discrete":
            raise ModelError(f"metric.type: unknown metric {self.metric!r}")


def _check_pseudometric(d: np.ndarray, n: int, triangle: bool = True) -> None:
    if d.shape != (n, n):
        raise ModelError(f"metric.d: expected {n}x{n} matrix, got {d.shape}")
    if np.any(d < -METRIC_TOL):
        i, j = np.argwhere(d < -METRIC_TOL)[0]
        raise ModelError(f"metric.d: negative distance d({i},{j})")
    diag = np.flatnonzero(np.abs(np.diag(d)) > METRIC_TOL)
    if len(diag):
        raise ModelError(f"metric.d: d({diag[0]},{diag[0]}) != 0")
    asym = np.argwhere(np.abs(d - d.T) > METRIC_TOL)
    if len(asym):
        i, j = asym[0]
        raise ModelError(f"metric.d: asymmetric at ({i},{j})")
    for k in range(n if triangle else 0):
        viol = d > d[:, [k]] + d[[k], :] + METRIC_TOL
        if viol.any():
            i, j = np.argwhere(viol)[0]
            raise ModelError(f"metric.d: triangle inequality fails for triple ({i},{k},{j})")


# -- file format -------------------------------------------------------------------

def load_model(text: str) -> Model:
    """Parse and validate the JSON model format."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ModelError("top level must be an object")
    states = doc.get("states")
    if not isinstance(states, list) or not states:
        raise ModelError("states: expected a non-empty array")
    n = len(states)
    succ: list = [None] * n
    rewards = [0.0] * n
    for pos, entry in enumerate(states):
        if not isinstance(entry, dict):
            raise ModelError(f"states[{pos}]: expected an object")
        for key in ("id", "reward", "successors"):
            if key not in entry:
                raise ModelError(f"states[{pos}].{key}: missing")
        sid = entry["id"]
        if not isinstance(sid, int) or isinstance(sid, bool) or not 0 <= sid < n:
            raise ModelError(f"states[{pos}].id: {sid!r} is not in 0..{n - 1}")
        if succ[sid] is not None:
            raise ModelError(f"states[{pos}].id: duplicate id {sid}")
        reward = entry["reward"]
        if not isinstance(reward, (int, float)) or isinstance(reward, bool):
            raise ModelError(f"states[{pos}].reward: expected a number")
        if not 0.0 <= reward <= 1.0:
            raise ModelError(f"states[{pos}].reward: {reward!r} outside [0, 1]")
        lst = entry["successors"]
        if not isinstance(lst, list):
            raise ModelError(f"states[{pos}].successors: expected an array")
        if not lst:
            raise ModelError(f"states[{pos}].successors: empty successor set")
        for s in lst:
            if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < n:
                raise ModelError(f"states[{pos}].successors: unknown state id {s!r}")
        succ[sid] = lst
        rewards[sid] = float(reward)
    initial = doc.get("initial")
    if not isinstance(initial, int) or isinstance(initial, bool):
        raise ModelError("initial: expected an integer state id")
    metric = None
    if "metric" in doc:
        spec = doc["metric"]
        if not isinstance(spec, dict) or "type" not in spec:
            raise ModelError("metric: expected an object with a 'type' key")
        if spec["type"] == "discrete":
            metric = "discrete"
        elif spec["type"] == "matrix":
            try:
                metric = np.asarray(spec["d"], dtype=float)
            except (KeyError, ValueError, TypeError) as exc:
                raise ModelError("metric.d: expected a numeric matrix") from exc
        else:
            raise ModelError(f"metric.type: unknown metric {spec['type']!r}")
    return Model.from_successors(succ, rewards, initial, metric)


def dumps_model(model: Model) -> str:
    """Serialise in the canonical key order; floats use round-trip repr."""
    lines = ["{", '  "states": [']
    n = model.n_states
    for z in range(n):
        entry = json.dumps({"id": z, "reward": float(model.rewards[z]),
                            "successors": model.successors(z).tolist()})
        lines.append("    " + entry + ("," if z < n - 1 else ""))
    lines.append("  ],")
    tail = f'  "initial": {model.initial}'
    if model.metric is None:
        lines.append(tail)
    else:
        lines.append(tail + ",")
        if isinstance(model.metric, str):
            lines.append('  "metric": {"type": "discrete"}')
        else:
            rows = ",\n        ".join(json.dumps([float(x) for x in row]) for row in model.metric)
            lines.append('  "metric": {"type": "matrix", "d": [\n        ' + rows + "]}")
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- reachable sets ----------------------------------------------------------------

def step_mask(model: Model, mask: np.ndarray) -> np.ndarray:
    """Indicator of F(mask)."""
    out = np.zeros(model.n_states, dtype=bool)
    src = np.flatnonzero(mask)
    if len(src):
        starts, ends = model.indptr[src], model.indptr[src + 1]
        idx = np.concatenate([model.indices[a:b] for a, b in zip(starts, ends)])
        out[idx] = True
    return out


def reach_layers(model: Model, z: int, m: int) -> list[np.ndarray]:
    """Masks of F^0(z), ..., F^m(z)."""
    mask = np.zeros(model.n_states, dtype=bool)
    mask[z] = True
    layers = [mask]
    for _ in range(m):
        mask = step_mask(model, mask)
        layers.append(mask)
    return layers


def reach(model: Model, z: int, m: int) -> frozenset[int]:
    """F^m(z): the states reachable in exactly m steps (F^0(z) = {z})."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return frozenset(np.flatnonzero(reach_layers(model, z, m)[-1]).tolist())


def reach_union_mask(model: Model, z: int, m: float | None = None) -> np.ndarray:
    mask = np.zeros(model.n_states, dtype=bool)
    mask[z] = True
    frontier = mask.copy()
    if m is None or m == INF:
        while True:
            new = step_mask(model, frontier) & ~mask
            if not new.any():
                return mask
            mask |= new
            frontier = new
    for _ in range(int(m)):
        frontier = step_mask(model, frontier)
        mask |= frontier
    return mask


def reach_union(model: Model, z: int, m: float | None = None) -> frozenset[int]:
    """G^m(z) = F^0(z) u ... u F^m(z); ``m=None`` or ``math.inf`` gives G^inf(z) by fixpoint."""
    if m is not None and m < 0:
        raise ValueError("m must be non-negative")
    return frozenset(np.flatnonzero(reach_union_mask(model, z, m)).tolist())


def bfs_path(model: Model, z: int, target: int, length: int) -> list[int]:
    """A path z -> ... -> target with exactly ``length`` steps (excluding z).

    Parents are taken as the lowest-index predecessor in the previous layer.
    """
    layers = reach_layers(model, z, length)
    if not layers[-1][target]:
        raise ValueError(f"state {target} is not in F^{length}({z})")
    pptr, pidx = model.predecessors_csr
    path = [target]
    cur = target
    for k in range(length, 0, -1):
        preds = pidx[pptr[cur]:pptr[cur + 1]]
        cur = int(preds[layers[k - 1][preds]][0])
        path.append(cur)
    path.reverse()
    return path[1:]


# -- plays and payoff functionals ------------------------------------------------------

@dataclass(frozen=True)
class Play:
    """A play prefix z_1..z_T from ``origin``; with ``cycle_start`` it is an infinite lasso."""

    origin: int
    steps: tuple[int, ...]
    cycle_start: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        if not self.steps:
            raise ValueError("a play needs at least one step")
        if self.cycle_start is not None and not 0 <= self.cycle_start < len(self.steps):
            raise ValueError("cycle_start out of range")

    @property
    def is_lasso(self) -> bool:
        return self.cycle_start is not None

    @property
    def prefix_length(self) -> int:
        return self.cycle_start if self.is_lasso else len(self.steps)

    @property
    def cycle_length(self) -> int:
        return len(self.steps) - self.cycle_start if self.is_lasso else 0

    def validate(self, model: Model) -> None:
        prev = self.origin
        for t, s in enumerate(self.steps):
            if not model.is_successor(prev, s):
                raise ModelError(f"play step {t}: {s} is not a successor of {prev}")
            prev = s
        if self.is_lasso and not model.is_successor(self.steps[-1], self.steps[self.cycle_start]):
            raise ModelError("lasso cycle does not close: first cycle state is not a successor "
                             "of the last step")

    def states(self, length: int) -> np.ndarray:
        """z_1..z_length, unrolling the cycle of a lasso."""
        steps = np.asarray(self.steps)
        if length <= len(steps):
            return steps[:length]
        if not self.is_lasso:
            raise ValueError(f"finite play has only {len(steps)} steps")
        cyc = steps[self.cycle_start:]
        extra = length - len(steps)
        reps = np.resize(cyc, extra)
        return np.concatenate([steps, reps])

    def rewards(self, model: Model, length: int | None = None) -> np.ndarray:
        return model.rewards[self.states(len(self.steps) if length is None else length)]

    def cycle_mean(self, model: Model) -> float:
        if not self.is_lasso:
            raise ValueError("play is not a lasso")
        return float(np.mean(model.rewards[list(self.steps[self.cycle_start:])]))

    def dumps(self) -> str:
        lines = [f"origin: {self.origin}", "steps: " + " ".join(map(str, self.steps))]
        if self.is_lasso:
            lines.append(f"cycle_start: {self.cycle_start}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Play":
        fields = {}
        for line in text.splitlines():
            if line.strip():
                key, _, val = line.partition(":")
                fields[key.strip()] = val.strip()
        try:
            cycle = fields.get("cycle_start")
            return cls(int(fields["origin"]), tuple(int(s) for s in fields["steps"].split()),
                       int(cycle) if cycle not in (None, "") else None)
        except (KeyError, ValueError) as exc:
            raise ModelError(f"malformed play: {exc}") from exc


def _check_window(stream, m: int, n: int) -> np.ndarray:
    stream = np.asarray(stream, dtype=float)
    if n < 1 or m < 0:
        raise ValueError("need m >= 0 and n >= 1")
    if len(stream) < m + n:
        raise ValueError(f"stream has {len(stream)} entries, need {m + n}")
    return stream


def gamma(stream, m: int, n: int) -> float:
    """Average of entries m+1..m+n (1-based) of a payoff stream."""
    stream = _check_window(stream, m, n)
    return float(np.sum(stream[m:m + n]) / n)


def nu(stream, m: int, n: int) -> float:
    """Minimum over t=1..n of gamma(stream, m, t)."""
    stream = _check_window(stream, m, n)
    running = np.cumsum(stream[m:m + n]) / np.arange(1, n + 1)
    return float(running.min())


def running_averages(stream, m: int = 0) -> np.ndarray:
    stream = np.asarray(stream, dtype=float)[m:]
    return np.cumsum(stream) / np.arange(1, len(stream) + 1)


# -- metric hypotheses ---------------------------------------------------------------

def check_nonexpansive(model: Model, tol: float = 1e-12):
    """None if F is non-expansive for the model's metric, else a violating (z, z', z1).

    Non-expansive: for all z, z' and z1 in F(z) some z1' in F(z') has
    d(z1, z1') <= d(z, z').
    """
    d = model.metric_matrix()
    n = model.n_states
    # nearest[x, z'] = min over z1' in F(z') of d(x, z1')
    cols = d[:, model.indices]
    nearest = np.minimum.reduceat(cols, model.indptr[:-1], axis=1)
    for z in range(n):
        succ = model.successors(z)
        bad = nearest[succ, :] > d[z, :][None, :] + tol
        if bad.any():
            zp, i = np.argwhere(bad.T)[0]
            return int(z), int(zp), int(succ[i])
    return None
