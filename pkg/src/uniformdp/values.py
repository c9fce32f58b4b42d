"""Finite-horizon, shifted and discounted values, plus exhaustive oracles.

Tables are plain arrays: ``V[n, z]`` is the n-stage value, with row 0 set
to zero so that the recursion can index it directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .model import BudgetExceeded, Model, Play

SANDWICH_TOL = 1e-9
DEFAULT_LAMBDA_GRID = tuple(2.0 ** -k for k in range(1, 21))


def successor_max(model: Model, x: np.ndarray) -> np.ndarray:
    """y(z) = max over z' in F(z) of x(z'); works on the last axis of x."""
    return np.maximum.reduceat(x[..., model.indices], model.indptr[:-1], axis=-1)


def successor_min(model: Model, x: np.ndarray) -> np.ndarray:
    return np.minimum.reduceat(x[..., model.indices], model.indptr[:-1], axis=-1)


# -- n-stage and shifted values ---------------------------------------------------------

def v_n_totals(model: Model, n_max: int) -> np.ndarray:
    """Best total reward over n stages, ``T[n, z]`` for n = 0..n_max."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    T = np.zeros((n_max + 1, model.n_states))
    for n in range(1, n_max + 1):
        T[n] = successor_max(model, model.rewards + T[n - 1])
    return T


def v_n_table(model: Model, n_max: int) -> np.ndarray:
    """``V[n, z] = v_n(z)`` for n = 0..n_max (row 0 is zero)."""
    T = v_n_totals(model, n_max)
    V = np.zeros_like(T)
    V[1:] = T[1:] / np.arange(1, n_max + 1)[:, None]
    return V


def shift_max(model: Model, values: np.ndarray, m: int) -> np.ndarray:
    """max over F^m(z) of ``values``, for every z at once."""
    out = np.asarray(values, dtype=float)
    for _ in range(m):
        out = successor_max(model, out)
    return out


def v_mn_table(model: Model, m_max: int, V: np.ndarray) -> np.ndarray:
    """``VM[m, n, z] = v_{m,n}(z)`` for m = 0..m_max and every n in V."""
    VM = np.empty((m_max + 1,) + V.shape)
    VM[0] = V
    for m in range(1, m_max + 1):
        VM[m] = successor_max(model, VM[m - 1])
    return VM


def v_mn(model: Model, z: int, m: int, n: int, V: np.ndarray) -> float:
    """v_{m,n}(z) = max of v_n over F^m(z)."""
    if n >= V.shape[0]:
        raise ValueError(f"tables only cover n <= {V.shape[0] - 1}")
    return float(shift_max(model, V[n], m)[z])


# -- discounted values ------------------------------------------------------------------

class ValueIterationError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"value iteration did not converge after {iterations} iterations "
                         f"(residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class DiscountParams:
    lam: float
    tolerance: float = 1e-10
    max_iterations: int = 10_000_000

    def __post_init__(self):
        if not 0 < self.lam <= 1:
            raise ValueError("lambda must lie in (0, 1]")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class DiscountedResult:
    values: np.ndarray
    lam: float
    residual: float
    iterations: int

    @property
    def error_bound(self) -> float:
        # contraction factor 1 - lam
        return self.residual * (1 - self.lam) / self.lam


def v_lambda_table(model: Model, params: DiscountParams) -> DiscountedResult:
    """Fixed-point iteration v <- max_{z'}(lam r(z') + (1-lam) v(z')).

    Stops once the sup-norm change is at most ``tolerance * lam``, which
    places the iterate within ``tolerance`` of the fixed point.
    """
    lam = params.lam
    v = np.zeros(model.n_states)
    target = params.tolerance * lam
    residual = math.inf
    for it in range(1, params.max_iterations + 1):
        new = successor_max(model, lam * model.rewards + (1 - lam) * v)
        residual = float(np.max(np.abs(new - v)))
        v = new
        if residual <= target:
            return DiscountedResult(v, lam, residual, it)
    raise ValueIterationError(residual, params.max_iterations)


def _evaluate_policy(model: Model, policy: np.ndarray, lam: float) -> np.ndarray:
    n = model.n_states
    P = sparse.csr_matrix((np.ones(n), (np.arange(n), policy)), shape=(n, n))
    A = sparse.identity(n, format="csr") - (1 - lam) * P
    return np.atleast_1d(spsolve(A.tocsc(), lam * model.rewards[policy]))


def v_lambda_exact(model: Model, lam: float, max_rounds: int = 10_000) -> np.ndarray:
    """Discounted values by policy iteration with exact linear solves."""
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    policy = model.indices[model.indptr[:-1]].copy()
    for _ in range(max_rounds):
        v = _evaluate_policy(model, policy, lam)
        q = lam * model.rewards + (1 - lam) * v
        best = successor_max(model, q)
        improve = best > q[policy] + 1e-13 * max(1.0, float(np.max(np.abs(q))))
        if not improve.any():
            return v
        qe = q[model.indices]
        hit = qe >= np.repeat(best, model.out_degree)
        # lowest index among maximisers
        pos = np.where(hit, np.arange(len(qe)), len(qe))
        first = np.minimum.reduceat(pos, model.indptr[:-1])
        policy = np.where(improve, model.indices[first], policy)
    raise ValueIterationError(math.nan, max_rounds)


def lasso_discounted(prefix: np.ndarray, cycle: np.ndarray, lam: float) -> float:
    """Exact discounted payoff of the stream prefix, cycle, cycle, ..."""
    prefix = np.asarray(prefix, dtype=float)
    cycle = np.asarray(cycle, dtype=float)
    log1m = math.log1p(-lam) if lam < 1 else -math.inf
    P, C = len(prefix), len(cycle)
    if lam == 1:
        return float(prefix[0] if P else cycle[0])
    wp = lam * np.exp(np.arange(P) * log1m)
    wc = lam * np.exp(np.arange(C) * log1m)
    cyc = math.fsum(wc * cycle) / -math.expm1(C * log1m)
    return math.fsum(wp * prefix) + math.exp(P * log1m) * cyc


def play_discounted(model: Model, play: Play, lam: float) -> float:
    if not play.is_lasso:
        raise ValueError("exact discounted payoff needs a lasso play")
    r = model.rewards
    steps = np.asarray(play.steps)
    return lasso_discounted(r[steps[:play.cycle_start]], r[steps[play.cycle_start:]], lam)


def abel_mean(stream, lam: float) -> tuple[float, float]:
    """Truncated Abel mean of a finite stream and the tail weight (1-lam)^len.

    For any continuation in [0, 1] the infinite sum lies in [sum, sum + tail].
    """
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    a = np.asarray(stream, dtype=float)
    if lam == 1:
        return (float(a[0]) if len(a) else 0.0), 0.0
    log1m = math.log1p(-lam)
    w = lam * np.exp(np.arange(len(a)) * log1m)
    return math.fsum(w * a), math.exp(len(a) * log1m)


@dataclass
class EnvelopeRow:
    lam: float
    lower: float
    upper: float
    env_low: float
    env_high: float

    @property
    def ok(self) -> bool:
        return self.lower >= self.env_low - 1e-12 and self.upper <= self.env_high + 1e-12


def abel_envelope(stream, lambdas=(0.1, 0.01, 0.001)) -> list[EnvelopeRow]:
    """Bracketed Abel means against [min_t gamma_t - w, max_t gamma_t + w], w the bracket width."""
    a = np.asarray(stream, dtype=float)
    avg = np.cumsum(a) / np.arange(1, len(a) + 1)
    rows = []
    for lam in lambdas:
        s, tail = abel_mean(a, lam)
        rows.append(EnvelopeRow(lam, s, s + tail, float(avg.min()) - tail, float(avg.max()) + tail))
    return rows


# -- inequality checks ------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    state: int
    m: int
    n: int
    lhs: float
    rhs: float


def check_eq1(V: np.ndarray, VM: np.ndarray | None = None, tol: float = SANDWICH_TOL) -> list[Violation]:
    """Check n v_n <= (m+n) v_{m+n} <= n v_n + m for all m+n <= n_max.

    With ``VM`` (shape (m_max+1, n_max+1, Z)) the same sandwich is checked
    for v_{m,n} in place of v_n.
    """
    n_max = V.shape[0] - 1
    out: list[Violation] = []

    def sweep(kind, m, n, inner):
        total = (m + n) * V[m + n]
        low = n * inner
        for z in np.flatnonzero(low > total + tol):
            out.append(Violation(kind + ":lower", int(z), m, n, float(low[z]), float(total[z])))
        for z in np.flatnonzero(total > low + m + tol):
            out.append(Violation(kind + ":upper", int(z), m, n, float(total[z]), float(low[z] + m)))

    for n in range(1, n_max + 1):
        for m in range(0, n_max - n + 1):
            sweep("vn", m, n, V[n])
            if VM is not None and m < VM.shape[0]:
                sweep("vmn", m, n, VM[m, n])
    return out


@dataclass
class BlackwellReport:
    ok: bool
    lambda0: float | None
    failing: list[float] = field(default_factory=list)
    margins: dict = field(default_factory=dict)


def blackwell_check(model: Model, play: Play, epsilon: float,
                    lambda_grid=DEFAULT_LAMBDA_GRID) -> BlackwellReport:
    """Grid check of eps-Blackwell optimality for a lasso play.

    ``lambda0`` is the largest grid point such that gamma_lam(play) >=
    v_lam(origin) - eps at it and at every smaller grid point; the check is
    ok iff such a point exists.
    """
    if not play.is_lasso:
        raise ValueError("play is not a lasso")
    grid = sorted(lambda_grid, reverse=True)
    margins = {}
    for lam in grid:
        margins[lam] = play_discounted(model, play, lam) - (v_lambda_exact(model, lam)[play.origin]
                                                            - epsilon)
    failing = [lam for lam in grid if margins[lam] < -1e-12]
    lambda0 = None
    for lam in reversed(grid):
        if margins[lam] < -1e-12:
            break
        lambda0 = lam
    return BlackwellReport(lambda0 is not None, lambda0, failing, margins)


# -- exhaustive oracle ------------------------------------------------------------------

DEFAULT_BUDGET = 10_000_000


def enumerate_paths(model: Model, z: int, length: int, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """All paths z_1..z_length from z, as rows of a state matrix.

    The budget counts path nodes over all layers; exceeding it raises.
    """
    paths = np.empty((1, 0), dtype=np.int64)
    last = np.array([z])
    visited = 0
    for _ in range(length):
        deg = model.out_degree[last]
        visited += int(deg.sum())
        if visited > budget:
            raise BudgetExceeded(f"path enumeration exceeded {budget} nodes")
        rep = np.repeat(np.arange(len(last)), deg)
        offs = np.arange(len(rep)) - np.repeat(np.cumsum(deg) - deg, deg)
        nxt = model.indices[model.indptr[last][rep] + offs]
        paths = np.column_stack([paths[rep], nxt])
        last = nxt
    return paths


def brute_force_table(model: Model, z: int, L: int, budget: int = DEFAULT_BUDGET):
    """Exact (v_{m,n}(z), w_{m,n}(z)) for all m >= 0, n >= 1 with m + n <= L.

    Every finite path extends to a play, so length-L paths cover all
    shorter horizons. Returns two dicts keyed by (m, n).
    """
    R = model.rewards[enumerate_paths(model, z, L, budget)]
    cs = np.concatenate([np.zeros((len(R), 1)), np.cumsum(R, axis=1)], axis=1)
    v, w = {}, {}
    for m in range(L):
        for n in range(1, L - m + 1):
            avgs = (cs[:, m + 1:m + n + 1] - cs[:, [m]]) / np.arange(1, n + 1)
            v[m, n] = float(avgs[:, -1].max())
            w[m, n] = float(avgs.min(axis=1).max())
    return v, w


def brute_force_values(model: Model, z: int, m: int, n: int,
                       budget: int = DEFAULT_BUDGET) -> tuple[float, float]:
    """Exact (v_{m,n}(z), w_{m,n}(z)) by enumerating every path of length m+n."""
    if n < 1 or m < 0:
        raise ValueError("need m >= 0 and n >= 1")
    R = model.rewards[enumerate_paths(model, z, m + n, budget)][:, m:]
    avgs = np.cumsum(R, axis=1) / np.arange(1, n + 1)
    return float(avgs[:, -1].max()), float(avgs.min(axis=1).max())


# -- CSV -----------------------------------------------------------------------------

CSV_HEADER = ("family", "state", "m", "n_or_lambda", "value")


def fmt17(x: float) -> str:
    return format(float(x), ".17g")


def write_value_csv(fh, rows) -> None:
    """Rows of (family, state, m, n_or_lambda, value); m may be empty."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for family, state, m, key, value in rows:
        key_s = fmt17(key) if isinstance(key, float) else str(key)
        writer.writerow([family, state, "" if m is None else m, key_s, fmt17(value)])


def table_rows(family: str, V: np.ndarray, m: int | None = None, start: int = 1):
    for n in range(start, V.shape[0]):
        for z in range(V.shape[1]):
            yield family, z, m, n, V[n, z]
