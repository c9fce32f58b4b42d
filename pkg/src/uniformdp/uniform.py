"""Two-sided bounds on v* = inf_n sup_m w_{m,n} and checks of the value chain.

Upper bounds: f_n(z) = sup_m w_{m,n}(z) is non-increasing in n and bounds
v*(z) from above at every n. Lower bounds come only from lasso plays whose
running averages are certified for all horizons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .minavg import DEFAULT_TOL, w_from_sources, w_mn, w_union
from .model import Model, Play, reach_union_mask
from .plays import CyclePool, GuaranteeReport, certify_lower, lasso_inf_average
from .values import v_mn_table, v_n_table


def f_n(model: Model, z: int, n: int, tol: float = DEFAULT_TOL) -> float:
    """max over y in G^inf(z) of w_n(y)."""
    return w_union(model, z, n, tol)[0]


# -- g_m -------------------------------------------------------------------------------

@dataclass
class GResult:
    value: float
    certified: bool
    certificate: Play | None
    m_used: int | None


def _best_lasso_in_witness(model: Model, seq) -> tuple[float, int, int] | None:
    """Best (inf running average, t1, t2) over lassos closing a repeat in seq.

    ``seq[0]`` is the start state; the lasso plays seq[1..t1] then repeats
    seq[t1+1..t2] where seq[t1] == seq[t2].
    """
    r = model.rewards[list(seq[1:])]
    cs = np.concatenate([[0.0], np.cumsum(r)])
    avg = cs[1:] / np.arange(1, len(r) + 1)
    running_min = np.minimum.accumulate(avg)
    last: dict[int, int] = {}
    best = None
    for t2, s in enumerate(seq):
        if s in last:
            t1 = last[s]
            mu = (cs[t2] - cs[t1]) / (t2 - t1)
            val = min(running_min[t2 - 1], mu)
            if best is None or val > best[0] + 1e-15:
                best = (float(val), t1, t2)
        last[s] = t2
    return best


def g_m(model: Model, z: int, m: int, n_probe: int, tol: float = DEFAULT_TOL) -> GResult:
    """Certified lower bound on max_{m' <= m} inf_n w_{m',n}(z).

    For each m' the w_{m',n_probe} witness is closed into a lasso at a
    repeated state; its exact infimum over all horizons of the running
    average from stage m'+1 bounds inf_n w_{m',n}(z) from below.
    """
    best = GResult(0.0, False, None, None)
    for mp in range(m + 1):
        _, play = w_mn(model, z, mp, n_probe, tol)
        seq = [play.steps[mp - 1] if mp else z] + list(play.steps[mp:])
        found = _best_lasso_in_witness(model, seq)
        if found is None:
            continue
        val, t1, t2 = found
        if not best.certified or val > best.value:
            steps = tuple(play.steps[:mp]) + tuple(seq[1:t2 + 1])
            cert = Play(z, steps, cycle_start=mp + t1)
            best = GResult(val, True, cert, mp)
    return best


def certified_inf_average(model: Model, play: Play, m: int = 0) -> float:
    """inf over n >= 1 of gamma_{m,n} along a lasso, computed exactly."""
    r = model.rewards[list(play.steps)]
    P = play.prefix_length
    if m > P:
        k = m - P
        cyc = np.roll(r[P:], -(k % play.cycle_length))
        return lasso_inf_average(np.array([]), cyc)
    return lasso_inf_average(r[m:P], r[P:])


# -- v* interval ---------------------------------------------------------------------------

@dataclass
class ValueInterval:
    state: int
    lower: float
    upper: float
    lower_certificate: Play | None
    upper_horizon: int
    report: GuaranteeReport | None = None
    exhausted: bool = False

    @property
    def gap(self) -> float:
        return self.upper - self.lower


@dataclass
class Budget:
    n_max: int = 1 << 13
    n_start: int = 16


def estimate_vstar(model: Model, z: int, target_gap: float = 0.02, budget: Budget | None = None,
                   tol: float = DEFAULT_TOL, pool: CyclePool | None = None) -> ValueInterval:
    """Interval [lower, upper] around v*(z).

    The horizon N doubles: the upper end is the smallest f_N seen, and every
    f_N witness feeds its simple cycles into a pool whose best reachable
    cycle gives the lower end as a certified lasso. Stops when the gap is at
    most ``target_gap`` or N passes ``budget.n_max`` (flagged as exhausted).
    """
    if target_gap <= 0:
        raise ValueError("target_gap must be positive")
    budget = budget or Budget()
    pool = CyclePool(model) if pool is None else pool
    size = int(reach_union_mask(model, z).sum())
    N = max(budget.n_start, 2 * size)
    upper, upper_n = math.inf, N
    exhausted = False
    while True:
        val, play, _ = w_union(model, z, N, tol)
        if val < upper:
            upper, upper_n = val, N
        pool.add_play(play)
        if upper - pool.target(z) <= target_gap:
            break
        if 2 * N > budget.n_max:
            exhausted = True
            break
        N *= 2
    cert = pool.certificate(z)
    report = certify_lower(model, cert) if cert is not None else None
    lower = cert.cycle_mean(model) if cert is not None else 0.0
    return ValueInterval(z, lower, upper, cert, upper_n, report, exhausted)


# -- max mean cycle (reference) ------------------------------------------------------------

def max_mean_cycle(model: Model, z: int, method: str = "auto") -> float:
    """Largest mean reward over cycles reachable from z.

    On a finite deterministic problem this is the uniform value at z.
    ``method`` is "enumerate" (all simple cycles), "karp", or "auto" (enumerate
    when at most 12 states are reachable).
    """
    mask = reach_union_mask(model, z)
    nodes = np.flatnonzero(mask)
    if method == "auto":
        method = "enumerate" if len(nodes) <= 12 else "karp"
    if method == "enumerate":
        g = nx.DiGraph()
        for u in nodes:
            for v in model.successors(u):
                g.add_edge(int(u), int(v))
        r = model.rewards
        return max(float(np.mean(r[c])) for c in nx.simple_cycles(g))
    if method == "karp":
        return _karp(model, nodes)
    raise ValueError(f"unknown method {method!r}")


def _karp(model: Model, nodes: np.ndarray) -> float:
    """Karp's characterisation with a super-source joined to every node by a 0 edge.

    D_k(v) is the best weight of a k-edge walk from the source to v, where
    entering v earns r(v). With n' = |V| + 1 walk lengths,
    lambda* = max_v min_k (D_n'(v) - D_k(v)) / (n' - k).
    """
    idx = {int(v): i for i, v in enumerate(nodes)}
    V = len(nodes)
    src, dst = [], []
    for u in nodes:
        for v in model.successors(u):
            src.append(idx[int(u)])
            dst.append(idx[int(v)])
    src, dst = np.array(src), np.array(dst)
    w = model.rewards[nodes][dst]
    n1 = V + 1
    D = np.full((n1 + 1, V), -np.inf)
    D[1] = 0.0
    for k in range(2, n1 + 1):
        cand = D[k - 1][src] + w
        np.maximum.at(D[k], dst, cand)
    best = -np.inf
    for v in range(V):
        if not np.isfinite(D[n1, v]):
            continue
        ks = [k for k in range(1, n1) if np.isfinite(D[k, v])]
        val = min((D[n1, v] - D[k, v]) / (n1 - k) for k in ks)
        best = max(best, val)
    return float(best)


# -- value chain ---------------------------------------------------------------------------

@dataclass
class ChainCheck:
    name: str
    lhs: float
    rhs: float
    slack: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs + self.slack


@dataclass
class ChainReport:
    terms: dict
    checks: list[ChainCheck]
    horizons: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def table(self) -> str:
        lines = [f"{'term':<22}{'value':>22}"]
        lines += [f"{k:<22}{v:>22.17g}" for k, v in self.terms.items()]
        lines.append("")
        lines.append(f"{'check':<22}{'lhs':>22}{'rhs+slack':>22}  ok")
        for c in self.checks:
            lines.append(f"{c.name:<22}{c.lhs:>22.17g}{c.rhs + c.slack:>22.17g}  {c.ok}")
        lo, hi = self.interval
        lines.append("")
        lines.append(f"{'interval':<22}[{lo:.17g}, {hi:.17g}]")
        return "\n".join(lines)

    @property
    def interval(self) -> tuple[float, float]:
        """Chain ends: sup inf w below, the f_k surrogate of v* above."""
        return float(self.terms["sup_inf_w"]), float(self.terms["v_star"])

    def csv_rows(self):
        yield ("kind", "name", "lhs", "rhs", "slack", "ok")
        for k, v in self.terms.items():
            yield ("term", k, repr(float(v)), "", "", "")
        for c in self.checks:
            yield ("check", c.name, repr(c.lhs), repr(c.rhs), repr(c.slack), str(c.ok).lower())
        lo, hi = self.interval
        yield ("interval", "sup_inf_w..v_star", repr(lo), repr(hi), "", "")


def check_chain(model: Model, z: int, m_max: int = 2, n_v: int = 32, n_w: int | None = None,
                k_grid=None, tol: float = DEFAULT_TOL) -> ChainReport:
    """Finite surrogates of sup inf w <= sup inf v = v^- <= v^+ <= v*.

    Terms (M = m_max, N = n_v, window [N/2, N]):
      sup_inf_w = max_{m<=M} w_{m,n_w}  (= max_m min_{n<=n_w} w_{m,n})
      sup_inf_v = max_{m<=M} min_{n<=N} v_{m,n}
      v_minus   = min_{n in window} v_n,   v_plus = max_{n in window} v_n
      v_star    = min_{k in k_grid} f_k
    Truncating an inf over n gives a value that is too high and truncating a
    sup over m gives one that is too low; the slacks below absorb that:
    sup_inf_v <= v_minus + M / (N/2 - M) from shifted averages, and
    v_plus <= min_k f_k + (k-1)/(N/2) from the min-average covering bound.
    """
    n_w = n_v if n_w is None else n_w
    if n_w < n_v:
        raise ValueError("n_w must be at least n_v")
    if n_v // 2 <= m_max:
        raise ValueError("need n_v / 2 > m_max")
    if k_grid is None:
        k_grid = sorted({2 ** i for i in range(int(math.log2(n_w)) + 1)} | {n_w})
    V = v_n_table(model, n_v)
    VM = v_mn_table(model, m_max, V)
    half = n_v // 2
    t1 = w_from_sources(model, reach_union_mask(model, z, m_max), n_w, tol).value
    t2 = float(max(VM[m, 1:, z].min() for m in range(m_max + 1)))
    window = V[half:n_v + 1, z]
    t3, t4 = float(window.min()), float(window.max())
    fk = {k: f_n(model, z, k, tol) for k in k_grid}
    t5 = min(fk.values())
    cover = min(fk[k] + (k - 1) / half for k in k_grid)
    terms = {"sup_inf_w": t1, "sup_inf_v": t2, "v_minus": t3, "v_plus": t4, "v_star": t5}
    checks = [
        ChainCheck("sup_inf_w<=sup_inf_v", t1, t2, 2 * tol),
        ChainCheck("sup_inf_v<=v_minus", t2, t3, m_max / (half - m_max) + 2 * tol),
        ChainCheck("v_minus<=v_plus", t3, t4, 0.0),
        ChainCheck("v_plus<=v_star", t4, cover, 2 * tol),
    ]
    return ChainReport(terms, checks, {"m_max": m_max, "n_v": n_v, "n_w": n_w,
                                       "k_grid": list(k_grid)})


@dataclass
class VMinusReport:
    liminf_surrogate: float
    sup_inf_surrogate: float
    oscillation: float
    slack: float
    status: str


def check_vminus(model: Model, z: int, N: int = 200, m_max: int | None = None,
                 agree_tol: float = 0.02) -> VMinusReport:
    """Compare min_{n in [N/2, N]} v_n(z) with max_{m<=M} min_{n<=N} v_{m,n}(z).

    The status is "inconclusive" when v_n oscillates over the window by more
    than ``agree_tol``; otherwise "agree" or "disagree" at tolerance
    agree_tol + M/(N/2 - M).
    """
    M = int(reach_union_mask(model, z).sum()) if m_max is None else m_max
    half = N // 2
    if half <= M:
        raise ValueError("need N / 2 > m_max")
    V = v_n_table(model, N)
    VM = v_mn_table(model, M, V)
    window = V[half:N + 1, z]
    low = float(window.min())
    sup_inf = float(max(VM[m, 1:, z].min() for m in range(M + 1)))
    osc = float(window.max() - window.min())
    slack = agree_tol + M / (half - M)
    if osc > agree_tol:
        status = "inconclusive"
    else:
        status = "agree" if abs(sup_inf - low) <= slack else "disagree"
    return VMinusReport(low, sup_inf, osc, slack, status)


@dataclass
class PropertyResult:
    name: str
    violations: int
    checked: int
    worst: float        # largest lhs - rhs - slack seen (<= 0 when the property holds)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _tally(name: str, excess: np.ndarray) -> PropertyResult:
    excess = np.asarray(excess, dtype=float)
    return PropertyResult(name, int((excess > 0).sum()), int(excess.size),
                          float(excess.max()) if excess.size else -math.inf)


def property_suite(model: Model, horizons: int = 12, m_max: int = 3, tol: float = DEFAULT_TOL,
                   cover_k=(1, 2, 3)) -> list[PropertyResult]:
    """Finite-horizon inequality checks over every state.

    sandwich:  n v_n <= (m+n) v_{m+n} <= n v_n + m, and the same for v_{m,n}
    w_mono:    w_{m,n+1} <= w_{m,n}
    w_below_v: w_{m,n} <= v_{m,n}
    covering:  v_{m,n} <= max_{l <= |Z|} w_{l,k} + (k-1)/n
    chain:     check_chain from every state
    """
    from .minavg import w_mn_table, w_n_table
    from .values import SANDWICH_TOL, check_eq1

    n_max = horizons
    Z = model.n_states
    V = v_n_table(model, n_max)
    VM = v_mn_table(model, m_max, V)
    W = w_n_table(model, n_max, tol)
    WM = w_mn_table(model, max(Z, m_max), W)
    out = []
    viol = check_eq1(V, VM)
    out.append(PropertyResult("sandwich", len(viol), 2 * (m_max + 1) * n_max * Z,
                              max((v.lhs - v.rhs - SANDWICH_TOL for v in viol), default=-SANDWICH_TOL)))
    out.append(_tally("w_mono", WM[:, 2:] - WM[:, 1:-1] - 2 * tol))
    out.append(_tally("w_below_v", WM[:m_max + 1, 1:] - VM[:, 1:] - 2 * tol))
    ex = []
    for k in cover_k:
        if k > n_max:
            continue
        sup_l = WM[:Z + 1, k].max(axis=0)
        for n in range(1, n_max + 1):
            ex.append(VM[:, n] - sup_l - (k - 1) / n - 2 * tol)
    out.append(_tally("covering", np.concatenate([e.ravel() for e in ex])))
    half = n_max // 2
    cm = min(m_max, half - 1)
    if cm >= 0:
        chain = []
        for z in range(Z):
            rep = check_chain(model, z, m_max=cm, n_v=n_max, tol=tol)
            chain.extend(c.lhs - c.rhs - c.slack for c in rep.checks)
        out.append(_tally("chain", np.array(chain)))
    return out
