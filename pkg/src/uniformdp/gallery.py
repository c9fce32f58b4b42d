"""Finite constructors for the worked examples, each with named diagnostics.

Every constructor returns a ``GalleryInstance``: the model, any named plays
worth inspecting, and a list of diagnostics that pass or fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .model import Model, Play, check_nonexpansive, running_averages
from .plays import certify_lower
from .uniform import check_chain, estimate_vstar, f_n, max_mean_cycle
from .values import abel_mean, v_lambda_exact, v_mn_table, v_n_table


@dataclass
class Diagnostic:
    name: str
    passed: bool
    value: float
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class GalleryInstance:
    name: str
    params: dict
    model: Model
    plays: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(d.passed for d in self.diagnostics)

    def check(self, name: str, passed, value, detail: str = "") -> Diagnostic:
        d = Diagnostic(name, bool(passed), float(value), detail)
        self.diagnostics.append(d)
        return d


# -- square --------------------------------------------------------------------------------

def ramp_reward(x: Fraction) -> float:
    """1 on [1/3, 2/3], 0 outside [1/4, 3/4], linear in between."""
    if Fraction(1, 3) <= x <= Fraction(2, 3):
        return 1.0
    if x <= Fraction(1, 4) or x >= Fraction(3, 4):
        return 0.0
    return float(12 * (x - Fraction(1, 4)) if x < Fraction(1, 2) else 12 * (Fraction(3, 4) - x))


def square_speeds(grid_y: int, speeds: int) -> list[Fraction]:
    ys = {Fraction(k, grid_y) for k in range(1, grid_y + 1)}
    ys |= {Fraction(2, 3 * j) for j in range(1, speeds + 1)}
    return sorted(ys)


def square_model(grid_y: int = 64, speeds: int = 40) -> tuple[Model, list[Fraction], list[int]]:
    """z0 (state 0) chooses a speed y; then x advances by y per stage until x = 1."""
    if grid_y < 2:
        raise ValueError("grid_y must be at least 2")
    ys = square_speeds(grid_y, speeds)
    succ = [[]]
    rewards = [0.0]
    coords = [None]
    starts = []
    for y in ys:
        starts.append(len(succ))
        succ[0].append(len(succ))
        x = Fraction(0)
        while True:
            i = len(succ)
            coords.append((x, y))
            rewards.append(ramp_reward(x))
            if x == 1:
                succ.append([i])
                break
            succ.append([i + 1])
            x = min(Fraction(1), x + y)
    n = len(succ)
    D = np.ones((n, n))
    np.fill_diagonal(D, 0.0)
    xy = np.array([[float(c[0]), float(c[1])] for c in coords[1:]])
    D[1:, 1:] = np.abs(xy[:, None, :] - xy[None, :, :]).sum(axis=2)
    model = Model.from_successors(succ, rewards, 0, metric=D, validate=False)
    # an l1 distance with d(z0, .) = 1 satisfies the triangle inequality by construction
    model.validate(triangle=False)
    return model, ys, starts


def square(grid_y: int = 64, speeds: int = 40, m_max: int = 2, n_v: int = 32, n_w: int = 600) -> GalleryInstance:
    model, ys, starts = square_model(grid_y, speeds)
    inst = GalleryInstance("square", {"grid_y": grid_y, "speeds": speeds, "m_max": m_max,
                                      "n_v": n_v, "n_w": n_w}, model)
    V = v_n_table(model, max(n_v, speeds + 1))
    inst.check("v2_at_least_half", V[2, 0] >= 0.5, V[2, 0], f"v_2(z0) = {float(V[2, 0])!r}")
    ns = range(2, speeds + 2)
    worst = min(V[n, 0] for n in ns)
    inst.check("vn_at_least_half", worst >= 0.5, worst, f"min over 2 <= n <= {speeds + 1} of v_n(z0) = {worst:.6f}")
    y_min = ys[0]
    c = math.ceil(1 / y_min)
    T = np.arange(10 * c, 20 * c + 1)
    bad = 0
    for y, s in zip(ys, starts):
        length = int(math.ceil(1 / y)) + 1
        play = Play(0, tuple(range(s, s + length)), cycle_start=length - 1)
        avg = running_averages(play.rewards(model, int(T[-1])))[T - 1]
        bad += int(np.any(avg > c / T + 1e-12))
        inst.plays[f"y={y}"] = play
    inst.check("plays_vanish", bad == 0, bad, f"plays with gamma_T > ceil(1/y_min)/T for T in [{T[0]}, {T[-1]}]: {bad}")
    rep = check_chain(model, 0, m_max=m_max, n_v=n_v, n_w=n_w)
    w, v = rep.terms["sup_inf_w"], rep.terms["sup_inf_v"]
    inst.check("sup_inf_w_small", w <= 0.01, w, f"sup inf w = {w:.6f}")
    inst.check("sup_inf_v_large", v >= 0.45, v, f"sup inf v = {v:.6f}")
    bad_pair = check_nonexpansive(model)
    inst.check("not_nonexpansive", bad_pair is not None, 0.0 if bad_pair is None else 1.0,
               f"witness {bad_pair}")
    inst.extra["chain"] = rep
    return inst


# -- simplex -------------------------------------------------------------------------------

ABSORB_MASS = 1e-4


def simplex_step(p, alpha: float):
    pa, pb, pc = p
    return ((1 - alpha - alpha * alpha) * pa, pb + alpha * pa, pc + alpha * alpha * pa)


def simplex_limit(p, alpha: float):
    """Where the constant-alpha play from p converges."""
    pa, pb, pc = p
    return (0.0, pb + pa / (1 + alpha), pc + pa * alpha / (1 + alpha))


def simplex_reward(p) -> float:
    """Payoff p^b - p^c rescaled from [-1, 1] to [0, 1]."""
    return (1.0 + p[1] - p[2]) / 2.0


def to_payoff(level: float) -> float:
    return 2.0 * level - 1.0


def simplex_model(alpha_grid, horizon: int = 2, absorb: float = ABSORB_MASS):
    """alpha-tree to ``horizon``; each leaf then repeats its last alpha and
    jumps to the exact limit once p^a < ``absorb``."""
    alphas = sorted(set(float(a) for a in alpha_grid))
    if not alphas or alphas[0] < 0 or alphas[-1] > 0.5:
        raise ValueError("alpha grid must be a non-empty subset of [0, 1/2]")
    index: dict = {}
    pts, succ = [], []

    def node(p):
        key = tuple(p)
        if key not in index:
            index[key] = len(pts)
            pts.append(p)
            succ.append(set())
        return index[key]

    root = node((1.0, 0.0, 0.0))
    level = [(root, None)]
    for _ in range(horizon):
        nxt = []
        for i, _a in level:
            for a in alphas:
                j = node(simplex_step(pts[i], a))
                succ[i].add(j)
                nxt.append((j, a))
        level = nxt
    for i, a in level:
        cur = i
        while not succ[cur]:
            p = pts[cur]
            q = simplex_limit(p, a) if 0 < p[0] < absorb else simplex_step(p, a)
            j = node(q)
            succ[cur].add(j)
            cur = j
    model = Model.from_successors([sorted(s) for s in succ], [simplex_reward(p) for p in pts], root)
    return model, np.array(pts), alphas


def stationary_play(model: Model, pts: np.ndarray, alpha: float, horizon: int) -> Play:
    """The constant-alpha play, read off the model as a lasso."""
    index = {p: i for i, p in enumerate(map(tuple, pts))}
    p = (1.0, 0.0, 0.0)
    steps, seen = [], {}
    cur = 0
    while True:
        if len(steps) < horizon or model.out_degree[cur] > 1:
            p = simplex_step(p, alpha)
            cur = index[p]
        else:
            (cur,) = model.successors(cur)
            cur = int(cur)
        if cur in seen:
            return Play(0, tuple(steps), cycle_start=seen[cur])
        seen[cur] = len(steps)
        steps.append(cur)


def certified_payoff(model: Model, play: Play) -> float:
    rep = certify_lower(model, play)
    return to_payoff(rep.level) if rep.passed else -1.0


def simplex_lower_bound(model, pts, alphas, horizon) -> tuple[float, float]:
    """Best certified level over the stationary plays, as (alpha, payoff level)."""
    best = (0.0, -1.0)
    for a in alphas:
        lvl = certified_payoff(model, stationary_play(model, pts, a, horizon))
        if lvl > best[1]:
            best = (a, lvl)
    return best


def simplex(alpha_grid=None, horizon: int = 2, probe_alpha: float = 0.1) -> GalleryInstance:
    alpha_grid = [k / 20 for k in range(11)] if alpha_grid is None else alpha_grid
    model, pts, alphas = simplex_model(alpha_grid, horizon)
    inst = GalleryInstance("simplex", {"alpha_grid": alphas, "horizon": horizon,
                                       "probe_alpha": probe_alpha}, model)
    if probe_alpha in alphas:
        play = stationary_play(model, pts, probe_alpha, horizon)
        inst.plays[f"alpha={probe_alpha}"] = play
        lvl = certified_payoff(model, play)
        want = (1 - probe_alpha) / (1 + probe_alpha)
        inst.check("stationary_level", abs(lvl - want) <= 1e-3, lvl,
                   f"certified level {lvl:.6f} vs (1-a)/(1+a) = {want:.6f}")
    frozen = stationary_play(model, pts, 0.0, horizon)
    pay = to_payoff(model.rewards[list(frozen.steps)])
    inst.check("zero_alpha_frozen", frozen.steps == (0,) and np.all(pay == 0), float(pay.max()),
               "alpha = 0 keeps the state at (1, 0, 0) with payoff 0")
    a, lvl = simplex_lower_bound(model, pts, alphas, horizon)
    pos = min(x for x in alphas if x > 0)
    want = (1 - pos) / (1 + pos)
    inst.check("lower_bound", lvl >= want - 1e-6, lvl,
               f"best stationary level {lvl:.6f} (alpha={a}); (1-a)/(1+a) at the finest alpha = {want:.6f}")
    ns = [4, 16, 64, 256]
    V = v_n_table(model, ns[-1])
    trend = [to_payoff(V[n, 0]) for n in ns]
    inst.check("vn_trend", all(x <= y + 1e-12 for x, y in zip(trend, trend[1:])), trend[-1],
               "v_n(z0) at n=" + ",".join(f"{n}:{t:.4f}" for n, t in zip(ns, trend)))
    inst.extra["lower_bound"] = lvl
    return inst


def simplex_refinement(steps=(0.1, 0.05, 0.025, 0.0125), horizon: int = 1) -> list[float]:
    """Best stationary lower bound on grids {0, h, 2h, ..., 1/2}."""
    out = []
    for h in steps:
        grid = [k * h for k in range(int(round(0.5 / h)) + 1)]
        model, pts, alphas = simplex_model(grid, horizon)
        out.append(simplex_lower_bound(model, pts, alphas, horizon)[1])
    return out


# -- blocks --------------------------------------------------------------------------------

def block_stream(K: int) -> np.ndarray:
    return np.concatenate([np.r_[np.ones(k), np.zeros(k)] for k in range(1, K + 1)])


def blocks_model(K: int) -> Model:
    """State 0 starts; states 1..L carry the stream; the last state loops to the start of block K."""
    if K < 1:
        raise ValueError("K_blocks must be at least 1")
    u = block_stream(K)
    L = len(u)
    succ = [[i + 1] for i in range(L)] + [[L - 2 * K + 1]]
    return Model.from_successors(succ, np.r_[0.0, u], 0)


def blocks(K_blocks: int = 30) -> GalleryInstance:
    K = K_blocks
    model = blocks_model(K)
    inst = GalleryInstance("blocks", {"K_blocks": K}, model)
    u = block_stream(K)
    inst.check("stream_prefix", list(u[:12]) == [1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 0, 0], 0.0,
               "first 12 entries " + "".join(str(int(x)) for x in u[:12]))
    ends = np.cumsum([2 * k for k in range(1, K + 1)])
    avg = running_averages(u)[ends - 1]
    inst.check("cesaro_half_at_block_ends", np.all(avg == 0.5), float(np.abs(avg - 0.5).max()),
               f"gamma_n = 1/2 at the end of all {K} complete blocks")
    Z = model.n_states
    # the chain is uncontrolled, so w_(m,n)(z0) is the min running average of u from m on
    sup_w = [max(running_averages(u[m:m + n]).min() for m in range(len(u) - n + 1))
             for n in range(1, K + 1)]
    inst.check("sup_w_one", min(sup_w) == 1.0, min(sup_w), f"min over n <= {K} of sup_m w_(m,n) = {min(sup_w)}")
    V = v_n_table(model, K)
    VM = v_mn_table(model, Z, V)
    sup_v = VM[:, 1:, 0].max(axis=0)
    inst.check("sup_v_one", np.all(sup_v == 1.0), float(sup_v.min()), f"sup_m v_(m,n) = 1 for n <= {K}")
    fk = [f_n(model, 0, n) for n in range(1, K + 1)]
    inst.check("f_n_one", min(fk) == 1.0, min(fk), f"f_n = 1 for n <= {K}")
    probe = int(ends[-1])
    starts = np.r_[0, ends[:-1]]
    lows = [running_averages(u[s:])[:probe - s].min() for s in starts[: K - 1]]
    inst.check("inf_gamma_block_starts", np.allclose(lows, 0.5), float(min(lows)),
               "min over n of gamma_(m,n) from each block start = 1/2")
    mu = max_mean_cycle(model, 0)
    inst.check("limit_surrogate_half", abs(mu - 0.5) <= 1e-12, mu, f"long-run average of the only play = {mu}")
    return inst


# -- abelgap -------------------------------------------------------------------------------

def abel_stream(horizon: int, base: int = 4) -> np.ndarray:
    """Alternating runs of 1s and 0s with lengths base^0, base^1, ..., cut at ``horizon``."""
    runs, total, k = [], 0, 0
    while total < horizon:
        length = base ** k
        runs.append(np.full(length, 1.0 - (k % 2)))
        total += length
        k += 1
    return np.concatenate(runs)[:horizon]


ABEL_LAMBDAS = tuple(10.0 ** (-e / 8) for e in range(16, 41))   # 1e-2 down to 1e-5


def abel_profile(stream: np.ndarray, lambdas=ABEL_LAMBDAS):
    """Bracketed Abel means [sum, sum + tail] per lambda."""
    return np.array([abel_mean(stream, lam) for lam in lambdas])


def abelgap_model(stream: np.ndarray, a_star: float) -> Model:
    """F(0) = {0, 1}, F(t) = {t + 1}; r(0) = a*, r(t) = a_t; the last state absorbs."""
    H = len(stream)
    indptr = np.r_[0, 2, np.arange(3, H + 3)].astype(np.int64)
    indices = np.r_[0, 1, np.arange(2, H + 1), H].astype(np.int64)
    return Model(indptr, indices, np.r_[a_star, stream], 0)


def abelgap(horizon: int = 10 ** 6, base: int = 4, n_min: int = 1000,
            lambdas=ABEL_LAMBDAS, check_lambdas=(1e-2, 1e-3, 1e-4)) -> GalleryInstance:
    stream = abel_stream(horizon, base)
    avg = running_averages(stream)
    ces = float(avg[n_min - 1:].max())
    prof = abel_profile(stream, lambdas)
    abel_hi = float((prof[:, 0] + prof[:, 1]).max())
    a_star = float(prof[:, 0].max())
    model = abelgap_model(stream, a_star)
    inst = GalleryInstance("abelgap", {"horizon": horizon, "base": base, "n_min": n_min}, model)
    margin = ces - abel_hi
    inst.check("cesaro_minus_abel", margin > 0, margin,
               f"max Cesaro mean over n in [{n_min}, {horizon}] = {ces:.6f}; max Abel upper bracket = {abel_hi:.6f}")
    const = np.full(2000, a_star)
    cm = running_averages(const)
    s, t = abel_mean(const, 0.01)
    inst.check("constant_play", np.allclose(cm, a_star) and abs(s + t * a_star - a_star) <= 1e-12, a_star,
               f"s(inf) pays a* = {a_star:.6f} in every mean")
    worst = 0.0
    for lam in check_lambdas:
        v = float(v_lambda_exact(model, lam)[0])
        lo, tail = abel_mean(stream, lam)
        # the truncated model keeps a_H forever after stage H
        bar = lo + tail * stream[-1]
        want = max(a_star, bar)
        worst = max(worst, abs(v - want))
    inst.check("v_lambda_is_max", worst <= 1e-9, worst,
               "v_lambda(z0) = max(a*, abel mean) at lambda in " + ",".join(map(str, check_lambdas)))
    inst.extra.update({"cesaro_max": ces, "abel_max": abel_hi, "a_star": a_star})
    return inst


# -- interval ------------------------------------------------------------------------------

def interval_model(grid: int = 8) -> tuple[Model, list[Fraction]]:
    """Grid on [-1, 1] and [2, 3] with step 1/grid; the usual distance."""
    if grid < 4:
        raise ValueError("grid must have at least 4 points per unit")
    left = [Fraction(k, grid) for k in range(-grid, grid + 1)]
    right = [Fraction(2) + Fraction(k, grid) for k in range(grid + 1)]
    pts = left + right
    pos = {z: i for i, z in enumerate(pts)}
    succ = []
    for z in pts:
        if z >= 2:
            succ.append([pos[z]])
        elif z <= 0:
            succ.append([pos[x] for x in right if x <= z + 3])
        else:
            succ.append([pos[x] for x in right if x >= z + 2])
    x = np.array([float(z) for z in pts])
    # nothing enters [-1, 1], so rewards there are never collected; capped to stay in [0, 1]
    rewards = np.minimum(np.abs(x - 2.5), 1.0)
    model = Model.from_successors(succ, rewards, pos[Fraction(0)], metric=np.abs(x[:, None] - x[None, :]))
    return model, pts


def interval(grid: int = 8, target_gap: float = 0.02) -> GalleryInstance:
    model, pts = interval_model(grid)
    inst = GalleryInstance("interval", {"grid": grid}, model)
    x = np.array([float(z) for z in pts])
    ok = check_nonexpansive(model)
    inst.check("nonexpansive", ok is None, 0.0 if ok is None else 1.0, f"witness {ok}")
    slack = 1.0 / grid
    worst = 0.0
    for i, z in enumerate(x):
        want = abs(z - 2.5) if z >= 2 else 0.5
        iv = estimate_vstar(model, i, target_gap=target_gap)
        worst = max(worst, max(iv.lower - want, want - iv.upper, 0.0))
    inst.check("values", worst <= slack, worst, f"largest miss against |z-5/2| on [2,3] and 1/2 on [-1,1]: {worst:.2e}")
    for z, want in ((2.5, 0.0), (3.0, 0.5), (0.0, 0.5)):
        i = int(np.flatnonzero(x == z)[0])
        iv = estimate_vstar(model, i, target_gap=target_gap)
        inst.check(f"value_at_{z}", iv.lower - slack <= want <= iv.upper + slack, iv.lower,
                   f"[{iv.lower:.4f}, {iv.upper:.4f}] vs {want}")
    return inst


REGISTRY = {"square": square, "simplex": simplex, "blocks": blocks, "abelgap": abelgap,
            "interval": interval}
