"""Play certification, cycle extraction, block synthesis and shortening.

A lasso (finite prefix plus a repeated cycle) is the finite object whose
running averages can be certified for every horizon. Lower bounds on long-run
values in this package always come from lassos checked here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .minavg import shortest_distance, w_mn
from .model import Model, Play, bfs_path, nu, reach_union_mask

GAMMA_TOL = 1e-12
SUM_TOL = 1e-9
CERT_HORIZON = 10_000


# -- certification -----------------------------------------------------------------------

@dataclass
class GuaranteeReport:
    play: Play
    level: float
    epsilon: float
    passed: bool
    failed_at: int | None
    burn_in: float
    T1: float
    slack: float
    checked_horizon: int

    def csv_row(self) -> str:
        t1 = "inf" if math.isinf(self.T1) else str(int(self.T1))
        return f"{self.level!r},{self.epsilon!r},{t1},{str(self.passed).lower()}"


def verify_guarantee(model: Model, play: Play, level: float, epsilon: float,
                     burn_in: int | None = 1, cap: int = 1_000_000) -> GuaranteeReport:
    """Check gamma_T(play) >= level - epsilon for every T >= burn_in.

    Horizons up to T1 = ceil((P + C) / slack) (capped) are scanned directly;
    beyond that the stream is periodic, so for each residue class the
    partial sums move linearly in the number of completed cycles and the
    violating horizons are found in closed form. The report's ``burn_in``
    is the smallest T0 with no violation at any T >= T0 (``inf`` if none).
    With ``burn_in=None`` the check passes iff such a T0 exists.
    """
    if not play.is_lasso:
        raise ValueError("verify_guarantee needs a lasso play")
    play.validate(model)
    a = model.rewards[list(play.steps)]
    P, C = play.prefix_length, play.cycle_length
    mu = float(np.mean(a[P:]))
    theta = level - epsilon
    slack = mu - theta
    D = np.cumsum(a - theta)               # D[T-1] for T = 1..P+C
    cyc = float(np.sum(a[P:] - theta))     # change of D over one cycle
    if abs(cyc) <= GAMMA_TOL * C:
        cyc = 0.0
    T1 = math.ceil((P + C) / slack) if slack > 0 else math.inf
    H = int(min(T1, cap)) if slack > 0 else P + C

    # direct scan of T = 1..H on the unrolled stream
    scan = np.cumsum(model.rewards[play.states(H)] - theta)
    bad = np.flatnonzero(scan < -SUM_TOL) + 1

    firsts, lasts = [], []
    if len(bad):
        lasts.append(int(bad[-1]))
    b = 1 if burn_in is None else max(1, int(burn_in))
    hit = bad[bad >= b]
    if len(hit):
        firsts.append(int(hit[0]))

    # closed form for T > H, split by residue j: T = P + j + k C, k >= 0
    for j in range(1, C + 1):
        d0 = float(D[P + j - 1]) + SUM_TOL
        k_lo = max(0, math.floor((H - P - j) / C) + 1)    # first k with T > H
        k_b = max(k_lo, math.ceil((b - P - j) / C))
        if cyc > 0:
            if d0 >= 0:
                continue
            k_hi = math.ceil(-d0 / cyc) - 1
            if k_hi >= k_lo:
                lasts.append(P + j + k_hi * C)
            if k_hi >= k_b:
                firsts.append(P + j + k_b * C)
        elif cyc == 0:
            if d0 < 0:
                lasts.append(math.inf)
                firsts.append(P + j + k_b * C)
        else:
            k0 = 0 if d0 < 0 else math.floor(d0 / -cyc) + 1
            lasts.append(math.inf)
            firsts.append(P + j + max(k0, k_b) * C)

    last = max(lasts) if lasts else 0
    T0 = last + 1
    failed_at = min(firsts) if firsts else None
    if burn_in is None:
        passed = not math.isinf(T0)
        failed_at = None if passed else failed_at
    else:
        passed = failed_at is None
    return GuaranteeReport(play, level, epsilon, passed, failed_at, T0, T1, slack, H)


def lasso_inf_average(prefix: np.ndarray, cycle: np.ndarray) -> float:
    """Exact inf over all T >= 1 of the running average of prefix, cycle, cycle, ...

    In each residue class the average moves monotonically toward the cycle
    mean, so the infimum is attained in the first P + C steps or is the mean.
    """
    a = np.concatenate([prefix, cycle])
    avg = np.cumsum(a) / np.arange(1, len(a) + 1)
    return float(min(avg.min(), np.mean(cycle)))


# -- cycles and lassos ---------------------------------------------------------------

def loop_decompose(origin: int, steps) -> list[tuple[int, ...]]:
    """Simple cycles popped while walking origin, steps[0], steps[1], ...

    Each cycle (c_0..c_{C-1}) satisfies c_{i+1} in F(c_i) and c_0 in F(c_{C-1}).
    """
    stack = [origin]
    where = {origin: 0}
    cycles = []
    for s in steps:
        s = int(s)
        if s in where:
            k = where[s]
            cyc = tuple(stack[k + 1:]) + (s,)
            for y in stack[k + 1:]:
                del where[y]
            del stack[k + 1:]
            cycles.append(cyc)
        else:
            where[s] = len(stack)
            stack.append(s)
    return cycles


def best_rotation(model: Model, cycle) -> tuple[int, ...]:
    """Rotation of a cycle maximising the minimum running average (ties: first)."""
    r = model.rewards[list(cycle)]
    best, arg = -np.inf, 0
    for i in range(len(cycle)):
        v = nu(np.roll(r, -i), 0, len(r))
        if v > best + 1e-15:
            best, arg = v, i
    return tuple(cycle[arg:]) + tuple(cycle[:arg])


def lasso_to_cycle(model: Model, z: int, cycle) -> Play:
    """Shortest path from z into the cycle, then the cycle forever.

    The cycle is entered at the best rotation so the repeated part starts
    with its strongest running averages.
    """
    rot = best_rotation(model, cycle)
    entry = rot[-1]                       # the cycle then continues rot[0], rot[1], ...
    d = shortest_distance(model, z, entry)
    prefix = bfs_path(model, z, entry, d) if d else []
    return Play(z, tuple(prefix) + rot, cycle_start=len(prefix))


def cycle_mean(model: Model, cycle) -> float:
    return float(np.mean(model.rewards[list(cycle)]))


class CyclePool:
    """Cycles found so far; each certifies its mean for every state that reaches it."""

    def __init__(self, model: Model):
        self.model = model
        self.cycles: list[tuple[int, ...]] = []
        self.means: list[float] = []
        self._coreach: list[np.ndarray] = []
        self._keys: set = set()
        self.targets = np.full(model.n_states, -np.inf)
        self.best_cycle = np.full(model.n_states, -1, dtype=np.int64)

    def _canon(self, cycle):
        i = int(np.argmin(cycle))
        return tuple(cycle[i:]) + tuple(cycle[:i])

    def add(self, cycle) -> bool:
        key = self._canon(cycle)
        if key in self._keys:
            return False
        self._keys.add(key)
        mu = cycle_mean(self.model, cycle)
        co = coreach_mask(self.model, cycle[0])
        idx = len(self.cycles)
        self.cycles.append(tuple(cycle))
        self.means.append(mu)
        self._coreach.append(co)
        better = co & (mu > self.targets)
        self.targets[better] = mu
        self.best_cycle[better] = idx
        return True

    def add_play(self, play: Play) -> int:
        return sum(self.add(c) for c in loop_decompose(play.origin, play.steps))

    def target(self, z: int) -> float:
        return float(self.targets[z])

    def certificate(self, z: int) -> Play | None:
        i = int(self.best_cycle[z])
        return None if i < 0 else lasso_to_cycle(self.model, z, self.cycles[i])


def coreach_mask(model: Model, y: int) -> np.ndarray:
    """States from which y is reachable (including y)."""
    pptr, pidx = model.predecessors_csr
    mask = np.zeros(model.n_states, dtype=bool)
    mask[y] = True
    frontier = np.array([y])
    while len(frontier):
        preds = np.concatenate([pidx[pptr[s]:pptr[s + 1]] for s in frontier])
        new = np.unique(preds[~mask[preds]])
        mask[new] = True
        frontier = new
    return mask


def certify_lower(model: Model, play: Play, horizon: int = CERT_HORIZON) -> GuaranteeReport:
    """Liminf certificate of a lasso at its cycle mean.

    epsilon is about (P + C) / horizon, nudged so that rounding keeps T1 at
    the horizon.
    """
    mu = play.cycle_mean(model)
    eps = len(play.steps) / (horizon - 0.5)
    return verify_guarantee(model, play, mu, eps, burn_in=None)


# -- block construction -------------------------------------------------------------------

@dataclass
class BlockCertificate:
    start: int
    m: int
    n: int
    play_prefix: tuple[int, ...]
    nu_value: float
    target_value: float
    start_target: float


class NoBlockFound(RuntimeError):
    pass


def find_block(model: Model, z: int, epsilon: float, m_bound: int, n_request: int,
               pool: CyclePool, tol: float | None = None) -> BlockCertificate:
    """First m <= m_bound whose w_{m,2n} witness meets both block conditions.

    Conditions: nu_{m,n} >= target(z) - epsilon/2 along the witness, and the
    state reached after m + n steps has target >= target(z) - epsilon.
    Cycles met by each witness are added to the pool, so targets can only
    improve during the search.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    tol = epsilon / 4 if tol is None else tol
    n = n_request
    for m in range(m_bound + 1):
        _, play = w_mn(model, z, m, 2 * n, tol)
        pool.add_play(play)
        goal = pool.target(z)
        steps = play.steps[:m + n]
        val = nu(model.rewards[list(steps)], m, n)
        end = steps[-1]
        if val >= goal - epsilon / 2 and pool.target(end) >= goal - epsilon:
            return BlockCertificate(z, m, n, tuple(steps), val, pool.target(end), goal)
    raise NoBlockFound(f"no block from state {z} with m <= {m_bound}, n = {n}")


@dataclass
class HorizonPolicy:
    """Block horizon schedule: n_i starts at max(n_start, ceil(m_bound / alpha)) and doubles on failure."""

    n_start: int = 1
    n_cap: int = 1 << 14
    m_bound: int | None = None


@dataclass
class SynthesisResult:
    play: Play
    report: GuaranteeReport
    blocks: list[BlockCertificate] = field(default_factory=list)
    target: float = math.nan

    @property
    def level(self) -> float:
        return self.report.level


def seed_pool(model: Model, z: int, horizon: int, pool: CyclePool | None = None) -> CyclePool:
    """Pool seeded with the cycles of the max-min-average witness over G^inf(z)."""
    from .minavg import w_union

    pool = CyclePool(model) if pool is None else pool
    _, play, _ = w_union(model, z, horizon)
    pool.add_play(play)
    return pool


def synthesize(model: Model, z: int, alpha: float, policy: HorizonPolicy | None = None,
               pool: CyclePool | None = None) -> SynthesisResult:
    """Concatenate blocks with epsilon_i = alpha / 2^i until a block start repeats.

    Block i has m_i <= M and n_i >= max(K_i, M / alpha), so its reward-free
    lead-in takes at most a fraction alpha / (1 + alpha) of the block. At the
    first repeated block start the blocks since its earlier visit form the
    cycle of the returned lasso.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    policy = policy or HorizonPolicy()
    reach = reach_union_mask(model, z)
    M = int(reach.sum()) - 1 if policy.m_bound is None else policy.m_bound
    if pool is None:
        pool = seed_pool(model, z, max(64, 8 * model.n_states))
    n_base = max(policy.n_start, math.ceil(M / alpha), 1)

    blocks: list[BlockCertificate] = []
    starts = {z: 0}
    offsets = [0]
    steps: list[int] = []
    x = z
    i = 1
    while True:
        eps = alpha / 2 ** i
        n = n_base
        while True:
            try:
                blk = find_block(model, x, eps, M, n, pool)
                break
            except NoBlockFound:
                n *= 2
                if n > policy.n_cap:
                    raise
        blocks.append(blk)
        steps.extend(blk.play_prefix)
        x = blk.play_prefix[-1]
        if x in starts:
            cycle_start = offsets[starts[x]]
            break
        starts[x] = len(blocks)
        offsets.append(len(steps))
        i += 1
    play = Play(z, tuple(steps), cycle_start=cycle_start)
    report = certify_lower(model, play)
    return SynthesisResult(play, report, blocks, pool.target(z))


# -- shortening ------------------------------------------------------------------------

def shorten(model: Model, play: Play, epsilon: float, level: float, window=None) -> Play:
    """Cyclic or repetition-free version of a finite play prefix.

    If a state repeats at t1 < t2 with average reward over t1+1..t2 at least
    level - 2 epsilon, that segment becomes the cycle of a lasso. Otherwise
    every revisit is cut out by jumping from each state's first occurrence
    to just after its last one, leaving a play with distinct states.
    """
    if play.is_lasso:
        return play
    seq = [play.origin] + list(play.steps)
    T = len(play.steps)
    lo, hi = (1, T) if window is None else window
    if not 1 <= lo <= hi <= T:
        raise ValueError(f"window {window} does not fit a prefix of {T} steps")
    r = model.rewards
    cs = np.concatenate([[0.0], np.cumsum(r[list(play.steps)])])   # cs[t] = sum of r(z_1..z_t)
    last_seen: dict[int, list[int]] = {}
    for t2, s in enumerate(seq):
        for t1 in last_seen.get(s, []):
            if (cs[t2] - cs[t1]) / (t2 - t1) >= level - 2 * epsilon - GAMMA_TOL:
                return Play(play.origin, tuple(seq[1:t2 + 1]), cycle_start=t1)
        last_seen.setdefault(s, []).append(t2)
    last = {s: t for t, s in enumerate(seq)}
    out = []
    i = last[seq[0]]
    while i + 1 < len(seq):
        y = seq[i + 1]
        out.append(y)
        i = last[y]
    if not out:
        raise ValueError("prefix collapses to the origin; window too short to decide")
    return Play(play.origin, tuple(out))
