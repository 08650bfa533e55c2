"""Monte Carlo oracle: jump-adapted path simulation with event classification.

Paths advance on exact exponential jump epochs with Gaussian sub-steps of
length <= dt in between, so the only discretization bias is missed continuous
boundary crossings; that bias shrinks like sqrt(dt) and is removed by
Richardson extrapolation over refinement levels.

Randomness is counter-based (Philox) and keyed by (seed, fixed-size path
chunk, refinement level), so results are bit-identical for any worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .drawdown import DrawdownFunction
from .errors import InsufficientEventsError
from .models import LevyModel

CHUNK_SIZE = 8192
BLOCK_STEPS = 64
MIN_EVENTS = 100


class EventKind(IntEnum):
    UP_EXIT = 0
    DRAWDOWN_JUMP = 1
    DRAWDOWN_CREEP = 2
    HIT = 3
    LOWER_EXIT = 4
    CENSORED = 5


KIND_SETS = {
    "up_exit": (EventKind.UP_EXIT,),
    "drawdown": (EventKind.DRAWDOWN_JUMP, EventKind.DRAWDOWN_CREEP),
    "drawdown_jump": (EventKind.DRAWDOWN_JUMP,),
    "drawdown_creep": (EventKind.DRAWDOWN_CREEP,),
    "hit": (EventKind.HIT,),
    "lower_exit": (EventKind.LOWER_EXIT,),
    "censored": (EventKind.CENSORED,),
}


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters; refinement_levels (strictly decreasing dts)
    enable bias extrapolation, defaulting to (dt, dt/2, dt/4)."""
    dt: float
    n_paths: int
    seed: int
    horizon: float | None = None
    refinement_levels: tuple[float, ...] | None = None
    workers: int = 1

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.refinement_levels is not None:
            levels = tuple(self.refinement_levels)
            if any(b >= a for a, b in zip(levels, levels[1:])):
                raise ValueError("refinement_levels must be strictly decreasing")

    def levels(self) -> tuple[float, ...]:
        if self.refinement_levels is not None:
            return tuple(self.refinement_levels)
        return (self.dt, self.dt / 2.0, self.dt / 4.0)


@dataclass
class PathEnsemble:
    """Per-path first-event records plus the configuration that produced them."""
    kind: np.ndarray
    time: np.ndarray
    x_at: np.ndarray
    max_at: np.ndarray
    overshoot: np.ndarray
    config: SimConfig
    dt: float
    level_id: int
    params: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.kind.shape[0]

    def counts(self) -> dict[str, int]:
        return {k.name.lower(): int(np.sum(self.kind == k)) for k in EventKind}

    def prob(self, which: str) -> tuple[float, float]:
        mask = np.isin(self.kind, KIND_SETS[which])
        p = float(np.mean(mask))
        se = float(np.std(mask.astype(float), ddof=1) / math.sqrt(self.n_paths))
        return p, se


def _path_chunks(n_paths: int) -> list[tuple[int, int, int]]:
    out = []
    start = 0
    cid = 0
    while start < n_paths:
        end = min(start + CHUNK_SIZE, n_paths)
        out.append((cid, start, end))
        start = end
        cid += 1
    return out


def simulate(model: LevyModel, xi: DrawdownFunction, x: float, b: float,
             config: SimConfig, *, dt: float | None = None,
             q_kill: float | None = None, lower_barrier: float | None = None,
             detect_hit: bool = False, level_id: int = 0) -> PathEnsemble:
    """Simulate first-passage events for n_paths started at x.

    Stops each path at the first of: continuous up-crossing of b, drawdown
    below xi(max) (creep if by diffusion, jump otherwise), optional hit of the
    boundary / lower-barrier crossing (detect_hit mode), or the censoring time
    (exact Exponential(q_kill) when q_kill is given, else the horizon).
    """
    span_end = b if np.isfinite(b) else x + 10.0
    xi.validate(x, span_end)
    if x > b:
        raise ValueError("x must not exceed b")
    if detect_hit:
        if lower_barrier is None:
            raise ValueError("detect_hit requires a lower_barrier")
        if lower_barrier >= min(xi.min_value(x, span_end), x):
            raise ValueError("the lower barrier must lie below the boundary "
                             "and the start level")
    if q_kill is None and config.horizon is None:
        raise ValueError("either q_kill or config.horizon must be set")
    dt = config.dt if dt is None else float(dt)

    n = config.n_paths
    kind = np.empty(n, dtype=np.int8)
    time = np.empty(n)
    x_at = np.empty(n)
    max_at = np.empty(n)
    overshoot = np.empty(n)

    def run_chunk(args):
        cid, lo, hi = args
        res = _simulate_chunk(model, xi, x, b, dt, hi - lo, config.seed, cid,
                              level_id, q_kill, config.horizon, lower_barrier,
                              detect_hit)
        kind[lo:hi], time[lo:hi], x_at[lo:hi], max_at[lo:hi], overshoot[lo:hi] = res

    chunks = _path_chunks(n)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            list(pool.map(run_chunk, chunks))
    else:
        for chunk in chunks:
            run_chunk(chunk)

    return PathEnsemble(kind, time, x_at, max_at, overshoot, config, dt,
                        level_id,
                        params={"x": x, "b": b, "q_kill": q_kill,
                                "lower_barrier": lower_barrier,
                                "detect_hit": detect_hit})


def _simulate_chunk(model, xi, x, b, dt, n, seed, chunk_id, level_id, q_kill,
                    horizon, lower_barrier, detect_hit):
    rng = np.random.Generator(np.random.Philox(
        key=np.array([seed, chunk_id], dtype=np.uint64),
        counter=np.array([0, 0, 0, level_id], dtype=np.uint64),
    ))
    mu, sigma = model.mu, model.sigma
    rate = model.jumps.rate
    cumw = np.cumsum(model.jumps.weights) if rate > 0.0 else None
    alphas = np.asarray(model.jumps.alphas) if rate > 0.0 else None

    X = np.full(n, float(x))
    M = np.full(n, float(x))
    t = np.zeros(n)
    # fixed draw order: censoring times, then initial jump clocks, then one
    # (paths x BLOCK_STEPS) normal block per iteration, then jump draws
    if q_kill is not None:
        t_end = rng.standard_exponential(n) / q_kill
    else:
        t_end = np.full(n, float(horizon))
    if rate > 0.0:
        next_jump = rng.standard_exponential(n) / rate
    else:
        next_jump = np.full(n, np.inf)

    kind = np.full(n, int(EventKind.CENSORED), dtype=np.int8)
    time = t_end.copy()
    x_at = np.zeros(n)
    max_at = np.zeros(n)
    overshoot = np.zeros(n)
    alive = np.arange(n)
    kcols = np.arange(BLOCK_STEPS)

    sqrt_dt = math.sqrt(dt)
    while alive.size:
        na = alive.size
        ta = t[alive]
        Xa = X[alive]
        Ma = M[alive]
        is_end = t_end[alive] <= next_jump[alive]
        seg_end = np.where(is_end, t_end[alive], next_jump[alive])
        rem = seg_end - ta
        n_steps = np.maximum(np.ceil(rem / dt - 1e-12).astype(np.int64), 1)
        m = np.minimum(n_steps, BLOCK_STEPS)
        finishes = m == n_steps

        # step sizes: full dt except a partial final step of the segment
        active = kcols[None, :] < m[:, None]
        last = m - 1
        rows = np.arange(na)
        last_sz = np.where(finishes, np.maximum(rem - (n_steps - 1) * dt, 0.0), dt)

        z = rng.standard_normal((na, BLOCK_STEPS))
        z_last = z[rows, last].copy()
        inc = z
        inc *= sigma * sqrt_dt
        inc += mu * dt
        inc[rows, last] = mu * last_sz + sigma * np.sqrt(last_sz) * z_last
        inc[~active] = 0.0
        Xp = np.cumsum(inc, axis=1, out=inc)
        Xp += Xa[:, None]
        runmax = np.maximum.accumulate(Xp, axis=1)
        Mprev = np.empty_like(Xp)
        Mprev[:, 0] = Ma
        np.maximum(Ma[:, None], runmax[:, :-1], out=Mprev[:, 1:])
        L = np.asarray(xi.value(Mprev))
        Xprev = np.empty_like(Xp)
        Xprev[:, 0] = Xa
        Xprev[:, 1:] = Xp[:, :-1]

        if detect_hit:
            crossed = (((Xprev - L) * (Xp - L) < 0.0)
                       | (Xp < lower_barrier) | (Xp >= b)) & active
        else:
            crossed = ((Xp < L) | (Xp >= b)) & active
        any_cross = crossed.any(axis=1)

        done = any_cross
        if np.any(any_cross):
            cidx = np.flatnonzero(any_cross)
            kstar = np.argmax(crossed[cidx], axis=1)
            x0 = Xprev[cidx, kstar]
            x1 = Xp[cidx, kstar]
            Ls = L[cidx, kstar]
            hs = np.where((kstar == last[cidx]) & finishes[cidx],
                          last_sz[cidx], dt)
            t0 = ta[cidx] + kstar * dt
            if detect_hit:
                _, ev_kind, ev_time, ev_x, ev_over = _hit_events(
                    x0, x1, Ls, t0, hs, b, lower_barrier)
            else:
                _, ev_kind, ev_time, ev_x, ev_over = _drawdown_events(
                    x0, x1, Ls, t0, hs, b)
            gidx = alive[cidx]
            kind[gidx] = ev_kind
            time[gidx] = ev_time
            x_at[gidx] = ev_x
            max_at[gidx] = np.where(ev_kind == EventKind.UP_EXIT, b,
                                    np.maximum(Ma[cidx], Mprev[cidx, kstar]))
            overshoot[gidx] = ev_over

        surv = ~done
        sidx = alive[surv]
        srows = rows[surv]
        Xs = Xp[srows, last[surv]]
        X[sidx] = Xs
        M[sidx] = np.maximum(Ma[surv], runmax[srows, last[surv]])
        t[sidx] = np.where(finishes[surv], seg_end[surv],
                           ta[surv] + BLOCK_STEPS * dt)

        # exact jumps at their epochs, after the diffusion stretch
        jmask = finishes[surv] & ~is_end[surv]
        if np.any(jmask):
            jidx = sidx[jmask]
            k = jidx.size
            u = rng.random(k)
            emag = rng.standard_exponential(k)
            enext = rng.standard_exponential(k)
            comp = np.minimum(np.searchsorted(cumw, u), alphas.size - 1)
            sizes = emag / alphas[comp]
            X2 = X[jidx] - sizes
            L2 = np.asarray(xi.value(M[jidx]))
            next_jump[jidx] = t[jidx] + enext / rate

            if detect_hit:
                fell = X2 < lower_barrier
                jk = int(EventKind.LOWER_EXIT)
                jover = lower_barrier - X2
            else:
                fell = X2 < L2
                jk = int(EventKind.DRAWDOWN_JUMP)
                jover = L2 - X2
            if np.any(fell):
                fidx = jidx[fell]
                kind[fidx] = jk
                time[fidx] = t[fidx]
                x_at[fidx] = X2[fell]
                max_at[fidx] = M[fidx]
                overshoot[fidx] = jover[fell]
            X[jidx] = X2
            jump_dead = np.zeros(sidx.size, dtype=bool)
            jump_dead[np.flatnonzero(jmask)[fell]] = True
        else:
            jump_dead = np.zeros(sidx.size, dtype=bool)

        # censoring at the end time (horizon or exact exponential clock)
        emask = finishes[surv] & is_end[surv] & ~jump_dead
        if np.any(emask):
            eidx = sidx[emask]
            x_at[eidx] = X[eidx]
            max_at[eidx] = M[eidx]
            # kind/time already prefilled as CENSORED / t_end

        alive = sidx[~(jump_dead | emask)]

    return kind, time, x_at, max_at, overshoot


def _drawdown_events(Xa, Xn, L, ta, h, b):
    """First-passage classification for one diffusion stretch (no jump)."""
    n = Xa.size
    ev_kind = np.full(n, -1, dtype=np.int8)
    ev_time = np.zeros(n)
    ev_x = np.zeros(n)
    ev_over = np.zeros(n)

    denom = Xa - Xn
    cross_dd = Xn < L
    cross_up = Xn >= b
    frac_dd = np.where(cross_dd, (Xa - L) / np.where(denom != 0.0, denom, 1.0), np.inf)
    frac_up = np.where(cross_up, (b - Xa) / np.where(-denom != 0.0, -denom, 1.0), np.inf)

    done = cross_dd | cross_up
    ev_kind[cross_dd] = int(EventKind.DRAWDOWN_CREEP)
    ev_x[cross_dd] = L[cross_dd]
    ev_time[cross_dd] = ta[cross_dd] + frac_dd[cross_dd] * h[cross_dd]
    ev_kind[cross_up] = int(EventKind.UP_EXIT)
    ev_x[cross_up] = b
    ev_time[cross_up] = ta[cross_up] + frac_up[cross_up] * h[cross_up]
    return done, ev_kind, ev_time, ev_x, ev_over


def _hit_events(Xa, Xn, L, ta, h, b, lower):
    """Hit / lower-exit / up-exit classification with earliest-crossing wins."""
    n = Xa.size
    denom = Xn - Xa
    safe = np.where(denom != 0.0, denom, 1.0)
    go = Xa - L
    gn = Xn - L
    f_hit = np.where(go * gn < 0.0, (L - Xa) / safe, np.inf)
    f_low = np.where(Xn < lower, (lower - Xa) / safe, np.inf)
    f_up = np.where(Xn >= b, (b - Xa) / safe, np.inf)

    fracs = np.stack([f_hit, f_low, f_up])
    best = np.argmin(fracs, axis=0)
    fmin = fracs[best, np.arange(n)]
    done = np.isfinite(fmin)

    ev_kind = np.full(n, -1, dtype=np.int8)
    ev_time = np.zeros(n)
    ev_x = np.zeros(n)
    ev_over = np.zeros(n)
    kinds = np.array([int(EventKind.HIT), int(EventKind.LOWER_EXIT),
                      int(EventKind.UP_EXIT)], dtype=np.int8)
    ev_kind[done] = kinds[best[done]]
    ev_time[done] = ta[done] + fmin[done] * h[done]
    ev_x[done] = np.select(
        [best == 0, best == 1, best == 2], [L, np.full(n, lower), np.full(n, b)]
    )[done]
    return done, ev_kind, ev_time, ev_x, ev_over


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def estimate_transform(ensemble: PathEnsemble, which: str, u: float = 0.0,
                       v: float = 0.0, r: float = 0.0) -> tuple[float, float]:
    """Empirical mean and standard error of exp(-u T + v X(T) + r M(T)) over
    records of the requested kind (others contribute 0)."""
    mask = np.isin(ensemble.kind, KIND_SETS[which])
    n_events = int(np.sum(mask))
    if n_events < MIN_EVENTS:
        raise InsufficientEventsError(
            f"only {n_events} events of kind {which!r} (need >= {MIN_EVENTS})"
        )
    vals = np.where(
        mask,
        np.exp(-u * ensemble.time + v * ensemble.x_at + r * ensemble.max_at),
        0.0,
    )
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(ensemble.n_paths))
    return mean, se


def creep_fraction(ensemble: PathEnsemble, q: float = 0.0) -> tuple[float, float]:
    """Estimate of E[exp(-q T); the drawdown crossing creeps]."""
    return estimate_transform(ensemble, "drawdown_creep", u=q)


def estimate_potential_histogram(model: LevyModel, xi: DrawdownFunction,
                                 x: float, b: float, q: float,
                                 config: SimConfig, bin_edges,
                                 level_id: int = 0):
    """Binned estimate of q * (potential measure): records X at an exact
    Exponential(q) time when it precedes both exits.  Returns (masses, ses,
    ensemble)."""
    ens = simulate(model, xi, x, b, config, q_kill=q, level_id=level_id)
    edges = np.asarray(bin_edges, dtype=float)
    sampled = ens.kind == int(EventKind.CENSORED)
    masses = np.empty(edges.size - 1)
    ses = np.empty(edges.size - 1)
    for i in range(edges.size - 1):
        ind = sampled & (ens.x_at >= edges[i]) & (ens.x_at < edges[i + 1])
        p = float(np.mean(ind))
        masses[i] = p
        ses[i] = math.sqrt(max(p * (1.0 - p), 0.0) / ens.n_paths)
    return masses, ses, ens


def extrapolate_sqrt_dt(values, ses, dts) -> tuple[float, float]:
    """Richardson extrapolation of the sqrt(dt) crossing bias from the two
    finest levels; the standard error propagates through the combination."""
    values = np.asarray(values, dtype=float)
    ses = np.asarray(ses, dtype=float)
    dts = np.asarray(dts, dtype=float)
    if values.size == 1:
        return float(values[0]), float(ses[0])
    order = np.argsort(dts)
    fine, coarse = order[0], order[1]
    ratio = math.sqrt(dts[coarse] / dts[fine])
    a = 1.0 / (ratio - 1.0)
    value = values[fine] - a * (values[coarse] - values[fine])
    se = math.sqrt(((1.0 + a) * ses[fine]) ** 2 + (a * ses[coarse]) ** 2)
    return float(value), float(se)


def run_levels(model: LevyModel, xi: DrawdownFunction, x: float, b: float,
               config: SimConfig, estimator, *, q_kill=None,
               lower_barrier=None, detect_hit=False):
    """Run the refinement levels and apply ``estimator(ensemble) -> (mean, se)``
    per level; returns (per-level means, ses, dts, extrapolated pair)."""
    means, ses = [], []
    dts = config.levels()
    for i, dt_i in enumerate(dts):
        ens = simulate(model, xi, x, b, config, dt=dt_i, q_kill=q_kill,
                       lower_barrier=lower_barrier, detect_hit=detect_hit,
                       level_id=i)
        m, s = estimator(ens)
        means.append(m)
        ses.append(s)
    extr = extrapolate_sqrt_dt(means, ses, dts)
    return means, ses, list(dts), extr


def default_horizon(q: float, n_paths: int) -> float:
    """Censoring horizon with exp(-q T) below a tenth of the target standard
    error ~ 0.5/sqrt(n)."""
    if q <= 0.0:
        raise ValueError("default_horizon needs q > 0")
    return math.log(20.0 * math.sqrt(max(n_paths, 2))) / q
