"""Exit, creeping, hitting and potential identities for drawdown boundaries.

General boundaries are handled by the coupled Gauss-Kronrod march; constant,
linear, and reflected (slope 1) boundaries also have closed forms that the
general route must reproduce.  The classical two-barrier formulas double as
reduction targets for the constant-boundary case.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .drawdown import DrawdownFunction
from .errors import UnsupportedRegimeError
from .models import LevyModel
from .quadrature import (
    GAUSS_INDICES,
    GAUSS_WEIGHTS,
    KRONROD_NODES,
    KRONROD_WEIGHTS,
    build_partition,
    coupled_march,
    split_cell,
)
from .scale import ScaleBase, TiltedScale, scale_function

DEFAULT_TOL = 1e-9


@functools.lru_cache(maxsize=512)
def _cached_scale(model: LevyModel, q: float, method: str) -> ScaleBase:
    # closed forms are validated wholesale by the test suite; skip the
    # per-construction spot check on this hot path
    return scale_function(model, q, method=method, validate=False)


def _tilted(model: LevyModel, v: float, p: float, method: str) -> TiltedScale:
    shifted_q = p + float(model.psi(v))
    if shifted_q < -1e-14:
        raise ValueError("p + psi(v) must be >= 0")
    base = _cached_scale(model, max(shifted_q, 0.0), method)
    return TiltedScale(base, v, p)


@dataclass
class IdentityResult:
    """A computed transform/measure value with its quadrature error estimate."""
    value: float
    abs_error_estimate: float
    breakdown: Optional[list] = None


@dataclass
class ExitQuery:
    """One (model, boundary, start, upper level) configuration.

    Construction validates the boundary positivity margin on [x, b].
    """
    model: LevyModel
    xi: DrawdownFunction
    x: float
    b: float
    scale_method: str = "auto"
    tol: float = DEFAULT_TOL
    collect_cells: bool = False

    def __post_init__(self):
        if self.b < self.x:
            raise ValueError("b must be >= x")
        self.xi.validate(self.x, self.b)

    def _scale(self, q: float) -> ScaleBase:
        return _cached_scale(self.model, float(q), self.scale_method)


def _omega_from(sf, bar):
    def omega(t):
        h = bar(t)
        return sf.w_prime(h) / sf.w(h)
    return omega


def _breakdown(result):
    return [(c.a, c.c, c.dh) for c in result.cells] or None


# ---------------------------------------------------------------------------
# general-boundary operations
# ---------------------------------------------------------------------------

def up_exit_before_drawdown(query: ExitQuery, q: float) -> IdentityResult:
    """E_x[exp(-q T_b); up-exit at b happens before the drawdown time].

    Equals exp(-int_x^b W'(bar)/W(bar)) evaluated by the coupled march; q = 0
    gives the plain probability.
    """
    if q < 0.0:
        raise ValueError("q must be >= 0")
    if query.x == query.b:
        return IdentityResult(1.0, 0.0)
    sf = query._scale(q)
    omega = _omega_from(sf, query.xi.bar)
    res = coupled_march(omega, query.x, query.b, breakpoints=query.xi.breakpoints,
                        tol=query.tol, collect_cells=query.collect_cells)
    value = math.exp(-res.h_total)
    return IdentityResult(value, value * res.h_error, _breakdown(res))


def drawdown_triple_transform(query: ExitQuery, u: float, v: float = 0.0,
                              r: float = 0.0) -> IdentityResult:
    """E_x[exp(-u T + v X(T) + r M(T)); drawdown at time T happens before the
    up-exit at b], where M is the running maximum.

    Requires u, v >= 0 and p = u - psi(v) >= 0 (the analytic extension to
    p < 0 is out of scope).
    """
    if u < 0.0 or v < 0.0:
        raise ValueError("u and v must be >= 0")
    p = u - float(query.model.psi(v))
    if p < -1e-12:
        raise ValueError("u < psi(v) (p < 0) is not supported")
    p = max(p, 0.0)
    if query.x == query.b:
        return IdentityResult(0.0, 0.0)
    ts = _tilted(query.model, v, p, query.scale_method)
    bar = query.xi.bar
    omega = _omega_from(ts, bar)

    def outer(t, h):
        hb = bar(t)
        w = ts.w(hb)
        rate = ts.w_prime(hb) / w
        return np.exp(r * t - h) * (rate * ts.z(hb) - p * w)

    res = coupled_march(omega, query.x, query.b, outer=outer,
                        breakpoints=query.xi.breakpoints, tol=query.tol,
                        collect_cells=query.collect_cells)
    amp = math.exp(v * query.x)
    err = amp * (res.outer_error + abs(res.value) * res.h_error)
    return IdentityResult(amp * res.value, err, _breakdown(res))


def creeping_transform(query: ExitQuery, q: float,
                       zero_sigma_ok: bool = False) -> IdentityResult:
    """E_x[exp(-q T); the drawdown time T creeps (hits the boundary exactly)
    and precedes the up-exit at b].  Needs sigma > 0; with sigma == 0 creeping
    is impossible and the caller must acknowledge via zero_sigma_ok."""
    if q < 0.0:
        raise ValueError("q must be >= 0")
    if query.model.sigma == 0.0:
        if zero_sigma_ok:
            return IdentityResult(0.0, 0.0)
        raise UnsupportedRegimeError(
            "creeping requires sigma > 0; pass zero_sigma_ok=True to get 0"
        )
    if query.x == query.b:
        return IdentityResult(0.0, 0.0)
    sf = query._scale(q)
    bar = query.xi.bar
    omega = _omega_from(sf, bar)
    half_var = 0.5 * query.model.sigma**2

    def outer(t, h):
        hb = bar(t)
        wp = sf.w_prime(hb)
        return np.exp(-h) * (wp * wp / sf.w(hb) - sf.w_second(hb))

    res = coupled_march(omega, query.x, query.b, outer=outer,
                        breakpoints=query.xi.breakpoints, tol=query.tol,
                        collect_cells=query.collect_cells)
    err = half_var * (res.outer_error + abs(res.value) * res.h_error)
    return IdentityResult(half_var * res.value, err, _breakdown(res))


def hitting_transform(query: ExitQuery, q: float, c: float) -> IdentityResult:
    """E_x[exp(-q T); the boundary level xi(max) is hit before both the lower
    barrier c and the up-exit at b].  Requires c < xi everywhere on [x, b]."""
    if q < 0.0:
        raise ValueError("q must be >= 0")
    if c >= query.xi.min_value(query.x, query.b):
        raise ValueError("the lower barrier c must satisfy c < xi on [x, b]")
    if query.x == query.b:
        return IdentityResult(0.0, 0.0)
    sf = query._scale(q)
    xi, bar = query.xi, query.xi.bar
    omega = _omega_from(sf, bar)

    def outer(t, h):
        hb = bar(t)
        tc = t - c
        w_tc = sf.w(tc)
        ratio = w_tc / sf.w(xi.value(t) - c)
        return np.exp(-h) * ratio * (sf.w_prime(hb) / sf.w(hb)
                                     - sf.w_prime(tc) / w_tc)

    res = coupled_march(omega, query.x, query.b, outer=outer,
                        breakpoints=query.xi.breakpoints, tol=query.tol,
                        collect_cells=query.collect_cells)
    err = res.outer_error + abs(res.value) * res.h_error
    return IdentityResult(res.value, err, _breakdown(res))


def potential_density_grid(query: ExitQuery, q: float, ys) -> tuple[np.ndarray, np.ndarray]:
    """Density of the potential measure before the up-exit/drawdown, at each y.

    Sum of the absolutely continuous part (restricted to {xi(t) < y < t}) and,
    for bounded-variation models, the W(0)-weighted running-maximum ridge on
    (x, b).  Returns (values, error estimates).
    """
    if q <= 0.0:
        raise ValueError("the potential density requires q > 0")
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    x, b = query.x, query.b
    sf = query._scale(q)
    xi = query.xi
    omega = _omega_from(sf, xi.bar)

    splits = set(xi.breakpoints)
    for y in ys:
        if x < y < b:
            splits.add(float(y))
        splits.update(xi.level_crossings(float(y), x, b))
    if x == b:
        return np.zeros_like(ys), np.zeros_like(ys)
    cells = build_partition(omega, x, b, sorted(splits), tol=query.tol)

    vals = np.zeros_like(ys)
    errs = np.zeros_like(ys)
    h_err_total = 0.0
    edge_h: dict[float, float] = {}
    span = b - x
    stack = list(cells)
    while stack:
        cell = stack.pop()
        width = cell.c - cell.a
        mid = 0.5 * (cell.a + cell.c)
        xi_mid = float(xi.value(np.array([mid]))[0])
        active = np.nonzero((ys > xi_mid) & (ys < mid))[0]
        budget = query.tol * width / span
        if active.size:
            half = 0.5 * width
            damp = np.exp(-cell.h_nodes)
            diff = cell.t_nodes[:, None] - ys[active][None, :]
            # split merging can leave a y inside a cell by up to the merge
            # tolerance; those nodes sit on W's zero extension
            inside = diff > 0.0
            diff = np.where(inside, diff, 1.0)
            f = damp[:, None] * (sf.w_prime(diff)
                                 - cell.omega_vals[:, None] * sf.w(diff)) * inside
            vk = half * (KRONROD_WEIGHTS @ f)
            vg = half * (GAUSS_WEIGHTS @ f[GAUSS_INDICES])
            cell_err = np.abs(vk - vg)
            if float(np.max(cell_err)) > budget and width > 1e-12 * span:
                stack.extend(split_cell(omega, cell))
                continue
            vals[active] += vk
            errs[active] += cell_err
        edge_h[cell.a] = cell.h_left
        edge_h[cell.c] = cell.h_left + cell.dh
        h_err_total += cell.dh_err

    if sf.w0 > 0.0:
        # splits may have been merged within the partition tolerance, so look
        # up H at the nearest surviving edge
        edge_pos = np.array(sorted(edge_h))
        edge_val = np.array([edge_h[p] for p in edge_pos])
        for i, y in enumerate(ys):
            if x < y < b:
                j = int(np.clip(np.searchsorted(edge_pos, y), 1, edge_pos.size - 1))
                j = j if abs(edge_pos[j] - y) < abs(edge_pos[j - 1] - y) else j - 1
                vals[i] += sf.w0 * math.exp(-edge_val[j])
    errs += np.abs(vals) * h_err_total
    return vals, errs


def potential_density(query: ExitQuery, q: float, y: float) -> IdentityResult:
    """Pointwise potential-measure density at y (see potential_density_grid)."""
    vals, errs = potential_density_grid(query, q, [float(y)])
    return IdentityResult(float(vals[0]), float(errs[0]))


@dataclass
class MassBalance:
    """Both routes to the killed potential mass: q * integral of the density,
    and 1 minus the combined exit transforms at the same q."""
    mass_side: float
    transform_side: float
    mass_error: float
    transform_error: float

    @property
    def gap(self) -> float:
        return abs(self.mass_side - self.transform_side)


def potential_bin_masses(query: ExitQuery, q: float, bin_edges,
                         subcells: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """q * integral of the potential density over each [edge_i, edge_i+1) bin
    (the quantity the Monte Carlo histogram estimates).  Returns (masses, errors)."""
    edges = np.asarray(bin_edges, dtype=float)
    sub_edges: list[np.ndarray] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sub_edges.append(np.linspace(lo, hi, subcells + 1))
    y_nodes = []
    for seg in sub_edges:
        for lo, hi in zip(seg[:-1], seg[1:]):
            y_nodes.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * KRONROD_NODES)
    y_all = np.concatenate(y_nodes)
    vals, verrs = potential_density_grid(query, q, y_all)

    masses = np.zeros(edges.size - 1)
    errs = np.zeros(edges.size - 1)
    pos = 0
    for i, seg in enumerate(sub_edges):
        for lo, hi in zip(seg[:-1], seg[1:]):
            half = 0.5 * (hi - lo)
            block = vals[pos * 15:(pos + 1) * 15]
            eblock = verrs[pos * 15:(pos + 1) * 15]
            vk = half * float(KRONROD_WEIGHTS @ block)
            vg = half * float(GAUSS_WEIGHTS @ block[GAUSS_INDICES])
            masses[i] += vk
            errs[i] += abs(vk - vg) + half * float(KRONROD_WEIGHTS @ eblock)
            pos += 1
    return q * masses, q * errs


def potential_mass_check(query: ExitQuery, q: float,
                         cells_per_unit: int = 24) -> MassBalance:
    """Integrate the potential density over its support (independent y
    quadrature) and compare q * mass against 1 - up_exit - drawdown transform."""
    x, b = query.x, query.b
    xi = query.xi
    y_lo = xi.min_value(x, b)
    kinks = {y_lo, b, x}
    for t in (x, b, *xi.breakpoints):
        if x <= t <= b:
            kinks.add(float(xi.value(np.array([t]))[0]))
    kinks = sorted(k for k in kinks if y_lo <= k <= b)

    edges: list[float] = []
    for lo, hi in zip(kinks[:-1], kinks[1:]):
        n = max(1, math.ceil((hi - lo) / ((b - y_lo) / cells_per_unit)))
        edges.extend(np.linspace(lo, hi, n + 1)[:-1])
    edges.append(b)

    y_nodes = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        y_nodes.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * KRONROD_NODES)
    y_all = np.concatenate(y_nodes)
    vals, verrs = potential_density_grid(query, q, y_all)

    mass = 0.0
    rule_err = 0.0
    node_err = 0.0
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        half = 0.5 * (hi - lo)
        block = vals[i * 15:(i + 1) * 15]
        eblock = verrs[i * 15:(i + 1) * 15]
        vk = half * float(KRONROD_WEIGHTS @ block)
        vg = half * float(GAUSS_WEIGHTS @ block[GAUSS_INDICES])
        mass += vk
        rule_err += abs(vk - vg)
        node_err += half * float(KRONROD_WEIGHTS @ eblock)

    up = up_exit_before_drawdown(query, q)
    dd = drawdown_triple_transform(query, u=q, v=0.0, r=0.0)
    return MassBalance(
        mass_side=q * mass,
        transform_side=1.0 - up.value - dd.value,
        mass_error=q * (rule_err + node_err),
        transform_error=up.abs_error_estimate + dd.abs_error_estimate,
    )


# ---------------------------------------------------------------------------
# classical two-barrier formulas (constant boundaries)
# ---------------------------------------------------------------------------

def classical_up_exit(model: LevyModel, q: float, x: float, c: float, b: float,
                      method: str = "auto") -> float:
    """E_x[exp(-q T_b); up-exit at b before passing below c] = W(x-c)/W(b-c)."""
    sf = _cached_scale(model, q, method)
    return float(sf.w(x - c) / sf.w(b - c))


def classical_down_exit_transform(model: LevyModel, u: float, v: float,
                                  x: float, c: float, b: float,
                                  method: str = "auto") -> float:
    """E_x[exp(-u T_c + v X(T_c)); downward passage below c before b]."""
    p = u - float(model.psi(v))
    ts = _tilted(model, v, p, method)
    ratio = ts.w(x - c) / ts.w(b - c)
    return float(math.exp(v * x) * (ts.z(x - c) - ratio * ts.z(b - c)))


def classical_creeping(model: LevyModel, q: float, x: float, c: float, b: float,
                       method: str = "auto") -> float:
    """E_x[exp(-q T_c); X lands exactly on c, before the up-exit at b]."""
    if model.sigma == 0.0:
        return 0.0
    sf = _cached_scale(model, q, method)
    return float(0.5 * model.sigma**2 * (
        sf.w_prime(x - c) - sf.w(x - c) * sf.w_prime(b - c) / sf.w(b - c)
    ))


def classical_killed_potential_density(model: LevyModel, q: float, x: float,
                                       c: float, b: float, y,
                                       method: str = "auto"):
    """Density of the potential measure of X killed at exiting [c, b]."""
    sf = _cached_scale(model, q, method)
    ya = np.asarray(y, dtype=float)
    out = np.asarray(sf.w(x - c) / sf.w(b - c) * sf.w(b - ya) - sf.w(x - ya))
    return out if np.ndim(y) else float(out)


def classical_hitting(model: LevyModel, q: float, x: float, a: float,
                      c: float, b: float, method: str = "auto") -> float:
    """E_x[exp(-q T_{a}); X hits level a before leaving [c, b]]."""
    sf = _cached_scale(model, q, method)
    return float(sf.w(x - c) / sf.w(a - c)
                 - sf.w(x - a) * sf.w(b - c) / (sf.w(b - a) * sf.w(a - c)))


def classical_suite(model: LevyModel, q: float, u: float, v: float, x: float,
                    a: float, c: float, b: float, y: float,
                    method: str = "auto") -> dict:
    """All five classical formulas in one shot (reduction targets for tests)."""
    return {
        "up_exit": classical_up_exit(model, q, x, c, b, method),
        "down_exit": classical_down_exit_transform(model, u, v, x, c, b, method),
        "creeping": classical_creeping(model, q, x, c, b, method),
        "potential_density": classical_killed_potential_density(
            model, q, x, c, b, y, method),
        "hitting": classical_hitting(model, q, x, a, c, b, method),
    }


# ---------------------------------------------------------------------------
# linear-boundary closed forms (start at 0, xi(t) = slope*t - d, slope != 1)
# ---------------------------------------------------------------------------

def _pow_ratio(num: float, den: float, expo: float) -> float:
    return math.exp(expo * (math.log(num) - math.log(den)))


def linear_up_exit(model: LevyModel, slope: float, d: float, b: float,
                   q: float, method: str = "auto") -> float:
    """Closed form (W(d)/W((1-slope) b + d))^(1/(1-slope)) for the up-exit
    transform under a linear boundary started at 0."""
    if slope == 1.0:
        raise ValueError("slope 1 is the reflected case")
    sf = _cached_scale(model, q, method)
    top = sf.w(d)
    bot = sf.w((1.0 - slope) * b + d)
    return _pow_ratio(top, bot, 1.0 / (1.0 - slope))


def linear_drawdown_transform(model: LevyModel, slope: float, d: float,
                              b: float, u: float, v: float = 0.0,
                              method: str = "auto") -> float:
    """Closed form for the drawdown transform E[exp(-u T + v X(T)); T before
    the up-exit] under a linear boundary started at 0 (slope != 1)."""
    if slope == 1.0:
        raise ValueError("slope 1 is the reflected case")
    p = u - float(model.psi(v))
    if p < -1e-12:
        raise ValueError("u < psi(v) (p < 0) is not supported")
    p = max(p, 0.0)
    ts = _tilted(model, v, p, method)
    hb = (1.0 - slope) * b + d
    expo = 1.0 / (1.0 - slope)
    head = ts.z(d) - ts.z(hb) * _pow_ratio(ts.w(d), ts.w(hb), expo)
    if p == 0.0 or slope == 0.0:
        return float(head)
    wd_pow = _pow_ratio(ts.w(d), 1.0, expo)

    def integrand(t):
        h = (1.0 - slope) * t + d
        return _pow_ratio(ts.w(h), 1.0, -slope * expo)

    tail, _ = integrate.quad(integrand, 0.0, b, limit=200,
                             epsabs=1e-13, epsrel=1e-12)
    return float(head - p * slope * wd_pow * tail)


def linear_creeping(model: LevyModel, slope: float, d: float, b: float,
                    q: float, method: str = "auto") -> float:
    """Closed form for the creeping transform under a linear boundary
    started at 0 (slope != 1, sigma > 0)."""
    if slope == 1.0:
        raise ValueError("slope 1 is the reflected case")
    if model.sigma == 0.0:
        return 0.0
    sf = _cached_scale(model, q, method)
    hb = (1.0 - slope) * b + d
    expo = 1.0 / (1.0 - slope)
    head = sf.w_prime(d) - sf.w_prime(hb) * _pow_ratio(sf.w(d), sf.w(hb), expo)
    if slope != 0.0:
        def integrand(t):
            h = (1.0 - slope) * t + d
            return _pow_ratio(sf.w(d), sf.w(h), expo) * sf.w_second(h)

        tail, _ = integrate.quad(integrand, 0.0, b, limit=200,
                                 epsabs=1e-13, epsrel=1e-12)
        head -= slope * tail
    return float(0.5 * model.sigma**2 * head)


def linear_potential_density(model: LevyModel, slope: float, d: float,
                             b: float, q: float, y: float,
                             method: str = "auto") -> float:
    """Closed-form potential density under a linear boundary started at 0.

    Support is [-d, b] for slope > 0 and [slope*b - d, b] for slope <= 0.
    """
    if slope == 1.0:
        raise ValueError("slope 1 is the reflected case")
    sf = _cached_scale(model, q, method)
    expo = 1.0 / (1.0 - slope)

    def head_at(t_cap: float) -> float:
        h = (1.0 - slope) * t_cap + d
        return sf.w(t_cap - y) * _pow_ratio(sf.w(d), sf.w(h), expo)

    if slope > 0.0:
        if not (-d <= y <= b):
            return 0.0
        cap = min(b, (d + y) / slope)
        return float(head_at(cap) - sf.w(-y))
    if not (slope * b - d <= y <= b):
        return 0.0
    first = head_at(b)
    if slope < 0.0:
        floor = max(0.0, (d + y) / slope)
        return float(first - head_at(floor))
    return float(first - sf.w(-y))  # slope == 0: classical two-barrier density


# ---------------------------------------------------------------------------
# reflected-boundary closed forms (slope 1, constant allowed drawdown d)
# ---------------------------------------------------------------------------

def _phi1(z: float) -> float:
    """(exp(z) - 1)/z, stable near 0."""
    if abs(z) < 1e-8:
        return 1.0 + 0.5 * z + z * z / 6.0
    return math.expm1(z) / z


def reflected_up_exit(model: LevyModel, d: float, b: float, q: float,
                      method: str = "auto") -> float:
    """exp(-b W'(d)/W(d)): up-exit transform before the reflected process
    exceeds depth d."""
    sf = _cached_scale(model, q, method)
    return math.exp(-sf.w_prime(d) / sf.w(d) * b)


def reflected_drawdown_transform(model: LevyModel, d: float, b: float,
                                 u: float, v: float = 0.0, r: float = 0.0,
                                 method: str = "auto") -> float:
    """Triple transform at the first time the drawdown exceeds d (before the
    up-exit at b), closed form."""
    p = u - float(model.psi(v))
    if p < -1e-12:
        raise ValueError("u < psi(v) (p < 0) is not supported")
    p = max(p, 0.0)
    ts = _tilted(model, v, p, method)
    wd = ts.w(d)
    rate = ts.w_prime(d) / wd
    head = rate * ts.z(d) - p * wd
    return float(head * b * _phi1((r - rate) * b))


def reflected_creeping(model: LevyModel, d: float, b: float, q: float,
                       method: str = "auto") -> float:
    """Closed form for creeping through depth d before the up-exit at b."""
    if model.sigma == 0.0:
        return 0.0
    sf = _cached_scale(model, q, method)
    rate = sf.w_prime(d) / sf.w(d)
    head = sf.w_prime(d) - sf.w(d) * sf.w_second(d) / sf.w_prime(d)
    return float(0.5 * model.sigma**2 * head * (-math.expm1(-rate * b)))


def reflected_potential_density(model: LevyModel, d: float, b: float,
                                q: float, y, method: str = "auto"):
    """Potential density before depth-d drawdown and up-exit, for y in (-d, b)."""
    sf = _cached_scale(model, q, method)
    rate = sf.w_prime(d) / sf.w(d)
    ya = np.asarray(y, dtype=float)
    out = np.asarray(sf.w(np.minimum(d, b - ya)) * np.exp(-rate * np.minimum(ya + d, b))
                     - sf.w(-ya))
    return out if np.ndim(y) else float(out)


def reflected_drawdown_limit(model: LevyModel, d: float, u: float, v: float,
                             method: str = "auto") -> float:
    """b -> infinity, r = -v limit: E[exp(-u K - v Y(K))] for the first time K
    the drawdown exceeds d."""
    p = u - float(model.psi(v))
    if p < -1e-12:
        raise ValueError("u < psi(v) (p < 0) is not supported")
    p = max(p, 0.0)
    ts = _tilted(model, v, p, method)
    wd = ts.w(d)
    zd = ts.z(d)
    return float(zd - wd * (p * wd + v * zd) / (ts.w_prime(d) + v * wd))


def reflected_max_rate(model: LevyModel, d: float, q: float,
                       method: str = "auto") -> float:
    """Exponential parameter of the running maximum at the q-killed depth-d
    drawdown time: W'(d)/W(d)."""
    sf = _cached_scale(model, q, method)
    return float(sf.w_prime(d) / sf.w(d))


def reflected_depth_density(model: LevyModel, d: float, q: float, z,
                            method: str = "auto"):
    """Density on (0, d) of the drawdown depth at an independent exponential
    time, on the event the depth never exceeded d."""
    sf = _cached_scale(model, q, method)
    za = np.asarray(z, dtype=float)
    out = np.asarray(q * (sf.w(d) * sf.w_prime(za) / sf.w_prime(d) - sf.w(za)))
    return out if np.ndim(z) else float(out)


def reflected_zero_atom(model: LevyModel, d: float, q: float,
                        method: str = "auto") -> float:
    """Atom at depth 0 of the same law (positive only for bounded variation)."""
    sf = _cached_scale(model, q, method)
    return float(q * sf.w0 * sf.w(d) / sf.w_prime(d))


def reflected_pass_probability(model: LevyModel, d: float, q: float,
                               method: str = "auto") -> float:
    """P(depth-d drawdown happens before an independent exponential time)."""
    sf = _cached_scale(model, q, method)
    return float(sf.z(d) - q * sf.w(d) ** 2 / sf.w_prime(d))


def reflected_suite(model: LevyModel, d: float, b: float, q: float,
                    u: float, v: float, r: float, method: str = "auto") -> dict:
    """The reflected-case closed forms bundled for tests and reports."""
    return {
        "up_exit": reflected_up_exit(model, d, b, q, method),
        "drawdown": reflected_drawdown_transform(model, d, b, u, v, r, method),
        "creeping": reflected_creeping(model, d, b, q, method),
        "max_rate": reflected_max_rate(model, d, q, method),
        "limit": reflected_drawdown_limit(model, d, u, v, method),
        "zero_atom": reflected_zero_atom(model, d, q, method),
        "pass_probability": reflected_pass_probability(model, d, q, method),
    }


# ---------------------------------------------------------------------------
# excursion-measure functionals (scale-function right-hand sides)
# ---------------------------------------------------------------------------

def excursion_kill_rate(sf: ScaleBase, h: float) -> float:
    """Rate at which excursions exceeding height h terminate the climb:
    W'(h)/W(h) (with the killing already folded into W's index)."""
    return float(sf.w_prime(h) / sf.w(h))


def excursion_drawdown_entry(sf: ScaleBase, h: float) -> float:
    """Time-discounted mass of excursions exceeding height h:
    W'(h)/W(h) Z(h) - q W(h)."""
    return float(sf.w_prime(h) / sf.w(h) * sf.z(h) - sf.q * sf.w(h))


def excursion_creeping_rate(sf: ScaleBase, h: float) -> float:
    """Discounted mass of excursions that reach height h exactly (sigma > 0)."""
    wp = sf.w_prime(h)
    return float(0.5 * sf.model.sigma**2 * (wp * wp / sf.w(h) - sf.w_second(h)))


def excursion_hitting_rate(sf: ScaleBase, h_hit: float, h_kill: float) -> float:
    """Discounted mass of excursions hitting depth h_hit before depth h_kill
    (h_kill > h_hit)."""
    if h_kill <= h_hit:
        raise ValueError("h_kill must exceed h_hit")
    return float(sf.w(h_kill) / sf.w(h_kill - h_hit)
                 * (sf.w_prime(h_hit) / sf.w(h_hit)
                    - sf.w_prime(h_kill) / sf.w(h_kill)))


def excursion_occupation_density(sf: ScaleBase, h_kill: float, depth) -> float:
    """Discounted occupation density of excursion depth (0 < depth < h_kill),
    excluding the W(0) atom at depth 0."""
    za = np.asarray(depth, dtype=float)
    out = np.asarray(sf.w_prime(za) - sf.w_prime(h_kill) / sf.w(h_kill) * sf.w(za))
    return out if np.ndim(depth) else float(out)


def excursion_functionals(model: LevyModel, q: float, h: float,
                          h_kill: Optional[float] = None,
                          depth: Optional[float] = None,
                          method: str = "auto") -> dict:
    """Evaluate the excursion-measure functionals at height h (plus the
    hitting/occupation ones when h_kill / depth are given)."""
    sf = _cached_scale(model, q, method)
    out = {
        "kill_rate": excursion_kill_rate(sf, h),
        "drawdown_entry": excursion_drawdown_entry(sf, h),
    }
    if model.sigma > 0.0:
        out["creeping_rate"] = excursion_creeping_rate(sf, h)
    if h_kill is not None:
        out["hitting_rate"] = excursion_hitting_rate(sf, h, h_kill)
        if depth is not None:
            out["occupation_density"] = excursion_occupation_density(sf, h_kill, depth)
    return out
