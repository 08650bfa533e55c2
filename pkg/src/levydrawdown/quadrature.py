"""Adaptive Gauss-Kronrod machinery for the coupled drawdown integrals.

The exit identities all share the structure

    H(t) = int_x^t omega(s) ds,      value = int_x^b f(t, H(t)) dt,

where omega is the boundary-dependent killing rate.  Both integrals advance
together on one adaptive partition: each (G7, K15) cell yields the H
increment, H at the interior Kronrod nodes (by integrating the degree-14
interpolant of omega), and the outer contribution.  A cell splits when either
the H increment or the outer increment disagrees between the Gauss and
Kronrod rules by more than its share of the tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C

# 15-point Kronrod extension of 7-point Gauss-Legendre (QUADPACK values).
KRONROD_NODES = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0,
    0.207784955007898, 0.405845151377397, 0.586087235467691,
    0.741531185599394, 0.864864423359769, 0.949107912342759,
    0.991455371120813,
])
KRONROD_WEIGHTS = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
    0.204432940075298, 0.190350578064785, 0.169004726639267,
    0.140653259715525, 0.104790010322250, 0.063092092629979,
    0.022935322010529,
])
GAUSS_INDICES = np.arange(1, 15, 2)
GAUSS_WEIGHTS = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469,
    0.381830050505119, 0.279705391489277, 0.129484966168870,
])


def _antiderivative_matrix() -> np.ndarray:
    """S with (S @ f)[j] = int_{-1}^{node_j} p(u) du for the degree-14
    interpolant p of the samples f at the Kronrod nodes (Chebyshev basis for
    conditioning)."""
    vand = C.chebvander(KRONROD_NODES, 14)
    coeff_map = np.linalg.inv(vand)
    anti = np.zeros((16, 15))
    for k in range(15):
        e = np.zeros(15)
        e[k] = 1.0
        anti[:, k] = C.chebint(e)
    eval_nodes = C.chebvander(KRONROD_NODES, 15)
    eval_lo = C.chebvander(np.array([-1.0]), 15)
    return (eval_nodes - eval_lo) @ anti @ coeff_map


ANTIDERIV = _antiderivative_matrix()

MAX_DEPTH = 48


@dataclass
class Cell:
    """One accepted partition cell, carrying H at its left edge."""
    a: float
    c: float
    h_left: float       # H(a)
    t_nodes: np.ndarray
    omega_vals: np.ndarray
    h_nodes: np.ndarray  # H at t_nodes
    dh: float            # Kronrod H increment over the cell
    dh_err: float


@dataclass
class MarchResult:
    value: float
    h_total: float
    outer_error: float
    h_error: float
    cells: list


def _cell_quantities(omega, a: float, c: float, h_left: float):
    half = 0.5 * (c - a)
    t = 0.5 * (a + c) + half * KRONROD_NODES
    w = np.asarray(omega(t), dtype=float)
    dh_k = half * float(KRONROD_WEIGHTS @ w)
    dh_g = half * float(GAUSS_WEIGHTS @ w[GAUSS_INDICES])
    h_nodes = h_left + half * (ANTIDERIV @ w)
    return Cell(a, c, h_left, t, w, h_nodes, dh_k, abs(dh_k - dh_g))


def outer_on_cell(cell: Cell, outer):
    """(Kronrod value, |Kronrod - Gauss|) of int_cell outer(t, H(t)) dt."""
    half = 0.5 * (cell.c - cell.a)
    f = np.asarray(outer(cell.t_nodes, cell.h_nodes), dtype=float)
    val_k = half * float(KRONROD_WEIGHTS @ f)
    val_g = half * float(GAUSS_WEIGHTS @ f[GAUSS_INDICES])
    return val_k, abs(val_k - val_g)


def _segments(x: float, b: float, breakpoints) -> list[tuple[float, float]]:
    # merge points within a relative tolerance so that independently computed
    # but mathematically equal breakpoints never create degenerate cells
    merge = 1e-12 * (b - x)
    pts = []
    for p in sorted({float(p) for p in breakpoints if x < p < b}):
        if p - x > merge and b - p > merge and (not pts or p - pts[-1] > merge):
            pts.append(p)
    edges = [x] + pts + [b]
    return list(zip(edges[:-1], edges[1:]))


def coupled_march(omega, x: float, b: float, outer=None, breakpoints=(),
                  tol: float = 1e-9, collect_cells: bool = False) -> MarchResult:
    """Advance H and (optionally) the outer integral left to right on [x, b].

    ``omega`` and ``outer`` must be vectorized; ``outer`` receives (t, H(t)).
    Cells never straddle a breakpoint.
    """
    if b < x:
        raise ValueError("b must be >= x")
    span = b - x
    if span == 0.0:
        return MarchResult(0.0, 0.0, 0.0, 0.0, [])

    value = 0.0
    h_total = 0.0
    outer_error = 0.0
    h_error = 0.0
    kept: list = []

    def process(a: float, c: float, depth: int):
        nonlocal value, h_total, outer_error, h_error
        cell = _cell_quantities(omega, a, c, h_total)
        budget = tol * (c - a) / span
        if outer is not None:
            oval, oerr = outer_on_cell(cell, outer)
        else:
            oval, oerr = 0.0, 0.0
        if (cell.dh_err > budget or oerr > budget) and depth < MAX_DEPTH:
            mid = 0.5 * (a + c)
            process(a, mid, depth + 1)
            process(mid, c, depth + 1)
            return
        h_total += cell.dh
        h_error += cell.dh_err
        value += oval
        outer_error += oerr
        if collect_cells:
            kept.append(cell)

    for a, c in _segments(x, b, breakpoints):
        process(a, c, 0)
    return MarchResult(value, h_total, outer_error, h_error, kept)


def build_partition(omega, x: float, b: float, breakpoints=(),
                    tol: float = 1e-9) -> list[Cell]:
    """Adaptive partition of [x, b] refined on omega, with H filled in.

    Used by the multi-target integrals (potential densities on a y grid) that
    evaluate their own outer integrands cell by cell afterwards.
    """
    res = coupled_march(omega, x, b, outer=None, breakpoints=breakpoints,
                        tol=tol, collect_cells=True)
    return res.cells


def split_cell(omega, cell: Cell) -> tuple[Cell, Cell]:
    """Halve a partition cell, recomputing H on the children from the parent edge."""
    mid = 0.5 * (cell.a + cell.c)
    left = _cell_quantities(omega, cell.a, mid, cell.h_left)
    right = _cell_quantities(omega, mid, cell.c, cell.h_left + left.dh)
    return left, right


def gauss_kronrod(f, a: float, b: float, tol: float = 1e-10,
                  breakpoints=(), max_depth: int = MAX_DEPTH):
    """Plain adaptive GK15 quadrature (no coupled H), returning (value, error)."""
    total = 0.0
    err = 0.0

    def process(lo: float, hi: float, depth: int):
        nonlocal total, err
        half = 0.5 * (hi - lo)
        t = 0.5 * (lo + hi) + half * KRONROD_NODES
        fv = np.asarray(f(t), dtype=float)
        vk = half * float(KRONROD_WEIGHTS @ fv)
        vg = half * float(GAUSS_WEIGHTS @ fv[GAUSS_INDICES])
        e = abs(vk - vg)
        if e > tol * (hi - lo) / (b - a) and depth < max_depth:
            mid = 0.5 * (lo + hi)
            process(lo, mid, depth + 1)
            process(mid, hi, depth + 1)
            return
        total += vk
        err += e

    if b == a:
        return 0.0, 0.0
    for lo, hi in _segments(a, b, breakpoints):
        process(lo, hi, 0)
    return total, err
