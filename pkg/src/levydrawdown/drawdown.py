"""Drawdown boundary functions xi and their validity checks.

A boundary is admissible on [x, b] when the allowed drawdown
bar(t) = t - xi(t) stays above a positive margin; otherwise the drawdown time
collapses below some intermediate maximum level and the exit identities fail.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .errors import DrawdownDegenerateError

MARGIN_FACTOR = 1e-8
VALIDATION_GRID = 2048


class DrawdownFunction:
    """Boundary level as a function of the running maximum.

    kinds: "constant" (xi = c), "linear" (xi(t) = slope*t - d),
    "piecewise_linear" (interpolated points), "general" (callable with
    declared breakpoints; must be piecewise-C1).
    """

    def __init__(self, kind: str, fn, breakpoints=(), params=None):
        self.kind = kind
        self._fn = fn
        self.breakpoints = tuple(sorted(float(p) for p in breakpoints))
        self.params = dict(params or {})

    # -- constructors ------------------------------------------------------
    @classmethod
    def constant(cls, c: float) -> "DrawdownFunction":
        c = float(c)
        return cls("constant", lambda t: np.full_like(np.asarray(t, dtype=float), c),
                   params={"c": c})

    @classmethod
    def linear(cls, slope: float, d: float) -> "DrawdownFunction":
        """xi(t) = slope * t - d.  Slope 1 is the reflected case and needs d > 0."""
        slope, d = float(slope), float(d)
        if slope == 1.0 and d <= 0.0:
            raise ValueError("the reflected case (slope 1) requires d > 0")
        return cls("linear", lambda t: slope * np.asarray(t, dtype=float) - d,
                   params={"slope": slope, "d": d})

    @classmethod
    def piecewise_linear(cls, points) -> "DrawdownFunction":
        pts = sorted((float(t), float(v)) for t, v in points)
        if len(pts) < 2:
            raise ValueError("piecewise_linear needs at least two points")
        ts = np.array([p[0] for p in pts])
        vs = np.array([p[1] for p in pts])

        def fn(t):
            return np.interp(np.asarray(t, dtype=float), ts, vs)

        return cls("piecewise_linear", fn, breakpoints=ts[1:-1],
                   params={"points": [list(p) for p in pts]})

    @classmethod
    def general(cls, fn, breakpoints=()) -> "DrawdownFunction":
        probe = np.array([0.0, 1.0])
        try:
            out = np.asarray(fn(probe))
            vectorized = out.shape == probe.shape
        except Exception:
            vectorized = False
        wrapped = fn if vectorized else np.vectorize(fn, otypes=[float])
        return cls("general", wrapped, breakpoints=breakpoints)

    # -- evaluation --------------------------------------------------------
    def value(self, t):
        return self._fn(t)

    def __call__(self, t):
        return self._fn(t)

    def bar(self, t):
        """Allowed drawdown at maximum level t: bar(t) = t - xi(t)."""
        return np.asarray(t, dtype=float) - self._fn(t)

    def _sample_grid(self, x: float, b: float) -> np.ndarray:
        inner = [p for p in self.breakpoints if x < p < b]
        return np.unique(np.concatenate([np.linspace(x, b, VALIDATION_GRID), inner]))

    def validate(self, x: float, b: float) -> float:
        """Check bar > margin on [x, b]; returns the observed minimum.

        Raises DrawdownDegenerateError when the boundary pinches the maximum.
        """
        if b < x:
            raise ValueError("b must be >= x")
        if b == x:
            ref = self.bar(np.array([x]))[0]
            if ref <= 0.0:
                raise DrawdownDegenerateError(
                    f"drawdown-degenerate: bar({x}) = {ref} <= 0")
            return float(ref)
        grid = self._sample_grid(x, b)
        bars = self.bar(grid)
        margin = MARGIN_FACTOR * (b - x)
        m = float(np.min(bars))
        if m <= margin:
            t_bad = float(grid[int(np.argmin(bars))])
            raise DrawdownDegenerateError(
                f"drawdown-degenerate: bar(t) = {m:.3e} <= margin {margin:.3e} "
                f"near t = {t_bad}"
            )
        return m

    def min_value(self, x: float, b: float) -> float:
        """Minimum of xi over [x, b] (exact for constant/linear, sampled otherwise)."""
        if self.kind == "constant":
            return self.params["c"]
        if self.kind == "linear":
            return float(min(self.value(np.array([x]))[0], self.value(np.array([b]))[0]))
        grid = self._sample_grid(x, b)
        return float(np.min(self.value(grid)))

    def level_crossings(self, y: float, x: float, b: float) -> list[float]:
        """Solutions of xi(t) = y in (x, b), cell boundaries for the potential
        measure's indicator {xi(t) < y < t}."""
        if self.kind == "constant":
            return []
        if self.kind == "linear":
            slope, d = self.params["slope"], self.params["d"]
            if slope == 0.0:
                return []
            t = (y + d) / slope
            return [t] if x < t < b else []
        grid = self._sample_grid(x, b)
        vals = np.asarray(self.value(grid)) - y
        out = []
        for i in range(len(grid) - 1):
            lo, hi = vals[i], vals[i + 1]
            if lo == 0.0:
                out.append(float(grid[i]))
            elif lo * hi < 0.0:
                out.append(float(brentq(lambda t: float(self.value(np.array([t]))[0]) - y,
                                        grid[i], grid[i + 1], xtol=1e-14)))
        return out

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        doc = {"kind": self.kind}
        doc.update(self.params)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "DrawdownFunction":
        kind = doc.get("kind")
        if kind == "constant":
            return cls.constant(doc["c"])
        if kind == "linear":
            return cls.linear(doc["slope"], doc["d"])
        if kind == "piecewise_linear":
            return cls.piecewise_linear(doc["points"])
        raise ValueError(f"unknown drawdown function kind {kind!r}")
