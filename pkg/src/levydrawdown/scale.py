"""Scale-function evaluators: W, its derivatives, Z, and the tilted family.

Two interchangeable evaluation routes exist for every catalog model:

* ``ClosedFormScale`` — the transform 1/(psi - q) is rational for the catalog,
  so W is a finite sum of real exponentials obtained by partial fractions
  (plus a linear term when q = 0 and psi'(0) = 0).
* ``InversionScale`` — numerical inversion of the defining transform along a
  Talbot contour shifted by phi(q), i.e. inverting the bounded tilted scale
  function and restoring the exp(phi(q) x) growth.

Closed forms are treated as derived artifacts: the test suite (and optionally
the constructor) cross-checks them against the inversion route.
"""
from __future__ import annotations

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import UnsupportedRegimeError
from .inversion import invert_shifted
from .models import LevyModel

_ROOT_IMAG_TOL = 1e-6
_ROOT_MERGE_RTOL = 1e-7


def _as_float_or_array(x, out):
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


class ScaleBase:
    """Shared surface of the scale-function evaluators for one (model, q)."""

    method = "base"

    def __init__(self, model: LevyModel, q: float):
        if q < 0.0:
            raise ValueError("q must be >= 0")
        self.model = model
        self.q = float(q)
        self.phi_q = model.phi(self.q)
        self.w0 = 1.0 / model.mu if model.bounded_variation else 0.0

    def transform(self, lam):
        """The defining Laplace transform 1/(psi(lam) - q)."""
        return 1.0 / (self.model.psi(lam) - self.q)

    def w(self, x):
        raise NotImplementedError

    def w_prime(self, x):
        raise NotImplementedError

    def w_second(self, x):
        raise NotImplementedError

    def z(self, x):
        raise NotImplementedError

    def _check_positive(self, x, what: str):
        if np.any(np.asarray(x) <= 0.0):
            raise ValueError(f"{what} requires x > 0")

    def _require_gaussian(self):
        if self.model.sigma == 0.0:
            raise UnsupportedRegimeError(
                "second derivative of W is only supported for sigma > 0"
            )


class ClosedFormScale(ScaleBase):
    """Finite exponential sum W(x) = sum_k coef_k exp(zeta_k x) (+ lin_a x + lin_b).

    The exponents are the real roots of psi(lam) = q; coef_k = 1/psi'(zeta_k).
    All catalog models have only real simple roots except q = 0 with
    psi'(0) = 0, where 0 is a double root and the linear term appears.
    """

    method = "closed_form"

    def __init__(self, model: LevyModel, q: float, validate: bool = True):
        super().__init__(model, q)
        self.zeta, self.coef, self.lin_a, self.lin_b = _partial_fractions(model, self.q)
        if validate:
            self._cross_check()

    def _cross_check(self, rtol: float = 1e-6):
        scale = max(1.0, self.phi_q)
        for x in (0.5 / scale, 2.0 / scale):
            ref, _ = invert_shifted(self.transform, x, self.phi_q)
            val = self.w(x)
            if abs(val - ref) > rtol * max(abs(ref), 1e-300):
                raise ArithmeticError(
                    f"closed-form scale function disagrees with transform inversion "
                    f"at x={x}: {val} vs {ref}"
                )

    def w(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.zeros_like(xa)
        pos = xa > 0.0
        if np.any(pos):
            xp = xa[pos]
            vals = np.exp(np.multiply.outer(xp, self.zeta)) @ self.coef
            out[pos] = vals + self.lin_a * xp + self.lin_b
        out[xa == 0.0] = self.w0
        return _as_float_or_array(x, out)

    def w_prime(self, x):
        self._check_positive(x, "w_prime")
        xa = np.asarray(x, dtype=float)
        out = np.exp(np.multiply.outer(xa, self.zeta)) @ (self.coef * self.zeta)
        out = out + self.lin_a
        return _as_float_or_array(x, out)

    def w_second(self, x):
        self._require_gaussian()
        self._check_positive(x, "w_second")
        xa = np.asarray(x, dtype=float)
        out = np.exp(np.multiply.outer(xa, self.zeta)) @ (self.coef * self.zeta**2)
        return _as_float_or_array(x, out)

    def z(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.ones_like(xa)
        if self.q > 0.0:
            pos = xa > 0.0
            if np.any(pos):
                xp = xa[pos]
                # q > 0 excludes a zero root, so the antiderivative is a plain sum.
                terms = (np.exp(np.multiply.outer(xp, self.zeta)) - 1.0) @ (
                    self.coef / self.zeta
                )
                out[pos] = 1.0 + self.q * terms
        return _as_float_or_array(x, out)


class InversionScale(ScaleBase):
    """Pointwise Talbot/Euler inversion of the defining transform, memoized.

    ``warm(x_max)`` precomputes a geometric grid and a monotone cubic
    interpolant (used for bulk dumps); direct evaluation stays the accuracy
    path.  Construction and ``warm`` are single-threaded; afterwards reads are
    safe to share across threads.
    """

    method = "inversion"

    def __init__(self, model: LevyModel, q: float):
        super().__init__(model, q)
        self._memo_w: dict[float, tuple[float, float]] = {}
        self._memo_wp: dict[float, tuple[float, float]] = {}
        self._memo_wpp: dict[float, tuple[float, float]] = {}
        self._interp = None
        self._grid = None
        self.last_error_estimate = 0.0

    # transforms of W' and W'' (with the known boundary values subtracted so
    # the shifted targets decay)
    def _transform_wp(self, lam):
        return lam / (self.model.psi(lam) - self.q) - self.w0

    def _transform_wpp(self, lam):
        wp0 = 2.0 / self.model.sigma**2
        return lam * lam / (self.model.psi(lam) - self.q) - lam * self.w0 - wp0

    def _invert_memo(self, memo, transform, x: float) -> float:
        hit = memo.get(x)
        if hit is None:
            hit = invert_shifted(transform, x, self.phi_q)
            memo[x] = hit
        self.last_error_estimate = hit[1]
        return hit[0]

    def w(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.zeros_like(xa)
        it = np.nditer(xa, flags=["multi_index"])
        for xi in it:
            v = float(xi)
            if v > 0.0:
                out[it.multi_index] = self._invert_memo(self._memo_w, self.transform, v)
            elif v == 0.0:
                out[it.multi_index] = self.w0
        return _as_float_or_array(x, out)

    def w_prime(self, x):
        self._check_positive(x, "w_prime")
        xa = np.asarray(x, dtype=float)
        out = np.zeros_like(xa)
        it = np.nditer(xa, flags=["multi_index"])
        for xi in it:
            out[it.multi_index] = self._invert_memo(
                self._memo_wp, self._transform_wp, float(xi)
            )
        return _as_float_or_array(x, out)

    def w_second(self, x):
        self._require_gaussian()
        self._check_positive(x, "w_second")
        xa = np.asarray(x, dtype=float)
        out = np.zeros_like(xa)
        it = np.nditer(xa, flags=["multi_index"])
        for xi in it:
            out[it.multi_index] = self._invert_memo(
                self._memo_wpp, self._transform_wpp, float(xi)
            )
        return _as_float_or_array(x, out)

    def z(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.ones_like(xa)
        if self.q > 0.0:
            it = np.nditer(xa, flags=["multi_index"])
            for xi in it:
                v = float(xi)
                if v > 0.0:
                    integral, _ = integrate.quad(
                        lambda y: self.w(y), 0.0, v, limit=200,
                        epsabs=1e-13, epsrel=1e-11,
                    )
                    out[it.multi_index] = 1.0 + self.q * integral
        return _as_float_or_array(x, out)

    def warm(self, x_max: float, n: int = 257):
        """Precompute a geometric grid on (0, x_max] and build the interpolant."""
        xs = np.geomspace(x_max * 1e-3, x_max, n)
        ws = self.w(xs)
        wps = self.w_prime(xs)
        wpps = self.w_second(xs) if self.model.sigma > 0.0 else np.full(n, np.nan)
        self._grid = (xs, ws, wps, wpps)
        knots = np.concatenate([[0.0], xs])
        self._interp = PchipInterpolator(knots, np.concatenate([[self.w0], ws]))
        return self._grid

    @property
    def cache(self):
        return self._grid

    def w_interpolated(self, x):
        """Fast approximate W from the warmed grid (bulk dumps, not identities)."""
        if self._interp is None:
            raise RuntimeError("call warm(x_max) before w_interpolated")
        return self._interp(x)


class TiltedScale:
    """Evaluator for the tilted pair W_v^{(p)}(x) = exp(-v x) W^{(p + psi(v))}(x)
    and Z_v^{(p)}; reuses an untilted evaluator at the shifted killing rate."""

    def __init__(self, base: ScaleBase, v: float, p: float):
        if v < 0.0:
            raise ValueError("tilt v must be >= 0")
        self.base = base
        self.v = float(v)
        self.p = float(p)
        self.model = base.model
        self.w0 = base.w0

    def w(self, x):
        if self.v == 0.0:
            return self.base.w(x)
        xa = np.asarray(x, dtype=float)
        out = np.exp(-self.v * np.maximum(xa, 0.0)) * self.base.w(xa)
        return _as_float_or_array(x, out)

    def w_prime(self, x):
        if self.v == 0.0:
            return self.base.w_prime(x)
        xa = np.asarray(x, dtype=float)
        out = np.exp(-self.v * xa) * (self.base.w_prime(xa) - self.v * self.base.w(xa))
        return _as_float_or_array(x, out)

    def z(self, x):
        xa = np.asarray(x, dtype=float)
        if self.p == 0.0:
            out = np.ones_like(xa)
            return _as_float_or_array(x, out)
        out = np.ones_like(xa)
        pos = xa > 0.0
        if np.any(pos):
            out[pos] = 1.0 + self.p * self._w_antiderivative(xa[pos])
        return _as_float_or_array(x, out)

    def _w_antiderivative(self, xp):
        """int_0^x exp(-v y) W^{(p + psi(v))}(y) dy, elementwise over xp > 0."""
        base = self.base
        if isinstance(base, ClosedFormScale):
            expo = base.zeta - self.v
            out = np.zeros_like(xp)
            for c, e in zip(base.coef, expo):
                if abs(e) < 1e-14:
                    out += c * xp
                else:
                    out += c * (np.exp(e * xp) - 1.0) / e
            if base.lin_a != 0.0 or base.lin_b != 0.0:
                out += _poly_exp_antideriv(base.lin_a, base.lin_b, -self.v, xp)
            return out
        vals = np.empty_like(xp)
        for i, xi in enumerate(np.atleast_1d(xp)):
            vals[i], _ = integrate.quad(
                lambda y: np.exp(-self.v * y) * base.w(y), 0.0, float(xi),
                limit=200, epsabs=1e-13, epsrel=1e-11,
            )
        return vals


def _poly_exp_antideriv(a, b, e, xp):
    """int_0^x (a y + b) exp(e y) dy."""
    if e == 0.0:
        return 0.5 * a * xp**2 + b * xp
    ex = np.exp(e * xp)
    return a * (ex * (xp / e - 1.0 / e**2) + 1.0 / e**2) + b * (ex - 1.0) / e


def _partial_fractions(model: LevyModel, q: float):
    """Exponents/residues of 1/(psi - q) plus the (lin_a, lin_b) polynomial part.

    Returns (zeta, coef, lin_a, lin_b) with W(x) = coef . exp(zeta x) + lin_a x + lin_b
    on x >= 0.
    """
    alphas = np.array(model.jumps.alphas, dtype=float)
    weights = np.array(model.jumps.weights, dtype=float)
    rate = model.jumps.rate

    # N(lam) = (sigma^2 lam^2 / 2 + mu lam - rate - q) * prod(alpha_i + lam)
    #          + rate * sum_i w_i alpha_i prod_{j != i}(alpha_j + lam)
    denom = P.polyfromroots(-alphas) if alphas.size else np.array([1.0])
    quad = np.array([-rate - q, model.mu, 0.5 * model.sigma**2])
    num = P.polymul(quad, denom)
    for i in range(alphas.size):
        others = np.delete(-alphas, i)
        num = P.polyadd(num, rate * weights[i] * alphas[i] * P.polyfromroots(others))
    num = np.trim_zeros(num, "b")

    roots = P.polyroots(num)
    span = max(1.0, float(np.max(np.abs(roots))) if roots.size else 1.0)
    if np.any(np.abs(roots.imag) > _ROOT_IMAG_TOL * span):
        raise ArithmeticError(
            "complex roots found for psi(lam) = q; catalog models should have "
            "only real roots"
        )
    roots = np.sort(roots.real)

    dpsi0 = float(model.psi_prime(0.0))
    lin_a = lin_b = 0.0
    if q == 0.0 and dpsi0 == 0.0:
        # double root at 0: 1/psi ~ A/lam^2 + B/lam near 0
        d2 = float(model.psi_second(0.0))
        d3 = float(model.psi_third(0.0))
        lin_a = 2.0 / d2
        lin_b = -2.0 * d3 / (3.0 * d2**2)
        order = np.argsort(np.abs(roots))
        roots = np.sort(roots[order][2:])  # drop the numerical double zero
    elif q == 0.0:
        # 0 is always an exact root of psi(lam) = 0
        roots[np.argmin(np.abs(roots))] = 0.0

    zeta = _polish_roots(model, q, roots)
    if zeta.size > 1:
        gaps = np.diff(np.sort(zeta))
        if np.any(gaps < _ROOT_MERGE_RTOL * span):
            raise ArithmeticError(
                "nearly multiple roots of psi(lam) = q; use the inversion method"
            )
    coef = 1.0 / model.psi_prime(zeta) if zeta.size else np.array([])
    return zeta, np.asarray(coef, dtype=float), lin_a, lin_b


def _polish_roots(model: LevyModel, q: float, roots: np.ndarray) -> np.ndarray:
    """Newton-polish polynomial root seeds against the rational psi(lam) - q."""
    out = []
    for r in roots:
        x = float(r)
        if x == 0.0:
            out.append(0.0)
            continue
        for _ in range(8):
            fx = float(model.psi(x)) - q
            dx = float(model.psi_prime(x))
            if dx == 0.0:
                break
            step = fx / dx
            x -= step
            if abs(step) <= 1e-15 * max(1.0, abs(x)):
                break
        out.append(x)
    return np.array(out, dtype=float)


def scale_function(model: LevyModel, q: float, method: str = "auto",
                   validate: bool = True) -> ScaleBase:
    """Build a scale-function evaluator for (model, q).

    ``method`` is one of "auto", "closed_form", "inversion".  "auto" prefers
    the closed form and falls back to inversion if the partial-fraction
    construction is ill-conditioned.
    """
    if method == "inversion":
        return InversionScale(model, q)
    if method == "closed_form":
        return ClosedFormScale(model, q, validate=validate)
    if method == "auto":
        try:
            return ClosedFormScale(model, q, validate=validate)
        except ArithmeticError:
            return InversionScale(model, q)
    raise ValueError(f"unknown scale-function method {method!r}")


def tilted_scale(model: LevyModel, v: float, p: float, method: str = "auto",
                 validate: bool = True) -> TiltedScale:
    """Evaluator for the tilted pair (W_v^{(p)}, Z_v^{(p)}).

    Requires p + psi(v) >= 0 so the underlying killing rate is admissible.
    """
    shifted_q = p + float(model.psi(v))
    if shifted_q < -1e-14:
        raise ValueError("p + psi(v) must be >= 0")
    base = scale_function(model, max(shifted_q, 0.0), method=method, validate=validate)
    return TiltedScale(base, v, p)
