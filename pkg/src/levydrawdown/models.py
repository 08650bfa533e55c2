"""Spectrally negative Levy models with rational Laplace exponents.

The catalog covers linear drift + Brownian part + compound Poisson negative
jumps whose magnitudes follow a finite mixture of exponentials.  Every model
here has a closed-form Laplace exponent, exact exponential tilting and exact
path simulation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import IterationError

PHI_TOL = 1e-12
PHI_MAX_ITER = 200


@dataclass(frozen=True)
class JumpSpec:
    """Compound Poisson description of the downward jumps.

    ``rate`` is the jump intensity per unit time; magnitudes are drawn from a
    mixture of exponential laws with the given positive ``weights`` / ``alphas``
    (mean magnitude of component i is 1/alphas[i]).  ``rate == 0`` means no
    jumps at all.
    """

    rate: float = 0.0
    weights: tuple[float, ...] = ()
    alphas: tuple[float, ...] = ()

    def __post_init__(self):
        if self.rate < 0.0:
            raise ValueError("jump rate must be >= 0")
        if len(self.weights) != len(self.alphas):
            raise ValueError("weights and alphas must have equal length")
        if self.rate > 0.0:
            if not self.weights:
                raise ValueError("positive jump rate requires mixture components")
            if any(w <= 0.0 for w in self.weights):
                raise ValueError("mixture weights must be positive")
            if any(a <= 0.0 for a in self.alphas):
                raise ValueError("mixture alphas must be positive")
            total = sum(self.weights)
            if abs(total - 1.0) > 1e-12 * max(1.0, abs(total)):
                raise ValueError("mixture weights must sum to 1")

    @classmethod
    def none(cls) -> "JumpSpec":
        return cls()

    @classmethod
    def exponential(cls, rate: float, alpha: float) -> "JumpSpec":
        return cls(rate=rate, weights=(1.0,), alphas=(alpha,))

    @classmethod
    def mixed(cls, rate: float, components) -> "JumpSpec":
        ws, als = zip(*components)
        return cls(rate=rate, weights=tuple(float(w) for w in ws),
                   alphas=tuple(float(a) for a in als))

    @property
    def kind(self) -> str:
        if self.rate == 0.0:
            return "none"
        return "exp" if len(self.alphas) == 1 else "mixed_exp"

    def magnitude_transform(self, lam):
        """E[exp(-lam * J)] for the jump magnitude J (valid for Re lam > -min alpha)."""
        lam = np.asarray(lam)
        out = np.zeros_like(lam, dtype=np.result_type(lam, float))
        for w, a in zip(self.weights, self.alphas):
            out = out + w * a / (a + lam)
        return out

    def mean_magnitude(self) -> float:
        return sum(w / a for w, a in zip(self.weights, self.alphas))


@dataclass(frozen=True)
class LevyModel:
    """A spectrally negative Levy process: drift mu, Gaussian coefficient sigma,
    and compound Poisson downward jumps.

    ``mu`` is the total drift (no compensation term is needed: the catalog has
    finite jump activity).  The process must not be the negative of a
    subordinator: sigma > 0, or mu > 0 when sigma == 0.
    """

    mu: float
    sigma: float
    jumps: JumpSpec = field(default_factory=JumpSpec.none)

    def __post_init__(self):
        if self.sigma < 0.0:
            raise ValueError("sigma must be >= 0")
        if self.sigma == 0.0 and self.mu <= 0.0:
            raise ValueError(
                "sigma == 0 requires mu > 0 (otherwise the process is the "
                "negative of a subordinator)"
            )

    @property
    def bounded_variation(self) -> bool:
        return self.sigma == 0.0

    def psi(self, lam):
        """Laplace exponent: psi(lam) = mu*lam + sigma^2 lam^2 / 2 + rate*(mgf(lam) - 1).

        Accepts real or complex arrays; the rational form is the analytic
        continuation used by the transform-inversion machinery.
        """
        lam = np.asarray(lam)
        out = self.mu * lam + 0.5 * self.sigma**2 * lam * lam
        if self.jumps.rate > 0.0:
            out = out + self.jumps.rate * (self.jumps.magnitude_transform(lam) - 1.0)
        return out

    def psi_prime(self, lam):
        lam = np.asarray(lam)
        out = self.mu + self.sigma**2 * lam
        for w, a in zip(self.jumps.weights, self.jumps.alphas):
            out = out - self.jumps.rate * w * a / (a + lam) ** 2
        return out

    def psi_second(self, lam):
        lam = np.asarray(lam)
        out = np.full_like(lam, self.sigma**2, dtype=np.result_type(lam, float))
        for w, a in zip(self.jumps.weights, self.jumps.alphas):
            out = out + 2.0 * self.jumps.rate * w * a / (a + lam) ** 3
        return out

    def psi_third(self, lam):
        lam = np.asarray(lam)
        out = np.zeros_like(lam, dtype=np.result_type(lam, float))
        for w, a in zip(self.jumps.weights, self.jumps.alphas):
            out = out - 6.0 * self.jumps.rate * w * a / (a + lam) ** 4
        return out

    def phi(self, q: float) -> float:
        """Largest root of psi(lam) = q, computed by safeguarded Newton.

        Satisfies |psi(phi(q)) - q| <= 1e-12 (absolute).  Raises IterationError
        if the iteration does not converge within the configured budget.
        """
        return _phi(self, float(q))

    def tilt(self, c: float) -> "LevyModel":
        """Exponentially tilted model whose exponent is psi(c + s) - psi(c).

        Tilting keeps the catalog closed: drift shifts by sigma^2 * c, each
        mixture component's alpha shifts by c, and the rate/weights rescale.
        """
        c = float(c)
        if c < 0.0:
            raise ValueError("tilt parameter must be >= 0")
        if c == 0.0:
            return self
        mu = self.mu + self.sigma**2 * c
        if self.jumps.rate == 0.0:
            return LevyModel(mu=mu, sigma=self.sigma)
        raw = [w * a / (a + c) for w, a in zip(self.jumps.weights, self.jumps.alphas)]
        total = sum(raw)
        rate = self.jumps.rate * total
        weights = tuple(r / total for r in raw)
        alphas = tuple(a + c for a in self.jumps.alphas)
        return LevyModel(mu=mu, sigma=self.sigma,
                         jumps=JumpSpec(rate=rate, weights=weights, alphas=alphas))

    def to_dict(self) -> dict:
        jumps: dict = {"kind": self.jumps.kind}
        if self.jumps.kind == "exp":
            jumps["rate"] = self.jumps.rate
            jumps["alpha"] = self.jumps.alphas[0]
        elif self.jumps.kind == "mixed_exp":
            jumps["rate"] = self.jumps.rate
            jumps["components"] = [
                {"weight": w, "alpha": a}
                for w, a in zip(self.jumps.weights, self.jumps.alphas)
            ]
        return {"mu": self.mu, "sigma": self.sigma, "jumps": jumps}

    @classmethod
    def from_dict(cls, doc: dict) -> "LevyModel":
        try:
            mu = float(doc["mu"])
            sigma = float(doc["sigma"])
            jdoc = doc.get("jumps", {"kind": "none"})
            kind = jdoc["kind"]
            if kind == "none":
                jumps = JumpSpec.none()
            elif kind == "exp":
                jumps = JumpSpec.exponential(float(jdoc["rate"]), float(jdoc["alpha"]))
            elif kind == "mixed_exp":
                jumps = JumpSpec.mixed(
                    float(jdoc["rate"]),
                    [(float(c["weight"]), float(c["alpha"])) for c in jdoc["components"]],
                )
            else:
                raise ValueError(f"unknown jump kind {kind!r}")
        except KeyError as exc:
            raise ValueError(f"model document missing field {exc}") from exc
        return cls(mu=mu, sigma=sigma, jumps=jumps)

    @classmethod
    def from_json(cls, text: str) -> "LevyModel":
        return cls.from_dict(json.loads(text))


def _phi(model: LevyModel, q: float) -> float:
    if q < 0.0:
        raise ValueError("q must be >= 0")
    psi, dpsi = model.psi, model.psi_prime
    dpsi0 = float(dpsi(0.0))
    if q == 0.0 and dpsi0 >= 0.0:
        return 0.0
    # Bracket [lo, hi] with psi(lo) <= q <= psi(hi) and the root past the last
    # minimum of psi, so the safeguarded Newton iteration stays in a convex,
    # increasing region.
    if q == 0.0:
        # psi dips negative right of 0; the largest root is strictly positive.
        lo = 1e-8
        while float(psi(lo)) > 0.0 and lo > 1e-300:
            lo *= 0.5
    else:
        lo = 0.0
    hi = max(1.0, lo * 2.0)
    for _ in range(400):
        if float(psi(hi)) >= q:
            break
        hi *= 2.0
    else:  # pragma: no cover - psi is eventually quadratic/linear upward
        raise IterationError("could not bracket phi(q); malformed model?")

    x = hi
    best_x, best_f = x, abs(float(psi(x)) - q)
    for _ in range(PHI_MAX_ITER):
        fx = float(psi(x)) - q
        if abs(fx) < best_f:
            best_x, best_f = x, abs(fx)
        if fx == 0.0:
            break
        if fx < 0.0:
            lo = x
        else:
            hi = x
        d = float(dpsi(x))
        step_ok = d > 0.0
        if step_ok:
            xn = x - fx / d
            step_ok = lo < xn < hi
        xn = xn if step_ok else 0.5 * (lo + hi)
        if xn == x or not lo < xn < hi:
            break
        x = xn
    # land on the float with the smallest residual among immediate neighbors
    for cand in (np.nextafter(best_x, lo), np.nextafter(best_x, hi + 1.0)):
        f = abs(float(psi(cand)) - q)
        if f < best_f:
            best_x, best_f = float(cand), f
    if best_f <= PHI_TOL * max(1.0, abs(q)) * 100.0:
        return best_x
    raise IterationError(
        f"phi(q) did not converge: q={q}, residual={best_f:.3e} after {PHI_MAX_ITER} iterations"
    )


def brownian_motion(mu: float, sigma: float) -> LevyModel:
    """Drifted Brownian motion (no jumps)."""
    return LevyModel(mu=mu, sigma=sigma)


def cramer_lundberg(mu: float, rate: float, alpha: float) -> LevyModel:
    """Classical risk process: positive drift minus compound Poisson Exp(alpha) claims."""
    return LevyModel(mu=mu, sigma=0.0, jumps=JumpSpec.exponential(rate, alpha))
