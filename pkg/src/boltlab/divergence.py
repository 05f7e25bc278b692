"""Convex generators, Fenchel conjugates, and f-divergences between 1-D Gaussians.

Two generators are shipped:

  hinge  f(u) = max(0, 1 - u)      f*(t) = t on (-1, 0], +inf otherwise
  kl     f(u) = u log u            f*(t) = exp(t - 1)

Both satisfy f(1) = 0, so D_f(P || P) = 0.  The divergence
D_f(P || Q) = integral f(P/Q) Q dx is computed two independent ways:
by composite-trapezoid quadrature on a wide grid (exact route), and by
the sampling bound  E_P[h] - E_Q[f*(h)] <= D_f(P || Q)  which holds for
any witness h whose values keep f* finite (variational route).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Rng
from .errors import PrecisionError, WitnessDomainError

SQRT2 = math.sqrt(2.0)


def q_function(x: float) -> float:
    """Standard Gaussian tail probability Q(x) = P(Z > x) = erfc(x / sqrt(2)) / 2."""
    return 0.5 * math.erfc(x / SQRT2)


@dataclass(frozen=True)
class ConvexGenerator:
    """A convex f with f(1) = 0, its Fenchel conjugate, and the conjugate domain.

    conjugate_domain is the half-open interval (lo, hi] outside which the
    conjugate is +inf; witnesses fed to the sampling bound must stay inside it.
    """

    kind: str  # "hinge" | "kl"

    def __post_init__(self):
        if self.kind not in ("hinge", "kl"):
            raise ValueError(f"unknown generator kind {self.kind!r}")

    @property
    def conjugate_domain(self) -> tuple[float, float]:
        if self.kind == "hinge":
            return (-1.0, 0.0)
        return (-math.inf, math.inf)

    def value(self, u):
        """f(u) for u >= 0 (scalar or array).  0 log 0 := 0 for the KL kind."""
        arr = np.asarray(u, dtype=np.float64)
        if np.any(arr < 0):
            raise ValueError(f"generator argument must be >= 0, got min {arr.min()}")
        if self.kind == "hinge":
            out = np.maximum(0.0, 1.0 - arr)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where(arr > 0, arr * np.log(np.maximum(arr, 1e-300)), 0.0)
        return float(out) if np.isscalar(u) else out

    def conjugate(self, t):
        """f*(t) as an extended real; +inf is returned as math.inf (scalar or array)."""
        arr = np.asarray(t, dtype=np.float64)
        if self.kind == "hinge":
            lo, hi = self.conjugate_domain
            out = np.where((arr > lo) & (arr <= hi), arr, math.inf)
        else:
            out = np.exp(arr - 1.0)
        return float(out) if np.isscalar(t) else out


HINGE = ConvexGenerator("hinge")
KL = ConvexGenerator("kl")


@dataclass(frozen=True)
class Gaussian:
    """1-D Gaussian density with seeded sampling."""

    mean: float
    variance: float

    def __post_init__(self):
        if not (self.variance > 0) or not math.isfinite(self.variance):
            raise ValueError(f"variance must be a positive finite real, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def pdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.mean) / self.std
        out = np.exp(-0.5 * z * z) / (self.std * math.sqrt(2.0 * math.pi))
        return float(out) if np.isscalar(x) else out

    def logpdf(self, x):
        z = (np.asarray(x, dtype=np.float64) - self.mean) / self.std
        out = -0.5 * z * z - math.log(self.std) - 0.5 * math.log(2.0 * math.pi)
        return float(out) if np.isscalar(x) else out

    def sample(self, rng: Rng, n: int) -> np.ndarray:
        return self.mean + self.std * rng.normal(n)

    def tail_mass_outside(self, lo: float, hi: float) -> float:
        return q_function((hi - self.mean) / self.std) + q_function((self.mean - lo) / self.std)


@dataclass(frozen=True)
class GridSpec:
    """Uniform trapezoid nodes on [lo, hi]."""

    lo: float
    hi: float
    points: int = 20001

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if self.points < 2:
            raise ValueError(f"need >= 2 points, got {self.points}")

    def nodes(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.points)

    @classmethod
    def covering(cls, densities: Sequence[Gaussian], sigmas: float = 10.0, points: int = 20001):
        """Default window: [min mean - sigmas*std, max mean + sigmas*std]."""
        lo = min(d.mean - sigmas * d.std for d in densities)
        hi = max(d.mean + sigmas * d.std for d in densities)
        return cls(lo, hi, points)


def _check_tails(densities: Sequence[Gaussian], grid: GridSpec, tol: float = 1e-6) -> None:
    for d in densities:
        mass = d.tail_mass_outside(grid.lo, grid.hi)
        if mass > tol:
            raise PrecisionError(
                f"grid [{grid.lo}, {grid.hi}] truncates {mass:.3g} of N({d.mean}, {d.variance}) "
                f"tail mass (> {tol:.0e})"
            )


def numeric_f_divergence(
    gen: ConvexGenerator, p: Gaussian, q: Gaussian, grid: GridSpec | None = None
) -> float:
    """D_f(P || Q) by composite trapezoid quadrature of f(P/Q) Q.

    The integrand is evaluated in algebraically equivalent forms that stay
    stable where the densities underflow: max(0, Q - P) for hinge and
    P (log P - log Q) for KL.
    """
    if grid is None:
        grid = GridSpec.covering([p, q])
    _check_tails([p, q], grid)
    x = grid.nodes()
    pv = p.pdf(x)
    qv = q.pdf(x)
    if gen.kind == "hinge":
        integrand = np.maximum(0.0, qv - pv)
    elif gen.kind == "kl":
        integrand = np.where(pv > 0, pv * (p.logpdf(x) - q.logpdf(x)), 0.0)
    else:  # generic fallback for future kinds; requires qv > 0 on the grid
        integrand = gen.value(pv / qv) * qv
    return float(np.trapezoid(integrand, x))


def _witness_values(h: Callable, samples: np.ndarray) -> np.ndarray:
    """Evaluate a witness on a sample vector, accepting vectorized or scalar h."""
    try:
        out = np.asarray(h(samples), dtype=np.float64)
        if out.shape == samples.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(h(x)) for x in samples], dtype=np.float64)


def _check_domain(gen: ConvexGenerator, values: np.ndarray, side: str) -> None:
    lo, hi = gen.conjugate_domain
    bad = np.nonzero(~((values > lo) & (values <= hi)))[0]
    if bad.size:
        i = int(bad[0])
        raise WitnessDomainError(
            f"witness value {values[i]!r} at {side} sample index {i} is outside "
            f"the conjugate domain ({lo}, {hi}]"
        )


def variational_bound_estimate(
    gen: ConvexGenerator,
    h: Callable,
    samples_p: Sequence[float] | np.ndarray,
    samples_q: Sequence[float] | np.ndarray,
) -> float:
    """Monte-Carlo estimate of E_P[h] - E_Q[f*(h)], a lower bound on D_f in expectation.

    Any witness value that makes f* infinite (or non-finite) aborts the
    estimate: a single +inf would make the average meaningless.
    """
    sp = np.asarray(samples_p, dtype=np.float64)
    sq = np.asarray(samples_q, dtype=np.float64)
    if sp.size == 0 or sq.size == 0:
        raise ValueError("both sample sets must be non-empty")
    hp = _witness_values(h, sp)
    hq = _witness_values(h, sq)
    _check_domain(gen, hp, "P")
    _check_domain(gen, hq, "Q")
    fstar = np.asarray(gen.conjugate(hq), dtype=np.float64)
    bad = np.nonzero(~np.isfinite(fstar))[0]
    if bad.size:
        i = int(bad[0])
        raise WitnessDomainError(
            f"f*(h) is non-finite ({fstar[i]!r}) at Q sample index {i}, h value {hq[i]!r}"
        )
    return float(np.mean(hp) - np.mean(fstar))


def kl_optimal_witness(p: Gaussian, q: Gaussian) -> Callable:
    """The witness 1 + log(P/Q) that attains the KL divergence in the sampling bound."""

    def h(x):
        qlog = q.logpdf(x)
        if not np.all(np.isfinite(np.asarray(qlog))):
            raise ValueError("witness evaluated where the Q density underflows to 0")
        return 1.0 + p.logpdf(x) - qlog

    return h
