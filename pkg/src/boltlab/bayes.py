"""Exact Bayes error for known Gaussian mixtures and its sampling upper bounds.

For a mixture with densities P_i and priors p_i the minimum achievable
misclassification rate is

    1 - integral max_i [ P_i(x) p_i ] dx                    (MAP envelope)
    = 1 - p_1 - sum_{lambda=2..m} integral (mu_lambda - mu_{lambda-1}) dx

where mu_lambda is the envelope restricted to the first lambda classes;
the two forms agree by telescoping and both are computed on the same
trapezoid grid.  The empirical bounds take witness values sampled from
each class and never see the densities, which is what lets them run on
data where the mixture is unknown.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .divergence import Gaussian, GridSpec, _check_tails, q_function
from .losses import HVector, score_matrix


@dataclass(frozen=True)
class ClassMixture:
    """Class-conditional densities with priors summing to 1."""

    classes: tuple[tuple[Gaussian, float], ...]

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ValueError("a mixture needs at least 2 classes")
        priors = [p for _, p in self.classes]
        if any(p <= 0 for p in priors):
            raise ValueError(f"all priors must be > 0, got {priors}")
        if abs(sum(priors) - 1.0) > 1e-12:
            raise ValueError(f"priors must sum to 1 within 1e-12, got {sum(priors)!r}")

    @property
    def m(self) -> int:
        return len(self.classes)

    @property
    def densities(self) -> tuple[Gaussian, ...]:
        return tuple(d for d, _ in self.classes)

    @property
    def priors(self) -> tuple[float, ...]:
        return tuple(p for _, p in self.classes)

    def has_uniform_priors(self, tol: float = 1e-9) -> bool:
        return all(abs(p - 1.0 / self.m) <= tol for p in self.priors)

    @classmethod
    def uniform(cls, means: Sequence[float], variance: float = 1.0) -> "ClassMixture":
        m = len(means)
        return cls(tuple((Gaussian(mu, variance), 1.0 / m) for mu in means))

    def _weighted(self, x: np.ndarray) -> np.ndarray:
        """(m, len(x)) matrix of prior-weighted densities."""
        return np.stack([p * d.pdf(x) for d, p in self.classes])


def mu_lambda(mix: ClassMixture, lam: int, x) -> float | np.ndarray:
    """MAP envelope restricted to the first lam classes: max_{i<=lam} P_i(x) p_i."""
    if not 1 <= lam <= mix.m:
        raise IndexError(f"lambda {lam} out of range [1, {mix.m}]")
    xv = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = mix._weighted(xv)[:lam].max(axis=0)
    return float(out[0]) if np.isscalar(x) else out


def exact_bayes_error_grid(mix: ClassMixture, grid: GridSpec | None = None) -> float:
    """1 - integral of the full MAP envelope, by trapezoid quadrature."""
    if grid is None:
        grid = GridSpec.covering(mix.densities)
    _check_tails(mix.densities, grid)
    x = grid.nodes()
    return float(1.0 - np.trapezoid(mix._weighted(x).max(axis=0), x))


def bayes_error_decomposed(mix: ClassMixture, grid: GridSpec | None = None) -> float:
    """Bayes error as 1 - p_1 - sum of successive envelope increments.

    Telescopes to exact_bayes_error_grid on the same grid (to quadrature
    accuracy of the first class density).
    """
    if grid is None:
        grid = GridSpec.covering(mix.densities)
    _check_tails(mix.densities, grid)
    x = grid.nodes()
    weighted = mix._weighted(x)
    envelopes = np.maximum.accumulate(weighted, axis=0)  # envelopes[l] = mu_{l+1}
    total = sum(
        float(np.trapezoid(envelopes[l] - envelopes[l - 1], x)) for l in range(1, mix.m)
    )
    return 1.0 - mix.priors[0] - total


def gaussian_binary_bayes_error(mu1: float, mu2: float) -> float:
    """Closed form for two unit-variance classes with uniform priors: Q(|mu1 - mu2| / 2)."""
    return q_function(abs(mu1 - mu2) / 2.0)


def _check_witness_range(values: np.ndarray, name: str) -> None:
    bad = np.nonzero(~((values > -1.0) & (values <= 0.0)))[0]
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"{name}[{i}] = {values[i]!r} is outside the witness range (-1, 0]")


def bound_binary_empirical(h_p1: Sequence[float], h_p2: Sequence[float]) -> float:
    """Binary Bayes-error bound 1/2 - (mean h over class 1 - mean h over class 2) / 2."""
    a = np.asarray(h_p1, dtype=np.float64)
    b = np.asarray(h_p2, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both witness sample lists must be non-empty")
    _check_witness_range(a, "h_p1")
    _check_witness_range(b, "h_p2")
    return 0.5 - 0.5 * (float(np.mean(a)) - float(np.mean(b)))


@dataclass(frozen=True)
class BoundReport:
    """Multiclass bound with per-class terms and Monte-Carlo standard errors."""

    bound_value: float
    per_class_terms: tuple[float, ...]
    sample_counts: tuple[int, ...]
    standard_errors: tuple[float, ...]

    @property
    def bound_standard_error(self) -> float:
        m = len(self.per_class_terms)
        return float(np.sqrt(sum(se * se for se in self.standard_errors)) / m)


def _as_witness_rows(samples, m: int) -> np.ndarray:
    if isinstance(samples, np.ndarray) and samples.ndim == 2:
        rows = np.asarray(samples, dtype=np.float64)
    else:
        rows = np.stack(
            [s.values if isinstance(s, HVector) else np.asarray(s, dtype=np.float64) for s in samples]
        )
    if rows.shape[1] != m - 1:
        raise ValueError(f"witness vectors have length {rows.shape[1]}, expected {m - 1}")
    _check_witness_range(rows.ravel(), "h")
    return rows


def bound_multiclass_empirical(h_vectors_by_class: Sequence) -> BoundReport:
    """Multiclass Bayes-error bound 1 - (1/m) sum of per-class score means.

    h_vectors_by_class[lambda-1] holds witness vectors (HVector or length
    m-1 arrays) for samples of class lambda.  Per-class standard errors
    are sample-std/sqrt(n) (0 for singleton classes).  For m = 2 this
    reduces to bound_binary_empirical on the same scalars.
    """
    m = len(h_vectors_by_class)
    if m < 2:
        raise ValueError("need witness samples for at least 2 classes")
    for lam, group in enumerate(h_vectors_by_class, start=1):
        if len(group) == 0:
            raise ValueError(f"class {lam} has no witness samples")
    terms, counts, errors = [], [], []
    for lam, group in enumerate(h_vectors_by_class, start=1):
        rows = _as_witness_rows(group, m)
        scores = score_matrix(rows)[:, lam - 1]
        n = scores.size
        terms.append(float(np.mean(scores)))
        counts.append(n)
        errors.append(float(np.std(scores, ddof=1) / np.sqrt(n)) if n > 1 else 0.0)
    bound = 1.0 - float(np.sum(terms)) / m
    return BoundReport(bound, tuple(terms), tuple(counts), tuple(errors))
