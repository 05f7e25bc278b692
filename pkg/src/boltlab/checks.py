"""Self-contained property checks behind the `verify` command.

Each suite returns CheckResult rows with the measured value and its
tolerance so a report can show how much margin a pass had.  All inputs
are synthesized from the configured seed; nothing is read from disk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses, net
from .bayes import ClassMixture, bayes_error_decomposed, bound_binary_empirical, \
    bound_multiclass_empirical, exact_bayes_error_grid, gaussian_binary_bayes_error
from .config import VerifyConfig
from .data import Dataset, Rng
from .divergence import Gaussian, GridSpec, HINGE, KL, kl_optimal_witness, \
    numeric_f_divergence, q_function, variational_bound_estimate


@dataclass(frozen=True)
class CheckResult:
    category: str
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


def identity_checks(deltas) -> list[CheckResult]:
    """Binary identity: 1/2 - D_hinge(P1 || P2)/2 equals the exact Bayes error."""
    out = []
    for delta in deltas:
        p1 = Gaussian(0.0, 1.0)
        p2 = Gaussian(float(delta), 1.0)
        d_hinge = numeric_f_divergence(HINGE, p1, p2)
        gap = abs(0.5 - 0.5 * d_hinge - gaussian_binary_bayes_error(0.0, delta))
        out.append(CheckResult("identity", f"hinge_identity_delta_{delta:g}",
                               gap, 1e-6, gap <= 1e-6))
    return out


def _piecewise_constant(rng: Rng, lo: float, hi: float, span: float):
    """Random step witness with values in (lo, hi]; vectorized over x."""
    n_breaks = 1 + int(rng.u64(1)[0] % np.uint64(6))
    breaks = np.sort(rng.uniform(n_breaks) * 2.0 * span - span)
    values = lo + (hi - lo) * rng.uniform(n_breaks + 1)

    def h(x):
        return values[np.searchsorted(breaks, x)]

    return h


def dominance_checks(seed: int, n_witnesses: int, n_samples: int) -> list[CheckResult]:
    """Sampling bound never exceeds the quadrature divergence beyond 3 standard errors."""
    out = []
    pairs = [(Gaussian(0.0, 1.0), Gaussian(1.5, 1.0)), (Gaussian(0.0, 1.0), Gaussian(-0.7, 1.3))]
    for gen, dom in ((HINGE, (-1.0 + 1e-9, 0.0)), (KL, (-2.5, 2.5))):
        violations = 0
        worst = -np.inf
        rng = Rng(seed, stream=7 if gen.kind == "hinge" else 8)
        for trial in range(n_witnesses):
            p, q = pairs[trial % len(pairs)]
            d_exact = numeric_f_divergence(gen, p, q)
            h = _piecewise_constant(rng, dom[0], dom[1], span=5.0)
            sp = p.sample(rng, n_samples)
            sq = q.sample(rng, n_samples)
            est = variational_bound_estimate(gen, h, sp, sq)
            hp = h(sp)
            fq = np.asarray(gen.conjugate(h(sq)))
            se = float(np.sqrt(hp.var(ddof=1) / len(sp) + fq.var(ddof=1) / len(sq)))
            excess = est - (d_exact + 3.0 * se)
            worst = max(worst, excess)
            if excess > 0:
                violations += 1
        out.append(CheckResult("dominance", f"{gen.kind}_bound_dominance", float(violations), 0.0,
                               violations == 0,
                               f"{n_witnesses} witnesses, worst excess {worst:.3e}"))
    return out


def kl_tightness_checks(seed: int) -> list[CheckResult]:
    """The optimal KL witness attains the quadrature KL within 3 standard errors at n and 10n."""
    p = Gaussian(0.0, 1.0)
    q = Gaussian(1.0, 1.0)
    d_exact = numeric_f_divergence(KL, p, q)
    h = kl_optimal_witness(p, q)
    out = []
    for k, n in enumerate((10_000, 100_000)):
        rng = Rng(seed, stream=20 + k)
        sp = p.sample(rng, n)
        sq = q.sample(rng, n)
        est = variational_bound_estimate(KL, h, sp, sq)
        fq = np.asarray(KL.conjugate(h(sq)))
        se = float(np.sqrt(h(sp).var(ddof=1) / n + fq.var(ddof=1) / n))
        gap = abs(est - d_exact)
        out.append(CheckResult("kl_tightness", f"optimal_witness_n{n}", gap, 3.0 * se,
                               gap <= 3.0 * se, f"estimate {est:.6f} vs quadrature {d_exact:.6f}"))
    return out


def random_mixture(rng: Rng, m: int) -> ClassMixture:
    means = rng.uniform(m) * 8.0 - 4.0
    variances = 0.5 + 1.5 * rng.uniform(m)
    raw = 0.2 + rng.uniform(m)
    priors = raw / raw.sum()
    priors[-1] = 1.0 - priors[:-1].sum()  # exact unit sum
    return ClassMixture(tuple(
        (Gaussian(float(mu), float(v)), float(p)) for mu, v, p in zip(means, variances, priors)
    ))


def telescoping_checks(seed: int, n_mixtures: int) -> list[CheckResult]:
    """Envelope decomposition equals the direct MAP integral on random mixtures."""
    rng = Rng(seed, stream=31)
    worst = 0.0
    for trial in range(n_mixtures):
        m = 2 + trial % 3
        mix = random_mixture(rng, m)
        grid = GridSpec.covering(mix.densities)
        worst = max(worst, abs(bayes_error_decomposed(mix, grid) - exact_bayes_error_grid(mix, grid)))
    return [CheckResult("telescoping", f"decomposition_{n_mixtures}_mixtures", worst, 1e-9,
                        worst <= 1e-9)]


def q_symmetry_checks() -> list[CheckResult]:
    xs = np.linspace(-8.0, 8.0, 1000)
    worst = max(abs(q_function(x) + q_function(-x) - 1.0) for x in xs)
    return [CheckResult("q_symmetry", "q_plus_q_neg_is_1", worst, 1e-12, worst <= 1e-12)]


def reduction_checks(seed: int) -> list[CheckResult]:
    """Multiclass bound with m = 2 reproduces the binary bound to 1e-12."""
    rng = Rng(seed, stream=40)
    h1 = -rng.uniform(1000)  # (-1, 0]... uniform gives (0,1] so negation is [-1, 0); nudge
    h1 = np.maximum(h1, -1.0 + 1e-12)
    h2 = np.maximum(-rng.uniform(1000), -1.0 + 1e-12)
    multi = bound_multiclass_empirical([h1[:, None], h2[:, None]]).bound_value
    binary = bound_binary_empirical(h1, h2)
    gap = abs(multi - binary)
    return [CheckResult("reduction", "multiclass_m2_equals_binary", gap, 1e-12, gap <= 1e-12)]


def _random_case(rng: Rng, loss_kind: str, mapping: str):
    m = 2 if (loss_kind == net.CE and mapping == losses.SHIFTED_SIGMOID) \
        else 2 + int(rng.u64(1)[0] % np.uint64(3))
    head = m - 1 if mapping == losses.SHIFTED_SIGMOID else m
    d = 2 + int(rng.u64(1)[0] % np.uint64(4))
    hidden = 3 + int(rng.u64(1)[0] % np.uint64(5))
    model = net.init_network((d, hidden, head), head_mapping=mapping,
                             seed=int(rng.u64(1)[0]))
    n = 3 + int(rng.u64(1)[0] % np.uint64(5))
    feats = rng.normal(n * d).reshape(n, d)
    labels = (rng.u64(n) % np.uint64(m)).astype(np.int64) + 1
    return model, feats, labels


def gradient_gap(model, feats, labels, loss_kind: str, step: float = 1e-5) -> float:
    """Max relative error of analytic parameter gradients vs central differences."""
    cache = net.forward(model, feats)
    _, d_raw = net._batch_loss_and_grad(model, cache, labels, loss_kind)
    d_w, d_b = net.backward(model, cache, d_raw)

    def mean_loss():
        c = net.forward(model, feats)
        loss, _ = net._batch_loss_and_grad(model, c, labels, loss_kind)
        return float(loss.mean())

    worst = 0.0
    for params, grads in ((model.weights, d_w), (model.biases, d_b)):
        for p, g in zip(params, grads):
            flat_p = p.reshape(-1)
            flat_g = g.reshape(-1)
            for j in range(flat_p.size):
                keep = flat_p[j]
                flat_p[j] = keep + step
                up = mean_loss()
                flat_p[j] = keep - step
                down = mean_loss()
                flat_p[j] = keep
                fd = (up - down) / (2.0 * step)
                denom = max(abs(fd), abs(flat_g[j]), 1e-6)
                worst = max(worst, abs(fd - flat_g[j]) / denom)
    return worst


def gradient_checks(seed: int, n_cases: int) -> list[CheckResult]:
    """End-to-end analytic gradients vs central differences, all loss/head combos."""
    combos = [(net.BOLT, losses.SHIFTED_SIGMOID), (net.BOLT, losses.SHIFTED_SOFTMAX),
              (net.CE, losses.SHIFTED_SOFTMAX), (net.CE, losses.SHIFTED_SIGMOID)]
    out = []
    for loss_kind, mapping in combos:
        rng = Rng(seed, stream=50 + combos.index((loss_kind, mapping)))
        worst = 0.0
        for _ in range(n_cases):
            model, feats, labels = _random_case(rng, loss_kind, mapping)
            worst = max(worst, gradient_gap(model, feats, labels, loss_kind))
        out.append(CheckResult("gradients", f"{loss_kind}_{mapping}_fd", worst, 1e-4,
                               worst <= 1e-4, f"{n_cases} cases"))
    return out


def run_all(cfg: VerifyConfig) -> list[CheckResult]:
    results = []
    results += identity_checks(cfg.identity_deltas)
    results += dominance_checks(cfg.seed, cfg.dominance_witnesses // 2, cfg.dominance_samples)
    results += kl_tightness_checks(cfg.seed)
    results += telescoping_checks(cfg.seed, cfg.telescoping_mixtures)
    results += q_symmetry_checks()
    results += reduction_checks(cfg.seed)
    results += gradient_checks(cfg.seed, cfg.gradient_cases)
    return results
