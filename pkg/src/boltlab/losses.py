"""BOLT loss, output-to-witness mappings, prediction rules, and cross-entropy.

A model head for an m-class problem emits either m-1 raw scores (mapped
through a shifted sigmoid to witness values in (-1, 0)) or m raw scores
(softmax probabilities, shifted by -1).  With h_0 := -1 fixed, the
per-class score of a witness vector h = (h_1 .. h_{m-1}) is

    score_lambda(h) = sum_{i=lambda}^{m-1} h_i  -  h_{lambda-1}

(empty sum for lambda = m) and the BOLT loss of a sample with true class
lambda is 1 - score_lambda(h).  Averaged over a class-balanced sample the
loss equals the multiclass Bayes-error bound evaluated on the same
witnesses, which is what makes minimizing it meaningful.

BOLT predictions take argmax_lambda score_lambda (ties to the smallest
class index); this is the per-sample maximizer of the quantity whose
expectation training maximizes, not a rule with its own optimality claim.
Cross-entropy predictions take argmax of the probabilities: the score rule
misranks even perfect one-hot outputs for m >= 3, so the two trainers keep
their own natural decision rules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SHIFTED_SIGMOID = "shifted_sigmoid"
SHIFTED_SOFTMAX = "shifted_softmax"
MAPPINGS = (SHIFTED_SIGMOID, SHIFTED_SOFTMAX)

# Mapped witness values are nudged into the open interior of (-1, 0] so a
# saturated sigmoid/softmax cannot round onto the closed endpoint -1.
WITNESS_EPS = 1e-12

CE_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class HVector:
    """Per-sample witness values h_1 .. h_{m-1}, each in (-1, 0]; h_0 is -1."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError(f"witness vector must be 1-D and non-empty, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("witness vector contains non-finite values")
        if np.any(vals <= -1.0) or np.any(vals > 0.0):
            raise ValueError(f"witness values must lie in (-1, 0], got {vals}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def num_classes(self) -> int:
        return self.values.size + 1


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _clamp_witness(h: np.ndarray) -> np.ndarray:
    return np.clip(h, -1.0 + WITNESS_EPS, -WITNESS_EPS)


def map_outputs_batch(raw: np.ndarray, mapping: str, m: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Map raw head outputs (n, k) to witness rows (n, m-1).

    Returns (h, probs); probs is the (n, m) probability matrix for the
    softmax mapping and None for the sigmoid mapping.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw head outputs contain NaN/Inf")
    if mapping == SHIFTED_SIGMOID:
        if raw.shape[-1] != m - 1:
            raise ValueError(f"shifted_sigmoid expects {m - 1} raw scores, got {raw.shape[-1]}")
        return _clamp_witness(_sigmoid(raw) - 1.0), None
    if mapping == SHIFTED_SOFTMAX:
        if raw.shape[-1] != m:
            raise ValueError(f"shifted_softmax expects {m} raw scores, got {raw.shape[-1]}")
        probs = _softmax(raw)
        return _clamp_witness(probs[..., : m - 1] - 1.0), probs
    raise ValueError(f"unknown output mapping {mapping!r}")


def map_outputs(raw, mapping: str, m: int) -> HVector:
    """Single-sample version of map_outputs_batch, returning a validated HVector."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    h, _ = map_outputs_batch(raw, mapping, m)
    return HVector(h[0])


def class_probabilities(raw: np.ndarray, mapping: str, m: int) -> np.ndarray:
    """Probability rows (n, m) for cross-entropy use.

    softmax: the softmax itself.  sigmoid: defined for m = 2 only, as
    (sigma, 1 - sigma); m - 1 independent sigmoids do not normalize otherwise.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if mapping == SHIFTED_SOFTMAX:
        return _softmax(raw)
    if mapping == SHIFTED_SIGMOID:
        if m != 2:
            raise ValueError("cross-entropy with the sigmoid head is only defined for m = 2")
        s = _sigmoid(raw)
        return np.concatenate([s, 1.0 - s], axis=-1)
    raise ValueError(f"unknown output mapping {mapping!r}")


def score_matrix(h: np.ndarray) -> np.ndarray:
    """All class scores for witness rows: (n, m-1) -> (n, m).

    Column lambda-1 holds sum_{i=lambda}^{m-1} h_i - h_{lambda-1} with
    h_0 = -1 and an empty sum for lambda = m.
    """
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    n, km1 = h.shape
    suffix = np.zeros((n, km1 + 1))
    suffix[:, :-1] = np.cumsum(h[:, ::-1], axis=1)[:, ::-1]  # suffix[:, j] = sum_{i > j} h
    prev = np.concatenate([np.full((n, 1), -1.0), h], axis=1)  # h_{lambda-1}
    return suffix - prev


def score_lambda(h: HVector, lam: int) -> float:
    """Per-sample class score; the BOLT loss is 1 minus this."""
    m = h.num_classes
    if not 1 <= lam <= m:
        raise IndexError(f"class index {lam} out of range [1, {m}]")
    return float(score_matrix(h.values[None, :])[0, lam - 1])


def bolt_loss(h: HVector, lam: int) -> float:
    """1 - score_lambda(h); linear in h, bounded by the witness ranges."""
    return 1.0 - score_lambda(h, lam)


def bolt_loss_batch(h: np.ndarray, labels: np.ndarray) -> np.ndarray:
    scores = score_matrix(h)
    return 1.0 - scores[np.arange(len(labels)), np.asarray(labels) - 1]


def bolt_grad_h(h: HVector, lam: int) -> np.ndarray:
    """d(bolt_loss)/dh: -1 on positions lambda..m-1, +1 on lambda-1 (if >= 1)."""
    m = h.num_classes
    if not 1 <= lam <= m:
        raise IndexError(f"class index {lam} out of range [1, {m}]")
    return bolt_grad_h_batch(h.values[None, :], np.array([lam]))[0]


def bolt_grad_h_batch(h: np.ndarray, labels: np.ndarray) -> np.ndarray:
    h = np.atleast_2d(h)
    n, km1 = h.shape
    lam = np.asarray(labels)
    idx = np.arange(1, km1 + 1)[None, :]  # 1-based witness index i
    grad = np.where(idx >= lam[:, None], -1.0, 0.0)
    grad[idx == (lam[:, None] - 1)] = 1.0
    return grad


def predict(h: HVector) -> int:
    """argmax_lambda score_lambda, ties to the smallest lambda (1-based)."""
    return int(predict_batch(h.values[None, :])[0])


def predict_batch(h: np.ndarray) -> np.ndarray:
    return np.argmax(score_matrix(h), axis=1) + 1


def predict_proba_batch(p: np.ndarray) -> np.ndarray:
    """argmax-probability rule (1-based) used for cross-entropy models."""
    return np.argmax(np.atleast_2d(p), axis=1) + 1


def cross_entropy(p: np.ndarray, lam: int) -> float:
    """-log p_lambda with the probability floored at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"expected a probability vector, got shape {p.shape}")
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValueError(f"not a probability vector (sum {p.sum()!r}, min {p.min()!r})")
    if not 1 <= lam <= p.size:
        raise IndexError(f"class index {lam} out of range [1, {p.size}]")
    return -float(np.log(max(p[lam - 1], CE_PROB_FLOOR)))


def cross_entropy_batch(p: np.ndarray, labels: np.ndarray) -> np.ndarray:
    picked = p[np.arange(len(labels)), np.asarray(labels) - 1]
    return -np.log(np.maximum(picked, CE_PROB_FLOOR))


def ce_grad_logits(raw: np.ndarray, lam: int) -> np.ndarray:
    """softmax(raw) - onehot(lambda): the composite softmax cross-entropy gradient."""
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("logits contain NaN/Inf")
    grad = _softmax(raw[None, :])[0]
    grad[lam - 1] -= 1.0
    return grad


def ce_grad_logits_batch(raw: np.ndarray, labels: np.ndarray) -> np.ndarray:
    grad = _softmax(raw)
    grad[np.arange(len(labels)), np.asarray(labels) - 1] -= 1.0
    return grad
