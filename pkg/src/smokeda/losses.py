"""Classification, domain and correlation-alignment losses with exact gradients.

All three return scalar Tensors wired into the autodiff graph. The joint
combination weights them; the reversal factor phi is applied structurally by
the GRL node on the shared-feature path, never inside the reported scalar.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, gather_rows, scale, square, tsum

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class InsufficientSamplesError(ValueError):
    """Covariance asked of fewer than two rows: a batch-composition bug."""


@dataclass
class LossWeights:
    alpha_label: float = 0.8
    beta_domain: float = 0.2
    gamma_coral: float = 0.2
    phi: float = -1.0
    p: int = 1

    def __post_init__(self):
        for name in ("alpha_label", "beta_domain", "gamma_coral", "phi"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"loss weight {name} must be finite")
        if self.p not in (1, 2):
            raise ValueError(f"hinge power p must be 1 or 2, got {self.p}")


def softmax_cross_entropy(probs: Tensor, labels) -> Tensor:
    """Mean negative log probability of the true class.

    Probabilities at the true label are floored at 1e-12 inside the log to
    keep early-training losses finite; a floored row is logged once per call.
    """
    labels = np.asarray(labels, dtype=np.intp)
    n = labels.shape[0]
    if probs.shape[0] != n:
        raise ValueError(f"probs rows {probs.shape[0]} != labels {n}")
    p_true = probs.data[np.arange(n), labels]
    clamped = p_true < PROB_FLOOR
    if clamped.any():
        log.warning("cross-entropy: %d true-class probabilities clamped at %g",
                    int(clamped.sum()), PROB_FLOOR)
    safe = np.maximum(p_true, PROB_FLOOR)
    out = -np.log(safe).mean()

    def bwd(g):
        gp = np.zeros_like(probs.data)
        # zero gradient through clamped entries, matching the flat floor
        gp[np.arange(n), labels] = np.where(clamped, 0.0, -1.0 / (n * safe)) * float(g)
        return (gp,)

    return Tensor(out, _parents=(probs,), _backward_fn=bwd)


def hinge_domain_loss(probs_d: Tensor, labels_d, p: int = 1) -> Tensor:
    """Margin loss on the predicted domain label.

    The hinge is evaluated only at the predicted label l_i = argmax_k of the
    row: sign +1 when l_i matches the true domain, -1 otherwise, giving
    mean over the batch of max(0, 1 - sign * prob_at_l_i) ** p. Zero exactly
    when every prediction is correct with confidence 1.
    """
    labels_d = np.asarray(labels_d, dtype=np.intp)
    n = labels_d.shape[0]
    pred = probs_d.data.argmax(axis=1)
    sign = np.where(pred == labels_d, 1.0, -1.0)
    p_at_pred = probs_d.data[np.arange(n), pred]
    margin = 1.0 - sign * p_at_pred
    active = margin > 0
    terms = np.where(active, margin, 0.0) ** p
    out = terms.mean()

    def bwd(g):
        gp = np.zeros_like(probs_d.data)
        dterm = np.where(active, p * np.where(active, margin, 0.0) ** (p - 1), 0.0)
        gp[np.arange(n), pred] = -sign * dterm / n * float(g)
        return (gp,)

    return Tensor(out, _parents=(probs_d,), _backward_fn=bwd)


def covariance(F: Tensor) -> Tensor:
    """Unbiased covariance of the rows of F, differentiable in F."""
    n = F.shape[0]
    if n < 2:
        raise InsufficientSamplesError(
            f"covariance needs at least 2 rows, got {n}"
        )
    xc = F.data - F.data.mean(axis=0, keepdims=True)
    cov = xc.T @ xc / (n - 1)

    def bwd(g):
        # columns of xc sum to zero, so the centering projector is a no-op here
        return (xc @ (g + g.T) / (n - 1),)

    return Tensor(cov, _parents=(F,), _backward_fn=bwd)


def coral_loss(F_S: Tensor, F_T: Tensor) -> Tensor:
    """Squared Frobenius distance of feature covariances, scaled by 1/(4 d^2)."""
    if F_S.shape[1] != F_T.shape[1]:
        raise ValueError(
            f"coral: feature dims differ, {F_S.shape[1]} vs {F_T.shape[1]}"
        )
    d = F_S.shape[1]
    diff = covariance(F_S) - covariance(F_T)
    return scale(tsum(square(diff)), 1.0 / (4.0 * d * d))


def joint_loss(L_s: Tensor, L_d: Tensor, L_coral: Tensor | None,
               w: LossWeights) -> Tensor:
    """Weighted sum alpha * L_s + beta * L_d + gamma * L_coral.

    phi is not applied here: it lives inside the GRL on the path to the
    shared feature extractor, so the reported scalar stays positive while
    the extractor still receives the reversed domain gradient.
    """
    total = scale(L_s, w.alpha_label) + scale(L_d, w.beta_domain)
    if L_coral is not None:
        total = total + scale(L_coral, w.gamma_coral)
    return total


def coral_loss_bruteforce(F_S: np.ndarray, F_T: np.ndarray) -> float:
    """Independent double-loop oracle for coral_loss; test use only."""
    def cov(F):
        n, d = F.shape
        mu = [sum(F[i][j] for i in range(n)) / n for j in range(d)]
        C = [[0.0] * d for _ in range(d)]
        for a in range(d):
            for b in range(d):
                s = 0.0
                for i in range(n):
                    s += (F[i][a] - mu[a]) * (F[i][b] - mu[b])
                C[a][b] = s / (n - 1)
        return C

    d = F_S.shape[1]
    cs, ct = cov(np.asarray(F_S, float)), cov(np.asarray(F_T, float))
    frob2 = sum(
        (cs[a][b] - ct[a][b]) ** 2 for a in range(d) for b in range(d)
    )
    return frob2 / (4.0 * d * d)


def split_by_group(F: Tensor, group_mask) -> tuple[Tensor, Tensor]:
    """Partition feature rows into (mask-true, mask-false) differentiable views."""
    group_mask = np.asarray(group_mask, dtype=bool)
    idx_a = np.flatnonzero(group_mask)
    idx_b = np.flatnonzero(~group_mask)
    return gather_rows(F, idx_a), gather_rows(F, idx_b)
