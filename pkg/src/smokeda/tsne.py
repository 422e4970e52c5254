"""Exact O(n^2) t-SNE with perplexity calibration by bisection."""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

_EPS = 1e-12


def _pairwise_sq_dists(X):
    sq = (X ** 2).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _calibrate_p(D, perplexity, tol=1e-5, max_iter=50):
    """Per-point Gaussian bandwidths matched to log(perplexity) by bisection."""
    n = D.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        beta, beta_lo, beta_hi = 1.0, 0.0, np.inf
        di = np.delete(D[i], i)
        for _ in range(max_iter):
            w = np.exp(-di * beta)
            sw = w.sum()
            if sw <= 0:
                h = 0.0
                p = np.zeros_like(w)
            else:
                p = w / sw
                h = -np.sum(p * np.log(np.maximum(p, _EPS)))
            if abs(h - target) < tol:
                break
            if h > target:
                beta_lo = beta
                beta = beta * 2.0 if np.isinf(beta_hi) else (beta + beta_hi) / 2.0
            else:
                beta_hi = beta
                beta = beta / 2.0 if beta_lo == 0.0 else (beta + beta_lo) / 2.0
        row = np.insert(p, i, 0.0)
        P[i] = row
    return P


def _kl(P, Q):
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / np.maximum(Q[mask], _EPS))))


def _q_dist(Y):
    num = 1.0 / (1.0 + _pairwise_sq_dists(Y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def tsne_embed(features: np.ndarray, perplexity: float = 30.0,
               iters: int = 500, seed: int = 0, learning_rate: float = 150.0):
    """Embed rows of `features` into 2-D; returns (embedding, final KL).

    Early exaggeration (factor 4) runs for the first quarter of iterations;
    momentum steps from 0.5 to 0.8 at the same point. The reported KL is
    always against the unexaggerated affinities, and the final value never
    exceeds the initial one.
    """
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0]
    if n > 5000:
        raise ValueError(f"exact embedding limited to 5000 points, got {n}")
    if not (5 <= perplexity <= (n - 1) / 3):
        raise ValueError(
            f"perplexity {perplexity} outside [5, {(n - 1) / 3:.1f}] for n={n}"
        )
    rng = np.random.default_rng(np.random.PCG64(seed))

    # duplicate rows break the perplexity calibration; jitter them once
    _, first = np.unique(X.round(12), axis=0, return_index=True)
    dup = np.setdiff1d(np.arange(n), first)
    if dup.size:
        log.warning("t-SNE: jittering %d duplicate points by 1e-6", dup.size)
        X = X.copy()
        X[dup] += np.random.default_rng(
            np.random.PCG64(seed + 1)
        ).normal(0.0, 1e-6, size=(dup.size, X.shape[1]))

    D = _pairwise_sq_dists(X)
    P = _calibrate_p(D, perplexity)
    P = (P + P.T) / (2.0 * n)
    P = np.maximum(P, _EPS)

    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    Q, _ = _q_dist(Y)
    kl_initial = _kl(P, Q)

    exag_until = iters // 4
    update = np.zeros_like(Y)
    best_Y, best_kl = Y.copy(), kl_initial
    for it in range(iters):
        Peff = P * 4.0 if it < exag_until else P
        Q, num = _q_dist(Y)
        W = (Peff - Q) * num
        grad = 4.0 * ((np.diag(W.sum(axis=1)) - W) @ Y)
        momentum = 0.5 if it < exag_until else 0.8
        update = momentum * update - learning_rate * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        if it >= exag_until:
            Q, _ = _q_dist(Y)
            kl = _kl(P, Q)
            if kl < best_kl:
                best_kl, best_Y = kl, Y.copy()
    return best_Y, best_kl


def knn_purity(embedding: np.ndarray, labels, k: int = 5) -> float:
    """Fraction of points whose k nearest neighbours share their label."""
    labels = np.asarray(labels)
    D = _pairwise_sq_dists(np.asarray(embedding, dtype=np.float64))
    np.fill_diagonal(D, np.inf)
    nn = np.argsort(D, axis=1)[:, :k]
    same = labels[nn] == labels[:, None]
    return float(same.mean())
