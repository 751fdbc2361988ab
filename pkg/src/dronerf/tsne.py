"""Exact t-SNE (O(N^2) affinities and gradient)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

LEARNING_RATE = 200.0
EARLY_EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
MOMENTUM = (0.5, 0.8)
MOMENTUM_SWITCH = 250
INIT_SCALE = 1e-4
MIN_GAIN = 0.01


@dataclass
class TsneResult:
    points: np.ndarray
    kl: dict = field(default_factory=dict)  # iteration -> KL(P || Q)
    sigmas: np.ndarray | None = None


def squared_distances(X: np.ndarray) -> np.ndarray:
    sq = np.einsum("ij,ij->i", X, X)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def conditional_probabilities(D: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 100):
    """Row-wise Gaussian affinities whose entropy equals ``log2(perplexity)`` bits.

    Precisions are found by a bisection run for all rows at once.  Returns the
    conditional matrix ``P[j|i]`` (rows sum to 1) and the per-row precisions.
    """
    n = D.shape[0]
    target = np.log2(perplexity)
    beta = np.ones(n)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    off = ~np.eye(n, dtype=bool)
    # subtracting the row minimum keeps exp() in range without changing P
    Dm = np.where(off, D, np.inf)
    dmin = Dm.min(axis=1, keepdims=True)
    Ds = np.where(off, D - dmin, 0.0)
    for _ in range(max_iter):
        W = np.exp(-Ds * beta[:, None]) * off
        s = W.sum(axis=1)
        P = W / s[:, None]
        H = (np.log(s) + beta * (P * Ds).sum(axis=1)) / np.log(2.0)
        diff = H - target
        if np.all(np.abs(diff) < tol):
            break
        up = diff > 0  # entropy too high -> sharpen
        lo = np.where(up, beta, lo)
        hi = np.where(up, hi, beta)
        beta = np.where(
            up,
            np.where(np.isinf(hi), beta * 2.0, (beta + hi) / 2.0),
            np.where(np.isinf(lo), beta / 2.0, (beta + lo) / 2.0),
        )
    return P, beta


def joint_probabilities(X: np.ndarray, perplexity: float):
    D = squared_distances(np.asarray(X, dtype=np.float64))
    P, beta = conditional_probabilities(D, perplexity)
    P = (P + P.T) / (2.0 * P.shape[0])
    return np.maximum(P, 1e-12), beta


def _q(Y):
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    return num, np.maximum(num / num.sum(), 1e-12)


def kl_divergence(P, Y) -> float:
    _, Q = _q(Y)
    mask = ~np.eye(P.shape[0], dtype=bool)
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def run_tsne(
    X,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed=0,
    learning_rate: float = LEARNING_RATE,
    kl_every: int = 50,
) -> TsneResult:
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if X.ndim != 2:
        raise InvalidInputError("t-SNE input must be a 2-D matrix")
    if n <= 3 * perplexity:
        raise InvalidInputError(f"need more than {3 * perplexity:g} points for perplexity {perplexity:g}")
    P, beta = joint_probabilities(X, perplexity)
    rng = np.random.default_rng(seed)
    Y = INIT_SCALE * rng.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl = {}
    for it in range(1, iterations + 1):
        exag = EARLY_EXAGGERATION if it <= EXAGGERATION_ITERS else 1.0
        mom = MOMENTUM[0] if it <= MOMENTUM_SWITCH else MOMENTUM[1]
        num, Q = _q(Y)
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same = (grad > 0) == (update > 0)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        update = mom * update - learning_rate * gains * grad
        Y = Y + update
        Y -= Y.mean(axis=0)
        if kl_every and (it % kl_every == 0 or it == iterations):
            kl[it] = kl_divergence(P, Y)
    return TsneResult(Y, kl, np.sqrt(1.0 / (2.0 * beta)))


def tsne_project(emb, perplexity: float = 30.0, iterations: int = 1000, seed=0) -> np.ndarray:
    """Project an embedding matrix (or :class:`EmbeddingSet`) to 2-D."""
    X = getattr(emb, "matrix", emb)
    return run_tsne(X, perplexity, iterations, seed, kl_every=0).points
