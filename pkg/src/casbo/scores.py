"""Score aggregation, normalization, and gradient estimation.

The raw per-step scores of a sampled batch are turned into three derived
quantities: suffix-summed cumulative scores (the signal credited to each
step's perturbation), min-max normalized weights in [0, 1] per step, and the
score-weighted second moment of the whitened draws that preconditions the
covariance update.  A separate baseline-subtracted estimator provides
unbiased gradients of the smoothed objective with respect to each step mean.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ScoreTable",
    "cumulative_scores",
    "normalize_scores",
    "build_preconditioner",
    "estimate_mean_gradient",
    "sum_step_gradients",
]


def cumulative_scores(raw):
    """Suffix sums down each column of a (K, N) score matrix.

    ``out[k, j] = sum_{i >= k} raw[i, j]``, accumulated once from the last
    step upward so each row reuses the partial sum below it.  Non-finite
    input raises ``ValueError`` naming the offending entry.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise ValueError(f"raw scores must be a (K, N) matrix, got shape {raw.shape}")
    bad = ~np.isfinite(raw)
    if bad.any():
        k, j = np.argwhere(bad)[0]
        raise ValueError(
            f"non-finite score {raw[k, j]!r} at step {int(k)}, sample {int(j)}"
        )
    return np.cumsum(raw[::-1], axis=0)[::-1]


def normalize_scores(s_row, score_eps=None):
    """Min-max normalize one step's cumulative-score row.

    Returns ``(h, kappa, degenerate)`` where ``h`` maps the row minimum to 0
    and the maximum to 1, and ``kappa`` is the mean of ``h``.  A row whose
    spread falls below ``score_eps`` (default ``1e-12 * (1 + |s_max|)``) is
    degenerate: the weights and ``kappa`` are all zero, which turns the
    downstream updates into exact no-ops for that step.
    """
    s_row = np.asarray(s_row, dtype=float)
    if s_row.ndim != 1 or s_row.shape[0] < 2:
        raise ValueError(
            f"score row must be 1-D with at least 2 entries, got shape {s_row.shape}"
        )
    s_min = float(np.min(s_row))
    s_max = float(np.max(s_row))
    if score_eps is None:
        score_eps = 1e-12 * (1.0 + abs(s_max))
    spread = s_max - s_min
    if spread < score_eps:
        return np.zeros_like(s_row), 0.0, True
    h = (s_row - s_min) / spread
    return h, float(np.mean(h)), False


@dataclass
class ScoreTable:
    """Raw, cumulative and normalized scores of one sampled batch."""

    raw: np.ndarray  # (K, N)
    cumulative: np.ndarray  # (K, N)
    normalized: np.ndarray  # (K, N), rows in [0, 1]
    kappa: np.ndarray  # (K,)
    degenerate: np.ndarray  # (K,) bool

    @classmethod
    def build(cls, raw, score_eps=None):
        cum = cumulative_scores(raw)
        K, n = cum.shape
        normalized = np.zeros_like(cum)
        kappa = np.zeros(K)
        degenerate = np.zeros(K, dtype=bool)
        for k in range(K):
            normalized[k], kappa[k], degenerate[k] = normalize_scores(
                cum[k], score_eps
            )
        return cls(
            raw=np.asarray(raw, dtype=float),
            cumulative=cum,
            normalized=normalized,
            kappa=kappa,
            degenerate=degenerate,
        )


def build_preconditioner(z_draws, weights):
    """Score-weighted second moment of the whitened draws.

    ``(1/N) sum_j weights[j] * z_j z_j^T`` for ``z_draws`` of shape (N, d).
    With weights in [0, 1] the result is symmetric positive semi-definite up
    to rounding.
    """
    z_draws = np.asarray(z_draws, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if z_draws.ndim != 2:
        raise ValueError(f"draws must be (N, d), got shape {z_draws.shape}")
    if weights.shape != (z_draws.shape[0],):
        raise ValueError(
            f"weights shape {weights.shape} does not match {z_draws.shape[0]} draws"
        )
    h = (z_draws.T * weights) @ z_draws / z_draws.shape[0]
    return 0.5 * (h + h.T)


def estimate_mean_gradient(chain, batch, raw, baseline, obj_index, step_index):
    """Baseline-subtracted gradient estimate for one sub-objective.

    Estimates the gradient of the smoothed sub-objective ``obj_index`` with
    respect to the mean of step ``step_index`` (both 0-based, requiring
    ``step_index <= obj_index``):

        ``(1/N) sum_j prec_sqrt_k z_k^j (raw[i, j] - baseline[i])``

    ``baseline[i]`` must be the sub-objective evaluated on the current mean
    trajectory.  The stored draws of the batch are used directly.
    """
    i, k = obj_index, step_index
    if k > i:
        raise ValueError(
            f"step_index {k} must not exceed obj_index {i}: the score of "
            f"step {i} cannot depend on later steps"
        )
    raw = np.asarray(raw, dtype=float)
    centered = raw[i] - float(baseline[i])
    step = chain.steps[k]
    return step.prec_sqrt @ (batch.Z[k].T @ centered) / batch.N


def sum_step_gradients(grads):
    """Elementwise sum of the per-sub-objective gradient estimates."""
    grads = list(grads)
    if not grads:
        raise ValueError("need at least one gradient estimate to sum")
    return np.sum(np.stack(grads), axis=0)
