"""Acquisition functions: rank the unlabeled pool, pick the next batch.

Every function returns a ScoredSelection whose `chosen` field preserves
selection order. All tie-breaks fall to the lower pool index so selections
are exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import PoolState
from .util import seeded_rng

METHODS = ("random", "entropy", "kcenter", "svm_min_margin")


@dataclass(frozen=True, eq=False)
class AcquisitionRequest:
    pool: PoolState
    budget_b: int
    method: str
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unsupported method: {self.method}")
        if self.budget_b < 0:
            raise ValueError("budget must be nonnegative")
        if self.budget_b > len(self.pool.unlabeled):
            raise ValueError("budget exceeds the unlabeled pool size")


@dataclass(frozen=True, eq=False)
class ScoredSelection:
    chosen: np.ndarray              # dataset indices, in selection order
    scores: np.ndarray | None = None


def acquire_random(request: AcquisitionRequest) -> ScoredSelection:
    """Uniform sample without replacement from the unlabeled pool."""
    rng = seeded_rng(request.seed, "acquire-random")
    chosen = rng.choice(request.pool.unlabeled, size=request.budget_b,
                        replace=False)
    return ScoredSelection(chosen=chosen.astype(np.int64), scores=None)


def _top_b(pool_indices, keys, b):
    """Indices of the b smallest keys, ties to the lower pool index."""
    order = np.lexsort((pool_indices, keys))[:b]
    return order


def acquire_entropy(proba, request: AcquisitionRequest) -> ScoredSelection:
    """Pick the b rows with the highest predictive entropy.

    `proba` has one row per unlabeled index (in pool order). Rows must be
    valid distributions: nonnegative, summing to 1 within 1e-6.
    """
    p = np.asarray(proba, dtype=np.float64)
    pool = request.pool.unlabeled
    if p.ndim != 2 or p.shape[0] != len(pool):
        raise ValueError("probability matrix must have one row per unlabeled index")
    if (p < 0).any():
        raise ValueError("probability matrix has a negative entry")
    if np.abs(p.sum(axis=1) - 1.0).max() > 1e-6:
        raise ValueError("probability rows must sum to 1 within 1e-6")
    scores = -np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0).sum(axis=1)
    order = _top_b(pool, -scores, request.budget_b)
    return ScoredSelection(chosen=pool[order], scores=scores[order])


def acquire_kcenter_greedy(embeddings, request: AcquisitionRequest) -> ScoredSelection:
    """Farthest-first traversal seeded by the labeled set.

    Repeats b times: pick the unlabeled point with the largest Euclidean
    distance to its nearest center (labeled + already picked), then fold it
    into the center set. The recorded score is that distance at selection
    time, so scores are non-increasing along the selection order. Greedy
    selection is a 2-approximation of the optimal covering radius.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    pool = request.pool
    if emb.ndim != 2 or emb.shape[0] != pool.n:
        raise ValueError("embeddings must cover the whole dataset (n rows)")
    if len(pool.labeled) == 0:
        raise ValueError("k-center needs at least one labeled sample")
    candidates = emb[pool.unlabeled]
    diffs = candidates[:, None, :] - emb[pool.labeled][None, :, :]
    mindist = np.sqrt((diffs * diffs).sum(axis=2)).min(axis=1)
    alive = np.ones(len(pool.unlabeled), dtype=bool)
    chosen, scores = [], []
    for _ in range(request.budget_b):
        masked = np.where(alive, mindist, -np.inf)
        pick = int(np.argmax(masked))  # first max = lowest pool index
        chosen.append(int(pool.unlabeled[pick]))
        scores.append(float(mindist[pick]))
        alive[pick] = False
        dist_new = np.linalg.norm(candidates - candidates[pick], axis=1)
        mindist = np.minimum(mindist, dist_new)
    return ScoredSelection(chosen=np.asarray(chosen, dtype=np.int64),
                           scores=np.asarray(scores))


def acquire_svm_min_margin(decision_values, request: AcquisitionRequest) -> ScoredSelection:
    """Pick the b points nearest any one-vs-rest decision boundary.

    The score is min_k |f_k(x)|, the unnormalized distance to the closest
    hyperplane; smaller means more informative, so the bottom b win.
    """
    vals = np.asarray(decision_values, dtype=np.float64)
    pool = request.pool.unlabeled
    if vals.ndim != 2 or vals.shape[0] != len(pool):
        raise ValueError("decision values must have one row per unlabeled index")
    scores = np.abs(vals).min(axis=1)
    order = _top_b(pool, scores, request.budget_b)
    return ScoredSelection(chosen=pool[order], scores=scores[order])
