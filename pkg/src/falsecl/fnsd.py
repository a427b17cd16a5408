"""Coarse determination of possible false negatives.

Anchors whose positive-pair cosine similarity clears a threshold are
trusted to judge their negatives; for each such anchor, the negatives whose
similarity is closest to the positive-pair similarity (smallest absolute
gap) are flagged as possible false negatives. Thresholding happens on raw
cosine values; temperature only enters the loss exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfigError
from .linalg import gram, l2_normalize_rows, row_norms


@dataclass
class SimilarityContext:
    z: np.ndarray            # (2N, d) row-normalized embeddings
    sim: np.ndarray          # (2N, 2N) raw cosine matrix
    positive_of: np.ndarray  # (2N,) involution, view -> partner
    n_anchors: int
    norms: np.ndarray        # (2N,) norms of the un-normalized embeddings

    def positive_sims(self) -> np.ndarray:
        idx = np.arange(self.n_anchors)
        return self.sim[idx, self.positive_of]


@dataclass
class FnsFlags:
    flagged: list            # per anchor, sorted array of flagged view indices
    qualifying: np.ndarray   # (2N,) bool, anchor passed the benchmark gate

    @property
    def n_anchors(self) -> int:
        return len(self.flagged)

    @property
    def total_flagged(self) -> int:
        return sum(len(f) for f in self.flagged)

    @classmethod
    def empty(cls, n_anchors: int) -> "FnsFlags":
        return cls([np.empty(0, dtype=np.intp) for _ in range(n_anchors)],
                   np.zeros(n_anchors, dtype=bool))


def build_similarity_context(embeddings: np.ndarray,
                             positive_of: np.ndarray) -> SimilarityContext:
    """Normalize rows, take the full cosine Gram matrix, keep the pair map."""
    e = np.asarray(embeddings, dtype=np.float64)
    if e.shape[0] < 4:
        raise BadConfigError("need at least 4 views (2 source samples)")
    norms = row_norms(e)
    z = l2_normalize_rows(e)
    sim = gram(z)
    return SimilarityContext(z, sim, np.asarray(positive_of), e.shape[0], norms)


def select_benchmark_anchors(ctx: SimilarityContext, T: float) -> set:
    """Anchors whose positive-pair similarity strictly exceeds T."""
    qualifying = ctx.positive_sims() > T
    return set(np.flatnonzero(qualifying).tolist())


def determine_possible_fns(ctx: SimilarityContext, qualifying_anchors,
                           k_max: int = 1) -> FnsFlags:
    """Flag, per qualifying anchor, the negatives with the smallest
    |sim(anchor, negative) - sim(anchor, positive)| gap.

    Ties break toward the lower view index; at most k_max negatives are
    flagged per anchor, and non-qualifying anchors get none. The flagged
    lists are stored sorted by view index.
    """
    if k_max < 1:
        raise BadConfigError("k_max must be >= 1")
    n = ctx.n_anchors
    qualifying = np.zeros(n, dtype=bool)
    qualifying[list(qualifying_anchors)] = True
    all_idx = np.arange(n)
    flagged = []
    for i in range(n):
        if not qualifying[i]:
            flagged.append(np.empty(0, dtype=np.intp))
            continue
        p = ctx.positive_of[i]
        negs = all_idx[(all_idx != i) & (all_idx != p)]
        gaps = np.abs(ctx.sim[i, negs] - ctx.sim[i, p])
        order = np.lexsort((negs, gaps))      # gap ascending, then index
        pick = negs[order[:min(k_max, len(negs))]]
        flagged.append(np.sort(pick))
    return FnsFlags(flagged, qualifying)


def flag_matrix(flags: FnsFlags) -> np.ndarray:
    """(2N, 2N) boolean mask, True where view j is flagged for anchor i."""
    n = flags.n_anchors
    m = np.zeros((n, n), dtype=bool)
    for i, f in enumerate(flags.flagged):
        m[i, f] = True
    return m
