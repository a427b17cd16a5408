"""Confidence-calibrated contrastive loss and its analytic gradient.

Per anchor, flagged negatives contribute alpha times their exponentiated
similarity to the positive mass and (1 - alpha) times it to the negative
mass. Both shares sum to the full term, so the denominator never depends on
alpha; raising alpha only grows the numerator. alpha = 0 (or no flags)
reproduces the plain InfoNCE loss bit-for-bit, which doubles as the SimCLR
baseline here.

Flag selection is a discrete decision and is treated as constant under
differentiation; gradients flow only through the similarity values and the
row normalization, and are reported with respect to the un-normalized
embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfigError
from .fnsd import (FnsFlags, SimilarityContext, build_similarity_context,
                   determine_possible_fns, flag_matrix,
                   select_benchmark_anchors)
from .linalg import matmul


@dataclass
class LossConfig:
    alpha: float = 1.0       # trust in the flagged negatives, 0..1
    tau: float = 1.0         # temperature; similarities enter exp(sim / tau)
    T: float = 0.9           # benchmark gate on raw positive-pair cosine
    k_max: int = 1           # flags per qualifying anchor

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise BadConfigError("alpha must be in [0, 1]")
        if self.tau <= 0:
            raise BadConfigError("tau must be > 0")
        if self.k_max < 1:
            raise BadConfigError("k_max must be >= 1")

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "tau": self.tau, "T": self.T,
                "k_max": self.k_max}

    @classmethod
    def from_dict(cls, d: dict) -> "LossConfig":
        return cls(**d)


@dataclass
class LossResult:
    loss: float                  # mean over all 2N anchors
    per_anchor: np.ndarray       # (2N,)
    grad_embeddings: np.ndarray  # (2N, d), w.r.t. un-normalized embeddings


def fncc_terms(ctx: SimilarityContext, flags: FnsFlags, anchor: int,
               cfg: LossConfig):
    """Un-shifted per-anchor masses (s_pos, S_EP, S_WN, S_rest).

    With u(x) = exp(sim/tau): s_pos is the positive term, S_EP the
    alpha-weighted flagged mass, S_WN the (1-alpha)-weighted flagged mass,
    S_rest the remaining negatives. Diagnostic entry point; the loss proper
    uses a max-shifted variant of the same algebra.
    """
    i = anchor
    p = ctx.positive_of[i]
    u = np.exp(ctx.sim[i] / cfg.tau)
    s_pos = u[p]
    f = flags.flagged[i]
    flagged_sum = float(np.sum(u[f]))
    s_ep = cfg.alpha * flagged_sum
    s_wn = (1.0 - cfg.alpha) * flagged_sum
    rest = np.ones(ctx.n_anchors, dtype=bool)
    rest[[i, p]] = False
    rest[f] = False
    s_rest = float(np.sum(u[rest]))
    return float(s_pos), float(s_ep), float(s_wn), float(s_rest)


def _shifted_exponentials(ctx: SimilarityContext, tau: float) -> np.ndarray:
    """exp(sim/tau - rowmax), zero diagonal; the shift cancels in all ratios."""
    t = ctx.sim / tau
    t_off = t.copy()
    np.fill_diagonal(t_off, -np.inf)
    m = np.max(t_off, axis=1)
    w = np.exp(t - m[:, np.newaxis])
    np.fill_diagonal(w, 0.0)
    return w


def fncc_loss(ctx: SimilarityContext, flags: FnsFlags,
              cfg: LossConfig) -> LossResult:
    """Mean confidence-calibrated loss over all 2N anchors, with gradient.

    Per anchor i with positive p and flagged set F:
        L_i = -log((u_ip + alpha*sum_F u_if) / sum_{j != i} u_ij)
    where u is the exponentiated similarity. The denominator runs over all
    non-self views regardless of flags, which realizes the identity
    S_EP + S_WN = full flagged mass and makes it independent of alpha.
    """
    n = ctx.n_anchors
    if flags.n_anchors != n:
        raise BadConfigError("flags built for a different batch size")
    idx = np.arange(n)
    pos = ctx.positive_of

    w = _shifted_exponentials(ctx, cfg.tau)
    fmat = flag_matrix(flags)
    flagged_mass = np.sum(w * fmat, axis=1)
    numer = w[idx, pos] + cfg.alpha * flagged_mass
    denom = np.sum(w, axis=1)
    per_anchor = -np.log(numer / denom)
    loss = float(np.mean(per_anchor))

    # d(mean loss)/d(sim[i, j]) for j != i; self-similarity is never used.
    coeff = np.zeros((n, n), dtype=np.float64)
    coeff[idx, pos] = 1.0
    coeff[fmat] = cfg.alpha
    g = (w / denom[:, np.newaxis] - coeff * w / numer[:, np.newaxis])
    g /= cfg.tau * n

    # sim is bilinear in the normalized rows: d sim[i,j] touches z_i and z_j.
    grad_z = matmul(g + g.T, ctx.z)
    radial = np.sum(grad_z * ctx.z, axis=1)
    grad_e = (grad_z - radial[:, np.newaxis] * ctx.z) / ctx.norms[:, np.newaxis]
    return LossResult(loss, per_anchor, grad_e)


def info_nce_loss(ctx: SimilarityContext, cfg: LossConfig) -> LossResult:
    """Plain two-view InfoNCE over the batch: the no-flags degenerate path."""
    return fncc_loss(ctx, FnsFlags.empty(ctx.n_anchors), cfg)


def fncc_grad_check(embeddings: np.ndarray, positive_of: np.ndarray,
                    cfg: LossConfig, epsilon: float = 1e-5) -> float:
    """Max relative error of the analytic embedding gradient against central
    finite differences of the full pipeline (normalize -> similarity ->
    loss), with the flag sets frozen at the base point."""
    if not 1e-7 <= epsilon <= 1e-4:
        raise BadConfigError("epsilon must be in [1e-7, 1e-4]")
    e0 = np.asarray(embeddings, dtype=np.float64)
    ctx = build_similarity_context(e0, positive_of)
    flags = determine_possible_fns(ctx, select_benchmark_anchors(ctx, cfg.T),
                                   cfg.k_max)
    analytic = fncc_loss(ctx, flags, cfg).grad_embeddings

    def loss_at(e):
        c = build_similarity_context(e, positive_of)
        return fncc_loss(c, flags, cfg).loss

    worst = 0.0
    for i in range(e0.shape[0]):
        for j in range(e0.shape[1]):
            e = e0.copy()
            e[i, j] = e0[i, j] + epsilon
            up = loss_at(e)
            e[i, j] = e0[i, j] - epsilon
            down = loss_at(e)
            fd = (up - down) / (2.0 * epsilon)
            a = analytic[i, j]
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
            worst = max(worst, rel)
    return worst
