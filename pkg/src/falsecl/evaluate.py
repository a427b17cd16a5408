"""Oracle-side evaluation: frozen-encoder kNN probe, flag-quality metrics
against the hidden labels, and the alpha-sweep experiment.

This is the only place the dataset labels are read. A flagged negative is a
hit when its source shares the anchor's class; the remainder are hard true
negatives the current encoder cannot tell apart from hits. The two counts
always sum to the number of flags.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .datagen import LabeledDataset, augment_two_views, regenerate_dataset
from .encoder import forward
from .errors import BadConfigError
from .fncc import LossConfig
from .fnsd import (FnsFlags, SimilarityContext, build_similarity_context,
                   determine_possible_fns, select_benchmark_anchors)
from .linalg import l2_normalize_rows, matmul
from .trainer import TrainConfig, pretrain

HELDOUT_SEED_OFFSET = 100003   # eval data never shares the pretraining seed


@dataclass
class FnsDetectionReport:
    n_flagged: int
    n_f: int                 # flagged negatives sharing the anchor's class
    n_h: int                 # flagged true negatives (hard for this model)
    precision: float | None  # n_f / n_flagged; None when nothing was flagged
    base_rate: float         # expected precision of a uniform-random flagger


def knn_probe(train_embeddings, train_labels, test_embeddings, test_labels,
              k: int) -> float:
    """Majority-vote kNN accuracy under cosine distance.

    Neighbor ranking ties break toward the lower train index; vote ties
    break toward the smaller class index.
    """
    if k < 1:
        raise BadConfigError("k must be >= 1")
    train_labels = np.asarray(train_labels)
    test_labels = np.asarray(test_labels)
    zt = l2_normalize_rows(np.asarray(train_embeddings, dtype=np.float64))
    zq = l2_normalize_rows(np.asarray(test_embeddings, dtype=np.float64))
    dist = 1.0 - matmul(zq, zt.T)
    n_train = zt.shape[0]
    kk = min(k, n_train)
    n_classes = int(train_labels.max()) + 1
    train_idx = np.arange(n_train)
    correct = 0
    for q in range(zq.shape[0]):
        order = np.lexsort((train_idx, dist[q]))
        votes = np.bincount(train_labels[order[:kk]], minlength=n_classes)
        if votes.argmax() == test_labels[q]:
            correct += 1
    return correct / zq.shape[0]


def fns_detection_metrics(flags: FnsFlags, ctx: SimilarityContext,
                          labels, source_of) -> FnsDetectionReport:
    """Score flags against the hidden labels of the batch sources.

    base_rate is what a flagger choosing uniformly among each anchor's
    negatives would score: per anchor, the fraction of its negative views
    (own pair excluded) that share its class. It is weighted by each
    anchor's flag count, falling back to the plain anchor average when
    nothing was flagged.
    """
    labels = np.asarray(labels)
    source_of = np.asarray(source_of)
    n_views = ctx.n_anchors
    n_sources = n_views // 2
    class_counts = np.bincount(labels, minlength=int(labels.max()) + 1)

    n_f = 0
    n_flagged = 0
    weighted_rate = 0.0
    rate_sum = 0.0
    for i in range(n_views):
        lab = labels[source_of[i]]
        rate = 2.0 * (class_counts[lab] - 1) / (n_views - 2)
        rate_sum += rate
        f = flags.flagged[i]
        if len(f) == 0:
            continue
        n_flagged += len(f)
        weighted_rate += len(f) * rate
        n_f += int(np.sum(labels[source_of[f]] == lab))

    if n_flagged > 0:
        precision = n_f / n_flagged
        base_rate = weighted_rate / n_flagged
    else:
        precision = None
        base_rate = rate_sum / n_views
    return FnsDetectionReport(n_flagged, n_f, n_flagged - n_f, precision,
                              base_rate)


def detection_eval(params, ds: LabeledDataset, loss_cfg: LossConfig,
                   augment_cfg, batch_size: int, n_batches: int,
                   seed: int) -> dict:
    """Flag-quality statistics of a frozen encoder over fresh random batches.

    Returns mean per-batch precision and base rate (batches that flagged
    nothing are skipped), plus pooled counts.
    """
    rng = np.random.default_rng(seed)
    precisions, base_rates = [], []
    total_flagged = total_f = 0
    for _ in range(n_batches):
        idxs = rng.choice(ds.n, size=min(batch_size, ds.n), replace=False)
        vb = augment_two_views(ds.samples[idxs], augment_cfg, rng,
                               raster_shape=ds.raster_shape)
        emb, _ = forward(params, vb.views)
        ctx = build_similarity_context(emb, vb.positive_of)
        flags = determine_possible_fns(
            ctx, select_benchmark_anchors(ctx, loss_cfg.T), loss_cfg.k_max)
        rep = fns_detection_metrics(flags, ctx, ds.labels[idxs], vb.source_of)
        if rep.precision is not None:
            precisions.append(rep.precision)
            base_rates.append(rep.base_rate)
        total_flagged += rep.n_flagged
        total_f += rep.n_f
    return {
        "mean_precision": float(np.mean(precisions)) if precisions else None,
        "mean_base_rate": float(np.mean(base_rates)) if base_rates else None,
        "n_batches": n_batches,
        "n_batches_with_flags": len(precisions),
        "total_flagged": total_flagged,
        "total_true_fns": total_f,
    }


@dataclass
class SweepReport:
    alphas: list
    seeds: list
    rows: list          # one dict per (alpha, seed) cell, grid order
    aggregates: list    # one dict per alpha

    def accuracy_by_alpha(self) -> dict:
        return {a["alpha"]: a["probe_accuracy_mean"] for a in self.aggregates}


def _probe_split(n: int, seed: int, test_fraction: float = 0.2):
    perm = np.random.default_rng(seed).permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    return perm[n_test:], perm[:n_test]


def probe_checkpoint(params, eval_ds: LabeledDataset, k: int = 5,
                     seed: int = 0) -> float:
    """Embed a held-out labeled dataset, split 80/20, report kNN accuracy."""
    emb, _ = forward(params, eval_ds.samples)
    tr, te = _probe_split(eval_ds.n, seed)
    return knn_probe(emb[tr], eval_ds.labels[tr], emb[te], eval_ds.labels[te], k)


def run_sweep_cell(cfg_template: TrainConfig, ds: LabeledDataset,
                   eval_ds: LabeledDataset, alpha: float, seed: int,
                   knn_k: int = 5, detection_batches: int = 20) -> dict:
    """One pretrain + probe + detection evaluation; fully seed-determined."""
    cfg = replace(cfg_template, seed=seed,
                  loss=replace(cfg_template.loss, alpha=alpha))
    params, log = pretrain(cfg, ds)
    accuracy = probe_checkpoint(params, eval_ds, k=knn_k, seed=seed)
    det = detection_eval(params, ds, cfg.loss, cfg.augment, cfg.batch_size,
                         detection_batches, seed)
    return {
        "alpha": alpha,
        "seed": seed,
        "probe_accuracy": accuracy,
        "detection_precision": det["mean_precision"],
        "detection_base_rate": det["mean_base_rate"],
        "final_loss": log[-1].mean_loss if log else None,
        "final_mean_positive_sim": log[-1].mean_positive_sim if log else None,
        "final_flags_per_anchor": log[-1].mean_flagged_per_anchor if log else None,
    }


def _cell_star(args):
    return run_sweep_cell(*args)


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    return float(np.mean(vals)), float(np.std(vals))


def sweep_alpha(cfg_template: TrainConfig, alphas, seeds, ds: LabeledDataset,
                eval_ds: LabeledDataset | None = None, knn_k: int = 5,
                detection_batches: int = 20, jobs: int = 1) -> SweepReport:
    """Full (alpha x seed) grid; each cell is an independent deterministic
    run, so the report is identical for any jobs count."""
    alphas = list(alphas)
    seeds = list(seeds)
    if not alphas or not seeds:
        raise BadConfigError("alphas and seeds must be nonempty")
    if eval_ds is None:
        eval_ds = regenerate_dataset(ds, ds.seed + HELDOUT_SEED_OFFSET)
    cells = [(cfg_template, ds, eval_ds, alpha, seed, knn_k, detection_batches)
             for alpha in alphas for seed in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_cell_star, cells))
    else:
        rows = [run_sweep_cell(*c) for c in cells]

    aggregates = []
    for alpha in alphas:
        group = [r for r in rows if r["alpha"] == alpha]
        acc_m, acc_s = _mean_std([r["probe_accuracy"] for r in group])
        det_m, det_s = _mean_std([r["detection_precision"] for r in group])
        base_m, _ = _mean_std([r["detection_base_rate"] for r in group])
        loss_m, _ = _mean_std([r["final_loss"] for r in group])
        aggregates.append({
            "alpha": alpha,
            "n_runs": len(group),
            "probe_accuracy_mean": acc_m,
            "probe_accuracy_std": acc_s,
            "detection_precision_mean": det_m,
            "detection_precision_std": det_s,
            "detection_base_rate_mean": base_m,
            "final_loss_mean": loss_m,
        })
    return SweepReport(alphas, seeds, rows, aggregates)


def format_sweep_table(report: SweepReport) -> str:
    """Plain-text summary: one row per alpha."""
    def cell(v, digits=4):
        return "   --  " if v is None else f"{v:7.{digits}f}"

    lines = [
        f"alpha sweep: {len(report.seeds)} seed(s) per alpha",
        f"{'alpha':>7}  {'probe_acc':>17}  {'det_precision':>17}  "
        f"{'base_rate':>9}  {'final_loss':>10}",
    ]
    for agg in report.aggregates:
        acc = f"{cell(agg['probe_accuracy_mean'])} ± {cell(agg['probe_accuracy_std'])}"
        det = f"{cell(agg['detection_precision_mean'])} ± {cell(agg['detection_precision_std'])}"
        lines.append(
            f"{agg['alpha']:7.2f}  {acc}  {det}  {cell(agg['detection_base_rate_mean'])}"
            f"  {cell(agg['final_loss_mean'])}"
        )
    return "\n".join(lines) + "\n"
