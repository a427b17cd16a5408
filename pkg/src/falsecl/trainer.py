"""Self-supervised pretraining loop.

Per batch: augment two views, embed, build the similarity context, gate and
flag possible false negatives, take the calibrated loss, backpropagate, and
apply one SGD step. Everything downstream of the seed is deterministic, and
the dataset's labels are never read here.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .datagen import AugmentConfig, LabeledDataset, augment_two_views, make_epoch_batches
from .encoder import EncoderParams, SgdState, backward, forward, init_params, sgd_step
from .errors import BadConfigError, ShapeMismatchError
from .fncc import LossConfig, fncc_loss
from .fnsd import FnsFlags, build_similarity_context, determine_possible_fns, select_benchmark_anchors


@dataclass
class TrainConfig:
    encoder_dims: tuple = (32, 64, 16)
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.5              # lr = 0 means evaluate-only (no update step)
    momentum: float = 0.9
    loss: LossConfig = field(default_factory=LossConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    warmup_epochs: int = 0       # epochs before flagging engages
    fnsd_enabled: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise BadConfigError("epochs must be >= 0")
        if self.batch_size < 2:
            raise BadConfigError("batch_size must be >= 2")
        if self.lr < 0:
            raise BadConfigError("lr must be >= 0")
        if not 0 <= self.momentum < 1:
            raise BadConfigError("momentum must be in [0, 1)")
        if self.warmup_epochs < 0:
            raise BadConfigError("warmup_epochs must be >= 0")

    def to_dict(self) -> dict:
        return {
            "encoder_dims": list(self.encoder_dims),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr": self.lr,
            "momentum": self.momentum,
            "loss": self.loss.to_dict(),
            "augment": self.augment.to_dict(),
            "seed": self.seed,
            "warmup_epochs": self.warmup_epochs,
            "fnsd_enabled": self.fnsd_enabled,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["encoder_dims"] = tuple(d["encoder_dims"])
        d["loss"] = LossConfig.from_dict(d["loss"])
        d["augment"] = AugmentConfig.from_dict(d["augment"])
        return cls(**d)


@dataclass
class EpochMetrics:
    epoch: int
    mean_loss: float
    mean_flagged_per_anchor: float
    mean_positive_sim: float
    wall_time: float

    def to_record(self) -> dict:
        # wall_time stays out: serialized metrics must be byte-reproducible
        return {"epoch": self.epoch, "mean_loss": self.mean_loss,
                "mean_flagged_per_anchor": self.mean_flagged_per_anchor,
                "mean_positive_sim": self.mean_positive_sim}


@dataclass
class TrainState:
    cfg: TrainConfig
    params: EncoderParams
    opt: SgdState
    rng: np.random.Generator
    ds: LabeledDataset          # only .samples / .raster_shape / .n are touched
    epoch: int = 0


def init_state(cfg: TrainConfig, ds: LabeledDataset) -> TrainState:
    if ds.d_in != cfg.encoder_dims[0]:
        raise ShapeMismatchError(
            f"dataset dim {ds.d_in} != encoder input dim {cfg.encoder_dims[0]}"
        )
    params = init_params(cfg.encoder_dims, cfg.seed)
    return TrainState(cfg=cfg, params=params, opt=SgdState.zeros_like(params),
                      rng=np.random.default_rng(cfg.seed), ds=ds)


def train_epoch(state: TrainState):
    """One full pass over shuffled batches; returns (state, EpochMetrics)."""
    cfg = state.cfg
    t0 = time.perf_counter()
    fnsd_active = cfg.fnsd_enabled and state.epoch >= cfg.warmup_epochs

    losses, flag_rates, pos_sims = [], [], []
    for idxs in make_epoch_batches(state.ds, cfg.batch_size, state.rng):
        vb = augment_two_views(state.ds.samples[idxs], cfg.augment, state.rng,
                               raster_shape=state.ds.raster_shape)
        emb, cache = forward(state.params, vb.views)
        ctx = build_similarity_context(emb, vb.positive_of)
        if fnsd_active:
            anchors = select_benchmark_anchors(ctx, cfg.loss.T)
            flags = determine_possible_fns(ctx, anchors, cfg.loss.k_max)
        else:
            flags = FnsFlags.empty(ctx.n_anchors)
        res = fncc_loss(ctx, flags, cfg.loss)
        grads = backward(state.params, cache, res.grad_embeddings)
        if cfg.lr > 0:
            state.params, state.opt = sgd_step(state.params, grads, cfg.lr,
                                               cfg.momentum, state.opt)
        losses.append(res.loss)
        flag_rates.append(flags.total_flagged / ctx.n_anchors)
        pos_sims.append(float(np.mean(ctx.positive_sims())))

    metrics = EpochMetrics(
        epoch=state.epoch,
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
        mean_flagged_per_anchor=float(np.mean(flag_rates)) if flag_rates else 0.0,
        mean_positive_sim=float(np.mean(pos_sims)) if pos_sims else float("nan"),
        wall_time=time.perf_counter() - t0,
    )
    state.epoch += 1
    return state, metrics


def pretrain(cfg: TrainConfig, ds: LabeledDataset):
    """Run the full loop; returns (EncoderParams, list of EpochMetrics).

    Reads ds.samples and ds.raster_shape only; labels never enter.
    """
    state = init_state(cfg, ds)
    log = []
    for _ in range(cfg.epochs):
        state, metrics = train_epoch(state)
        log.append(metrics)
    return state.params, log
