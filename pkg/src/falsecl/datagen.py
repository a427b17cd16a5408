"""Synthetic labeled datasets, two-view augmentation, and batch assembly.

Labels exist so that evaluation can check which flagged negatives really
share the anchor's class; training code never reads them. Two dataset
families are provided: Gaussian clusters on a sphere of class centers
(vector mode) and per-class procedural textures (raster mode, stored
flattened).

View layout is interleaved: views 2k and 2k+1 are the two augmentations of
source k. Loss indexing relies on this.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadConfigError, FormatError
from .jsonio import canonical_json, parse_json

DATASET_MAGIC = "FALSE-DS v1"


@dataclass
class LabeledDataset:
    samples: np.ndarray           # (n, d_in) float64
    labels: np.ndarray            # (n,) int32, hidden from training
    mode: str                     # "vector" | "raster"
    classes: int
    seed: int
    raster_shape: tuple | None = None   # (h, w, channels) when mode == "raster"
    gen: dict | None = None             # generator kind + params, for regeneration

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d_in(self) -> int:
        return self.samples.shape[1]


@dataclass
class ViewBatch:
    views: np.ndarray        # (2N, d) float64
    source_of: np.ndarray    # (2N,) int, view -> batch-local source index
    positive_of: np.ndarray  # (2N,) int, view -> partner view index

    def __post_init__(self):
        pos = self.positive_of
        n = len(pos)
        if np.any(pos[pos] != np.arange(n)) or np.any(pos == np.arange(n)):
            raise BadConfigError("positive_of must be a fixed-point-free involution")
        if np.any(self.source_of[pos] != self.source_of):
            raise BadConfigError("paired views must share a source")


@dataclass
class AugmentConfig:
    """Stochastic two-view augmentation strengths.

    Vector-mode knobs: additive Gaussian noise, a global multiplicative
    scale drawn from scale_range, and per-feature dropout. Raster-mode
    additionally flips, crops (with nearest-neighbor re-expansion) and
    jitters whole channels before the vector-mode knobs apply.
    """

    noise_sigma: float = 0.3
    scale_range: tuple = (0.9, 1.1)
    mask_prob: float = 0.0
    flip_prob: float = 0.5
    crop_fraction: float = 0.85
    channel_jitter_sigma: float = 0.1

    def __post_init__(self):
        lo, hi = self.scale_range
        if self.noise_sigma < 0:
            raise BadConfigError("noise_sigma must be >= 0")
        if not 0 <= self.mask_prob < 1:
            raise BadConfigError("mask_prob must be in [0, 1)")
        if not (0 < lo <= hi):
            raise BadConfigError("scale_range must satisfy 0 < lo <= hi")
        if not 0 <= self.flip_prob <= 1:
            raise BadConfigError("flip_prob must be in [0, 1]")
        if not 0 < self.crop_fraction <= 1:
            raise BadConfigError("crop_fraction must be in (0, 1]")
        if self.channel_jitter_sigma < 0:
            raise BadConfigError("channel_jitter_sigma must be >= 0")

    @classmethod
    def identity(cls) -> "AugmentConfig":
        """Configuration under which both views equal the source."""
        return cls(noise_sigma=0.0, scale_range=(1.0, 1.0), mask_prob=0.0,
                   flip_prob=0.0, crop_fraction=1.0, channel_jitter_sigma=0.0)

    def to_dict(self) -> dict:
        return {
            "noise_sigma": self.noise_sigma,
            "scale_range": list(self.scale_range),
            "mask_prob": self.mask_prob,
            "flip_prob": self.flip_prob,
            "crop_fraction": self.crop_fraction,
            "channel_jitter_sigma": self.channel_jitter_sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        d = dict(d)
        d["scale_range"] = tuple(d["scale_range"])
        return cls(**d)


def generate_cluster_dataset(n_per_class: int, classes: int, d_in: int,
                             class_sep: float, intra_sigma: float,
                             seed: int) -> LabeledDataset:
    """Gaussian blobs around class centers drawn uniformly on a sphere.

    Centers sit on the sphere of radius class_sep; samples add isotropic
    N(0, intra_sigma^2) noise. intra_sigma = 0 collapses each class to a
    point, which is allowed (useful for degenerate-case tests).
    """
    if classes < 2:
        raise BadConfigError("classes must be >= 2")
    if d_in < 2:
        raise BadConfigError("d_in must be >= 2")
    if n_per_class < 1:
        raise BadConfigError("n_per_class must be >= 1")
    if class_sep <= 0:
        raise BadConfigError("class_sep must be > 0")
    if intra_sigma < 0:
        raise BadConfigError("intra_sigma must be >= 0")

    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(classes, d_in))
    centers /= np.sqrt(np.sum(centers ** 2, axis=1))[:, np.newaxis]
    centers *= class_sep

    n = n_per_class * classes
    samples = np.empty((n, d_in), dtype=np.float64)
    labels = np.empty(n, dtype=np.int32)
    for c in range(classes):
        block = slice(c * n_per_class, (c + 1) * n_per_class)
        samples[block] = centers[c] + intra_sigma * rng.normal(size=(n_per_class, d_in))
        labels[block] = c
    gen = {"kind": "cluster", "n_per_class": n_per_class, "classes": classes,
           "d_in": d_in, "class_sep": class_sep, "intra_sigma": intra_sigma}
    return LabeledDataset(samples, labels, "vector", classes, seed, gen=gen)


def generate_raster_dataset(n_per_class: int, classes: int, h: int, w: int,
                            channels: int, texture_seed: int,
                            noise_sigma: float = 0.15) -> LabeledDataset:
    """Per-class sinusoidal textures plus pixel noise, flattened to vectors.

    Every class owns a fixed frequency/phase pattern per channel; samples of
    the class are that pattern plus N(0, noise_sigma^2) pixel noise, so with
    noise_sigma = 0 all samples of a class are identical.
    """
    if classes < 2:
        raise BadConfigError("classes must be >= 2")
    if h < 4 or w < 4:
        raise BadConfigError("h and w must be >= 4")
    if channels < 1:
        raise BadConfigError("channels must be >= 1")
    if n_per_class < 1:
        raise BadConfigError("n_per_class must be >= 1")
    if noise_sigma < 0:
        raise BadConfigError("noise_sigma must be >= 0")

    rng = np.random.default_rng(texture_seed)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    textures = np.empty((classes, h, w, channels), dtype=np.float64)
    for c in range(classes):
        for ch in range(channels):
            fy, fx = rng.uniform(0.5, 3.0, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.6, 1.0)
            textures[c, :, :, ch] = amp * np.sin(
                2 * np.pi * (fy * yy / h + fx * xx / w) + phase
            )

    d_in = h * w * channels
    n = n_per_class * classes
    samples = np.empty((n, d_in), dtype=np.float64)
    labels = np.empty(n, dtype=np.int32)
    for c in range(classes):
        block = slice(c * n_per_class, (c + 1) * n_per_class)
        noise = noise_sigma * rng.normal(size=(n_per_class, h, w, channels))
        samples[block] = (textures[c] + noise).reshape(n_per_class, d_in)
        labels[block] = c
    gen = {"kind": "raster", "n_per_class": n_per_class, "classes": classes,
           "h": h, "w": w, "channels": channels, "noise_sigma": noise_sigma}
    return LabeledDataset(samples, labels, "raster", classes, texture_seed,
                          raster_shape=(h, w, channels), gen=gen)


def regenerate_dataset(ds: LabeledDataset, seed: int) -> LabeledDataset:
    """Fresh dataset from the same generator with a different seed."""
    if ds.gen is None:
        raise BadConfigError("dataset carries no generator parameters")
    g = dict(ds.gen)
    kind = g.pop("kind")
    if kind == "cluster":
        return generate_cluster_dataset(seed=seed, **g)
    if kind == "raster":
        return generate_raster_dataset(texture_seed=seed, **g)
    raise BadConfigError(f"unknown generator kind {kind!r}")


def _crop_resize(img: np.ndarray, frac: float, oy_u: float, ox_u: float) -> np.ndarray:
    """Crop a frac-sized window at a fractional offset, nearest-neighbor expand."""
    h, w = img.shape[:2]
    ch = max(1, int(round(h * frac)))
    cw = max(1, int(round(w * frac)))
    oy = int(oy_u * (h - ch + 1))
    ox = int(ox_u * (w - cw + 1))
    win = img[oy:oy + ch, ox:ox + cw]
    yi = (np.arange(h) * ch) // h
    xi = (np.arange(w) * cw) // w
    return win[yi][:, xi]


def augment_two_views(batch_samples: np.ndarray, cfg: AugmentConfig,
                      rng: np.random.Generator,
                      raster_shape: tuple | None = None) -> ViewBatch:
    """Two stochastic views per source row, interleaved (2k, 2k+1 <- source k).

    All randomness comes from rng in a fixed draw order, so identical rng
    states give identical views. Raster transforms run first (when
    raster_shape is given), then scale, additive noise, and feature dropout.
    """
    base = np.asarray(batch_samples, dtype=np.float64)
    if base.ndim != 2 or base.shape[0] == 0:
        raise BadConfigError("batch_samples must be a nonempty 2-D array")
    n = base.shape[0]
    nv = 2 * n
    views = np.repeat(base, 2, axis=0)

    if raster_shape is not None:
        h, w, c = raster_shape
        if h * w * c != base.shape[1]:
            raise BadConfigError("raster_shape inconsistent with sample dim")
        flips = rng.random(nv) < cfg.flip_prob
        offs = rng.random((nv, 2))
        jitter = cfg.channel_jitter_sigma * rng.normal(size=(nv, c))
        imgs = views.reshape(nv, h, w, c)
        for v in range(nv):
            img = imgs[v]
            if flips[v]:
                img = img[:, ::-1]
            if cfg.crop_fraction < 1.0:
                img = _crop_resize(img, cfg.crop_fraction, offs[v, 0], offs[v, 1])
            imgs[v] = img + jitter[v]
        views = imgs.reshape(nv, -1)

    scales = rng.uniform(cfg.scale_range[0], cfg.scale_range[1], size=nv)
    views = views * scales[:, np.newaxis]
    views = views + cfg.noise_sigma * rng.normal(size=views.shape)
    if cfg.mask_prob > 0:
        keep = rng.random(views.shape) >= cfg.mask_prob
        views = views * keep

    idx = np.arange(nv)
    source_of = idx // 2
    positive_of = idx ^ 1
    return ViewBatch(views, source_of, positive_of)


def make_epoch_batches(ds: LabeledDataset, batch_size: int,
                       rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled partition of sample indices; a trailing batch of size < 2
    is dropped (a contrastive loss needs at least one negative)."""
    if batch_size < 2:
        raise BadConfigError("batch_size must be >= 2")
    perm = rng.permutation(ds.n)
    batches = [perm[i:i + batch_size] for i in range(0, ds.n, batch_size)]
    if batches and len(batches[-1]) < 2:
        batches.pop()
    return batches


def save_dataset(ds: LabeledDataset, path) -> None:
    """Write the FALSE-DS v1 container (header lines + raw little-endian data)."""
    header = {"mode": ds.mode, "n": ds.n, "d_in": ds.d_in,
              "classes": ds.classes, "seed": ds.seed}
    if ds.raster_shape is not None:
        h, w, c = ds.raster_shape
        header.update({"h": h, "w": w, "channels": c})
    if ds.gen is not None:
        header["gen"] = ds.gen
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC.encode() + b"\n")
        f.write(canonical_json(header).encode() + b"\n")
        f.write(np.ascontiguousarray(ds.samples, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(ds.labels, dtype="<i4").tobytes())


def load_dataset(path) -> LabeledDataset:
    with open(path, "rb") as f:
        blob = f.read()
    nl1 = blob.find(b"\n")
    if nl1 < 0 or blob[:nl1].decode(errors="replace") != DATASET_MAGIC:
        raise FormatError("bad dataset magic")
    nl2 = blob.find(b"\n", nl1 + 1)
    if nl2 < 0:
        raise FormatError("missing dataset header")
    try:
        header = parse_json(blob[nl1 + 1:nl2].decode())
    except ValueError as e:
        raise FormatError(f"unparseable dataset header: {e}") from e
    n, d_in = header["n"], header["d_in"]
    body = blob[nl2 + 1:]
    want = n * d_in * 8 + n * 4
    if len(body) != want:
        raise FormatError(f"dataset payload is {len(body)} bytes, expected {want}")
    samples = np.frombuffer(body[:n * d_in * 8], dtype="<f8").reshape(n, d_in).copy()
    labels = np.frombuffer(body[n * d_in * 8:], dtype="<i4").copy()
    raster_shape = None
    if header["mode"] == "raster":
        raster_shape = (header["h"], header["w"], header["channels"])
    return LabeledDataset(samples, labels, header["mode"], header["classes"],
                          header["seed"], raster_shape=raster_shape,
                          gen=header.get("gen"))
