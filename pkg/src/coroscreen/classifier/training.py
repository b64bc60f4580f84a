"""SGD training loop with validation-gated checkpointing."""

from __future__ import annotations

import hashlib
import json
import zlib
from dataclasses import dataclass, replace

import numpy as np

from ..annotation import LABEL_PLAQUE
from ..curation import SUBSET_TRAINING, SUBSET_VALIDATION, materialize_item
from ..mpv import rotate_augment
from .layers import bce_with_logits, sigmoid
from .network import ClassifierError, INPUT_SCALE, Model, ModelSpec, fit_input


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    decay: float = 1e-6
    momentum: float = 0.9
    batch: int = 8
    max_epochs: int = 120
    seed: int = 0
    rotate_deg: float = 15.0
    threshold: float = 0.5

    def __post_init__(self):
        if self.lr <= 0 or self.decay < 0 or not 0.0 <= self.momentum < 1.0:
            raise ClassifierError("lr must be positive, decay >= 0, momentum in [0, 1)")
        if self.batch < 1 or self.max_epochs < 0:
            raise ClassifierError("batch must be >= 1 and max_epochs >= 0")


def _sub_rng(seed: int, tag: str):
    return np.random.default_rng(
        np.random.SeedSequence([seed & (2**64 - 1), zlib.crc32(tag.encode())]))


def _pixels_of(sample, epoch: int, cfg: TrainConfig):
    # tile-order and rotation jitter apply to every training mosaic
    # regardless of label, so augmentation artifacts cannot encode the class
    if hasattr(sample, "tiles"):
        tag = f"{epoch}.{sample.extraction_id}.{sample.permutation}"
        rng = np.random.default_rng((zlib.crc32(tag.encode()) ^ cfg.seed)
                                    & (2**32 - 1))
        order = rng.permutation(sample.n_views)
        base = np.asarray(sample.permutation)
        sample = replace(sample, tiles=sample.tiles[order],
                         permutation=tuple(int(v) for v in base[order]))
        if cfg.rotate_deg > 0.0:
            sample = rotate_augment(sample, cfg.rotate_deg,
                                    seed=int(rng.integers(2**32)))
    return np.asarray(getattr(sample, "pixels", sample), dtype=np.float64)


def fit(model: Model, train_items, val_items, cfg: TrainConfig) -> Model:
    """Train in place on (sample, label, augmented) triples; keep the
    weights of the best validation epoch."""
    if not train_items or not val_items:
        raise ClassifierError("training and validation sets must both be non-empty")
    if cfg.max_epochs == 0:
        model.training_log = []
        return model
    shuffle_rng = _sub_rng(cfg.seed, "shuffle")
    dropout_rng = _sub_rng(cfg.seed, "dropout")
    val_pixels = [np.asarray(getattr(s, "pixels", s), dtype=np.float64)
                  for s, _, _ in val_items]
    val_labels = np.array([lab for _, lab, _ in val_items], dtype=float)
    velocity: dict[tuple[int, str], np.ndarray] = {}
    best_acc = -1.0
    best_weights = None
    log = []
    step = 0
    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(len(train_items))
        total_loss = 0.0
        for b0 in range(0, len(order), cfg.batch):
            chosen = order[b0:b0 + cfg.batch]
            x = np.stack([
                fit_input(_pixels_of(train_items[i][0], epoch, cfg),
                          model.spec.input_shape)
                for i in chosen
            ])[..., None] / INPUT_SCALE
            y = np.array([train_items[i][1] for i in chosen], dtype=float)
            z = model.forward(x, train=True, rng=dropout_rng)
            loss, dz = bce_with_logits(z, y)
            if not np.isfinite(loss):
                raise ClassifierError(
                    f"non-finite loss at epoch {epoch} batch {b0 // cfg.batch}")
            model.backward(dz)
            lr_t = cfg.lr / (1.0 + cfg.decay * step)
            for li, layer in enumerate(model.layers):
                for name, grad in layer.grads.items():
                    key = (li, name)
                    vel = velocity.get(key)
                    if vel is None:
                        vel = velocity[key] = np.zeros_like(grad)
                    vel *= cfg.momentum
                    vel -= lr_t * grad
                    layer.params[name] += vel
            step += 1
            total_loss += loss * len(chosen)
        probs = np.array([
            float(sigmoid(model.logit(px))[0, 0]) for px in val_pixels
        ])
        acc = float(np.mean((probs >= cfg.threshold) == (val_labels == 1.0)))
        improved = acc > best_acc
        if improved:
            best_acc = acc
            best_weights = model.get_weights()
        log.append({"epoch": epoch, "loss": total_loss / len(order),
                    "val_accuracy": acc, "checkpointed": improved})
    model.set_weights(best_weights)
    model.training_log = log
    return model


def manifest_hash(manifest) -> str:
    return hashlib.sha256(
        json.dumps(manifest.to_dict(), sort_keys=True).encode()).hexdigest()


def train(manifest, spec: ModelSpec, cfg: TrainConfig, mpvs) -> Model:
    """Assemble datasets from a manifest and run the fit loop.

    mpvs maps extraction_id to its canonical mosaic; augmented manifest
    items are rebuilt from their stored permutation provenance.
    """
    train_items = []
    val_items = []
    for item in manifest.vessel_items:
        if item.subset not in (SUBSET_TRAINING, SUBSET_VALIDATION):
            continue
        sample = materialize_item(item, mpvs)
        label = 1 if item.label == LABEL_PLAQUE else 0
        triple = (sample, label, item.augmentation is not None)
        if item.subset == SUBSET_TRAINING:
            train_items.append(triple)
        else:
            val_items.append(triple)
    model = Model.initial(spec, seed=cfg.seed)
    model.provenance = {"seed": cfg.seed, "manifest_hash": manifest_hash(manifest),
                        "n_views": manifest.n_views}
    return fit(model, train_items, val_items, cfg)
