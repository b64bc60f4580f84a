"""Binary mosaic classifier: three conv blocks and a 1024-unit head."""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..phantom import VESSEL_INTENSITY
from .layers import (Conv2D, Dense, Dropout, Flatten, MaxPool2D, ReLU, sigmoid)

DECISION_POSITIVE = "PlaqueDetected"
DECISION_CLEAR = "Clear"
DECISION_THRESHOLD = 0.5

INPUT_SCALE = VESSEL_INTENSITY


class ClassifierError(Exception):
    pass


class ShapeMismatchError(ClassifierError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Backbone and head dimensions; defaults follow the training recipe."""

    input_shape: tuple[int, int] = (18 * 96, 15)
    conv_channels: tuple[int, ...] = (8, 16, 32)
    dense_units: int = 1024
    dropout: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "conv_channels", tuple(int(v) for v in self.conv_channels))
        if len(self.input_shape) != 2 or min(self.input_shape) < 1:
            raise ClassifierError(f"bad input shape {self.input_shape}")
        if not self.conv_channels or self.dense_units < 1:
            raise ClassifierError("backbone and head must be non-empty")
        if not 0.0 <= self.dropout < 1.0:
            raise ClassifierError(f"dropout {self.dropout} outside [0, 1)")

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape),
                "conv_channels": list(self.conv_channels),
                "dense_units": self.dense_units, "dropout": self.dropout}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(tuple(d["input_shape"]), tuple(d["conv_channels"]),
                   d["dense_units"], d["dropout"])


def _flat_size_after_backbone(spec: ModelSpec) -> int:
    h, w = spec.input_shape
    for _ in spec.conv_channels:
        h, w = h // 2, w // 2
        if h == 0 or w == 0:
            raise ClassifierError(f"input {spec.input_shape} too small for "
                                  f"{len(spec.conv_channels)} pooling stages")
    return h * w * spec.conv_channels[-1]


def build_layers(spec: ModelSpec, seed: int) -> list:
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), 0x11E7]))
    layers = []
    in_ch = 1
    for out_ch in spec.conv_channels:
        layers += [Conv2D(in_ch, out_ch, rng), ReLU(), MaxPool2D()]
        in_ch = out_ch
    layers += [Flatten(),
               Dense(_flat_size_after_backbone(spec), spec.dense_units, rng),
               ReLU(),
               Dropout(spec.dropout),
               Dense(spec.dense_units, 1, rng)]
    return layers


@dataclass
class Model:
    spec: ModelSpec
    layers: list
    training_log: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, spec: ModelSpec, seed: int = 0) -> "Model":
        return cls(spec, build_layers(spec, seed), [], {"seed": seed})

    # -- parameter plumbing -------------------------------------------------

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield f"L{i}.{name}", layer.params[name]

    def get_weights(self) -> dict[str, np.ndarray]:
        return {key: arr.copy() for key, arr in self.named_params()}

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        for key, arr in self.named_params():
            arr[...] = weights[key]

    def weight_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(json.dumps(self.spec.to_dict(), sort_keys=True).encode())
        for key, arr in self.named_params():
            digest.update(key.encode())
            digest.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return digest.hexdigest()

    # -- forward passes -----------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        out = x
        for layer in self.layers:
            out = layer.forward(out, train=train, rng=rng)
        return out

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def logit(self, pixels: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        x = fit_input(pixels, self.spec.input_shape)[None, :, :, None] / INPUT_SCALE
        return self.forward(x, train=train, rng=rng)


def _as_pixels(mpv) -> np.ndarray:
    pixels = getattr(mpv, "pixels", mpv)
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D mosaic, got shape {pixels.shape}")
    return pixels


def fit_input(pixels, input_shape) -> np.ndarray:
    """Pass through exact-shape input, resample within 2x, reject beyond."""
    pixels = _as_pixels(pixels)
    if pixels.shape == tuple(input_shape):
        return pixels
    ratios = [t / s for t, s in zip(input_shape, pixels.shape)]
    if any(r < 0.5 or r > 2.0 for r in ratios):
        raise ShapeMismatchError(
            f"mosaic {pixels.shape} beyond 2x of model input {tuple(input_shape)}")
    grids = np.meshgrid(*(np.linspace(0.0, s - 1.0, t)
                          for s, t in zip(pixels.shape, input_shape)), indexing="ij")
    return ndimage.map_coordinates(pixels, np.stack(grids), order=1, mode="nearest")


def predict(model: Model, mpv) -> float:
    """Probability that the mosaic shows annotated plaque."""
    return float(sigmoid(model.logit(_as_pixels(mpv)))[0, 0])


def decide(p: float, threshold: float = DECISION_THRESHOLD) -> str:
    if not 0.0 <= p <= 1.0:
        raise ClassifierError(f"probability {p} outside [0, 1]")
    return DECISION_POSITIVE if p >= threshold else DECISION_CLEAR


def saliency(model: Model, mpv) -> np.ndarray:
    """Absolute input-gradient of the probability, max-normalized."""
    pixels = _as_pixels(mpv)
    fitted = fit_input(pixels, model.spec.input_shape)
    x = fitted[None, :, :, None] / INPUT_SCALE
    z = model.forward(x, train=False)
    p = sigmoid(z)
    grad_in = model.backward(p * (1.0 - p))
    m = np.abs(grad_in[0, :, :, 0])
    peak = m.max()
    out = m / peak if peak > 0 else m
    if fitted.shape != pixels.shape:
        out = fit_input(out, pixels.shape)
        np.clip(out, 0.0, 1.0, out=out)
    return out


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_model(model: Model, base) -> tuple[Path, Path]:
    base = Path(base)
    meta_path = base.with_suffix(".model.json")
    npz_path = base.with_suffix(".weights.npz")
    meta = {"spec": model.spec.to_dict(), "training_log": model.training_log,
            "provenance": model.provenance, "weight_hash": model.weight_hash()}
    meta_path.write_text(json.dumps(meta, indent=1, sort_keys=True))
    # fixed zip timestamps keep reruns byte-identical
    with zipfile.ZipFile(npz_path, "w", zipfile.ZIP_STORED) as zf:
        for key, arr in model.named_params():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr),
                                      allow_pickle=False)
            info = zipfile.ZipInfo(key + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())
    return meta_path, npz_path


def load_model(base) -> Model:
    base = Path(base)
    meta = json.loads(base.with_suffix(".model.json").read_text())
    model = Model.initial(ModelSpec.from_dict(meta["spec"]))
    with np.load(base.with_suffix(".weights.npz")) as blob:
        model.set_weights({k: blob[k] for k in blob.files})
    model.training_log = meta["training_log"]
    model.provenance = meta["provenance"]
    if model.weight_hash() != meta["weight_hash"]:
        raise ClassifierError("weight hash mismatch after load")
    return model
