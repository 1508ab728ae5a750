"""Per-pixel logistic classifier trained with soft Dice loss and Adam.

The model is ``p = sigmoid(w . x + b)`` over the normalized feature channels.
It stands in for a segmentation network: the trainer only needs the model to
map a feature cube to probabilities and to return parameter gradients, so a
heavier architecture can implement the same two methods.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .change import BurnMask
from .raster import RasterGrid

logger = logging.getLogger(__name__)

SETTINGS = {
    "logratio_only": ("lr_ch", "lr_cv"),
    "decomp_cprvi": ("mchi_r", "mchi_g", "mchi_b", "cprvi"),
    "all": ("lr_ch", "lr_cv", "mchi_r", "mchi_g", "mchi_b", "cprvi"),
}


@dataclass(eq=False)
class FeatureStack:
    """Normalized feature cube of shape ``(channels, height, width)``."""

    data: np.ndarray
    valid: np.ndarray
    channels: tuple[str, ...]
    normalization: dict[str, tuple[float, float]]

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    def to_grid(self) -> RasterGrid:
        return RasterGrid(self.data, self.valid, list(self.channels))


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    epochs: int = 100
    batch: int = 32
    patch_size: int = 256
    seed: int = 42
    smooth: float = 1.0
    val_fraction: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    init_scale: float = 0.01

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.patch_size < 1:
            raise ValueError("patch_size must be >= 1")
        if self.batch < 1 or self.epochs < 0:
            raise ValueError("batch must be >= 1 and epochs >= 0")


@dataclass(eq=False)
class PixelModel:
    weights: np.ndarray
    bias: float
    input_channels: tuple[str, ...]
    seed: int = 42
    normalization: dict[str, tuple[float, float]] = field(default_factory=dict)
    config: Optional[dict] = None

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64).copy()
        self.bias = float(self.bias)
        self.input_channels = tuple(self.input_channels)
        if self.weights.shape != (len(self.input_channels),):
            raise ValueError("one weight per input channel required")
        if not (np.all(np.isfinite(self.weights)) and np.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")

    @classmethod
    def initial(cls, channels: Sequence[str], seed: int = 42, scale: float = 0.01) -> "PixelModel":
        rng = np.random.default_rng(seed)
        return cls(rng.normal(0.0, scale, len(channels)), 0.0, tuple(channels), seed)

    @property
    def params(self) -> np.ndarray:
        return np.append(self.weights, self.bias)

    def with_params(self, theta: np.ndarray) -> "PixelModel":
        return PixelModel(theta[:-1], theta[-1], self.input_channels, self.seed,
                          dict(self.normalization), self.config)

    def logits(self, x: np.ndarray) -> np.ndarray:
        """``x`` has shape ``(channels, n)``."""
        return self.weights @ x + self.bias

    def to_dict(self) -> dict:
        return {
            "input_channels": list(self.input_channels),
            "weights": [float(w) for w in self.weights],
            "bias": self.bias,
            "seed": self.seed,
            "normalization": {k: [float(m), float(s)] for k, (m, s) in self.normalization.items()},
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PixelModel":
        norm = {k: (float(v[0]), float(v[1])) for k, v in d.get("normalization", {}).items()}
        return cls(d["weights"], d["bias"], d["input_channels"], d.get("seed", 42), norm,
                   d.get("config"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PixelModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


Sources = Union[Mapping[str, np.ndarray], Sequence[RasterGrid]]


def _lookup(sources: Sources, name: str):
    if isinstance(sources, Mapping):
        if name in sources:
            item = sources[name]
            if isinstance(item, RasterGrid):
                return item.data[0].astype(np.float64), item.valid
            return np.asarray(item, dtype=np.float64), None
        return None
    for grid in sources:
        if name in grid.band_names:
            return grid.band(name).astype(np.float64), grid.valid
    return None


def assemble_features(sources: Sources, setting: str = "all",
                      normalization: Optional[Mapping[str, tuple[float, float]]] = None,
                      valid: Optional[np.ndarray] = None) -> FeatureStack:
    """Stack and z-score the channels of an input setting.

    Args:
        sources: named planes, either a mapping ``name -> array`` or rasters whose
            band names are channel names.
        setting: ``"logratio_only"``, ``"decomp_cprvi"`` or ``"all"``.
        normalization: per-channel ``(mean, std)`` to reuse (e.g. from a trained
            model); computed from the valid pixels when omitted.
        valid: extra validity plane to intersect with the sources' masks.
    """
    if setting not in SETTINGS:
        raise ValueError(f"unknown setting {setting!r}; choose from {sorted(SETTINGS)}")
    channels = SETTINGS[setting]
    planes, masks = [], []
    for name in channels:
        found = _lookup(sources, name)
        if found is None:
            raise ValueError(f"setting {setting!r} needs channel {name!r}, which no source provides")
        plane, mask = found
        planes.append(plane)
        if mask is not None:
            masks.append(mask)
    shape = planes[0].shape
    if any(p.shape != shape for p in planes):
        raise ValueError("feature sources are not co-registered")
    ok = np.ones(shape, bool) if valid is None else np.asarray(valid, bool).copy()
    for mask in masks:
        ok &= mask
    cube = np.stack(planes)
    ok &= np.all(np.isfinite(cube), axis=0)

    stats = {}
    for i, name in enumerate(channels):
        if normalization is not None and name in normalization:
            mean, std = normalization[name]
        else:
            vals = cube[i][ok]
            mean = float(vals.mean()) if vals.size else 0.0
            std = float(vals.std()) if vals.size else 1.0
        if not std > 0:
            std = 1.0
        stats[name] = (float(mean), float(std))
        cube[i] = np.where(ok, (cube[i] - mean) / std, 0.0)
    return FeatureStack(cube, ok, tuple(channels), stats)


def soft_dice_loss(pred: np.ndarray, label, smooth: float = 1.0, valid=None):
    """Soft Dice loss ``1 - (2 sum(p y) + s) / (sum(p) + sum(y) + s)``.

    ``label`` is a ``BurnMask`` or a binary array; pixels outside ``valid``
    (or the mask's validity) are excluded. Returns ``(loss, grad)`` with
    ``grad`` the derivative with respect to ``pred`` (0 on excluded pixels).
    An empty valid set gives loss 0.
    """
    if isinstance(label, BurnMask):
        y = label.mask.astype(np.float64)
        w = label.valid if valid is None else (label.valid & valid)
    else:
        y = np.asarray(label, dtype=np.float64)
        w = np.ones(y.shape, bool) if valid is None else np.asarray(valid, bool)
    p = np.asarray(pred, dtype=np.float64)
    wf = w.astype(np.float64)
    if not w.any():
        return 0.0, np.zeros_like(p)
    inter = float(np.sum(p * y * wf))
    denom = float(np.sum(p * wf) + np.sum(y * wf)) + smooth
    numer = 2.0 * inter + smooth
    loss = 1.0 - numer / denom
    grad = -(2.0 * y * denom - numer) / denom**2 * wf
    return loss, grad


def _loss_and_grad(theta: np.ndarray, x: np.ndarray, y: np.ndarray, smooth: float):
    """Dice loss and parameter gradient for pixels ``x`` (channels, n), labels ``y`` (n,)."""
    z = theta[:-1] @ x + theta[-1]
    p = sigmoid(z)
    loss, dp = soft_dice_loss(p, y, smooth)
    dz = dp * p * (1.0 - p)
    return loss, np.append(x @ dz, dz.sum())


def tile_patches(shape: tuple[int, int], patch_size: int) -> list[tuple[slice, slice]]:
    """Non-overlapping patches covering the whole image; edge patches may be smaller."""
    h, w = shape
    return [
        (slice(r, min(r + patch_size, h)), slice(c, min(c + patch_size, w)))
        for r in range(0, h, patch_size)
        for c in range(0, w, patch_size)
    ]


def split_patches(patches, val_fraction: float, rng: np.random.Generator):
    order = rng.permutation(len(patches))
    n_val = int(round(val_fraction * len(patches)))
    if len(patches) >= 2:
        n_val = min(max(n_val, 1), len(patches) - 1)
    else:
        n_val = 0
    val = [patches[i] for i in sorted(order[:n_val])]
    train = [patches[i] for i in sorted(order[n_val:])]
    return train, val


def _gather(stack: FeatureStack, labels: BurnMask, patches):
    xs, ys = [], []
    for rs, cs in patches:
        ok = stack.valid[rs, cs] & labels.valid[rs, cs]
        xs.append(stack.data[:, rs, cs][:, ok])
        ys.append(labels.mask[rs, cs][ok].astype(np.float64))
    if not xs:
        return np.zeros((stack.data.shape[0], 0)), np.zeros(0)
    return np.concatenate(xs, axis=1), np.concatenate(ys)


def _check_inputs(model: PixelModel, stack: FeatureStack, labels=None) -> None:
    if tuple(stack.channels) != tuple(model.input_channels):
        raise ValueError(
            f"feature channels {list(stack.channels)} do not match model inputs "
            f"{list(model.input_channels)}"
        )
    if labels is not None and labels.shape != stack.shape:
        raise ValueError("labels are not co-registered with the feature stack")


@dataclass
class TrainResult:
    model: PixelModel
    history: list[dict]
    best_epoch: int
    label_provenance: str
    n_train_patches: int
    n_val_patches: int


def train(model: PixelModel, stack: FeatureStack, labels: BurnMask,
          cfg: Optional[TrainConfig] = None) -> TrainResult:
    """Fit ``model`` with Adam on the soft Dice loss.

    The image is tiled into ``cfg.patch_size`` patches; a seeded
    ``cfg.val_fraction`` of them is held out for validation. Each epoch visits
    the training patches in a seeded random order, ``cfg.batch`` patches per
    optimizer step, with one Dice loss per batch. The returned model holds the
    parameters of the epoch with the lowest validation loss (training loss when
    there are no validation patches).
    """
    cfg = cfg or TrainConfig()
    _check_inputs(model, stack, labels)
    jointly = stack.valid & labels.valid
    n_pos = int(np.count_nonzero(labels.mask & jointly))
    if n_pos == 0 or n_pos == int(jointly.sum()):
        warnings.warn("labels contain a single class; Dice smoothing keeps the loss finite",
                      RuntimeWarning, stacklevel=2)

    rng = np.random.default_rng(cfg.seed)
    train_p, val_p = split_patches(tile_patches(stack.shape, cfg.patch_size), cfg.val_fraction, rng)
    batches_x = [_gather(stack, labels, [p]) for p in train_p]
    x_val, y_val = _gather(stack, labels, val_p)

    theta = model.params.copy()
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    step = 0
    history: list[dict] = []
    best_theta, best_loss, best_epoch = theta.copy(), np.inf, 0

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(batches_x))
        losses = []
        for start in range(0, len(order), cfg.batch):
            idx = order[start : start + cfg.batch]
            x = np.concatenate([batches_x[i][0] for i in idx], axis=1)
            y = np.concatenate([batches_x[i][1] for i in idx])
            loss, g = _loss_and_grad(theta, x, y, cfg.smooth)
            losses.append(loss)
            step += 1
            m1 = cfg.beta1 * m1 + (1 - cfg.beta1) * g
            m2 = cfg.beta2 * m2 + (1 - cfg.beta2) * g * g
            mhat = m1 / (1 - cfg.beta1**step)
            vhat = m2 / (1 - cfg.beta2**step)
            theta = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
        train_loss = float(np.mean(losses)) if losses else float("nan")
        if y_val.size:
            val_loss = _loss_and_grad(theta, x_val, y_val, cfg.smooth)[0]
        else:
            val_loss = train_loss
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": float(val_loss)})
        if val_loss < best_loss:
            best_theta, best_loss, best_epoch = theta.copy(), val_loss, epoch
        logger.debug("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)

    if cfg.epochs == 0:
        best_theta = theta
    trained = model.with_params(best_theta)
    trained.normalization = dict(stack.normalization)
    trained.config = asdict(cfg)
    trained.seed = cfg.seed
    return TrainResult(trained, history, best_epoch, labels.provenance, len(train_p), len(val_p))


def predict_proba(model: PixelModel, stack: FeatureStack) -> np.ndarray:
    _check_inputs(model, stack)
    c = stack.data.shape[0]
    z = model.logits(stack.data.reshape(c, -1)).reshape(stack.shape)
    return np.where(stack.valid, sigmoid(z), 0.0)


def predict(model: PixelModel, stack: FeatureStack, threshold: float = 0.5) -> BurnMask:
    """Burned where ``sigmoid(w . x + b) >= threshold``."""
    p = predict_proba(model, stack)
    return BurnMask(p >= threshold, stack.valid.copy(), "model_prediction")


def dice_loss_of(model: PixelModel, stack: FeatureStack, labels: BurnMask, smooth: float = 1.0) -> float:
    x, y = _gather(stack, labels, tile_patches(stack.shape, max(stack.shape) or 1))
    return _loss_and_grad(model.params, x, y, smooth)[0]


def gradient_check(model: PixelModel, stack: FeatureStack, labels: BurnMask,
                   smooth: float = 1.0, step: float = 1e-4, floor: float = 1e-6):
    """Compare the analytic Dice gradient to central finite differences.

    Returns ``(max_rel_err, max_abs_err)`` over all parameters. The relative
    error divides by ``max(|analytic|, |numeric|, floor)``.
    """
    _check_inputs(model, stack, labels)
    x, y = _gather(stack, labels, tile_patches(stack.shape, max(stack.shape) or 1))
    theta = model.params
    _, analytic = _loss_and_grad(theta, x, y, smooth)
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        fp = _loss_and_grad(theta + e, x, y, smooth)[0]
        fm = _loss_and_grad(theta - e, x, y, smooth)[0]
        numeric[i] = (fp - fm) / (2 * step)
    abs_err = np.abs(analytic - numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(abs_err / scale)), float(np.max(abs_err))
