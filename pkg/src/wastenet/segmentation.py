"""U-Net binary segmentation of waste pixels.

The encoder halves resolution and doubles channels per level; the decoder
upsamples with fixed bilinear interpolation, concatenates the matching
skip connection, and convolves. A final 1x1 convolution plus logistic
squash gives a per-pixel foreground probability, so the weight-bearing
conv count is (depth + 1 + depth) * convs_per_block + 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_DTYPE,
    Optimizer,
    OptimizerConfig,
    ParamSet,
    Tensor,
    bce_with_logits,
    concat_channels,
    conv2d,
    init_conv,
    maxpool2,
    relu,
    sigmoid,
    upsample_bilinear,
)
from .harness.metrics import EpochMetrics


@dataclass(frozen=True)
class UNetConfig:
    input_size: int = 128
    base_channels: int = 34
    depth: int = 4
    convs_per_block: int = 2

    def __post_init__(self):
        if self.input_size % (2 ** self.depth) != 0:
            raise ValueError(
                f"input_size {self.input_size} is not divisible by 2^depth = {2 ** self.depth}")
        if self.base_channels < 1 or self.depth < 1 or self.convs_per_block < 1:
            raise ValueError("base_channels, depth and convs_per_block must be >= 1")

    def conv_layer_count(self) -> int:
        return (2 * self.depth + 1) * self.convs_per_block + 1

    def channels_at(self, level: int) -> int:
        return self.base_channels * (2 ** level)

    @classmethod
    def toy(cls) -> "UNetConfig":
        return cls(input_size=64, base_channels=8, depth=3, convs_per_block=2)

    @classmethod
    def paper_scale(cls) -> "UNetConfig":
        return cls(input_size=128, base_channels=34, depth=4, convs_per_block=2)

    @classmethod
    def preset(cls, name: str) -> "UNetConfig":
        try:
            return {"toy": cls.toy, "paper-scale": cls.paper_scale}[name]()
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; expected 'toy' or 'paper-scale'") from None


@dataclass
class MaskSample:
    """An RGB image in [0,1] with its binary foreground mask."""

    image: np.ndarray  # (3, S, S)
    mask: np.ndarray   # (1, S, S), values in {0, 1}

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be (3, S, S), got {self.image.shape}")
        if self.mask.shape != (1,) + self.image.shape[1:]:
            raise ValueError(f"mask shape {self.mask.shape} does not match image {self.image.shape}")
        if not np.isin(np.unique(self.mask), (0.0, 1.0)).all():
            raise ValueError("mask must be strictly binary")


@dataclass
class UNetModel:
    config: UNetConfig
    params: ParamSet

    @property
    def dtype(self):
        return self.params["final/conv/weight"].dtype

    def param_counts(self):
        from .core import param_count

        return param_count(self.params)


def build_unet(config: UNetConfig, seed: int = 0, dtype=DEFAULT_DTYPE) -> UNetModel:
    params = ParamSet()
    cpb = config.convs_per_block
    cin = 3
    for level in range(config.depth):
        out = config.channels_at(level)
        for i in range(cpb):
            init_conv(params, f"enc{level}/conv{i}", cin if i == 0 else out, out, 3, seed, dtype=dtype)
        cin = out
    bottleneck = config.channels_at(config.depth)
    for i in range(cpb):
        init_conv(params, f"bottleneck/conv{i}", cin if i == 0 else bottleneck, bottleneck, 3, seed, dtype=dtype)
    cin = bottleneck
    for level in reversed(range(config.depth)):
        out = config.channels_at(level)
        merged = cin + out  # upsampled channels plus the skip connection
        for i in range(cpb):
            init_conv(params, f"dec{level}/conv{i}", merged if i == 0 else out, out, 3, seed, dtype=dtype)
        cin = out
    init_conv(params, "final/conv", cin, 1, 1, seed, dtype=dtype)
    return UNetModel(config=config, params=params)


def _conv_block(params: ParamSet, prefix: str, x: Tensor, count: int) -> Tensor:
    h = x
    for i in range(count):
        h = relu(conv2d(h, params[f"{prefix}/conv{i}/weight"], params[f"{prefix}/conv{i}/bias"], padding=1))
    return h


def unet_logits(model: UNetModel, images: Tensor) -> Tensor:
    cfg = model.config
    if images.ndim != 4 or images.shape[1] != 3:
        raise ValueError(f"expected (N, 3, S, S) input, got {images.shape}")
    if images.shape[2] != cfg.input_size or images.shape[3] != cfg.input_size:
        raise ValueError(
            f"spatial size {images.shape[2]}x{images.shape[3]} does not match "
            f"configured input size {cfg.input_size}")
    params = model.params
    skips = []
    h = images
    for level in range(cfg.depth):
        h = _conv_block(params, f"enc{level}", h, cfg.convs_per_block)
        skips.append(h)
        h = maxpool2(h)
    h = _conv_block(params, "bottleneck", h, cfg.convs_per_block)
    for level in reversed(range(cfg.depth)):
        size = cfg.input_size // (2 ** level)
        h = upsample_bilinear(h, (size, size))
        h = concat_channels(h, skips[level])
        h = _conv_block(params, f"dec{level}", h, cfg.convs_per_block)
    return conv2d(h, params["final/conv/weight"], params["final/conv/bias"], padding=0)


def unet_forward(model: UNetModel, images) -> Tensor:
    """Per-pixel foreground probabilities in (0, 1), shape (N, 1, S, S)."""
    if not isinstance(images, Tensor):
        images = Tensor(np.asarray(images), dtype=model.dtype)
    return sigmoid(unet_logits(model, images))


def binarize(probs, threshold: float = 0.5) -> np.ndarray:
    """Threshold probabilities to a {0,1} mask; p >= threshold maps to 1."""
    arr = probs.data if isinstance(probs, Tensor) else np.asarray(probs)
    return (arr >= threshold).astype(arr.dtype)


def pixel_accuracy(pred_mask, true_mask) -> float:
    pred = pred_mask.data if isinstance(pred_mask, Tensor) else np.asarray(pred_mask)
    true = true_mask.data if isinstance(true_mask, Tensor) else np.asarray(true_mask)
    if pred.shape != true.shape:
        raise ValueError(f"mask shapes disagree: {pred.shape} vs {true.shape}")
    return float((pred == true).mean())


# ---------------------------------------------------------------------------
# augmentation
# ---------------------------------------------------------------------------

def dihedral(plane: np.ndarray, rotations: int, hflip: bool) -> np.ndarray:
    """Apply k quarter-turns then an optional horizontal flip to (C, H, W)."""
    out = np.rot90(plane, k=rotations % 4, axes=(1, 2))
    if hflip:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def augment(sample: MaskSample, seed: int) -> MaskSample:
    """Random flip/right-angle-rotation applied identically to image and mask."""
    rng = np.random.default_rng(seed)
    rotations = int(rng.integers(4))
    hflip = bool(rng.integers(2))
    return MaskSample(
        image=dihedral(sample.image, rotations, hflip),
        mask=dihedral(sample.mask, rotations, hflip),
    )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class UNetTrainResult:
    model: UNetModel
    history: list[EpochMetrics] = field(default_factory=list)
    test_accuracy: float = 0.0


def _batch_arrays(samples: list[MaskSample], idx, dtype) -> tuple[np.ndarray, np.ndarray]:
    images = np.stack([samples[i].image for i in idx]).astype(dtype)
    masks = np.stack([samples[i].mask for i in idx]).astype(dtype)
    return images, masks


def evaluate_masks(model: UNetModel, samples: list[MaskSample], batch_size: int = 16) -> tuple[float, float]:
    """Mean loss and pixel accuracy of the model over a sample list."""
    dtype = model.dtype
    total_loss = 0.0
    correct = 0
    pixels = 0
    for start in range(0, len(samples), batch_size):
        idx = range(start, min(start + batch_size, len(samples)))
        images, masks = _batch_arrays(samples, idx, dtype)
        logits = unet_logits(model, Tensor(images, dtype=dtype))
        loss = bce_with_logits(logits, masks)
        total_loss += float(loss.data) * len(idx)
        pred = (logits.data >= 0.0)  # sigmoid(x) >= 0.5 iff x >= 0
        correct += int((pred == (masks > 0.5)).sum())
        pixels += masks.size
    n = max(len(samples), 1)
    return total_loss / n, correct / max(pixels, 1)


def train_unet(
    train: list[MaskSample],
    val: list[MaskSample],
    test: list[MaskSample],
    config: UNetConfig,
    epochs: int,
    seed: int = 0,
    lr: float = 1e-3,
    batch_size: int = 16,
    target_val_accuracy: float | None = None,
    use_augmentation: bool = True,
) -> UNetTrainResult:
    """Minimize per-pixel binary cross-entropy; returns model, history, test accuracy.

    The run is fully determined by (data, config, epochs, seed): shuffling
    and per-sample augmentation draw from seeds derived per epoch/sample.
    Training stops early once validation accuracy reaches
    `target_val_accuracy`, when one is given.
    """
    for name, split in (("train", train), ("val", val), ("test", test)):
        if not split:
            raise ValueError(f"{name} split is empty")
    model = build_unet(config, seed=seed)
    dtype = model.dtype
    optimizer = Optimizer(OptimizerConfig(kind="adam", lr=lr))
    history: list[EpochMetrics] = []

    for epoch in range(1, epochs + 1):
        order = np.random.default_rng([seed, epoch, 0x5FF]).permutation(len(train))
        epoch_loss = 0.0
        correct = 0
        pixels = 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            if use_augmentation:
                batch = [augment(train[i], seed=int(np.random.default_rng([seed, epoch, int(i)]).integers(2 ** 31)))
                         for i in idx]
            else:
                batch = [train[i] for i in idx]
            images = np.stack([s.image for s in batch]).astype(dtype)
            masks = np.stack([s.mask for s in batch]).astype(dtype)
            model.params.zero_grad()
            logits = unet_logits(model, Tensor(images, dtype=dtype))
            loss = bce_with_logits(logits, masks)
            loss.backward()
            optimizer.step(model.params)
            epoch_loss += float(loss.data) * len(idx)
            correct += int(((logits.data >= 0.0) == (masks > 0.5)).sum())
            pixels += masks.size
        val_loss, val_acc = evaluate_masks(model, val, batch_size)
        history.append(EpochMetrics(
            epoch=epoch,
            train_loss=epoch_loss / len(train),
            train_accuracy=correct / pixels,
            val_loss=val_loss,
            val_accuracy=val_acc,
        ))
        if target_val_accuracy is not None and val_acc >= target_val_accuracy:
            break

    _, test_acc = evaluate_masks(model, test, batch_size)
    return UNetTrainResult(model=model, history=history, test_accuracy=test_acc)
