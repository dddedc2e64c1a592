"""Change-driven classifier over before/after image pairs.

Two frozen convolutional paths (one shared weight set, referenced twice)
extract feature pyramids from the before- and after-images. At each level a
delta layer relu(after - scale * before) emphasizes features that newly
appeared; the per-level delta volumes drive and merge into a third,
trainable convolutional path whose final volume feeds a three-layer dense
head producing class logits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_DTYPE,
    Optimizer,
    OptimizerConfig,
    ParamCounts,
    ParamSet,
    Tensor,
    add,
    conv2d,
    dense,
    init_conv,
    init_dense,
    load_weights_into,
    maxpool2,
    mul,
    param_count,
    relu,
    reshape,
    softmax,
    softmax_cross_entropy,
    sub,
)
from .harness.metrics import EpochMetrics

FEATURES_PREFIX = "features"


@dataclass(frozen=True)
class VggBlockConfig:
    """Stacks of 3x3/pad-1 convolutions, each block ending in a 2x2 max-pool."""

    blocks: tuple[tuple[int, int], ...]  # (conv_count, out_channels) per block

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("need at least one block")
        for count, channels in self.blocks:
            if count < 1 or channels < 1:
                raise ValueError(f"invalid block spec ({count}, {channels})")

    @classmethod
    def paper_scale(cls) -> "VggBlockConfig":
        return cls(blocks=((2, 64), (2, 128), (3, 256), (3, 512), (3, 512)))


@dataclass(frozen=True)
class DeltaNetConfig:
    input_size: int = 224
    num_classes: int = 20
    vgg: VggBlockConfig = field(default_factory=VggBlockConfig.paper_scale)
    dense_widths: tuple[int, int, int] = (256, 256, 20)
    lambda_scope: str = "channel"  # "channel": one scale per channel; "level": one per level
    lambda_init: float = 1.0

    def __post_init__(self):
        if self.input_size % (2 ** len(self.vgg.blocks)) != 0:
            raise ValueError(
                f"input_size {self.input_size} is not divisible by 2^{len(self.vgg.blocks)}")
        if len(self.dense_widths) != 3:
            raise ValueError("dense_widths must have exactly three entries")
        if self.dense_widths[-1] != self.num_classes:
            raise ValueError("last dense width must equal num_classes")
        if self.lambda_scope not in ("channel", "level"):
            raise ValueError(f"unknown lambda_scope {self.lambda_scope!r}")

    def level_channels(self) -> list[int]:
        """Channel count of each delta level: raw RGB, then one per block."""
        return [3] + [ch for _, ch in self.vgg.blocks]

    def flattened_size(self) -> int:
        side = self.input_size // (2 ** len(self.vgg.blocks))
        return side * side * self.vgg.blocks[-1][1]

    @classmethod
    def toy(cls) -> "DeltaNetConfig":
        return cls(input_size=64, num_classes=5,
                   vgg=VggBlockConfig(blocks=((1, 8), (1, 16), (2, 32))),
                   dense_widths=(64, 64, 5))

    @classmethod
    def paper_scale(cls) -> "DeltaNetConfig":
        return cls()

    @classmethod
    def preset(cls, name: str) -> "DeltaNetConfig":
        try:
            return {"toy": cls.toy, "paper-scale": cls.paper_scale}[name]()
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; expected 'toy' or 'paper-scale'") from None


@dataclass
class DeltaNetModel:
    """All parameters live once in `params`; the frozen feature path is shared
    by the before- and after-streams, so parameter accounting reports two
    instances of it while checkpoints store a single copy."""

    config: DeltaNetConfig
    params: ParamSet

    @property
    def path_before(self) -> ParamSet:
        return self.params.subset(FEATURES_PREFIX)

    @property
    def path_after(self) -> ParamSet:
        return self.params.subset(FEATURES_PREFIX)

    @property
    def path_delta(self) -> ParamSet:
        return self.params.subset("delta_path")

    @property
    def lambdas(self) -> ParamSet:
        return self.params.subset("lam")

    @property
    def dense(self) -> ParamSet:
        return self.params.subset("head")

    @property
    def dtype(self):
        return self.params["head/fc2/weight"].dtype

    def param_counts(self) -> ParamCounts:
        stored = param_count(self.params)
        shared = param_count(self.params.subset(FEATURES_PREFIX))
        return ParamCounts(
            total=stored.total + shared.total,
            trainable=stored.trainable + shared.trainable,
            frozen=stored.frozen + shared.frozen,
        )


def delta_layer(after: Tensor, before: Tensor, lam: Tensor) -> Tensor:
    """relu(after - lam * before), with lam scaling per channel.

    `lam` has one entry per channel of the feature volumes, or a single
    entry applied to every channel.
    """
    if after.shape != before.shape:
        raise ValueError(f"feature volumes disagree: {after.shape} vs {before.shape}")
    if after.ndim != 4:
        raise ValueError(f"delta_layer expects rank-4 volumes, got {after.shape}")
    channels = after.shape[1]
    if lam.size == channels:
        lam_b = reshape(lam, (1, channels, 1, 1))
    elif lam.size == 1:
        lam_b = reshape(lam, (1, 1, 1, 1))
    else:
        raise ValueError(f"scale vector of length {lam.size} does not fit {channels} channels")
    return relu(sub(after, mul(before, lam_b)))


def build_deltanet(config: DeltaNetConfig, frozen_weights=None, seed: int = 0,
                   dtype=DEFAULT_DTYPE) -> DeltaNetModel:
    """Initialize the model; the frozen path loads from a weight file when given."""
    params = ParamSet()
    for prefix, trainable in ((FEATURES_PREFIX, False), ("delta_path", True)):
        cin = 3
        for bi, (count, channels) in enumerate(config.vgg.blocks):
            for ci in range(count):
                init_conv(params, f"{prefix}/b{bi}/c{ci}", cin if ci == 0 else channels,
                          channels, 3, seed, trainable=trainable, dtype=dtype)
            cin = channels
    for level, channels in enumerate(config.level_channels()):
        n = channels if config.lambda_scope == "channel" else 1
        lam = np.full(n, config.lambda_init, dtype=dtype)
        params.add(f"lam/l{level}", Tensor(lam, dtype=dtype), trainable=True)
    widths = [config.flattened_size(), *config.dense_widths]
    for i in range(3):
        init_dense(params, f"head/fc{i}", widths[i], widths[i + 1], seed, dtype=dtype)

    if frozen_weights is not None:
        frozen = params.subset(FEATURES_PREFIX)
        load_weights_into(frozen, frozen_weights)
    return DeltaNetModel(config=config, params=params)


def _feature_pyramid(params: ParamSet, cfg: DeltaNetConfig, x: Tensor) -> list[Tensor]:
    """Post-pool feature volume of every frozen block."""
    volumes = []
    h = x
    for bi, (count, _) in enumerate(cfg.vgg.blocks):
        for ci in range(count):
            h = relu(conv2d(h, params[f"{FEATURES_PREFIX}/b{bi}/c{ci}/weight"],
                            params[f"{FEATURES_PREFIX}/b{bi}/c{ci}/bias"], padding=1))
        h = maxpool2(h)
        volumes.append(h)
    return volumes


def deltanet_forward(model: DeltaNetModel, before, after) -> Tensor:
    """Class logits of shape (N, num_classes) for a batch of image pairs."""
    cfg = model.config
    dtype = model.dtype
    if not isinstance(before, Tensor):
        before = Tensor(np.asarray(before), dtype=dtype)
    if not isinstance(after, Tensor):
        after = Tensor(np.asarray(after), dtype=dtype)
    if before.shape != after.shape:
        raise ValueError(f"before/after shapes disagree: {before.shape} vs {after.shape}")
    if before.ndim != 4 or before.shape[1] != 3:
        raise ValueError(f"expected (N, 3, S, S) inputs, got {before.shape}")
    if before.shape[2] != cfg.input_size or before.shape[3] != cfg.input_size:
        raise ValueError(
            f"spatial size {before.shape[2]}x{before.shape[3]} does not match "
            f"configured input size {cfg.input_size}")

    params = model.params
    vols_before = _feature_pyramid(params, cfg, before)
    vols_after = _feature_pyramid(params, cfg, after)

    h = delta_layer(after, before, params["lam/l0"])
    for bi, (count, _) in enumerate(cfg.vgg.blocks):
        for ci in range(count):
            h = relu(conv2d(h, params[f"delta_path/b{bi}/c{ci}/weight"],
                            params[f"delta_path/b{bi}/c{ci}/bias"], padding=1))
        h = maxpool2(h)
        dk = delta_layer(vols_after[bi], vols_before[bi], params[f"lam/l{bi + 1}"])
        h = add(h, dk)

    flat = reshape(h, (h.shape[0], cfg.flattened_size()))
    h = relu(dense(flat, params["head/fc0/weight"], params["head/fc0/bias"]))
    h = relu(dense(h, params["head/fc1/weight"], params["head/fc1/bias"]))
    return dense(h, params["head/fc2/weight"], params["head/fc2/bias"])


def classify(model: DeltaNetModel, before, after) -> tuple[int, np.ndarray]:
    """Predicted class index and softmax probability vector for one pair.

    Ties resolve toward the lowest class index.
    """
    b = np.asarray(before.data if isinstance(before, Tensor) else before)
    a = np.asarray(after.data if isinstance(after, Tensor) else after)
    logits = deltanet_forward(model, b[None], a[None]).data[0]
    probs = softmax(logits)
    return int(np.argmax(logits)), probs


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class PairSample:
    before: np.ndarray  # (3, S, S)
    after: np.ndarray   # (3, S, S)
    label: int


@dataclass
class ClassifierTrainResult:
    model: DeltaNetModel
    history: list[EpochMetrics] = field(default_factory=list)


def _pair_batch(samples: list[PairSample], idx, dtype):
    before = np.stack([samples[i].before for i in idx]).astype(dtype)
    after = np.stack([samples[i].after for i in idx]).astype(dtype)
    labels = np.asarray([samples[i].label for i in idx], dtype=np.int64)
    return before, after, labels


def evaluate_pairs(model: DeltaNetModel, samples: list[PairSample],
                   batch_size: int = 32) -> tuple[float, float, np.ndarray]:
    """Mean loss, categorical accuracy, and predictions over a sample list."""
    dtype = model.dtype
    total_loss = 0.0
    predictions = np.empty(len(samples), dtype=np.int64)
    correct = 0
    for start in range(0, len(samples), batch_size):
        idx = range(start, min(start + batch_size, len(samples)))
        before, after, labels = _pair_batch(samples, idx, dtype)
        logits = deltanet_forward(model, before, after)
        loss = softmax_cross_entropy(logits, labels)
        total_loss += float(loss.data) * len(idx)
        pred = logits.data.argmax(axis=1)
        predictions[idx.start:idx.stop] = pred
        correct += int((pred == labels).sum())
    n = max(len(samples), 1)
    return total_loss / n, correct / n, predictions


def train_classifier(
    model: DeltaNetModel,
    train: list[PairSample],
    val: list[PairSample],
    epochs: int,
    optimizer_config: OptimizerConfig | None = None,
    seed: int = 0,
    batch_size: int = 32,
    target_val_accuracy: float | None = None,
) -> ClassifierTrainResult:
    """Cross-entropy training of the trainable parameters only.

    The frozen feature path receives no gradient and stays bit-identical.
    Stops early once validation accuracy reaches `target_val_accuracy`.
    """
    if not train or not val:
        raise ValueError("train and val splits must be non-empty")
    k = model.config.num_classes
    for s in train + val:
        if not 0 <= s.label < k:
            raise ValueError(f"label {s.label} out of range [0, {k})")
    dtype = model.dtype
    optimizer = Optimizer(optimizer_config or OptimizerConfig())
    history: list[EpochMetrics] = []

    for epoch in range(1, epochs + 1):
        order = np.random.default_rng([seed, epoch, 0xC1F]).permutation(len(train))
        epoch_loss = 0.0
        correct = 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            before, after, labels = _pair_batch(train, idx, dtype)
            model.params.zero_grad()
            logits = deltanet_forward(model, before, after)
            loss = softmax_cross_entropy(logits, labels)
            loss.backward()
            optimizer.step(model.params)
            epoch_loss += float(loss.data) * len(idx)
            correct += int((logits.data.argmax(axis=1) == labels).sum())
        val_loss, val_acc, _ = evaluate_pairs(model, val, batch_size)
        history.append(EpochMetrics(
            epoch=epoch,
            train_loss=epoch_loss / len(train),
            train_accuracy=correct / len(train),
            val_loss=val_loss,
            val_accuracy=val_acc,
        ))
        if target_val_accuracy is not None and val_acc >= target_val_accuracy:
            break

    return ClassifierTrainResult(model=model, history=history)
