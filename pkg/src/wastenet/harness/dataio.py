"""On-disk formats: raw image records, dataset manifests, checkpoints.

Image/mask records ("FWDS"): magic, u32 C/H/W little-endian, then C*H*W
bytes (value * 255, rounded) in row-major CHW order. All records of a
dataset are concatenated into one `samples.fwds` blob; the manifest keeps
byte offsets. The manifest itself is JSON with sorted keys and is written
last, atomically, so its presence marks a complete dataset.

Checkpoints are "FWWT" weight files; the model kind and configuration are
recovered from tensor names and shapes.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import ParamSet, load_weights, load_weights_into, save_weights
from ..core.weights import WeightFormatError

SAMPLE_MAGIC = b"FWDS"
MANIFEST_NAME = "manifest.json"
SAMPLES_NAME = "samples.fwds"

SPLITS = ("train", "val", "test")


class DatasetFormatError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# FWDS records
# ---------------------------------------------------------------------------

def encode_sample(array: np.ndarray) -> bytes:
    """Serialize a (C, H, W) array with values in [0, 1]."""
    if array.ndim != 3:
        raise ValueError(f"sample must be (C, H, W), got {array.shape}")
    quantized = np.round(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = SAMPLE_MAGIC + struct.pack("<III", *array.shape)
    return header + quantized.tobytes()


def decode_sample(blob: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Read one record at `offset`; returns (float32 array, next offset)."""
    if blob[offset:offset + 4] != SAMPLE_MAGIC:
        raise DatasetFormatError(f"bad sample magic at offset {offset}")
    c, h, w = struct.unpack_from("<III", blob, offset + 4)
    start = offset + 16
    end = start + c * h * w
    if end > len(blob):
        raise DatasetFormatError(f"truncated sample record at offset {offset}")
    data = np.frombuffer(blob, dtype=np.uint8, count=c * h * w, offset=start)
    return (data.reshape(c, h, w).astype(np.float32) / np.float32(255.0)), end


def write_sample_file(array: np.ndarray, path) -> None:
    Path(path).write_bytes(encode_sample(array))


def read_sample_file(path) -> np.ndarray:
    arr, _ = decode_sample(Path(path).read_bytes())
    return arr


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    bin_id: int
    deposits: int
    split: str
    image_offsets: list[int]   # deposits + 1 records: initial bin, then each after-image
    mask_offsets: list[int]    # one cumulative mask per deposit
    classes: list[int]


@dataclass
class DatasetManifest:
    version: int
    seed: int
    class_count: int
    image_size: int
    split_ratio: tuple[float, float, float]
    episodes: list[EpisodeRecord] = field(default_factory=list)
    class_styles: list[dict] = field(default_factory=list)

    def pair_counts(self) -> dict[str, int]:
        counts = {s: 0 for s in SPLITS}
        for ep in self.episodes:
            counts[ep.split] += ep.deposits
        return counts

    def to_json(self) -> str:
        payload = {
            "version": self.version,
            "seed": self.seed,
            "class_count": self.class_count,
            "image_size": self.image_size,
            "split_ratio": list(self.split_ratio),
            "samples_file": SAMPLES_NAME,
            "pair_counts": self.pair_counts(),
            "episodes": [
                {
                    "bin_id": ep.bin_id,
                    "deposits": ep.deposits,
                    "split": ep.split,
                    "image_offsets": ep.image_offsets,
                    "mask_offsets": ep.mask_offsets,
                    "classes": ep.classes,
                }
                for ep in self.episodes
            ],
            "class_styles": self.class_styles,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        manifest = cls(
            version=d["version"],
            seed=d["seed"],
            class_count=d["class_count"],
            image_size=d["image_size"],
            split_ratio=tuple(d["split_ratio"]),
            class_styles=d.get("class_styles", []),
        )
        for ep in d["episodes"]:
            manifest.episodes.append(EpisodeRecord(
                bin_id=ep["bin_id"],
                deposits=ep["deposits"],
                split=ep["split"],
                image_offsets=ep["image_offsets"],
                mask_offsets=ep["mask_offsets"],
                classes=ep["classes"],
            ))
        return manifest


def assign_splits(bin_ids: list[int], split_ratio: tuple[float, float, float],
                  seed: int) -> dict[int, str]:
    """Deterministic whole-episode split assignment meeting the ratio quotas.

    Episodes are ordered by a seeded hash of their bin id (a stable
    shuffle), then dealt into train/val/test until each quota fills. Keeping
    entire episodes inside one split avoids near-duplicate frames leaking
    across splits.
    """
    if len(split_ratio) != 3 or any(r < 0 for r in split_ratio):
        raise ValueError("split_ratio must be three non-negative numbers")
    if abs(sum(split_ratio) - 1.0) > 1e-6:
        raise ValueError("split_ratio must sum to 1")
    n = len(bin_ids)
    order = sorted(bin_ids, key=lambda b: (int(np.random.default_rng([seed, b, 0x5917]).integers(2 ** 63)), b))
    n_train = int(round(split_ratio[0] * n))
    n_val = int(round(split_ratio[1] * n))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    assignment = {}
    for i, b in enumerate(order):
        if i < n_train:
            assignment[b] = "train"
        elif i < n_train + n_val:
            assignment[b] = "val"
        else:
            assignment[b] = "test"
    return assignment


def write_dataset(out_dir, episodes, *, seed: int, class_count: int, image_size: int,
                  split_ratio: tuple[float, float, float]) -> DatasetManifest:
    """Persist episodes as one sample blob plus a manifest (written last)."""
    from ..scenegen import class_styles

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    episodes = sorted(episodes, key=lambda e: e.bin_id)
    assignment = assign_splits([e.bin_id for e in episodes], split_ratio, seed)

    manifest = DatasetManifest(
        version=1,
        seed=seed,
        class_count=class_count,
        image_size=image_size,
        split_ratio=split_ratio,
        class_styles=[
            {
                "class_id": s.class_id,
                "base_color": list(s.base_color),
                "texture": s.texture,
                "shape": s.shape,
            }
            for s in class_styles(class_count)
        ],
    )

    offset = 0
    chunks = []

    def push(array: np.ndarray) -> int:
        nonlocal offset
        blob = encode_sample(array)
        chunks.append(blob)
        at = offset
        offset += len(blob)
        return at

    for ep in episodes:
        image_offsets = [push(ep.events[0].before)]
        mask_offsets = []
        classes = []
        for ev in ep.events:
            image_offsets.append(push(ev.after))
            mask_offsets.append(push(ev.cumulative_mask))
            classes.append(ev.class_id)
        manifest.episodes.append(EpisodeRecord(
            bin_id=ep.bin_id,
            deposits=len(ep.events),
            split=assignment[ep.bin_id],
            image_offsets=image_offsets,
            mask_offsets=mask_offsets,
            classes=classes,
        ))

    (out_dir / SAMPLES_NAME).write_bytes(b"".join(chunks))
    tmp = out_dir / (MANIFEST_NAME + ".tmp")
    tmp.write_text(manifest.to_json())
    os.replace(tmp, out_dir / MANIFEST_NAME)
    return manifest


def load_manifest(data_dir) -> DatasetManifest:
    path = Path(data_dir) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no manifest at {path}")
    return DatasetManifest.from_json(path.read_text())


def _read_blob(data_dir) -> bytes:
    return (Path(data_dir) / SAMPLES_NAME).read_bytes()


def load_mask_samples(data_dir, split: str | None = None):
    """MaskSamples (after-image, cumulative mask), optionally one split only."""
    from ..segmentation import MaskSample

    manifest = load_manifest(data_dir)
    blob = _read_blob(data_dir)
    samples = []
    for ep in manifest.episodes:
        if split is not None and ep.split != split:
            continue
        for k in range(ep.deposits):
            image, _ = decode_sample(blob, ep.image_offsets[k + 1])
            mask, _ = decode_sample(blob, ep.mask_offsets[k])
            samples.append(MaskSample(image=image, mask=mask))
    return samples


def load_pair_samples(data_dir, split: str | None = None):
    """Classifier triples (before, after, label), optionally one split only."""
    from ..classifier import PairSample

    manifest = load_manifest(data_dir)
    blob = _read_blob(data_dir)
    samples = []
    for ep in manifest.episodes:
        if split is not None and ep.split != split:
            continue
        for k in range(ep.deposits):
            before, _ = decode_sample(blob, ep.image_offsets[k])
            after, _ = decode_sample(blob, ep.image_offsets[k + 1])
            samples.append(PairSample(before=before, after=after, label=ep.classes[k]))
    return samples


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model, path) -> None:
    """Write a model's parameters (tied tensors stored once)."""
    save_weights(model.params, path)


def _infer_unet_config(params: ParamSet):
    from ..segmentation import UNetConfig

    enc_levels = set()
    convs = set()
    for name in params.names():
        if name.startswith("enc"):
            head, conv, _ = name.split("/")
            enc_levels.add(int(head[3:]))
            if head == "enc0":
                convs.add(int(conv[4:]))
    depth = max(enc_levels) + 1
    base = params["enc0/conv0/weight"].shape[0]
    # Input size is a runtime choice for this fully-convolutional net and is
    # not recorded in the weights; default to the standard mask resolution.
    return UNetConfig(input_size=128 if 128 % (2 ** depth) == 0 else 2 ** depth,
                      base_channels=base, depth=depth, convs_per_block=len(convs))


def _infer_deltanet_config(params: ParamSet):
    from ..classifier import DeltaNetConfig, VggBlockConfig

    block_convs: dict[int, set[int]] = {}
    for name in params.names():
        if name.startswith("features/"):
            _, block, conv, _ = name.split("/")
            block_convs.setdefault(int(block[1:]), set()).add(int(conv[1:]))
    blocks = []
    for bi in sorted(block_convs):
        channels = params[f"features/b{bi}/c0/weight"].shape[0]
        blocks.append((len(block_convs[bi]), channels))
    dense_widths = tuple(params[f"head/fc{i}/weight"].shape[1] for i in range(3))
    num_classes = int(params["head/fc2/bias"].shape[0])
    flat = params["head/fc0/weight"].shape[0]
    side = int(round((flat / blocks[-1][1]) ** 0.5))
    input_size = side * (2 ** len(blocks))
    lam_scope = "channel" if params["lam/l1"].size == blocks[0][1] else "level"
    return DeltaNetConfig(input_size=input_size, num_classes=num_classes,
                          vgg=VggBlockConfig(blocks=tuple(blocks)),
                          dense_widths=dense_widths, lambda_scope=lam_scope)


def load_checkpoint(path, config=None):
    """Load a model checkpoint, rebuilding the model around the weights.

    With `config` given, the checkpoint must match it exactly; the first
    offending tensor is named on mismatch. Without one, the configuration
    is recovered from the stored tensors.
    """
    from ..classifier import DeltaNetConfig, DeltaNetModel, build_deltanet
    from ..segmentation import UNetConfig, UNetModel, build_unet

    loaded = load_weights(path)
    names = loaded.names()
    if not names:
        raise WeightFormatError(f"empty checkpoint: {path}")
    is_deltanet = any(n.startswith("features/") for n in names)

    if config is not None:
        if is_deltanet:
            if not isinstance(config, DeltaNetConfig):
                raise WeightFormatError(f"checkpoint {path} holds a pair classifier, not {type(config).__name__}")
            model = build_deltanet(config, seed=0)
        else:
            if not isinstance(config, UNetConfig):
                raise WeightFormatError(f"checkpoint {path} holds a segmenter, not {type(config).__name__}")
            model = build_unet(config, seed=0)
        load_weights_into(model.params, path)
        return model

    if is_deltanet:
        return DeltaNetModel(config=_infer_deltanet_config(loaded), params=loaded)
    return UNetModel(config=_infer_unet_config(loaded), params=loaded)
