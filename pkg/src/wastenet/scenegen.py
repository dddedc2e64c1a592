"""Deterministic synthetic deposit sequences.

A simulated bin accumulates items over a sequence of deposit events. Each
event captures the scene before and after the new item lands, the class of
that item, and the cumulative foreground mask of everything deposited so
far. Episodes vary in bin geometry, colors, and distractors (reflection
bands on the bin wall, crinkled liner bags) that belong to the background.

Every random draw comes from a generator keyed by (master_seed, bin_id,
seq), so any event regenerates identically in isolation and episode
generation parallelizes without changing a single byte.

Visual realism is a non-goal; class separability with controlled
difficulty (occlusion, surface perturbation, distractors) is the point.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field

import numpy as np

MAX_CLASSES = 20

TEXTURES = ("speckle", "stripe", "blob-cluster", "gradient")
SHAPES = ("ellipse", "polygon", "scatter")


@dataclass(frozen=True)
class ClassStyle:
    class_id: int
    base_color: tuple[float, float, float]
    texture: str
    texture_params: tuple[float, ...]
    shape: str


def class_styles(count: int) -> list[ClassStyle]:
    """The first `count` of the 20 fixed item styles."""
    if count < 2:
        raise ValueError("need at least 2 classes")
    if count > MAX_CLASSES:
        raise ValueError(f"only {MAX_CLASSES} class styles are available, requested {count}")
    styles = []
    for i in range(count):
        # Golden-ratio hue stepping keeps any prefix of the palette well
        # separated, not just the full set.
        hue = (i * 0.618033988749895) % 1.0
        sat = 0.88 if i % 2 == 0 else 0.70
        val = 0.92 if i % 4 < 2 else 0.74
        rgb = colorsys.hsv_to_rgb(hue, sat, val)
        rng = np.random.default_rng([0xF00D, i])
        params = (
            float(rng.uniform(2.0, 5.0)),        # stripe/gradient frequency
            float(rng.uniform(0, 2 * np.pi)),    # orientation
            float(rng.uniform(0.12, 0.25)),      # modulation amplitude
        )
        styles.append(ClassStyle(
            class_id=i,
            base_color=tuple(round(c, 6) for c in rgb),
            texture=TEXTURES[i % len(TEXTURES)],
            texture_params=params,
            shape=SHAPES[i % len(SHAPES)],
        ))
    return styles


@dataclass(frozen=True)
class BinAppearance:
    floor_color: tuple[float, float, float]
    interior_color: tuple[float, float, float]
    rim_color: tuple[float, float, float]
    interior_kind: str                 # "ellipse" or "rounded-rect"
    center: tuple[float, float]        # (row, col) fractions of image size
    half_extent: tuple[float, float]   # (row, col) fractions of image size
    rim_width: float                   # fraction of image size
    reflection: tuple[float, float, float] | None  # (angle, span, strength)
    bag: tuple[float, ...] | None      # (grey, amp, f1, f2, phase1, phase2)


@dataclass
class DepositEvent:
    bin_id: int
    seq: int
    class_id: int
    before: np.ndarray           # (3, S, S) float32 in [0, 1]
    after: np.ndarray            # (3, S, S) float32 in [0, 1]
    cumulative_mask: np.ndarray  # (1, S, S) float32 in {0, 1}


@dataclass
class Episode:
    bin_id: int
    appearance: BinAppearance
    events: list[DepositEvent] = field(default_factory=list)


def _event_rng(master_seed: int, bin_id: int, seq: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, bin_id, seq])


def _appearance_rng(master_seed: int, bin_id: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, bin_id, 0, 0])


def _quantize(img: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid so in-memory values equal their stored bytes."""
    return (np.round(np.clip(img, 0.0, 1.0) * 255.0) / np.float32(255.0)).astype(np.float32)


def _sample_appearance(rng: np.random.Generator) -> BinAppearance:
    def muted(low, high):
        base = rng.uniform(low, high)
        return tuple(float(np.clip(base + rng.uniform(-0.05, 0.05), 0.0, 1.0)) for _ in range(3))

    reflection = None
    if rng.random() < 0.3:
        reflection = (float(rng.uniform(0, 2 * np.pi)),
                      float(rng.uniform(0.6, 1.6)),
                      float(rng.uniform(0.15, 0.30)))
    bag = None
    if rng.random() < 0.3:
        bag = (float(rng.uniform(0.55, 0.72)), float(rng.uniform(0.05, 0.12)),
               float(rng.uniform(4.0, 9.0)), float(rng.uniform(4.0, 9.0)),
               float(rng.uniform(0, 2 * np.pi)), float(rng.uniform(0, 2 * np.pi)))
    return BinAppearance(
        floor_color=muted(0.22, 0.48),
        interior_color=muted(0.08, 0.26),
        rim_color=muted(0.35, 0.65),
        interior_kind="ellipse" if rng.random() < 0.5 else "rounded-rect",
        center=(float(rng.uniform(0.46, 0.54)), float(rng.uniform(0.46, 0.54))),
        half_extent=(float(rng.uniform(0.30, 0.42)), float(rng.uniform(0.30, 0.42))),
        rim_width=float(rng.uniform(0.02, 0.05)),
        reflection=reflection,
        bag=bag,
    )


def _region_mask(kind: str, yy, xx, cy, cx, ay, ax) -> np.ndarray:
    dy = yy - cy
    dx = xx - cx
    if kind == "ellipse":
        return (dy / ay) ** 2 + (dx / ax) ** 2 <= 1.0
    r = 0.25 * min(ay, ax)
    qy = np.maximum(np.abs(dy) - (ay - r), 0.0)
    qx = np.maximum(np.abs(dx) - (ax - r), 0.0)
    return qy ** 2 + qx ** 2 <= r ** 2


def _render_bin(app: BinAppearance, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Initial empty-bin image and the boolean interior region."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    cy, cx = app.center[0] * size, app.center[1] * size
    ay, ax = app.half_extent[0] * size, app.half_extent[1] * size
    rim = app.rim_width * size

    img = np.empty((3, size, size), dtype=np.float64)
    shade = 1.0 + 0.12 * (yy / size - 0.5)
    for c in range(3):
        img[c] = app.floor_color[c] * shade

    outer = _region_mask(app.interior_kind, yy, xx, cy, cx, ay + rim, ax + rim)
    interior = _region_mask(app.interior_kind, yy, xx, cy, cx, ay, ax)
    rim_mask = outer & ~interior
    for c in range(3):
        img[c][rim_mask] = app.rim_color[c]
        img[c][interior] = app.interior_color[c]

    if app.bag is not None:
        grey, amp, f1, f2, p1, p2 = app.bag
        crinkle = grey + amp * 0.5 * (np.sin(2 * np.pi * f1 * xx / size + p1)
                                      + np.sin(2 * np.pi * f2 * (xx + yy) / size + p2))
        for c in range(3):
            img[c][interior] = crinkle[interior]

    if app.reflection is not None:
        angle0, span, strength = app.reflection
        inner = _region_mask(app.interior_kind, yy, xx, cy, cx, ay * 0.82, ax * 0.82)
        band = interior & ~inner
        theta = np.arctan2(yy - cy, xx - cx)
        diff = np.angle(np.exp(1j * (theta - angle0)))
        band &= np.abs(diff) <= span / 2
        for c in range(3):
            img[c][band] = np.clip(img[c][band] + strength, 0.0, 1.0)

    return _quantize(img), interior


def _erode4(mask: np.ndarray) -> np.ndarray:
    er = mask.copy()
    er[1:, :] &= mask[:-1, :]
    er[:-1, :] &= mask[1:, :]
    er[:, 1:] &= mask[:, :-1]
    er[:, :-1] &= mask[:, 1:]
    return er


def _polygon_mask(yy, xx, verts: np.ndarray) -> np.ndarray:
    inside = np.zeros(yy.shape, dtype=bool)
    n = len(verts)
    for i in range(n):
        y0, x0 = verts[i]
        y1, x1 = verts[(i + 1) % n]
        crosses = (y0 > yy) != (y1 > yy)
        denom = (y1 - y0) if y1 != y0 else 1e-12
        x_at = (x1 - x0) * (yy - y0) / denom + x0
        inside ^= crosses & (xx < x_at)
    return inside


def _item_mask(rng: np.random.Generator, style: ClassStyle, size: int,
               interior: np.ndarray, yy, xx) -> np.ndarray:
    """Footprint of a new item, clipped to the bin interior.

    Draws are retried until the visible area clears the minimum; the
    largest candidate wins if no draw does.
    """
    min_area = max(int(0.013 * size * size), 16)
    interior_coords = np.argwhere(interior)
    best = None
    best_area = -1
    for _ in range(25):
        cy, cx = interior_coords[rng.integers(len(interior_coords))]
        if style.shape == "ellipse":
            a = rng.uniform(0.11, 0.22) * size
            b = rng.uniform(0.11, 0.22) * size
            theta = rng.uniform(0, np.pi)
            dy, dx = yy - cy, xx - cx
            u = np.cos(theta) * dx + np.sin(theta) * dy
            v = -np.sin(theta) * dx + np.cos(theta) * dy
            mask = (u / a) ** 2 + (v / b) ** 2 <= 1.0
        elif style.shape == "polygon":
            k = int(rng.integers(5, 9))
            angles = np.sort(rng.uniform(0, 2 * np.pi, size=k))
            radii = rng.uniform(0.11, 0.23, size=k) * size
            verts = np.stack([cy + radii * np.sin(angles), cx + radii * np.cos(angles)], axis=1)
            mask = _polygon_mask(yy, xx, verts)
        else:  # scatter: a loose pile of small blobs
            count = int(rng.integers(10, 19))
            spread = rng.uniform(0.10, 0.17) * size
            mask = np.zeros((size, size), dtype=bool)
            for _ in range(count):
                oy = cy + rng.normal(0, spread)
                ox = cx + rng.normal(0, spread)
                r = rng.uniform(0.025, 0.055) * size
                mask |= (yy - oy) ** 2 + (xx - ox) ** 2 <= r ** 2
        mask &= interior
        area = int(mask.sum())
        if area >= min_area:
            return mask
        if area > best_area:
            best, best_area = mask, area
    return best


def _texture_item(rng: np.random.Generator, style: ClassStyle, size: int,
                  mask: np.ndarray, yy, xx) -> np.ndarray:
    freq, orient, amp = style.texture_params
    base = np.asarray(style.base_color, dtype=np.float64)[:, None, None]
    if style.texture == "speckle":
        factor = 1.0 + amp * rng.uniform(-1.0, 1.0, size=(size, size))
    elif style.texture == "stripe":
        proj = (np.cos(orient) * xx + np.sin(orient) * yy) / size
        factor = 1.0 + amp * np.sin(2 * np.pi * freq * proj + rng.uniform(0, 2 * np.pi))
    elif style.texture == "blob-cluster":
        factor = np.ones((size, size))
        coords = np.argwhere(mask)
        for i in range(4):
            sy, sx = coords[rng.integers(len(coords))]
            sigma = rng.uniform(0.03, 0.08) * size
            bump = np.exp(-((yy - sy) ** 2 + (xx - sx) ** 2) / (2 * sigma ** 2))
            factor += (amp if i % 2 == 0 else -amp) * bump
    else:  # gradient
        proj = (np.cos(orient) * xx + np.sin(orient) * yy) / size
        factor = 1.0 + 2 * amp * (proj - proj[mask].mean())
    tex = np.clip(base * factor[None, :, :], 0.02, 1.0)
    edge = mask & ~_erode4(mask)
    tex[:, edge] *= 0.72
    return tex


def _perturb_surface(rng: np.random.Generator, img: np.ndarray, waste: np.ndarray) -> np.ndarray:
    """Slight appearance change of already-deposited waste pixels."""
    out = img.copy()
    n = int(waste.sum())
    if n:
        jitter = 1.0 + rng.normal(0.0, 0.02, size=(3, n))
        tint = rng.normal(0.0, 0.01, size=(3, 1))
        out[:, waste] = np.clip(out[:, waste] * jitter + tint, 0.0, 1.0)
    return out


def gen_episode(master_seed: int, bin_id: int, num_deposits: int, class_count: int,
                image_size: int) -> Episode:
    """One bin's deposit sequence; bit-identical for identical arguments."""
    if num_deposits < 1:
        raise ValueError("num_deposits must be >= 1")
    styles = class_styles(class_count)
    appearance = _sample_appearance(_appearance_rng(master_seed, bin_id))
    img, interior = _render_bin(appearance, image_size)
    yy, xx = np.mgrid[0:image_size, 0:image_size].astype(np.float64)

    episode = Episode(bin_id=bin_id, appearance=appearance)
    waste = np.zeros((image_size, image_size), dtype=bool)
    for seq in range(num_deposits):
        rng = _event_rng(master_seed, bin_id, seq)
        before = img
        surface = _perturb_surface(rng, img.astype(np.float64), waste)
        class_id = int(rng.integers(class_count))
        mask = _item_mask(rng, styles[class_id], image_size, interior, yy, xx)
        tex = _texture_item(rng, styles[class_id], image_size, mask, yy, xx)
        surface[:, mask] = tex[:, mask]
        img = _quantize(surface)
        waste = waste | mask
        episode.events.append(DepositEvent(
            bin_id=bin_id,
            seq=seq,
            class_id=class_id,
            before=before,
            after=img,
            cumulative_mask=waste[None].astype(np.float32),
        ))
    return episode


def gen_dataset(master_seed: int, num_episodes: int, deposits_per_episode: int,
                class_count: int, image_size: int, out_dir,
                split_ratio: tuple[float, float, float] = (0.7, 0.2, 0.1),
                workers: int = 1):
    """Generate episodes and persist them in the on-disk dataset format.

    Returns the DatasetManifest. Output bytes are independent of `workers`.
    """
    from .harness import dataio

    if num_episodes < 1:
        raise ValueError("num_episodes must be >= 1")
    class_styles(class_count)  # validate the class count before any work
    args = [(master_seed, bin_id, deposits_per_episode, class_count, image_size)
            for bin_id in range(num_episodes)]
    if workers > 1:
        import multiprocessing

        with multiprocessing.Pool(workers) as pool:
            episodes = pool.starmap(gen_episode, args)
    else:
        episodes = [gen_episode(*a) for a in args]

    return dataio.write_dataset(
        out_dir,
        episodes,
        seed=master_seed,
        class_count=class_count,
        image_size=image_size,
        split_ratio=split_ratio,
    )
