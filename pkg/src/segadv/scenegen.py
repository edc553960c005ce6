"""Deterministic synthetic street-scene generator.

Five classes: 0 background (sky/ground gradient), 1 road (bottom band),
2 building (rectangles, poles and statues), 3 car (boxes on the road),
4 person (upright figures drawn last, so at least one is always
visible). Shapes are drawn back to front, so the label map records the
true occlusion order.

Person figures carry a checkerboard micro-texture and stand in front of
a backing pole. The building class includes statues: figures with the
same geometry, color and texture but labeled building. The statues are
deliberate hard negatives -- they put genuinely person-looking pixels on
the other side of the class boundary, which keeps a trained model's
person evidence local and low-margin instead of letting it memorize
"this texture is always a person".

All geometry is sampled with integer draws from a splitmix64-keyed
counter-based stream per (seed, index), so identical configs reproduce
identical scenes bit for bit.
"""

import os
from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .pngio import split_for_index, write_image_png, write_labels_png, write_manifest

NUM_CLASSES = 5
BACKGROUND_CLASS = 0
ROAD_CLASS = 1
BUILDING_CLASS = 2
CAR_CLASS = 3
PERSON_CLASS = 4

# Display palette for label visualizations (not used for training).
LABEL_COLORS = np.array([
    [135, 170, 210],   # background
    [90, 90, 95],      # road
    [160, 90, 70],     # building
    [230, 200, 60],    # car
    [240, 100, 70],    # person
], dtype=np.uint8)

_FIGURE_COLOR = (165, 92, 66)

_M64 = (1 << 64) - 1


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return state, (z ^ (z >> 31)) & _M64


def scene_rng(seed, index, salt=0):
    """Counter-based generator keyed by splitmix64 over (seed, index, salt)."""
    state = seed & _M64
    state, _ = _splitmix64(state ^ (index & _M64))
    state, k0 = _splitmix64(state ^ (salt & _M64))
    _, k1 = _splitmix64(state)
    return np.random.Generator(np.random.Philox(key=(k0 << 64) | k1))


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 64
    rng_seed: int = 0
    num_classes: int = NUM_CLASSES
    noise_sigma: float = 4.0
    texture_amp: float = 10.0

    def __post_init__(self):
        if self.height % 4 or self.width % 4:
            raise ShapeError(
                f"scene size {self.height}x{self.width} must be divisible by 4"
            )


@dataclass
class Scene:
    image: np.ndarray   # (3,H,W) float32 in [0,255]
    labels: np.ndarray  # (H,W) int64
    seed: int
    index: int


def _fill_rect(image, labels, y0, y1, x0, x1, color, cls):
    h, w = labels.shape
    y0, y1 = max(y0, 0), min(y1, h)
    x0, x1 = max(x0, 0), min(x1, w)
    if y0 >= y1 or x0 >= x1:
        return
    image[:, y0:y1, x0:x1] = color[:, None, None]
    labels[y0:y1, x0:x1] = cls


def _fill_ellipse(image, labels, cy, cx, ry, rx, color, cls):
    h, w = labels.shape
    yy, xx = np.ogrid[:h, :w]
    mask = (yy - cy) ** 2 * rx * rx + (xx - cx) ** 2 * ry * ry <= ry * ry * rx * rx
    image[:, mask] = color[:, None]
    labels[mask] = cls


def _jittered(rng, base):
    color = np.asarray(base, dtype=np.int64) + rng.integers(-20, 21, size=3)
    return np.clip(color, 0, 255).astype(np.float32)


def _add_checker(image, mask, amp):
    """Add a +/-amp checkerboard to the masked pixels of all channels."""
    h, w = mask.shape
    yy, xx = np.indices((h, w))
    checker = (((yy + xx) % 2) * 2 - 1).astype(np.float32) * amp
    image[:, mask] += checker[mask]


def _draw_figure(rng, image, labels, horizon, cls):
    """Upright figure (body rectangle plus head ellipse) on a backing pole.

    The pole is always building; `cls` labels the figure itself, which is
    how both persons and statues are drawn.
    """
    h, w = labels.shape
    bw = int(rng.integers(2, 4))
    bh = int(rng.integers(8, 15))
    feet = int(rng.integers(horizon, h - 1))
    cx = int(rng.integers(3, w - 3))
    pw = bw + 2
    ph = bh + int(rng.integers(5, 10))
    _fill_rect(image, labels, feet - ph, feet, cx - pw // 2,
               cx - pw // 2 + pw, _jittered(rng, _FIGURE_COLOR), BUILDING_CLASS)
    color = _jittered(rng, _FIGURE_COLOR)
    _fill_rect(image, labels, feet - bh, feet, cx - bw // 2,
               cx - bw // 2 + bw, color, cls)
    rh = int(rng.integers(2, 4))
    _fill_ellipse(image, labels, feet - bh - rh, cx, rh, 2, color, cls)


def _draw_scene(rng, config):
    h, w = config.height, config.width
    image = np.zeros((3, h, w), dtype=np.float32)
    labels = np.full((h, w), BACKGROUND_CLASS, dtype=np.int64)

    horizon = h * 5 // 8
    road_top = h - h // 4

    # Sky and ground gradients (background class).
    t = (np.arange(horizon) / max(horizon - 1, 1))[None, :, None]
    top = np.array([110, 160, 225], dtype=np.float32)[:, None, None]
    mid = np.array([190, 205, 230], dtype=np.float32)[:, None, None]
    image[:, :horizon] = top + (mid - top) * t
    t = (np.arange(h - horizon) / max(h - horizon - 1, 1))[None, :, None]
    g0 = np.array([95, 140, 75], dtype=np.float32)[:, None, None]
    g1 = np.array([118, 162, 92], dtype=np.float32)[:, None, None]
    image[:, horizon:] = g0 + (g1 - g0) * t

    # Buildings rise from between the horizon and the road.
    for _ in range(int(rng.integers(1, 4))):
        bw = int(rng.integers(10, 23))
        bh = int(rng.integers(14, 31))
        x0 = int(rng.integers(0, w - bw + 1))
        bottom = horizon + int(rng.integers(-2, h - horizon - 8))
        _fill_rect(image, labels, max(bottom - bh, 0), bottom, x0, x0 + bw,
                   _jittered(rng, (150, 80, 60)), BUILDING_CLASS)

    # Road band with per-row brightness stripes.
    road = _jittered(rng, (70, 70, 78))
    stripes = rng.integers(-10, 11, size=h - road_top).astype(np.float32)
    image[:, road_top:] = road[:, None, None] + stripes[None, :, None]
    labels[road_top:] = ROAD_CLASS

    # Free-standing poles (building class).
    for _ in range(int(rng.integers(1, 4))):
        pw = int(rng.integers(2, 4))
        ph = int(rng.integers(10, 21))
        base = int(rng.integers(horizon, h - 1))
        x0 = int(rng.integers(0, w - pw + 1))
        _fill_rect(image, labels, base - ph, base, x0, x0 + pw,
                   _jittered(rng, _FIGURE_COLOR), BUILDING_CLASS)

    # Statues: person-shaped hard negatives, labeled building.
    statue_mask = np.zeros((h, w), dtype=bool)
    for _ in range(int(rng.integers(1, 3))):
        before = labels.copy()
        _draw_figure(rng, image, labels, horizon, BUILDING_CLASS)
        statue_mask |= labels != before

    # Cars sit on the road.
    for _ in range(int(rng.integers(1, 4))):
        cw = int(rng.integers(9, 16))
        ch = int(rng.integers(5, 9))
        y0 = int(rng.integers(road_top, max(h - ch, road_top + 1)))
        x0 = int(rng.integers(0, w - cw + 1))
        color = _jittered(rng, (225, 195, 60))
        _fill_rect(image, labels, y0, y0 + ch, x0, x0 + cw, color, CAR_CLASS)
        cab_w = max(cw // 2, 2)
        _fill_rect(image, labels, y0 - ch // 2, y0, x0 + cw // 4,
                   x0 + cw // 4 + cab_w, color, CAR_CLASS)

    # Persons last: always at least partly visible.
    for _ in range(int(rng.integers(2, 5))):
        _draw_figure(rng, image, labels, horizon, PERSON_CLASS)

    textured = (labels == PERSON_CLASS) | (statue_mask & (labels == BUILDING_CLASS))
    _add_checker(image, textured, config.texture_amp)
    noise = rng.normal(0.0, config.noise_sigma, size=image.shape)
    image = np.clip(image + noise, 0.0, 255.0).astype(np.float32)
    return image, labels


def generate(config, index):
    """Deterministic function of (config.rng_seed, index).

    Retries with a fresh derived stream in the (theoretical) case that no
    person pixel survived drawing.
    """
    for attempt in range(16):
        rng = scene_rng(config.rng_seed, index, salt=attempt)
        image, labels = _draw_scene(rng, config)
        if (labels == PERSON_CLASS).any():
            return Scene(image=image, labels=labels, seed=config.rng_seed, index=index)
    raise RuntimeError(f"no person pixels after 16 attempts for index {index}")


def write_dataset(out_dir, config, count):
    """Generate `count` scenes to PNG pairs plus a manifest. Returns records."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for index in range(count):
        scene = generate(config, index)
        image_name = f"img_{index:05d}.png"
        label_name = f"lab_{index:05d}.png"
        write_image_png(scene.image, os.path.join(out_dir, image_name))
        write_labels_png(scene.labels, os.path.join(out_dir, label_name))
        records.append({
            "image_path": image_name,
            "label_path": label_name,
            "split": split_for_index(index),
        })
    write_manifest(records, os.path.join(out_dir, "manifest.json"))
    return records
