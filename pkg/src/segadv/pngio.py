"""PNG and manifest I/O for images and label maps.

Images are 8-bit RGB PNGs; label maps are 8-bit grayscale PNGs whose pixel
value is the class index. Values out of class range are accepted at read
time and rejected by range-checking consumers. Image writing quantizes
with round-half-away-from-zero after clamping to [0, 255]; label round
trips are exact.
"""

import json
import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DataError, ShapeError


def quantize_image(image):
    """The on-disk pixel values for a real-valued image: clamp then
    round-half-away-from-zero to uint8."""
    clamped = np.clip(image, 0.0, 255.0)
    return np.floor(clamped.astype(np.float64) + 0.5).astype(np.uint8)


def write_image_png(image, path):
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeError(f"image must be (3,H,W), got {image.shape}")
    arr = quantize_image(image).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_image_png(path):
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise DataError(f"{path}: not a PNG file (format {img.format})")
            if img.mode != "RGB":
                raise DataError(
                    f"{path}: expected 8-bit RGB PNG, got mode {img.mode}"
                )
            arr = np.asarray(img)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"{path}: cannot read PNG: {exc}") from exc
    return arr.transpose(2, 0, 1).astype(np.float32)


def write_labels_png(labels, path):
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ShapeError(f"label map must be 2-D, got rank {labels.ndim}")
    if labels.min() < 0 or labels.max() > 255:
        raise DataError("label values must fit in 8 bits")
    Image.fromarray(labels.astype(np.uint8), mode="L").save(path, format="PNG")


def read_labels_png(path):
    try:
        with Image.open(path) as img:
            if img.format != "PNG":
                raise DataError(f"{path}: not a PNG file (format {img.format})")
            if img.mode != "L":
                raise DataError(
                    f"{path}: expected 8-bit grayscale PNG, got mode {img.mode}"
                )
            arr = np.asarray(img)
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"{path}: cannot read PNG: {exc}") from exc
    return arr.astype(np.int64)


def split_for_index(index):
    """Train/val split is a pure function of the scene index."""
    return "val" if index % 5 == 0 else "train"


def write_manifest(records, path):
    with open(path, "w") as fh:
        json.dump({"records": records}, fh, indent=2)
        fh.write("\n")


def read_manifest(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    records = doc.get("records")
    if not isinstance(records, list):
        raise DataError(f"{path}: missing 'records' list")
    for i, rec in enumerate(records):
        if not isinstance(rec, dict) or not {"image_path", "label_path", "split"} <= set(rec):
            raise DataError(f"{path}: record {i} missing required keys")
        if rec["split"] not in ("train", "val"):
            raise DataError(f"{path}: record {i} has unknown split {rec['split']!r}")
    return records


def load_split(manifest_path, split):
    """Load (image, labels) pairs for one split, paths relative to the manifest."""
    base = os.path.dirname(os.path.abspath(manifest_path))
    scenes = []
    for rec in read_manifest(manifest_path):
        if split != "all" and rec["split"] != split:
            continue
        image = read_image_png(os.path.join(base, rec["image_path"]))
        labels = read_labels_png(os.path.join(base, rec["label_path"]))
        scenes.append((image, labels))
    return scenes
