"""Report emission: sweep CSV, a dependency-free SVG chart with error
bars, and side-by-side qualitative panel strips.

The SVG is written directly with fixed decimal formatting so a given
report always produces identical bytes, which keeps golden-file tests
meaningful.
"""

import os

import numpy as np

from .errors import DataError
from .pngio import quantize_image, write_image_png
from .scenegen import LABEL_COLORS

CSV_HEADER = "epsilon,mean_fooled,std_fooled,mean_preserved,std_preserved,n_images"

_WIDTH, _HEIGHT = 640, 420
_ML, _MR, _MT, _MB = 60, 20, 30, 50
_FOOLED_COLOR = "#8b1a1a"     # dark red
_PRESERVED_COLOR = "#9a9a9a"  # light grey


def write_sweep_csv(report, path):
    lines = [CSV_HEADER]
    for row in report.rows:
        lines.append(
            f"{row.epsilon:.6f},{row.mean_fooled:.6f},{row.std_fooled:.6f},"
            f"{row.mean_preserved:.6f},{row.std_preserved:.6f},{row.n_images}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _xmap(eps, eps_min, eps_max):
    span = eps_max - eps_min or 1.0
    return _ML + (eps - eps_min) / span * (_WIDTH - _ML - _MR)


def _ymap(v):
    return _MT + (1.0 - v) * (_HEIGHT - _MT - _MB)


def _series(parts, rows, means, stds, color):
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(rows, (_ymap(m) for m in means)))
    parts.append(
        f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>'
    )
    for x, m, s in zip(rows, means, stds):
        y0, y1 = _ymap(min(m + s, 1.0)), _ymap(max(m - s, 0.0))
        parts.append(
            f'<line x1="{x:.2f}" y1="{y0:.2f}" x2="{x:.2f}" y2="{y1:.2f}" '
            f'stroke="{color}" stroke-width="1"/>'
        )
        for y in (y0, y1):
            parts.append(
                f'<line x1="{x - 3:.2f}" y1="{y:.2f}" x2="{x + 3:.2f}" y2="{y:.2f}" '
                f'stroke="{color}" stroke-width="1"/>'
            )
        parts.append(
            f'<circle cx="{x:.2f}" cy="{_ymap(m):.2f}" r="3" fill="{color}"/>'
        )


def write_sweep_svg(report, path, class_c=None):
    """Two series over epsilon with +/- 1 std error bars and a legend."""
    rows = report.rows
    eps = [r.epsilon for r in rows]
    eps_min, eps_max = min(eps), max(eps)
    xs = [_xmap(e, eps_min, eps_max) for e in eps]
    cls = "person" if class_c is None else str(class_c)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<line x1="{_ML}" y1="{_ymap(0.0):.2f}" x2="{_WIDTH - _MR}" y2="{_ymap(0.0):.2f}" stroke="black"/>',
        f'<line x1="{_ML}" y1="{_ymap(0.0):.2f}" x2="{_ML}" y2="{_ymap(1.0):.2f}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = _ymap(tick)
        parts.append(
            f'<line x1="{_ML - 4}" y1="{y:.2f}" x2="{_ML}" y2="{y:.2f}" stroke="black"/>'
        )
        parts.append(
            f'<text x="{_ML - 8}" y="{y + 4:.2f}" text-anchor="end">{tick:.2f}</text>'
        )
    for e, x in zip(eps, xs):
        y = _ymap(0.0)
        parts.append(
            f'<line x1="{x:.2f}" y1="{y:.2f}" x2="{x:.2f}" y2="{y + 4:.2f}" stroke="black"/>'
        )
        label = f"{e:g}"
        parts.append(
            f'<text x="{x:.2f}" y="{y + 18:.2f}" text-anchor="middle">{label}</text>'
        )
    parts.append(
        f'<text x="{(_ML + _WIDTH - _MR) / 2:.2f}" y="{_HEIGHT - 10}" '
        f'text-anchor="middle">epsilon</text>'
    )
    _series(parts, xs, [r.mean_fooled for r in rows], [r.std_fooled for r in rows],
            _FOOLED_COLOR)
    _series(parts, xs, [r.mean_preserved for r in rows], [r.std_preserved for r in rows],
            _PRESERVED_COLOR)
    lx, ly = _WIDTH - _MR - 220, _MT + 10
    for i, (color, text) in enumerate([
        (_FOOLED_COLOR, f"fooled (class {cls})"),
        (_PRESERVED_COLOR, "preserved (background)"),
    ]):
        y = ly + 18 * i
        parts.append(
            f'<line x1="{lx}" y1="{y:.2f}" x2="{lx + 24}" y2="{y:.2f}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{lx + 30}" y="{y + 4:.2f}">{text}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def emit_report(report, out_dir, class_c=None):
    """Write sweep.csv and sweep.svg for an aggregated sweep report."""
    if not report.rows:
        raise DataError("empty sweep report: nothing to emit")
    os.makedirs(out_dir, exist_ok=True)
    write_sweep_csv(report, os.path.join(out_dir, "sweep.csv"))
    write_sweep_svg(report, os.path.join(out_dir, "sweep.svg"), class_c=class_c)


def colorize_labels(labels):
    """(H,W) class indices -> (3,H,W) display colors."""
    return LABEL_COLORS[labels].transpose(2, 0, 1).astype(np.float32)


def diff_panel(pred_a, pred_b):
    """White where predictions agree, red where they differ."""
    agree = pred_a == pred_b
    out = np.empty((3,) + pred_a.shape, dtype=np.float32)
    out[:] = 255.0
    out[1][~agree] = 40.0
    out[2][~agree] = 40.0
    return out


def panel_strip(panels, gap=2):
    """Concatenate equally sized (3,H,W) panels horizontally with a gap."""
    h = panels[0].shape[1]
    spacer = np.full((3, h, gap), 255.0, dtype=np.float32)
    pieces = []
    for i, p in enumerate(panels):
        if i:
            pieces.append(spacer)
        pieces.append(p.astype(np.float32))
    return np.concatenate(pieces, axis=2)


def noise_panel(xi, amplification=8.0):
    """Amplified perturbation display: clamp(128 + amp * xi, 0, 255)."""
    return np.clip(128.0 + amplification * xi, 0.0, 255.0).astype(np.float32)


def write_panel_strip(path, original, adversarial, target, pred_orig, pred_adv):
    """Fig-style qualitative strip: original | adversarial | target |
    prediction on adversarial | prediction diff."""
    strip = panel_strip([
        quantize_image(original).astype(np.float32),
        quantize_image(adversarial).astype(np.float32),
        colorize_labels(target),
        colorize_labels(pred_adv),
        diff_panel(pred_orig, pred_adv),
    ])
    write_image_png(strip, path)
