"""Haar-cascade face gate for generated images.

Classic Viola-Jones machinery: integral images give O(1) rectangle sums,
Haar features are weighted rectangle sums normalized by window contrast, and
an ordered stage list rejects windows early. Only evaluation lives here;
cascades are loaded from a JSON file format (or built by hand in tests),
never trained.

Geometry conventions: images are (H, W) grayscale arrays indexed [row=y,
col=x]; integral tables are indexed [x, y] with a zero border, so
``table[x][y]`` is the sum over the half-open box [0,x) x [0,y). Rectangle
coordinates are scaled then rounded to nearest; window sizes are
``floor(base * factor^i)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ConfigurationError, ContractError, GeometryError
from .ioutils import atomic_write_text

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass
class IntegralImage:
    width: int
    height: int
    table: np.ndarray  # (width+1, height+1) float64
    squared_table: np.ndarray


@dataclass
class HaarFeature:
    """2 to 4 weighted rectangles in base-window coordinates."""

    rectangles: list[tuple[int, int, int, int, float]]

    def __post_init__(self):
        if not 2 <= len(self.rectangles) <= 4:
            raise ConfigurationError(
                f"a feature holds 2-4 rectangles, got {len(self.rectangles)}"
            )


@dataclass
class WeakClassifier:
    feature: HaarFeature
    threshold: float
    left_value: float
    right_value: float


@dataclass
class CascadeStage:
    weak_classifiers: list[WeakClassifier]
    stage_threshold: float

    def __post_init__(self):
        if not self.weak_classifiers:
            raise ConfigurationError("a stage needs at least one weak classifier")


@dataclass
class Cascade:
    base_window: tuple[int, int]
    stages: list[CascadeStage]

    def __post_init__(self):
        if self.base_window[0] < 4 or self.base_window[1] < 4:
            raise ConfigurationError(f"base window must be at least 4x4, got {self.base_window}")


def integral_image(image: np.ndarray) -> IntegralImage:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] < 1 or image.shape[1] < 1:
        raise ContractError(f"expected a non-empty 2D grayscale image, got shape {image.shape}")
    h, w = image.shape
    table = np.zeros((w + 1, h + 1), dtype=np.float64)
    squared = np.zeros((w + 1, h + 1), dtype=np.float64)
    table[1:, 1:] = image.cumsum(axis=0).cumsum(axis=1).T
    squared[1:, 1:] = (image * image).cumsum(axis=0).cumsum(axis=1).T
    return IntegralImage(width=w, height=h, table=table, squared_table=squared)


def rect_sum(ii: IntegralImage, x: int, y: int, w: int, h: int, squared: bool = False) -> float:
    if w < 1 or h < 1:
        raise BoundsError(f"zero-area rectangle {w}x{h}")
    if x < 0 or y < 0 or x + w > ii.width or y + h > ii.height:
        raise BoundsError(
            f"rectangle ({x},{y},{w},{h}) outside {ii.width}x{ii.height} image"
        )
    t = ii.squared_table if squared else ii.table
    return float(t[x + w, y + h] - t[x, y + h] - t[x + w, y] + t[x, y])


def scale_rect(rect: tuple[int, int, int, int], scale: float) -> tuple[int, int, int, int]:
    x, y, w, h = rect
    return (
        int(round(x * scale)),
        int(round(y * scale)),
        int(round(w * scale)),
        int(round(h * scale)),
    )


def window_size(base_window: tuple[int, int], scale: float) -> tuple[int, int]:
    return int(math.floor(base_window[0] * scale)), int(math.floor(base_window[1] * scale))


def eval_feature(
    ii: IntegralImage,
    feature: HaarFeature,
    window: tuple[int, int, float],
    normalizer: float,
    base_window: tuple[int, int],
) -> float:
    """Weighted rectangle sums at the scaled window, contrast-normalized.

    The divisor ``normalizer * scale**2`` folds in the base-window area
    factor, so feature values are comparable across scales.
    """
    if normalizer <= 0.0:
        raise ContractError(f"normalizer must be positive, got {normalizer}")
    wx, wy, scale = window
    win_w, win_h = window_size(base_window, scale)
    total = 0.0
    for x, y, w, h, weight in feature.rectangles:
        sx, sy, sw, sh = scale_rect((x, y, w, h), scale)
        if sx < 0 or sy < 0 or sx + sw > win_w or sy + sh > win_h:
            raise GeometryError(
                f"rectangle ({x},{y},{w},{h}) scaled by {scale} escapes the "
                f"{win_w}x{win_h} window"
            )
        if sw >= 1 and sh >= 1:
            total += weight * rect_sum(ii, wx + sx, wy + sy, sw, sh)
    return total / (normalizer * scale * scale)


def window_normalizer(ii: IntegralImage, x: int, y: int, w: int, h: int) -> float:
    """Contrast normalizer sqrt(mean(v^2) - mean(v)^2); 1 for constant windows."""
    area = w * h
    mean = rect_sum(ii, x, y, w, h) / area
    mean_sq = rect_sum(ii, x, y, w, h, squared=True) / area
    variance = mean_sq - mean * mean
    if variance <= 0.0:
        return 1.0
    return math.sqrt(variance)


def eval_cascade_window(cascade: Cascade, ii: IntegralImage, window: tuple[int, int, float]) -> bool:
    """True iff every stage's vote sum reaches its threshold (vacuously true
    for a zero-stage cascade)."""
    wx, wy, scale = window
    win_w, win_h = window_size(cascade.base_window, scale)
    if wx < 0 or wy < 0 or wx + win_w > ii.width or wy + win_h > ii.height:
        raise BoundsError(
            f"window ({wx},{wy}) of size {win_w}x{win_h} outside {ii.width}x{ii.height} image"
        )
    normalizer = window_normalizer(ii, wx, wy, win_w, win_h)
    for stage in cascade.stages:
        votes = 0.0
        for weak in stage.weak_classifiers:
            value = eval_feature(ii, weak.feature, window, normalizer, cascade.base_window)
            votes += weak.left_value if value < weak.threshold else weak.right_value
        if votes < stage.stage_threshold:
            return False
    return True


def _box_iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def group_hits(
    hits: list[tuple[int, int, int, int]], min_neighbors: int
) -> list[tuple[int, int, int, int]]:
    """Greedy IoU >= 0.5 clustering against each group's seed box; groups with
    fewer than ``min_neighbors`` members are dropped and survivors are
    represented by their rounded mean box."""
    if min_neighbors <= 0:
        return sorted(hits)
    seeds: list[tuple[int, int, int, int]] = []
    members: list[list[tuple[int, int, int, int]]] = []
    for box in hits:
        for i, seed in enumerate(seeds):
            if _box_iou(box, seed) >= 0.5:
                members[i].append(box)
                break
        else:
            seeds.append(box)
            members.append([box])
    out = []
    for group in members:
        if len(group) < min_neighbors:
            continue
        arr = np.asarray(group, dtype=np.float64)
        out.append(tuple(int(v) for v in np.rint(arr.mean(axis=0))))
    return sorted(out)


def detect_faces(
    cascade: Cascade,
    image: np.ndarray,
    scale_factor: float = 1.25,
    step: int = 1,
    min_neighbors: int = 1,
) -> list[tuple[int, int, int, int]]:
    """Scan windows at sizes floor(base * factor^i) and return accepted boxes.

    Deterministic: scales ascend, positions scan row-major, groups form in
    scan order, and the result is sorted canonically.
    """
    if scale_factor <= 1.0:
        raise ContractError(f"scale_factor must exceed 1, got {scale_factor}")
    if step < 1:
        raise ContractError(f"step must be >= 1, got {step}")
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    bw, bh = cascade.base_window
    if w < bw or h < bh:
        return []
    ii = integral_image(image)
    hits: list[tuple[int, int, int, int]] = []
    level = 0
    seen_sizes: set[tuple[int, int]] = set()
    while True:
        scale = scale_factor**level
        win_w, win_h = window_size(cascade.base_window, scale)
        if win_w > w or win_h > h:
            break
        level += 1
        if (win_w, win_h) in seen_sizes:  # floor can repeat a size at low factors
            continue
        seen_sizes.add((win_w, win_h))
        for wy in range(0, h - win_h + 1, step):
            for wx in range(0, w - win_w + 1, step):
                if eval_cascade_window(cascade, ii, (wx, wy, scale)):
                    hits.append((wx, wy, win_w, win_h))
    return group_hits(hits, min_neighbors)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """(3, H, W) RGB in [0,1] -> (H, W) luma."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ContractError(f"expected a (3, H, W) image, got {image.shape}")
    r, g, b = GRAY_WEIGHTS
    return r * image[0] + g * image[1] + b * image[2]


@dataclass
class GateReport:
    pass_fraction: float
    passed: list[bool]


def gate_report(
    cascade: Cascade,
    images,
    scale_factor: float = 1.25,
    step: int = 1,
    min_neighbors: int = 1,
) -> GateReport:
    """Fraction of images with at least one detection, plus per-image verdicts."""
    data = np.asarray(images.data if hasattr(images, "data") else images, dtype=np.float64)
    if data.ndim != 4 or data.shape[0] == 0:
        raise ContractError(f"expected a non-empty (N, 3, H, W) batch, got {data.shape}")
    if data.min() < 0.0 or data.max() > 1.0:
        raise ContractError("gate input must lie in [0, 1]")
    passed = []
    for img in data:
        gray = to_grayscale(img)
        boxes = detect_faces(
            cascade, gray, scale_factor=scale_factor, step=step, min_neighbors=min_neighbors
        )
        passed.append(len(boxes) > 0)
    return GateReport(pass_fraction=sum(passed) / len(passed), passed=passed)


# ---------------------------------------------------------------------------
# JSON cascade files


def cascade_to_dict(cascade: Cascade) -> dict:
    return {
        "window": list(cascade.base_window),
        "stages": [
            {
                "threshold": stage.stage_threshold,
                "weak": [
                    {
                        "rects": [list(r) for r in weak.feature.rectangles],
                        "threshold": weak.threshold,
                        "left": weak.left_value,
                        "right": weak.right_value,
                    }
                    for weak in stage.weak_classifiers
                ],
            }
            for stage in cascade.stages
        ],
    }


def cascade_from_dict(payload: dict) -> Cascade:
    try:
        window = tuple(int(v) for v in payload["window"])
        stages = []
        for stage in payload["stages"]:
            weak = [
                WeakClassifier(
                    feature=HaarFeature(
                        rectangles=[
                            (int(r[0]), int(r[1]), int(r[2]), int(r[3]), float(r[4]))
                            for r in entry["rects"]
                        ]
                    ),
                    threshold=float(entry["threshold"]),
                    left_value=float(entry["left"]),
                    right_value=float(entry["right"]),
                )
                for entry in stage["weak"]
            ]
            stages.append(CascadeStage(weak_classifiers=weak, stage_threshold=float(stage["threshold"])))
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"malformed cascade JSON: {exc}") from exc
    if len(window) != 2:
        raise ConfigurationError(f"cascade window must be [w, h], got {window}")
    return Cascade(base_window=window, stages=stages)


def load_cascade(path: str) -> Cascade:
    with open(path, "r", encoding="utf-8") as fh:
        return cascade_from_dict(json.load(fh))


def save_cascade(cascade: Cascade, path: str) -> None:
    atomic_write_text(path, json.dumps(cascade_to_dict(cascade), indent=2) + "\n")
