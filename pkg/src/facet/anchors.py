"""Region-proposal primitives: anchor grids, labeling, refinement and NMS.

Anchor sets are ``(N, 4)`` float arrays of corner boxes.  Order is row-major
over feature cells, then scales, then ratios.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from facet.geometry import BBox, box_iou_matrix, decode_deltas


@dataclass(frozen=True)
class AnchorConfig:
    scales: tuple[float, ...] = (32.0, 64.0, 128.0)
    ratios: tuple[float, ...] = (0.5, 1.0, 2.0)
    stride: int = 32

    def __post_init__(self) -> None:
        if not self.scales or not self.ratios:
            raise ValueError("scales and ratios must be non-empty")
        if any(s <= 0 for s in self.scales) or any(r <= 0 for r in self.ratios):
            raise ValueError("scales and ratios must be positive")
        if self.stride <= 0:
            raise ValueError("stride must be positive")

    @property
    def k(self) -> int:
        return len(self.scales) * len(self.ratios)


class AnchorLabel(enum.IntEnum):
    IGNORE = -1
    BACKGROUND = 0
    FOREGROUND = 1


@dataclass
class AnchorAssignment:
    labels: np.ndarray
    gt_index: np.ndarray  # -1 unless foreground
    max_iou: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class Proposal:
    box: BBox
    score: float


def generate_anchors(cfg: AnchorConfig, fmap_w: int, fmap_h: int, image_w: int, image_h: int) -> np.ndarray:
    """``fmap_w * fmap_h * k`` anchors centered on stride-spaced cells.

    Anchors are not clipped to the image; ``image_w``/``image_h`` are only
    validated here.
    """
    if min(fmap_w, fmap_h, image_w, image_h) <= 0:
        raise ValueError("feature map and image dimensions must be positive")
    sizes = np.array([
        (s * math.sqrt(r), s / math.sqrt(r)) for s in cfg.scales for r in cfg.ratios
    ])
    cx = (np.arange(fmap_w) + 0.5) * cfg.stride
    cy = (np.arange(fmap_h) + 0.5) * cfg.stride
    gy, gx = np.meshgrid(cy, cx, indexing="ij")
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    c = centers[:, None, :]
    half = sizes[None, :, :] / 2.0
    boxes = np.concatenate([c - half, c + half], axis=2)
    return boxes.reshape(-1, 4)


def assign_anchors(
    anchors: np.ndarray,
    gt_boxes: np.ndarray,
    pos_iou: float = 0.7,
    neg_iou: float = 0.3,
) -> AnchorAssignment:
    """Label anchors foreground / background / ignore against ground truth.

    Foreground: IoU >= ``pos_iou`` with some box, or the best anchor for a
    box it overlaps at all (lowest index wins ties).  Background: best IoU
    below ``neg_iou``.  Everything else is ignored.
    """
    if not 0.0 <= neg_iou < pos_iou <= 1.0:
        raise ValueError("need 0 <= neg_iou < pos_iou <= 1")
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=float).reshape(-1, 4)
    n = len(anchors)
    if len(gt_boxes) == 0:
        return AnchorAssignment(
            np.full(n, AnchorLabel.BACKGROUND, dtype=np.int8), np.full(n, -1), np.zeros(n)
        )
    iou = box_iou_matrix(anchors, gt_boxes)
    best_gt = iou.argmax(axis=1)
    max_iou = iou[np.arange(n), best_gt]
    labels = np.full(n, AnchorLabel.IGNORE, dtype=np.int8)
    labels[max_iou < neg_iou] = AnchorLabel.BACKGROUND
    labels[max_iou >= pos_iou] = AnchorLabel.FOREGROUND
    for g in range(len(gt_boxes)):
        col = iou[:, g]
        if n and col.max() > 0:
            labels[int(col.argmax())] = AnchorLabel.FOREGROUND
    gt_index = np.where(labels == AnchorLabel.FOREGROUND, best_gt, -1)
    return AnchorAssignment(labels, gt_index, max_iou)


def nms(boxes: np.ndarray, scores: Sequence[float], iou_threshold: float = 0.5) -> list[int]:
    """Greedy NMS; a box is dropped iff its IoU with a kept box is > threshold.

    Visits boxes by descending score, lower index first on ties, and returns
    kept indices in visiting order.
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    scores = np.asarray(scores, dtype=float)
    if len(boxes) != len(scores):
        raise ValueError("boxes and scores differ in length")
    order = np.lexsort((np.arange(len(scores)), -scores))
    suppressed = np.zeros(len(boxes), dtype=bool)
    keep: list[int] = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        overlaps = box_iou_matrix(boxes[i], boxes)[0]
        suppressed |= overlaps > iou_threshold
    return keep


def clip_boxes(boxes: np.ndarray, image_w: float, image_h: float) -> np.ndarray:
    out = np.asarray(boxes, dtype=float).copy()
    out[:, [0, 2]] = np.clip(out[:, [0, 2]], 0.0, image_w)
    out[:, [1, 3]] = np.clip(out[:, [1, 3]], 0.0, image_h)
    return out


def refine_and_select(
    anchors: np.ndarray,
    deltas: np.ndarray,
    scores: Sequence[float],
    image_w: float,
    image_h: float,
    pre_nms_top_n: int = 6000,
    nms_t: float = 0.7,
    post_nms_top_n: int = 2000,
) -> list[Proposal]:
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 4)
    deltas = np.asarray(deltas, dtype=float).reshape(-1, 4)
    scores = np.asarray(scores, dtype=float)
    if not len(anchors) == len(deltas) == len(scores):
        raise ValueError(
            f"length mismatch: {len(anchors)} anchors, {len(deltas)} deltas, {len(scores)} scores"
        )
    boxes = clip_boxes(decode_deltas(anchors, deltas), image_w, image_h)
    top = np.lexsort((np.arange(len(scores)), -scores))[:pre_nms_top_n]
    kept = nms(boxes[top], scores[top], nms_t)[:post_nms_top_n]
    return [Proposal(BBox(*map(float, boxes[top[i]])), float(scores[top[i]])) for i in kept]


@dataclass(frozen=True)
class SquareResize:
    """Scale-then-zero-pad mapping of an image onto a square canvas."""

    scale: float
    pad_x: int
    pad_y: int
    side: int

    def apply(self, boxes: np.ndarray) -> np.ndarray:
        boxes = np.asarray(boxes, dtype=float).reshape(-1, 4) * self.scale
        return boxes + np.array([self.pad_x, self.pad_y, self.pad_x, self.pad_y], dtype=float)


def square_resize(width: int, height: int, max_dim: int = 1024, min_dim: int = 800) -> SquareResize:
    """Upscale so the short side reaches ``min_dim`` unless the long side
    would pass ``max_dim``, then pad evenly to ``max_dim`` squared."""
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    scale = max(1.0, min_dim / min(width, height))
    if round(max(width, height) * scale) > max_dim:
        scale = max_dim / max(width, height)
    w, h = round(width * scale), round(height * scale)
    return SquareResize(scale, (max_dim - w) // 2, (max_dim - h) // 2, max_dim)


def anchors_csv(anchors: np.ndarray, scores: np.ndarray | None = None, labels: np.ndarray | None = None) -> str:
    """``x1,y1,x2,y2,score,label`` rows; label is fg/bg/ignore or empty."""
    names = {AnchorLabel.FOREGROUND: "fg", AnchorLabel.BACKGROUND: "bg", AnchorLabel.IGNORE: "ignore"}
    lines = ["x1,y1,x2,y2,score,label"]
    for i, row in enumerate(np.asarray(anchors, dtype=float)):
        x1, y1, x2, y2 = map(float, row)
        score = "" if scores is None else repr(float(scores[i]))
        label = "" if labels is None else names[AnchorLabel(int(labels[i]))]
        lines.append(f"{x1!r},{y1!r},{x2!r},{y2!r},{score},{label}")
    return "\n".join(lines) + "\n"
