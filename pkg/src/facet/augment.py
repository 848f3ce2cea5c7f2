"""Polygon-preserving augmentation: horizontal flips and rotation/shear.

Only annotation geometry is transformed.  Each augmented image also gets a
3x3 homogeneous matrix (row-major) in the transform sidecar, so a raster
pipeline can warp the pixels identically.

Coordinates are screen coordinates (y down).  A positive rotation angle is
counter-clockwise in math coordinates, which is clockwise on screen: with
the center at the origin, ``(1, 0)`` rotated by 90 degrees lands on ``(0, 1)``.
Shear is a unit-determinant x-shear, ``x' = x + tan(phi) * y``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import PurePosixPath
from typing import Any

import numpy as np

from facet.annotations import Dataset, ImageRecord, Region
from facet.geometry import Polygon, polygon_area
from facet.rng import SplitMix64

ROTATION_RANGE = (-45.0, 45.0)
SHEAR_RANGE = (-16.0, 16.0)
MIN_AREA = 1.0


@dataclass(frozen=True)
class AffineParams:
    rotation_deg: float = 0.0
    shear_deg: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)
    rotation_range: tuple[float, float] = field(default=ROTATION_RANGE, compare=False, repr=False)
    shear_range: tuple[float, float] = field(default=SHEAR_RANGE, compare=False, repr=False)

    def __post_init__(self) -> None:
        lo, hi = self.rotation_range
        if not lo <= self.rotation_deg <= hi:
            raise ValueError(f"rotation {self.rotation_deg} outside [{lo}, {hi}]")
        lo, hi = self.shear_range
        if not lo <= self.shear_deg <= hi:
            raise ValueError(f"shear {self.shear_deg} outside [{lo}, {hi}]")

    def matrix(self) -> np.ndarray:
        t = math.radians(self.rotation_deg)
        c, s = math.cos(t), math.sin(t)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        shear = np.array([[1.0, math.tan(math.radians(self.shear_deg)), 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        cx, cy = self.center
        to_origin = np.array([[1.0, 0.0, -cx], [0.0, 1.0, -cy], [0.0, 0.0, 1.0]])
        back = np.array([[1.0, 0.0, cx], [0.0, 1.0, cy], [0.0, 0.0, 1.0]])
        return back @ rot @ shear @ to_origin


def flip_matrix(image_width: float) -> np.ndarray:
    return np.array([[-1.0, 0.0, float(image_width)], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])


def transform_polygon(p: Polygon, m: np.ndarray) -> Polygon:
    pts = p.as_array()
    out = pts @ m[:2, :2].T + m[:2, 2]
    return Polygon.from_array(out)


def fliplr_polygon(p: Polygon, image_width: float) -> Polygon:
    if image_width <= 0:
        raise ValueError("image width must be positive")
    return Polygon(tuple((image_width - x, y) for x, y in p.points))


def affine_polygon(p: Polygon, a: AffineParams) -> Polygon:
    return transform_polygon(p, a.matrix())


@dataclass(frozen=True)
class AugmentItem:
    image_index: int
    copy: int
    fliplr: bool = False
    affine: AffineParams | None = None

    def descriptor(self) -> str:
        parts = [f"aug{self.copy}"]
        if self.fliplr:
            parts.append("fliplr")
        if self.affine is not None:
            parts.append(f"rot{self.affine.rotation_deg:+.3f}")
            parts.append(f"shear{self.affine.shear_deg:+.3f}")
        return "_".join(parts)

    def op(self) -> str:
        ops = (["fliplr"] if self.fliplr else []) + (["affine"] if self.affine is not None else [])
        return "+".join(ops) or "identity"


@dataclass(frozen=True)
class AugmentPlan:
    seed: int
    n_images: int
    items: tuple[AugmentItem, ...]


@dataclass
class AugmentResult:
    dataset: Dataset
    transforms: list[dict[str, Any]]
    clamped_vertices: int = 0
    dropped_polygons: int = 0


def _image_center(im: ImageRecord) -> tuple[float, float]:
    if im.resolved:
        return (im.width / 2.0, im.height / 2.0)
    pts = [pt for r in im.regions for pt in r.polygon.points]
    if not pts:
        return (0.0, 0.0)
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    return ((min(xs) + max(xs)) / 2.0, (min(ys) + max(ys)) / 2.0)


def plan_augmentation(
    d: Dataset,
    seed: int,
    per_image_copies: int = 1,
    rotation_range: tuple[float, float] = ROTATION_RANGE,
    shear_range: tuple[float, float] = SHEAR_RANGE,
) -> AugmentPlan:
    """Sample a flip (p = 0.5) and uniform rotation/shear per image copy.

    Draw order per item is fixed (flip, rotation, shear) so a plan depends
    only on the seed, the image count and the copy count.  Affine centers
    are image centers (or the annotation extent center if unresolved).
    """
    if per_image_copies < 1:
        raise ValueError("per_image_copies must be >= 1")
    rng = SplitMix64(seed)
    items = []
    for i, im in enumerate(d.images):
        center = _image_center(im)
        for c in range(per_image_copies):
            flip = rng.random() < 0.5
            rot = rng.uniform(*rotation_range)
            shear = rng.uniform(*shear_range)
            items.append(AugmentItem(i, c, flip, AffineParams(rot, shear, center, rotation_range, shear_range)))
    return AugmentPlan(seed, len(d), tuple(items))


def _clamp(p: Polygon, w: int, h: int) -> tuple[Polygon, int]:
    arr = p.as_array()
    clamped = np.clip(arr, [0.0, 0.0], [float(w), float(h)])
    moved = int(np.count_nonzero(np.any(clamped != arr, axis=1)))
    return (Polygon.from_array(clamped) if moved else p), moved


def item_matrix(item: AugmentItem, im: ImageRecord) -> np.ndarray:
    m = np.eye(3)
    if item.fliplr:
        if im.resolved:
            width = float(im.width)
        else:
            # unknown canvas: mirror about the annotation extent instead
            xs = [x for r in im.regions for x in r.polygon.xs]
            width = max(xs, default=0.0) + min(xs, default=0.0)
        m = flip_matrix(width) @ m
    if item.affine is not None:
        m = item.affine.matrix() @ m
    return m


def apply_plan(d: Dataset, plan: AugmentPlan) -> AugmentResult:
    """Materialize a plan; polygons under 1 px^2 after clamping are dropped."""
    if plan.n_images != len(d) or any(not 0 <= it.image_index < len(d) for it in plan.items):
        raise ValueError(f"plan was built for {plan.n_images} images, dataset has {len(d)}")
    images = []
    transforms = []
    clamped = dropped = 0
    for item in plan.items:
        im = d.images[item.image_index]
        m = item_matrix(item, im)
        regions = []
        for r in im.regions:
            if item.fliplr and item.affine is None and im.resolved:
                p = fliplr_polygon(r.polygon, im.width)
            else:
                p = transform_polygon(r.polygon, m)
            if im.resolved:
                p, moved = _clamp(p, im.width, im.height)
                clamped += moved
            if polygon_area(p) < MIN_AREA:
                dropped += 1
                continue
            regions.append(Region(p, dict(r.attributes)))
        path = PurePosixPath(im.filename)
        name = str(path.with_name(f"{path.stem}__{item.descriptor()}{path.suffix}"))
        images.append(replace(im, filename=name, regions=tuple(regions)))
        transforms.append({
            "filename": name,
            "source": im.filename,
            "op": item.op(),
            "matrix": [float(v) for v in m.reshape(-1)],
        })
    return AugmentResult(Dataset(tuple(images), d.class_names), transforms, clamped, dropped)


def write_transforms(transforms: list[dict[str, Any]]) -> str:
    return json.dumps(transforms, indent=1)
