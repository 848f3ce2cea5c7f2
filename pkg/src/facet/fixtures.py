"""Synthetic facade datasets for tests, demos and benchmarks.

Windows are laid out on a jittered grid, one grid per image, with integer
vertex coordinates as a VIA annotator would record them.  The defaults
mirror the collected dataset: 100 images carrying 1540 windows.
"""

from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from facet.annotations import Dataset, ImageRecord, Region
from facet.geometry import Polygon, rasterize_crop
from facet.render import encode_png
from facet.rng import SplitMix64

WALL = (200, 190, 170)
GLASS = (60, 70, 80)


def _instance_counts(n_images: int, n_instances: int, rng: SplitMix64) -> list[int]:
    base, extra = divmod(n_instances, n_images)
    counts = [base + (i < extra) for i in range(n_images)]
    for _ in range(n_images):
        i, j = rng.below(n_images), rng.below(n_images)
        k = rng.below(4)
        if i != j and counts[i] - k >= 3:
            counts[i] -= k
            counts[j] += k
    return counts


def _windows(count: int, width: int, height: int, rng: SplitMix64) -> list[Polygon]:
    cols = max(1, math.ceil(math.sqrt(count * width / height)))
    rows = math.ceil(count / cols)
    cw, ch = width / cols, height / rows
    cells = list(range(rows * cols))
    rng.shuffle(cells)
    polys = []
    for cell in sorted(cells[:count]):
        r, c = divmod(cell, cols)
        fw, fh = rng.uniform(0.35, 0.7), rng.uniform(0.4, 0.75)
        w, h = max(3.0, cw * fw), max(3.0, ch * fh)
        x0 = c * cw + rng.uniform(0.05, 0.95 - fw) * cw
        y0 = r * ch + rng.uniform(0.05, 0.95 - fh) * ch
        skew = [rng.uniform(-2.0, 2.0) for _ in range(4)]
        pts = [
            (x0, y0 + skew[0]),
            (x0 + w, y0 + skew[1]),
            (x0 + w + skew[2], y0 + h),
            (x0 + skew[3], y0 + h),
        ]
        polys.append(Polygon(tuple(
            (float(min(max(round(x), 0), width)), float(min(max(round(y), 0), height))) for x, y in pts
        )))
    return polys


def facade_dataset(
    n_images: int = 100,
    n_instances: int | None = None,
    width: int = 1024,
    height: int = 1024,
    seed: int = 0,
) -> Dataset:
    """Resolved dataset with exactly ``n_instances`` windows.

    ``n_instances`` defaults to 15.4 windows per image, rounded.
    """
    if n_images <= 0:
        return Dataset()
    if n_instances is None:
        n_instances = round(15.4 * n_images)
    rng = SplitMix64(seed)
    counts = _instance_counts(n_images, n_instances, rng)
    images = []
    for i, count in enumerate(counts):
        regions = tuple(Region(p, {"class": "window"}) for p in _windows(count, width, height, rng))
        images.append(ImageRecord(f"facade_{i:03d}.png", 0, regions, width, height))
    return Dataset(tuple(images), ("window",))


def facade_image(im: ImageRecord) -> np.ndarray:
    px = np.empty((im.height, im.width, 3), dtype=np.uint8)
    px[:] = WALL
    for r in im.regions:
        ras = rasterize_crop(r.polygon, im.width, im.height)
        px[ras.y0:ras.y1, ras.x0:ras.x1][ras.bits] = GLASS
    return px


def write_images(d: Dataset, directory: str | Path) -> Dataset:
    """Write a PNG per image and return the dataset with real file sizes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    images = []
    for im in d.images:
        data = encode_png(facade_image(im))
        (directory / im.filename).write_bytes(data)
        images.append(replace(im, file_size=len(data)))
    return Dataset(tuple(images), d.class_names)


def unresolved(d: Dataset) -> Dataset:
    """Drop pixel dimensions, as a freshly parsed VIA file would have."""
    return Dataset(tuple(replace(im, width=0, height=0) for im in d.images), d.class_names)
