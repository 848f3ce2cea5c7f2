"""Polygon, box and mask primitives.

Conventions used throughout the package:

* coordinates are continuous pixels, x to the right and y downward;
* boxes are ``(x1, y1, x2, y2)`` corners and ``area = (x2 - x1) * (y2 - y1)``
  with no ``+1``;
* pixel ``(i, j)`` (column, row) belongs to a polygon iff its center
  ``(i + 0.5, j + 0.5)`` is inside under the even-odd rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class Polygon:
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if len(pts) < 3:
            raise ValueError(f"polygon needs at least 3 vertices, got {len(pts)}")
        if not all(math.isfinite(v) for pt in pts for v in pt):
            raise ValueError("polygon has non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_xy(cls, xs: Sequence[float], ys: Sequence[float]) -> "Polygon":
        if len(xs) != len(ys):
            raise ValueError(f"x/y length mismatch ({len(xs)} vs {len(ys)})")
        return cls(tuple(zip(xs, ys)))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Polygon":
        return cls(tuple((float(x), float(y)) for x, y in np.asarray(arr, dtype=float)))

    @property
    def xs(self) -> list[float]:
        return [p[0] for p in self.points]

    @property
    def ys(self) -> list[float]:
        return [p[1] for p in self.points]

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=float)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class BBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"invalid box {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + 0.5 * self.width, self.y1 + 0.5 * self.height)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def to_polygon(self) -> Polygon:
        return Polygon(((self.x1, self.y1), (self.x2, self.y1), (self.x2, self.y2), (self.x1, self.y2)))


class BoxDelta(NamedTuple):
    dx: float
    dy: float
    dw: float
    dh: float


@dataclass(eq=False)
class BitMask:
    """Binary raster stored as a ``(height, width)`` bool array."""

    width: int
    height: int
    bits: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.height, self.width):
            raise ValueError(f"bits shape {self.bits.shape} != ({self.height}, {self.width})")

    @classmethod
    def zeros(cls, width: int, height: int) -> "BitMask":
        return cls(width, height, np.zeros((height, width), dtype=bool))

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BitMask):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and bool(
            np.array_equal(self.bits, other.bits)
        )


@dataclass(eq=False)
class SoftMask:
    side: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.side, self.side):
            raise ValueError(f"soft mask must be {self.side}x{self.side}")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("soft mask values must lie in [0, 1]")


@dataclass(eq=False)
class Grid2D:
    """Feature grid, ``values`` shaped ``(height, width, channels)``."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3:
            raise ValueError("grid values must be 2-D or 3-D")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


# --------------------------------------------------------------------------
# polygons


def polygon_bbox(p: Polygon) -> BBox:
    xs, ys = p.xs, p.ys
    return BBox(min(xs), min(ys), max(xs), max(ys))


def polygon_area(p: Polygon) -> float:
    """Shoelace area, always non-negative."""
    pts = p.as_array()
    x, y = pts[:, 0], pts[:, 1]
    # center first: keeps the sum well conditioned far from the origin
    x = x - x.mean()
    y = y - y.mean()
    s = np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))
    return abs(float(s)) / 2.0


# --------------------------------------------------------------------------
# rasterization


@dataclass(eq=False)
class Raster:
    """A binary mask cropped to its bounding pixel window on a canvas.

    ``bits[r, c]`` is canvas pixel ``(x0 + c, y0 + r)``.  Most instance masks
    are tiny next to the image, so evaluation works on these crops rather
    than full-canvas rasters.
    """

    x0: int
    y0: int
    bits: np.ndarray = field(repr=False)
    canvas: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        self.count = int(np.count_nonzero(self.bits))

    @property
    def x1(self) -> int:
        return self.x0 + self.bits.shape[1]

    @property
    def y1(self) -> int:
        return self.y0 + self.bits.shape[0]

    def bbox(self) -> BBox | None:
        """Tight pixel-extent box of the set pixels, or None when empty."""
        if self.count == 0:
            return None
        rows = np.flatnonzero(self.bits.any(axis=1))
        cols = np.flatnonzero(self.bits.any(axis=0))
        return BBox(self.x0 + cols[0], self.y0 + rows[0], self.x0 + cols[-1] + 1, self.y0 + rows[-1] + 1)

    def paste_into(self, canvas: np.ndarray) -> None:
        """OR this raster into a full ``(height, width)`` bool canvas."""
        canvas[self.y0:self.y1, self.x0:self.x1] |= self.bits

    def to_bitmask(self) -> BitMask:
        w, h = self.canvas
        out = np.zeros((h, w), dtype=bool)
        self.paste_into(out)
        return BitMask(w, h, out)

    def intersection(self, other: "Raster") -> int:
        ix0, iy0 = max(self.x0, other.x0), max(self.y0, other.y0)
        ix1, iy1 = min(self.x1, other.x1), min(self.y1, other.y1)
        if ix0 >= ix1 or iy0 >= iy1:
            return 0
        a = self.bits[iy0 - self.y0:iy1 - self.y0, ix0 - self.x0:ix1 - self.x0]
        b = other.bits[iy0 - other.y0:iy1 - other.y0, ix0 - other.x0:ix1 - other.x0]
        return int(np.count_nonzero(a & b))

    def iou(self, other: "Raster") -> float:
        inter = self.intersection(other)
        union = self.count + other.count - inter
        return inter / union if union else 0.0


def _center_range(lo: float, hi: float, n: int) -> tuple[int, int]:
    """Half-open index range of pixels whose centers may fall in [lo, hi]."""
    start = max(0, math.floor(lo - 0.5))
    stop = min(n, math.ceil(hi - 0.5) + 1)
    return start, max(start, stop)


def rasterize_crop(p: Polygon, width: int, height: int) -> Raster:
    """Scanline even-odd fill restricted to the polygon's pixel window."""
    if width <= 0 or height <= 0:
        raise ValueError("canvas dimensions must be positive")
    pts = p.as_array()
    c0, c1 = _center_range(pts[:, 0].min(), pts[:, 0].max(), width)
    r0, r1 = _center_range(pts[:, 1].min(), pts[:, 1].max(), height)
    if c0 >= c1 or r0 >= r1:
        return Raster(min(c0, width), min(r0, height), np.zeros((0, 0), dtype=bool), (width, height))

    ys = np.arange(r0, r1, dtype=float) + 0.5
    centers = np.arange(c0, c1, dtype=float) + 0.5
    xi, yi = pts[:, 0], pts[:, 1]
    xj, yj = np.roll(xi, 1), np.roll(yi, 1)

    # crossings of every edge with every scanline, half-open in y
    y = ys[:, None]
    crosses = (yi > y) != (yj > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = (xj - xi) * (y - yi) / (yj - yi) + xi
    xs = np.where(crosses, xs, np.inf)
    xs.sort(axis=1)
    n_cross = crosses.sum(axis=1)

    # spans [x_2m, x_2m+1) of sorted crossings; pixel in span iff x_2m <= center < x_2m+1
    max_pairs = int(n_cross.max()) // 2
    diff = np.zeros((len(ys), len(centers) + 1), dtype=np.int32)
    for m in range(max_pairs):
        rows = np.flatnonzero(n_cross >= 2 * m + 2)
        start = np.searchsorted(centers, xs[rows, 2 * m], side="left")
        stop = np.searchsorted(centers, xs[rows, 2 * m + 1], side="left")
        np.add.at(diff, (rows, start), 1)
        np.add.at(diff, (rows, stop), -1)
    bits = np.cumsum(diff[:, :-1], axis=1) > 0
    return Raster(c0, r0, bits, (width, height))


def rasterize(p: Polygon, width: int, height: int) -> BitMask:
    return rasterize_crop(p, width, height).to_bitmask()


# --------------------------------------------------------------------------
# overlap


def bbox_iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if iw > 0 and ih > 0 else 0.0
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def box_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of ``(N, 4)`` and ``(M, 4)`` corner boxes."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, inter / union, 0.0)


def mask_iou(a: BitMask, b: BitMask) -> float:
    if (a.width, a.height) != (b.width, b.height):
        raise ValueError(f"mask size mismatch: {a.width}x{a.height} vs {b.width}x{b.height}")
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 0.0
    return np.count_nonzero(a.bits & b.bits) / union


# --------------------------------------------------------------------------
# box deltas


def encode_delta(anchor: BBox, gt: BBox) -> BoxDelta:
    if anchor.width <= 0 or anchor.height <= 0:
        raise ValueError("anchor must have positive size")
    if gt.width <= 0 or gt.height <= 0:
        raise ValueError("target box must have positive size")
    (acx, acy), (gcx, gcy) = anchor.center, gt.center
    return BoxDelta(
        (gcx - acx) / anchor.width,
        (gcy - acy) / anchor.height,
        math.log(gt.width / anchor.width),
        math.log(gt.height / anchor.height),
    )


def decode_delta(anchor: BBox, d: BoxDelta) -> BBox:
    if anchor.width <= 0 or anchor.height <= 0:
        raise ValueError("anchor must have positive size")
    acx, acy = anchor.center
    cx = acx + d.dx * anchor.width
    cy = acy + d.dy * anchor.height
    w = anchor.width * math.exp(d.dw)
    h = anchor.height * math.exp(d.dh)
    return BBox(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)


def decode_deltas(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Vectorized :func:`decode_delta` over ``(N, 4)`` arrays."""
    anchors = np.asarray(anchors, dtype=float).reshape(-1, 4)
    deltas = np.asarray(deltas, dtype=float).reshape(-1, 4)
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    if np.any(aw <= 0) or np.any(ah <= 0):
        raise ValueError("anchors must have positive size")
    cx = anchors[:, 0] + 0.5 * aw + deltas[:, 0] * aw
    cy = anchors[:, 1] + 0.5 * ah + deltas[:, 1] * ah
    w = aw * np.exp(deltas[:, 2])
    h = ah * np.exp(deltas[:, 3])
    return np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)


# --------------------------------------------------------------------------
# mask scaling


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic ``(n_out, n_in)`` matrix of fractional bin overlaps."""
    edges = np.arange(n_out + 1) * (n_in / n_out)
    lo, hi = edges[:-1, None], edges[1:, None]
    src = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, src + 1) - np.maximum(lo, src), 0.0, None)
    return overlap / overlap.sum(axis=1, keepdims=True)


def mask_down(m: BitMask, side: int = 28) -> SoftMask:
    """Area-average a binary mask into a ``side x side`` soft mask."""
    if m.width <= 0 or m.height <= 0:
        raise ValueError("cannot downscale an empty canvas")
    wy = _area_weights(m.height, side)
    wx = _area_weights(m.width, side)
    values = wy @ m.bits.astype(float) @ wx.T
    return SoftMask(side, np.clip(values, 0.0, 1.0))


def _bilinear_axis(n_src: int, n_dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, pos - lo


def mask_up(s: SoftMask, box: BBox, threshold: float = 0.5) -> BitMask:
    """Bilinearly resample a soft mask onto the box's integer pixel extent.

    The returned mask covers columns ``floor(x1)..ceil(x2)`` and rows
    ``floor(y1)..ceil(y2)`` of the image; pixels with value >= ``threshold``
    are set.
    """
    w = math.ceil(box.x2) - math.floor(box.x1)
    h = math.ceil(box.y2) - math.floor(box.y1)
    if w <= 0 or h <= 0:
        raise ValueError("box has zero pixel area")
    ylo, yhi, fy = _bilinear_axis(s.side, h)
    xlo, xhi, fx = _bilinear_axis(s.side, w)
    v = s.values
    top = v[ylo][:, xlo] * (1 - fx) + v[ylo][:, xhi] * fx
    bottom = v[yhi][:, xlo] * (1 - fx) + v[yhi][:, xhi] * fx
    up = top * (1 - fy)[:, None] + bottom * fy[:, None]
    return BitMask(w, h, up >= threshold)


# --------------------------------------------------------------------------
# RoI pooling


def _round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def roi_max_pool(g: Grid2D, roi: BBox, out_h: int = 7, out_w: int = 7) -> Grid2D:
    """Max-pool ``roi`` into an ``out_h x out_w`` grid, per channel.

    The RoI is snapped to integer cells by rounding and clipped to the grid;
    bin edges are ``start + round(k * size / out)``.  Bins that end up empty
    output 0.
    """
    x0 = max(0, _round_half_up(roi.x1))
    x1 = min(g.width, _round_half_up(roi.x2))
    y0 = max(0, _round_half_up(roi.y1))
    y1 = min(g.height, _round_half_up(roi.y2))
    if x0 >= x1 or y0 >= y1:
        raise ValueError(f"roi {roi.as_tuple()} does not intersect the {g.width}x{g.height} grid")
    xe = [x0 + _round_half_up(k * (x1 - x0) / out_w) for k in range(out_w + 1)]
    ye = [y0 + _round_half_up(k * (y1 - y0) / out_h) for k in range(out_h + 1)]
    out = np.zeros((out_h, out_w, g.channels))
    for r in range(out_h):
        for c in range(out_w):
            cell = g.values[ye[r]:ye[r + 1], xe[c]:xe[c + 1]]
            if cell.size:
                out[r, c] = cell.max(axis=(0, 1))
    return Grid2D(out)


# --------------------------------------------------------------------------
# debug serialization


def write_pgm(m: BitMask, path: str | Path) -> None:
    header = f"P5\n{m.width} {m.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + (m.bits.astype(np.uint8) * 255).tobytes())


def read_pgm(path: str | Path) -> BitMask:
    """Read a binary (P5) 8-bit PGM; any nonzero sample is a set pixel."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError(f"{path}: 16-bit PGM not supported")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos + 1)
    return BitMask(width, height, pixels.reshape(height, width) > 0)


def softmask_to_csv(s: SoftMask) -> str:
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in s.values)


def softmask_from_csv(text: str) -> SoftMask:
    rows = [[float(v) for v in line.split(",")] for line in text.splitlines() if line.strip()]
    return SoftMask(len(rows), np.array(rows))


def union_mask(rasters: Iterable[Raster], width: int, height: int) -> np.ndarray:
    canvas = np.zeros((height, width), dtype=bool)
    for r in rasters:
        r.paste_into(canvas)
    return canvas
