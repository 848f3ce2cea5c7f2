"""VIA polygon annotations: parsing, writing, splitting and summary stats.

Both VIA 1.x (``regions`` keyed by index) and VIA 2.x (``regions`` as a list,
optionally wrapped in a ``_via_img_metadata`` project file) are read.  Output
is always the 2.x flat form.  VIA stores file size but not pixel size, so
``width``/``height`` stay 0 until :func:`resolve_dimensions` fills them.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

from facet.geometry import Polygon
from facet.imagesize import ImageFormatError, sniff_file
from facet.rng import SplitMix64

DEFAULT_CLASS = "window"
CLASS_KEY = "class"
POLYGON_SHAPES = ("polygon", "polyline")


class AnnotationError(ValueError):
    """Raised with every problem found, not just the first."""

    def __init__(self, problems: Iterable[str]) -> None:
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class Region:
    polygon: Polygon
    attributes: Mapping[str, str] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.attributes.get(CLASS_KEY) or DEFAULT_CLASS


@dataclass(frozen=True)
class ImageRecord:
    filename: str
    file_size: int
    regions: tuple[Region, ...] = ()
    width: int = 0
    height: int = 0
    file_attributes: Mapping[str, Any] = field(default_factory=dict)

    @property
    def resolved(self) -> bool:
        return self.width > 0 and self.height > 0


@dataclass(frozen=True)
class Dataset:
    images: tuple[ImageRecord, ...] = ()
    class_names: tuple[str, ...] = (DEFAULT_CLASS,)

    def __post_init__(self) -> None:
        dupes = [n for n, c in Counter(im.filename for im in self.images).items() if c > 1]
        if dupes:
            raise AnnotationError(f"duplicate filename {n!r}" for n in dupes)

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.images[i] for i in indices), self.class_names)

    def by_filename(self) -> dict[str, ImageRecord]:
        return {im.filename: im for im in self.images}


@dataclass(frozen=True)
class DatasetStats:
    n_images: int
    n_instances: int
    mean_instances_per_image: float
    histogram: dict[int, int]

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_images": self.n_images,
            "n_instances": self.n_instances,
            "mean_instances_per_image": self.mean_instances_per_image,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }


@dataclass(frozen=True)
class FoldSet:
    seed: int
    k: int
    folds: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]

    def datasets(self, d: Dataset, i: int) -> tuple[Dataset, Dataset]:
        train, val = self.folds[i]
        return d.subset(train), d.subset(val)


# --------------------------------------------------------------------------
# VIA JSON


def _class_names(images: Iterable[ImageRecord]) -> tuple[str, ...]:
    labels = sorted({r.label for im in images for r in im.regions})
    return tuple(labels) or (DEFAULT_CLASS,)


def _attr_str(v: Any) -> str:
    return v if isinstance(v, str) else json.dumps(v, sort_keys=True)


def _parse_region(key: str, idx: Any, raw: Any, problems: list[str]) -> Region | None:
    where = f"{key}: region {idx}"
    if not isinstance(raw, dict):
        problems.append(f"{where}: not an object")
        return None
    shape = raw.get("shape_attributes") or {}
    name = shape.get("name")
    if name not in POLYGON_SHAPES:
        problems.append(f"{where}: unsupported shape {name!r}")
        return None
    xs, ys = shape.get("all_points_x"), shape.get("all_points_y")
    if not isinstance(xs, list) or not isinstance(ys, list):
        problems.append(f"{where}: missing all_points_x/all_points_y")
        return None
    if len(xs) != len(ys):
        problems.append(f"{where}: all_points_x has {len(xs)} values, all_points_y has {len(ys)}")
        return None
    if len(xs) < 3:
        problems.append(f"{where}: polygon has {len(xs)} points, need at least 3")
        return None
    try:
        polygon = Polygon.from_xy([float(v) for v in xs], [float(v) for v in ys])
    except (TypeError, ValueError) as exc:
        problems.append(f"{where}: {exc}")
        return None
    attrs = raw.get("region_attributes") or {}
    if not isinstance(attrs, dict):
        problems.append(f"{where}: region_attributes is not an object")
        return None
    return Region(polygon, {str(k): _attr_str(v) for k, v in attrs.items()})


def _region_items(raw: Any) -> list[tuple[Any, Any]]:
    if isinstance(raw, list):
        return list(enumerate(raw))
    if isinstance(raw, dict):
        def order(k: str) -> tuple[int, Any]:
            return (0, int(k)) if k.lstrip("-").isdigit() else (1, k)
        return [(k, raw[k]) for k in sorted(raw, key=order)]
    raise TypeError


def parse_via(text: str) -> Dataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationError([f"malformed JSON: {exc}"]) from exc
    if isinstance(doc, dict) and isinstance(doc.get("_via_img_metadata"), dict):
        doc = doc["_via_img_metadata"]
    if not isinstance(doc, dict):
        raise AnnotationError(["top level must be a JSON object"])

    problems: list[str] = []
    images: list[ImageRecord] = []
    for key, entry in doc.items():
        if not isinstance(entry, dict) or "filename" not in entry:
            problems.append(f"{key}: not an image entry")
            continue
        try:
            items = _region_items(entry.get("regions", []))
        except TypeError:
            problems.append(f"{key}: regions must be a list or object")
            continue
        regions = [_parse_region(key, i, r, problems) for i, r in items]
        size = entry.get("size", 0)
        try:
            size = int(size)
        except (TypeError, ValueError):
            problems.append(f"{key}: bad size {size!r}")
            continue
        images.append(ImageRecord(
            filename=str(entry["filename"]),
            file_size=size,
            regions=tuple(r for r in regions if r is not None),
            file_attributes=dict(entry.get("file_attributes") or {}),
        ))

    dupes = [n for n, c in Counter(im.filename for im in images).items() if c > 1]
    problems.extend(f"duplicate filename {n!r}" for n in dupes)
    if problems:
        raise AnnotationError(problems)
    return Dataset(tuple(images), _class_names(images))


def _num(v: float) -> float | int:
    return int(v) if float(v).is_integer() and abs(v) < 2**53 else v


def write_via(d: Dataset) -> str:
    out: dict[str, Any] = {}
    for im in d.images:
        out[f"{im.filename}{im.file_size}"] = {
            "filename": im.filename,
            "size": im.file_size,
            "regions": [
                {
                    "shape_attributes": {
                        "name": "polygon",
                        "all_points_x": [_num(x) for x in r.polygon.xs],
                        "all_points_y": [_num(y) for y in r.polygon.ys],
                    },
                    "region_attributes": dict(r.attributes),
                }
                for r in im.regions
            ],
            "file_attributes": dict(im.file_attributes),
        }
    return json.dumps(out)


def load_via(path: str | Path) -> Dataset:
    return parse_via(Path(path).read_text(encoding="utf-8"))


def save_via(d: Dataset, path: str | Path) -> None:
    Path(path).write_text(write_via(d), encoding="utf-8")


# --------------------------------------------------------------------------
# dimensions


def parse_manifest(text: str) -> dict[str, tuple[int, int]]:
    """Read a ``filename,width,height`` CSV (header row optional)."""
    dims: dict[str, tuple[int, int]] = {}
    for n, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or (n == 1 and row[0].strip().lower() == "filename"):
            continue
        if len(row) != 3:
            raise AnnotationError([f"manifest line {n}: expected filename,width,height"])
        try:
            w, h = int(row[1]), int(row[2])
        except ValueError:
            raise AnnotationError([f"manifest line {n}: width/height must be integers"]) from None
        if w <= 0 or h <= 0:
            raise AnnotationError([f"manifest line {n}: non-positive dimension"])
        dims[row[0].strip()] = (w, h)
    return dims


def out_of_bounds(d: Dataset) -> list[str]:
    """Describe every vertex lying outside its resolved image canvas."""
    problems = []
    for im in d.images:
        if not im.resolved:
            continue
        for ri, r in enumerate(im.regions):
            for vi, (x, y) in enumerate(r.polygon.points):
                if not (0 <= x <= im.width and 0 <= y <= im.height):
                    problems.append(
                        f"{im.filename}: region {ri} vertex {vi} ({x:g}, {y:g}) "
                        f"outside {im.width}x{im.height}"
                    )
    return problems


def clamp_to_canvas(d: Dataset) -> tuple[Dataset, int]:
    """Clamp vertices of resolved images into ``[0, w] x [0, h]``.

    Returns the new dataset and the number of vertices moved.
    """
    moved = 0
    images = []
    for im in d.images:
        if not im.resolved:
            images.append(im)
            continue
        regions = []
        for r in im.regions:
            pts = []
            for x, y in r.polygon.points:
                cx, cy = min(max(x, 0.0), im.width), min(max(y, 0.0), im.height)
                moved += (cx, cy) != (x, y)
                pts.append((cx, cy))
            regions.append(replace(r, polygon=Polygon(tuple(pts))))
        images.append(replace(im, regions=tuple(regions)))
    return Dataset(tuple(images), d.class_names), moved


def resolve_dimensions(
    d: Dataset,
    image_dir: str | Path | None,
    manifest: Mapping[str, tuple[int, int]] | None = None,
) -> tuple[Dataset, int]:
    """Fill width/height from the manifest or image headers, then clamp.

    Returns the resolved dataset and the clamp count.  Every missing or
    unreadable file is named in the raised error.
    """
    manifest = manifest or {}
    problems = []
    images = []
    for im in d.images:
        if im.filename in manifest:
            w, h = manifest[im.filename]
        elif image_dir is None:
            problems.append(f"{im.filename}: no manifest entry and no image directory")
            continue
        else:
            path = Path(image_dir) / im.filename
            if not path.is_file():
                problems.append(f"{im.filename}: missing file {path}")
                continue
            try:
                w, h = sniff_file(path)
            except ImageFormatError as exc:
                problems.append(f"{im.filename}: unreadable header ({exc})")
                continue
        images.append(replace(im, width=w, height=h))
    if problems:
        raise AnnotationError(problems)
    return clamp_to_canvas(Dataset(tuple(images), d.class_names))


# --------------------------------------------------------------------------
# splits and stats


def _round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def shuffled_indices(n: int, seed: int) -> list[int]:
    order = list(range(n))
    SplitMix64(seed).shuffle(order)
    return order


def split(d: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded train/validation split; both sides always non-empty.

    ``|val| = max(1, n - round(fraction * n))`` and ``|train| = n - |val|``.
    Each side keeps the input order of its images.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train fraction must be in (0, 1), got {train_fraction}")
    n = len(d)
    if n < 2:
        raise ValueError(f"need at least 2 images to split, got {n}")
    n_val = max(1, n - _round_half_up(train_fraction * n))
    n_train = n - n_val
    order = shuffled_indices(n, seed)
    return d.subset(sorted(order[:n_train])), d.subset(sorted(order[n_train:]))


def kfold(d: Dataset, k: int, seed: int) -> FoldSet:
    """Seeded k-fold partition; the first ``n % k`` folds get one extra image."""
    n = len(d)
    if not 2 <= k <= n:
        raise ValueError(f"k must be in [2, {n}], got {k}")
    order = shuffled_indices(n, seed)
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for i in range(k):
        size = base + (i < extra)
        val = set(order[start:start + size])
        start += size
        folds.append((tuple(j for j in range(n) if j not in val), tuple(sorted(val))))
    return FoldSet(seed, k, tuple(folds))


def stats(d: Dataset) -> DatasetStats:
    counts = [len(im.regions) for im in d.images]
    n, total = len(counts), sum(counts)
    return DatasetStats(n, total, total / n if n else 0.0, dict(sorted(Counter(counts).items())))
