"""Detection matching and the precision / recall / AP / pixel-accuracy stack.

Matching is greedy by descending score (input order on ties); each
detection takes the still-unmatched ground truth of the same class with the
highest IoU, and counts as a true positive iff that IoU >= the threshold.

AP is the exact area under the precision envelope (all-point
interpolation), computed on rational cumulative counts so that e.g. the
[TP, FP, TP] / 2-gt ranking gives exactly 5/6.  11- and 101-point sampled
variants exist for comparison with other tools.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Literal, Sequence

import numpy as np

from facet.annotations import DEFAULT_CLASS, Dataset, ImageRecord, Region
from facet.geometry import (
    BBox,
    BitMask,
    Polygon,
    Raster,
    bbox_iou,
    polygon_bbox,
    rasterize_crop,
    read_pgm,
)
from facet.rng import SplitMix64

IoUKind = Literal["mask", "box"]
APMode = Literal["per_image_mean", "dataset_wide"]
APMethod = Literal["all_point", "11_point", "101_point"]


class PredictionError(ValueError):
    def __init__(self, problems: Iterable[str]) -> None:
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnknownImageError(KeyError):
    def __init__(self, missing: Iterable[str]) -> None:
        self.missing = sorted(set(missing))
        super().__init__(f"predictions reference unknown images: {', '.join(self.missing)}")


@dataclass(frozen=True)
class Detection:
    image: str
    label: str
    score: float
    polygon: Polygon | None = None
    bbox: BBox | None = None
    mask: BitMask | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        n = sum(p is not None for p in (self.polygon, self.bbox, self.mask))
        if n != 1:
            raise ValueError("detection needs exactly one of polygon, bbox, mask")
        if self.bbox is not None and self.bbox.area <= 0:
            raise ValueError("degenerate bbox payload")
        if self.mask is not None and self.mask.count() == 0:
            raise ValueError("empty mask payload")


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.5
    iou_kind: IoUKind = "mask"
    score_threshold: float = 0.9
    ap_mode: APMode = "per_image_mean"
    ap_method: APMethod = "all_point"

    def __post_init__(self) -> None:
        for name in ("iou_threshold", "score_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.iou_kind not in ("mask", "box"):
            raise ValueError(f"unknown iou_kind {self.iou_kind!r}")
        if self.ap_mode not in ("per_image_mean", "dataset_wide"):
            raise ValueError(f"unknown ap_mode {self.ap_mode!r}")
        if self.ap_method not in ("all_point", "11_point", "101_point"):
            raise ValueError(f"unknown ap_method {self.ap_method!r}")


@dataclass(frozen=True)
class MatchCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass
class MatchResult:
    counts: MatchCounts
    order: list[int]  # detection indices, highest score first
    flags: list[bool]  # TP flag per entry of ``order``
    matched_gt: list[int]  # gt index per entry of ``order``, -1 if FP
    best_iou: list[float]  # best same-class IoU per detection (input order)
    ious: np.ndarray = field(repr=False)  # (n_det, n_gt), input order


@dataclass
class PRCurve:
    tp_cum: list[int]
    fp_cum: list[int]
    n_gt: int

    @property
    def precision(self) -> list[float]:
        return [tp / (tp + fp) for tp, fp in zip(self.tp_cum, self.fp_cum)]

    @property
    def recall(self) -> list[float]:
        return [tp / self.n_gt if self.n_gt else 0.0 for tp in self.tp_cum]

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.precision, self.recall))

    def __len__(self) -> int:
        return len(self.tp_cum)


@dataclass
class PerturbSpec:
    drop_rate: float = 0.0
    spurious_rate: float = 0.0
    jitter_px: float = 0.0
    score_noise: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("drop_rate", "spurious_rate", "score_noise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.jitter_px < 0 or not math.isfinite(self.jitter_px):
            raise ValueError("jitter_px must be a finite non-negative number")


# --------------------------------------------------------------------------
# predictions I/O


def _detection_from_obj(obj: Any, base_dir: Path | None) -> Detection:
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    missing = [k for k in ("image", "class", "score") if k not in obj]
    if missing:
        raise ValueError(f"missing field(s) {', '.join(missing)}")
    payload_keys = [k for k in ("polygon", "bbox", "mask_pgm_path") if k in obj]
    unknown = set(obj) - {"image", "class", "score", "polygon", "bbox", "mask_pgm_path"}
    if unknown:
        raise ValueError(f"unknown key(s) {', '.join(sorted(unknown))}")
    if len(payload_keys) != 1:
        raise ValueError("need exactly one of polygon, bbox, mask_pgm_path")
    score = obj["score"]
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise ValueError(f"score {score!r} is not a number")
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    kw: dict[str, Any] = {}
    key = payload_keys[0]
    if key == "polygon":
        kw["polygon"] = Polygon(tuple((float(x), float(y)) for x, y in obj["polygon"]))
    elif key == "bbox":
        kw["bbox"] = BBox(*map(float, obj["bbox"]))
    else:
        path = Path(obj["mask_pgm_path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        kw["mask"] = read_pgm(path)
    return Detection(str(obj["image"]), str(obj["class"]), float(score), **kw)


def load_predictions(text: str, base_dir: str | Path | None = None) -> list[Detection]:
    """Parse JSONL detections; mask paths resolve against ``base_dir``."""
    base = Path(base_dir) if base_dir is not None else None
    dets, problems = [], []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            dets.append(_detection_from_obj(json.loads(line), base))
        except (ValueError, TypeError, OSError) as exc:
            problems.append(f"line {n}: {exc}")
    if problems:
        raise PredictionError(problems)
    return dets


def write_predictions(dets: Iterable[Detection]) -> str:
    lines = []
    for d in dets:
        obj: dict[str, Any] = {"image": d.image, "class": d.label, "score": d.score}
        if d.polygon is not None:
            obj["polygon"] = [[x, y] for x, y in d.polygon.points]
        elif d.bbox is not None:
            obj["bbox"] = list(d.bbox.as_tuple())
        else:
            raise ValueError("mask detections cannot be written inline; save the PGM and reference it")
        lines.append(json.dumps(obj))
    return "".join(line + "\n" for line in lines)


# --------------------------------------------------------------------------
# per-instance geometry


def _region_polygon(g: Region | Polygon) -> Polygon:
    return g.polygon if isinstance(g, Region) else g


def _region_label(g: Region | Polygon) -> str:
    return g.label if isinstance(g, Region) else DEFAULT_CLASS


def _mask_raster(m: BitMask, w: int, h: int) -> Raster:
    bits = np.zeros((h, w), dtype=bool)
    hh, ww = min(h, m.height), min(w, m.width)
    bits[:hh, :ww] = m.bits[:hh, :ww]
    rows = np.flatnonzero(bits.any(axis=1))
    cols = np.flatnonzero(bits.any(axis=0))
    if not len(rows):
        return Raster(0, 0, np.zeros((0, 0), dtype=bool), (w, h))
    y0, y1, x0, x1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    return Raster(int(x0), int(y0), bits[y0:y1, x0:x1], (w, h))


def detection_raster(d: Detection, w: int, h: int) -> Raster:
    if d.polygon is not None:
        return rasterize_crop(d.polygon, w, h)
    if d.bbox is not None:
        return rasterize_crop(d.bbox.to_polygon(), w, h)
    return _mask_raster(d.mask, w, h)


def detection_box(d: Detection) -> BBox:
    if d.polygon is not None:
        return polygon_bbox(d.polygon)
    if d.bbox is not None:
        return d.bbox
    box = _mask_raster(d.mask, d.mask.width, d.mask.height).bbox()
    assert box is not None
    return box


def infer_canvas(im: ImageRecord | None, dets: Sequence[Detection] = ()) -> tuple[int, int]:
    """Image size if resolved, else the smallest canvas holding everything."""
    if im is not None and im.resolved:
        return im.width, im.height
    w = h = 1.0
    for r in im.regions if im is not None else ():
        w = max(w, max(r.polygon.xs))
        h = max(h, max(r.polygon.ys))
    for d in dets:
        if d.mask is not None:
            w, h = max(w, d.mask.width), max(h, d.mask.height)
        else:
            b = detection_box(d)
            w, h = max(w, b.x2), max(h, b.y2)
    return math.ceil(w), math.ceil(h)


def _iou_matrix(
    preds: Sequence[Detection],
    gts: Sequence[Region | Polygon],
    kind: IoUKind,
    canvas: tuple[int, int],
    pred_rasters: Sequence[Raster] | None = None,
    gt_rasters: Sequence[Raster] | None = None,
) -> np.ndarray:
    ious = np.zeros((len(preds), len(gts)))
    if not len(preds) or not len(gts):
        return ious
    w, h = canvas
    if kind == "mask":
        pr = pred_rasters if pred_rasters is not None else [detection_raster(d, w, h) for d in preds]
        gr = gt_rasters if gt_rasters is not None else [rasterize_crop(_region_polygon(g), w, h) for g in gts]
        for i, p in enumerate(pr):
            for j, g in enumerate(gr):
                ious[i, j] = p.iou(g)
    else:
        pb = [detection_box(d) for d in preds]
        gb = [polygon_bbox(_region_polygon(g)) for g in gts]
        for i, p in enumerate(pb):
            for j, g in enumerate(gb):
                ious[i, j] = bbox_iou(p, g)
    labels = [_region_label(g) for g in gts]
    for i, d in enumerate(preds):
        for j, lab in enumerate(labels):
            if d.label != lab:
                ious[i, j] = 0.0
    return ious


def score_order(scores: Sequence[float]) -> list[int]:
    """Indices by descending score, stable on ties."""
    return sorted(range(len(scores)), key=lambda i: -scores[i])


def _greedy_match(ious: np.ndarray, scores: Sequence[float], threshold: float):
    n_det, n_gt = ious.shape
    order = score_order(scores)
    taken = np.zeros(n_gt, dtype=bool)
    flags, matched = [], []
    for i in order:
        j = -1
        if n_gt:
            cand = np.where(taken, -1.0, ious[i])
            best = int(cand.argmax())
            # a match needs actual overlap, even at threshold 0
            if cand[best] >= threshold and cand[best] > 0.0:
                j = best
                taken[j] = True
        flags.append(j >= 0)
        matched.append(j)
    tp = sum(flags)
    return order, flags, matched, MatchCounts(tp, n_det - tp, n_gt - tp)


def match_detections(
    preds: Sequence[Detection],
    gts: Sequence[Region | Polygon],
    cfg: EvalConfig = EvalConfig(),
    canvas: tuple[int, int] | None = None,
    apply_score_threshold: bool = False,
) -> MatchResult:
    """Match one image's detections against its ground truth."""
    images = {d.image for d in preds}
    if len(images) > 1:
        raise ValueError(f"detections reference several images: {sorted(images)}")
    if apply_score_threshold:
        preds = [d for d in preds if d.score >= cfg.score_threshold]
    if canvas is None:
        canvas = infer_canvas(ImageRecord("", 0, tuple(g if isinstance(g, Region) else Region(g) for g in gts)), preds)
    ious = _iou_matrix(preds, gts, cfg.iou_kind, canvas)
    order, flags, matched, counts = _greedy_match(ious, [d.score for d in preds], cfg.iou_threshold)
    best = [float(row.max()) if row.size else 0.0 for row in ious]
    return MatchResult(counts, order, flags, matched, best, ious)


# --------------------------------------------------------------------------
# precision, recall, AP


def precision_recall(c: MatchCounts) -> tuple[float, float]:
    """Standalone precision/recall; both are 0 when their denominator is."""
    p = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    r = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    return p, r


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def pr_curve(flags: Sequence[bool], n_gt: int) -> PRCurve:
    """Cumulative precision/recall at each rank of score-ordered flags."""
    tp_cum, fp_cum = [], []
    tp = fp = 0
    for f in flags:
        tp += bool(f)
        fp += not f
        tp_cum.append(tp)
        fp_cum.append(fp)
    return PRCurve(tp_cum, fp_cum, n_gt)


def _envelope_ap(curve: PRCurve) -> Fraction:
    if not curve.n_gt or not len(curve):
        return Fraction(0)
    prec = [Fraction(tp, tp + fp) for tp, fp in zip(curve.tp_cum, curve.fp_cum)]
    rec = [Fraction(tp, curve.n_gt) for tp in curve.tp_cum]
    env = prec[:]
    for i in range(len(env) - 2, -1, -1):
        env[i] = max(env[i], env[i + 1])
    ap = Fraction(0)
    prev = Fraction(0)
    for r, p in zip(rec, env):
        ap += (r - prev) * p
        prev = r
    return ap


def _sampled_ap(curve: PRCurve, n_points: int) -> float:
    prec, rec = curve.precision, curve.recall
    total = 0.0
    for k in range(n_points):
        r = k / (n_points - 1)
        total += max((p for p, rr in zip(prec, rec) if rr >= r), default=0.0)
    return total / n_points


def average_precision(curve: PRCurve, method: APMethod = "all_point") -> float:
    if method == "all_point":
        return float(_envelope_ap(curve))
    if method == "11_point":
        return _sampled_ap(curve, 11)
    if method == "101_point":
        return _sampled_ap(curve, 101)
    raise ValueError(f"unknown AP method {method!r}")


# --------------------------------------------------------------------------
# evaluation


@dataclass
class ImageResult:
    filename: str
    width: int
    height: int
    n_gt: int
    n_pred: int
    counts: MatchCounts
    ap: float | None
    ap50: float | None
    gt_pixels: int
    pred_pixels: int
    inter_pixels: int
    union_pixels: int
    det_index: list[int]  # global indices of this image's detections
    scores: list[float]
    flags: list[bool]  # per local detection, input order
    flags50: list[bool]
    best_iou: list[float]

    def row(self) -> dict[str, Any]:
        return {
            "filename": self.filename,
            "width": self.width,
            "height": self.height,
            "n_gt": self.n_gt,
            "n_pred": self.n_pred,
            "tp": self.counts.tp,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
            "ap": self.ap,
            "pixel_accuracy": self.inter_pixels / self.gt_pixels if self.gt_pixels else None,
            "gt_pixels": self.gt_pixels,
            "pred_pixels": self.pred_pixels,
            "intersection_pixels": self.inter_pixels,
            "union_pixels": self.union_pixels,
        }


@dataclass
class EvalReport:
    config: EvalConfig
    counts: MatchCounts
    precision: float
    recall: float
    f1: float
    ap50: float
    map: float
    map_per_image: float
    map_dataset: float
    pixel_accuracy: float | None
    pixel_accuracy_macro: float | None
    pixel_iou: float | None
    n_images: int
    n_gt: int
    n_predictions: int
    per_image: list[dict[str, Any]]
    pr_curve: PRCurve = field(repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": asdict(self.config),
            "counts": asdict(self.counts),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "ap50": self.ap50,
            "map": self.map,
            "map_per_image": self.map_per_image,
            "map_dataset": self.map_dataset,
            "pixel_accuracy": self.pixel_accuracy,
            "pixel_accuracy_macro": self.pixel_accuracy_macro,
            "pixel_iou": self.pixel_iou,
            "n_images": self.n_images,
            "n_gt": self.n_gt,
            "n_predictions": self.n_predictions,
            "pr_curve": {"precision": self.pr_curve.precision, "recall": self.pr_curve.recall},
            "per_image": self.per_image,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = list(self.per_image[0]) if self.per_image else ["filename"]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for row in self.per_image:
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
        return buf.getvalue()


def _check_images(preds: Sequence[Detection], dataset: Dataset) -> None:
    known = {im.filename for im in dataset.images}
    missing = [d.image for d in preds if d.image not in known]
    if missing:
        raise UnknownImageError(missing)


def _evaluate_image(
    im: ImageRecord, dets: list[tuple[int, Detection]], cfg: EvalConfig, pixels: bool
) -> ImageResult:
    preds = [d for _, d in dets]
    w, h = infer_canvas(im, preds)
    gt_r = [rasterize_crop(r.polygon, w, h) for r in im.regions]
    pred_r = [detection_raster(d, w, h) for d in preds]
    ious = _iou_matrix(preds, im.regions, cfg.iou_kind, (w, h), pred_r, gt_r)
    scores = [d.score for d in preds]
    n_gt = len(im.regions)

    def run(threshold: float) -> tuple[list[bool], MatchCounts, float | None]:
        order, flags, _, counts = _greedy_match(ious, scores, threshold)
        local = [False] * len(preds)
        for i, f in zip(order, flags):
            local[i] = f
        ap = average_precision(pr_curve(flags, n_gt), cfg.ap_method) if n_gt else None
        return local, counts, ap

    flags, counts, ap = run(cfg.iou_threshold)
    flags50, _, ap50 = (flags, counts, ap) if cfg.iou_threshold == 0.5 else run(0.5)

    gt_px = pred_px = inter = union = 0
    if pixels:
        ug = np.zeros((h, w), dtype=bool)
        up = np.zeros((h, w), dtype=bool)
        for r in gt_r:
            r.paste_into(ug)
        for r in pred_r:
            r.paste_into(up)
        gt_px, pred_px = int(ug.sum()), int(up.sum())
        inter = int(np.count_nonzero(ug & up))
        union = gt_px + pred_px - inter

    best = [float(row.max()) if row.size else 0.0 for row in ious]
    return ImageResult(
        im.filename, w, h, n_gt, len(preds), counts, ap, ap50,
        gt_px, pred_px, inter, union,
        [i for i, _ in dets], scores, flags, flags50, best,
    )


def _pooled_ap(results: Sequence[ImageResult], attr: str, method: APMethod) -> tuple[float, PRCurve]:
    entries = []
    for res in results:
        for gi, s, f in zip(res.det_index, res.scores, getattr(res, attr)):
            entries.append((gi, s, f))
    entries.sort(key=lambda e: (-e[1], e[0]))
    curve = pr_curve([f for _, _, f in entries], sum(r.n_gt for r in results))
    return average_precision(curve, method), curve


def _mean(values: Iterable[float | None]) -> float:
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else 0.0


def evaluate(
    preds: Sequence[Detection],
    dataset: Dataset,
    cfg: EvalConfig = EvalConfig(),
    jobs: int = 1,
    pixels: bool = True,
) -> EvalReport:
    """Score predictions against a dataset.

    Predictions below ``cfg.score_threshold`` are discarded first (the
    threshold itself is kept).  ``map_per_image`` averages per-image AP over
    images that have ground truth; ``map_dataset`` pools all detections into
    one ranking.  ``map`` is whichever ``cfg.ap_mode`` selects, and ``ap50``
    is the same quantity at IoU 0.5.
    """
    _check_images(preds, dataset)
    per_image: dict[str, list[tuple[int, Detection]]] = defaultdict(list)
    for i, d in enumerate(preds):
        if d.score >= cfg.score_threshold:
            per_image[d.image].append((i, d))

    def work(im: ImageRecord) -> ImageResult:
        return _evaluate_image(im, per_image.get(im.filename, []), cfg, pixels)

    if jobs > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, dataset.images))
    else:
        results = [work(im) for im in dataset.images]

    counts = sum((r.counts for r in results), MatchCounts())
    precision, recall = precision_recall(counts)
    map_dataset, curve = _pooled_ap(results, "flags", cfg.ap_method)
    map_per_image = _mean(r.ap for r in results)
    if cfg.ap_mode == "per_image_mean":
        chosen, ap50 = map_per_image, _mean(r.ap50 for r in results)
    else:
        chosen, ap50 = map_dataset, _pooled_ap(results, "flags50", cfg.ap_method)[0]

    gt_px = sum(r.gt_pixels for r in results)
    inter = sum(r.inter_pixels for r in results)
    union = sum(r.union_pixels for r in results)
    pix_images = [r.inter_pixels / r.gt_pixels for r in results if r.gt_pixels]
    return EvalReport(
        config=cfg,
        counts=counts,
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        ap50=ap50,
        map=chosen,
        map_per_image=map_per_image,
        map_dataset=map_dataset,
        pixel_accuracy=inter / gt_px if pixels and gt_px else None,
        pixel_accuracy_macro=math.fsum(pix_images) / len(pix_images) if pix_images else None,
        pixel_iou=inter / union if pixels and union else None,
        n_images=len(results),
        n_gt=sum(r.n_gt for r in results),
        n_predictions=sum(r.n_pred for r in results),
        per_image=[r.row() for r in results],
        pr_curve=curve,
    )


@dataclass(frozen=True)
class PixelAccuracy:
    micro: float | None  # sum |P & G| / sum |G|
    macro: float | None  # mean over images with gt pixels
    symmetric: float | None  # sum |P & G| / sum |P | G|


def pixel_stats(preds: Sequence[Detection], dataset: Dataset) -> PixelAccuracy:
    _check_images(preds, dataset)
    by_image: dict[str, list[Detection]] = defaultdict(list)
    for d in preds:
        by_image[d.image].append(d)
    gt_total = inter_total = union_total = 0
    ratios = []
    for im in dataset.images:
        dets = by_image.get(im.filename, [])
        w, h = infer_canvas(im, dets)
        ug = np.zeros((h, w), dtype=bool)
        up = np.zeros((h, w), dtype=bool)
        for r in im.regions:
            rasterize_crop(r.polygon, w, h).paste_into(ug)
        for d in dets:
            detection_raster(d, w, h).paste_into(up)
        g = int(ug.sum())
        i = int(np.count_nonzero(ug & up))
        gt_total += g
        inter_total += i
        union_total += int(np.count_nonzero(ug | up))
        if g:
            ratios.append(i / g)
    return PixelAccuracy(
        inter_total / gt_total if gt_total else None,
        math.fsum(ratios) / len(ratios) if ratios else None,
        inter_total / union_total if union_total else None,
    )


def pixel_accuracy(preds: Sequence[Detection], dataset: Dataset) -> float | None:
    """Fraction of ground-truth window pixels covered by any prediction.

    Masks are unioned per image and pooled over images (micro average).
    Returns None when the dataset has no ground-truth pixels.
    """
    return pixel_stats(preds, dataset).micro


@dataclass(frozen=True)
class SweepRow:
    threshold: float
    precision: float
    recall: float
    f1: float
    map: float


def sweep_confidence(
    preds: Sequence[Detection],
    dataset: Dataset,
    cfg: EvalConfig = EvalConfig(),
    thresholds: Sequence[float] = (0.5, 0.7, 0.9),
    jobs: int = 1,
) -> list[SweepRow]:
    rows = []
    for t in thresholds:
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"threshold {t} outside [0, 1]")
        rep = evaluate(preds, dataset, _replace_threshold(cfg, t), jobs=jobs, pixels=False)
        rows.append(SweepRow(t, rep.precision, rep.recall, rep.f1, rep.map))
    return rows


def _replace_threshold(cfg: EvalConfig, t: float) -> EvalConfig:
    return EvalConfig(cfg.iou_threshold, cfg.iou_kind, t, cfg.ap_mode, cfg.ap_method)


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    lines = ["threshold,precision,recall,f1,map"]
    lines += [f"{r.threshold!r},{r.precision!r},{r.recall!r},{r.f1!r},{r.map!r}" for r in rows]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# synthetic predictions


def synth_predictions(dataset: Dataset, spec: PerturbSpec) -> list[Detection]:
    """Perturbed copies of the ground truth, for exercising the evaluator.

    Every ground-truth instance and every image consumes the same random
    draws whatever the rates are, so with a fixed seed the set of surviving
    instances shrinks monotonically as ``drop_rate`` grows.  True copies
    score ``1 - u * score_noise``.  Each image gets one spurious box with
    probability ``spurious_rate``, scored uniformly in [0, 0.5).
    """
    rng = SplitMix64(spec.seed)
    out: list[Detection] = []
    for im in dataset.images:
        w, h = infer_canvas(im)
        for r in im.regions:
            keep = rng.random() >= spec.drop_rate
            pts = tuple(
                (x + spec.jitter_px * (2.0 * rng.random() - 1.0), y + spec.jitter_px * (2.0 * rng.random() - 1.0))
                for x, y in r.polygon.points
            )
            score = 1.0 - rng.random() * spec.score_noise
            if keep:
                out.append(Detection(im.filename, r.label, score, polygon=Polygon(pts)))
        add_spur = rng.random() < spec.spurious_rate
        bw = w * rng.uniform(0.05, 0.15)
        bh = h * rng.uniform(0.05, 0.15)
        bx = rng.uniform(0.0, w - bw)
        by = rng.uniform(0.0, h - bh)
        s_spur = rng.uniform(0.0, 0.5)
        if add_spur:
            label = im.regions[0].label if im.regions else DEFAULT_CLASS
            out.append(Detection(im.filename, label, s_spur, bbox=BBox(bx, by, bx + bw, by + bh)))
    return out
