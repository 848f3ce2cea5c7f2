"""Command-line front end.

Every subcommand resolves its settings as defaults < JSON config file <
flags, runs one pipeline, and writes ``run-manifest.json`` with the fully
resolved settings into the output directory.

Exit codes: 0 success, 1 validation or data failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from facet import __version__
from facet import annotations as ann
from facet import plots
from facet.anchors import (
    AnchorConfig,
    assign_anchors,
    anchors_csv,
    generate_anchors,
    square_resize,
)
from facet.augment import apply_plan, plan_augmentation, write_transforms
from facet.evaluation import (
    EvalConfig,
    PerturbSpec,
    PredictionError,
    UnknownImageError,
    infer_canvas,
    load_predictions,
    match_detections,
    sweep_confidence,
    sweep_csv,
    synth_predictions,
    write_predictions,
    evaluate,
)
from facet.geometry import polygon_bbox
from facet.losses import LogError, detect_overfit, parse_training_log, select_best_epoch
from facet.render import OverlaySpec, read_image, render_overlay, write_image
from facet.rng import derive_seed

SUBCOMMANDS = (
    "validate", "stats", "split", "kfold", "augment", "anchors",
    "synth", "eval", "sweep", "render", "losses",
)


class UsageError(Exception):
    pass


class DataError(Exception):
    def __init__(self, problems: Sequence[str]) -> None:
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class RunConfig:
    dataset: str | None = None
    image_dir: str | None = None
    manifest: str | None = None
    predictions: str | None = None
    output_dir: str = "facet-out"
    seed: int = 0
    jobs: int = 1
    # evaluation
    iou_threshold: float = 0.5
    iou_kind: str = "mask"
    score_threshold: float = 0.9
    ap_mode: str = "per_image_mean"
    ap_method: str = "all_point"
    thresholds: list[float] = field(default_factory=lambda: [0.5, 0.7, 0.9])
    # splitting
    train_fraction: float = 0.8
    k: int = 5
    # augmentation
    copies: int = 1
    rotation_range: list[float] = field(default_factory=lambda: [-45.0, 45.0])
    shear_range: list[float] = field(default_factory=lambda: [-16.0, 16.0])
    # anchors
    anchor_scales: list[float] = field(default_factory=lambda: [32.0, 64.0, 128.0])
    anchor_ratios: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    anchor_stride: int = 32
    fmap_w: int = 32
    fmap_h: int = 32
    image_w: int = 1024
    image_h: int = 1024
    pos_iou: float = 0.7
    neg_iou: float = 0.3
    image: str | None = None
    # synthetic predictions
    drop_rate: float = 0.0
    spurious_rate: float = 0.0
    jitter_px: float = 0.0
    score_noise: float = 0.0
    # rendering
    overlay_mode: str = "overlap"
    caption: str = "score_iou"
    fill_alpha: float = 0.4
    outline_width: int = 1
    image_format: str = "png"
    # training logs
    log: str | None = None
    criterion: str = "min_train_total"
    metrics: str | None = None
    window: int = 3
    slope_tol: float = 0.0


_TYPES: dict[str, type] = {}
for _f in fields(RunConfig):
    t = str(_f.type)
    _TYPES[_f.name] = (
        list if t.startswith("list") else int if t == "int" else float if t == "float" else str
    )


def _check_type(name: str, value: Any) -> Any:
    kind = _TYPES[name]
    if value is None:
        if getattr(RunConfig(), name) is not None:
            raise UsageError(f"config key {name!r} cannot be null")
        return None
    if kind is list:
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise UsageError(f"config key {name!r} must be a list of numbers")
        return [float(v) for v in value]
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise UsageError(f"config key {name!r} must be an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"config key {name!r} must be a number")
        return float(value)
    if not isinstance(value, str):
        raise UsageError(f"config key {name!r} must be a string")
    return value


def resolve_config(config_path: str | None, overrides: dict[str, Any]) -> RunConfig:
    values: dict[str, Any] = {}
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(doc) - set(_TYPES))
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        values.update({k: _check_type(k, v) for k, v in doc.items()})
    values.update(overrides)
    return RunConfig(**values)


# --------------------------------------------------------------------------
# output helpers


def _color(text: str, code: str) -> str:
    if os.environ.get("FACET_NO_COLOR") or not sys.stdout.isatty():
        return text
    return f"\033[{code}m{text}\033[0m"


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(cfg: RunConfig, command: str, outputs: list[str]) -> None:
    manifest = {
        "tool": "facet",
        "version": __version__,
        "subcommand": command,
        "derived_seed": derive_seed(cfg.seed, command),
        "config": dataclasses.asdict(cfg),
        "outputs": sorted(outputs),
    }
    (_out_dir(cfg) / "run-manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _require(cfg: RunConfig, *names: str) -> None:
    missing = [n for n in names if getattr(cfg, n) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _load_dataset(cfg: RunConfig, resolve: bool = True) -> ann.Dataset:
    _require(cfg, "dataset")
    try:
        d = ann.load_via(cfg.dataset)
    except OSError as exc:
        raise DataError([f"cannot read dataset: {exc}"]) from exc
    if resolve and (cfg.image_dir or cfg.manifest):
        manifest = ann.parse_manifest(Path(cfg.manifest).read_text()) if cfg.manifest else None
        d, clamped = ann.resolve_dimensions(d, cfg.image_dir, manifest)
        if clamped:
            print(f"clamped {clamped} out-of-bounds vertices", file=sys.stderr)
    return d


def _load_predictions(cfg: RunConfig) -> list:
    _require(cfg, "predictions")
    path = Path(cfg.predictions)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError([f"cannot read predictions: {exc}"]) from exc
    return load_predictions(text, base_dir=path.parent)


def _eval_config(cfg: RunConfig) -> EvalConfig:
    try:
        return EvalConfig(cfg.iou_threshold, cfg.iou_kind, cfg.score_threshold, cfg.ap_mode, cfg.ap_method)  # type: ignore[arg-type]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# --------------------------------------------------------------------------
# subcommands; each returns the list of files it wrote


def cmd_validate(cfg: RunConfig) -> list[str]:
    _require(cfg, "dataset")
    problems: list[str] = []
    try:
        d = ann.load_via(cfg.dataset)
    except ann.AnnotationError as exc:
        raise DataError(exc.problems) from exc
    except OSError as exc:
        raise DataError([f"cannot read dataset: {exc}"]) from exc
    if cfg.image_dir or cfg.manifest:
        manifest = ann.parse_manifest(Path(cfg.manifest).read_text()) if cfg.manifest else None
        try:
            resolved, _ = ann.resolve_dimensions(d, cfg.image_dir, manifest)
        except ann.AnnotationError as exc:
            problems.extend(exc.problems)
        else:
            unclamped = ann.Dataset(
                tuple(dataclasses.replace(im, width=r.width, height=r.height) for im, r in zip(d.images, resolved.images)),
                d.class_names,
            )
            problems.extend(ann.out_of_bounds(unclamped))
    if problems:
        raise DataError(problems)
    st = ann.stats(d)
    print(_color("OK", "32"), f"{st.n_images} images, {st.n_instances} instances")
    return []


def cmd_stats(cfg: RunConfig) -> list[str]:
    d = _load_dataset(cfg, resolve=False)
    st = ann.stats(d)
    print(f"images: {st.n_images}")
    print(f"instances: {st.n_instances}")
    print(f"mean instances per image: {st.mean_instances_per_image:g}")
    out = _out_dir(cfg)
    (out / "stats.json").write_text(json.dumps(st.to_dict(), indent=2) + "\n")
    lines = ["instances,images"] + [f"{k},{v}" for k, v in sorted(st.histogram.items())]
    (out / "histogram.csv").write_text("\n".join(lines) + "\n")
    written = ["stats.json", "histogram.csv"]
    if st.n_images:
        plots.plot_instance_histogram(st, out / "histogram.png")
        written.append("histogram.png")
    return written


def cmd_split(cfg: RunConfig) -> list[str]:
    d = _load_dataset(cfg, resolve=False)
    try:
        train, val = ann.split(d, cfg.train_fraction, derive_seed(cfg.seed, "split"))
    except ValueError as exc:
        raise DataError([str(exc)]) from exc
    out = _out_dir(cfg)
    ann.save_via(train, out / "train.json")
    ann.save_via(val, out / "val.json")
    print(f"train: {len(train)} images, val: {len(val)} images")
    return ["train.json", "val.json"]


def cmd_kfold(cfg: RunConfig) -> list[str]:
    d = _load_dataset(cfg, resolve=False)
    try:
        fs = ann.kfold(d, cfg.k, derive_seed(cfg.seed, "kfold"))
    except ValueError as exc:
        raise DataError([str(exc)]) from exc
    out = _out_dir(cfg)
    written = []
    summary = []
    for i in range(fs.k):
        train, val = fs.datasets(d, i)
        ann.save_via(train, out / f"fold_{i}_train.json")
        ann.save_via(val, out / f"fold_{i}_val.json")
        written += [f"fold_{i}_train.json", f"fold_{i}_val.json"]
        summary.append({"fold": i, "train": [im.filename for im in train.images], "val": [im.filename for im in val.images]})
        print(f"fold {i}: train {len(train)}, val {len(val)}")
    (out / "folds.json").write_text(json.dumps({"k": fs.k, "seed": fs.seed, "folds": summary}, indent=1) + "\n")
    return written + ["folds.json"]


def cmd_augment(cfg: RunConfig) -> list[str]:
    d = _load_dataset(cfg)
    try:
        plan = plan_augmentation(
            d, derive_seed(cfg.seed, "augment"), cfg.copies,
            tuple(cfg.rotation_range), tuple(cfg.shear_range),  # type: ignore[arg-type]
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    res = apply_plan(d, plan)
    out = _out_dir(cfg)
    ann.save_via(res.dataset, out / "augmented.json")
    (out / "transforms.json").write_text(write_transforms(res.transforms) + "\n")
    n_in = sum(len(im.regions) for im in d.images) * cfg.copies
    n_out = sum(len(im.regions) for im in res.dataset.images)
    print(f"{len(res.dataset)} augmented images, {n_out}/{n_in} regions kept, "
          f"{res.clamped_vertices} vertices clamped, {res.dropped_polygons} polygons dropped")
    return ["augmented.json", "transforms.json"]


def cmd_anchors(cfg: RunConfig) -> list[str]:
    try:
        acfg = AnchorConfig(tuple(cfg.anchor_scales), tuple(cfg.anchor_ratios), cfg.anchor_stride)
        anchors = generate_anchors(acfg, cfg.fmap_w, cfg.fmap_h, cfg.image_w, cfg.image_h)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    scores = labels = None
    if cfg.dataset:
        d = _load_dataset(cfg)
        images = d.by_filename()
        if cfg.image is not None and cfg.image not in images:
            raise DataError([f"image {cfg.image!r} not in dataset"])
        im = images[cfg.image] if cfg.image else d.images[0]
        w, h = infer_canvas(im)
        boxes = np.array([polygon_bbox(r.polygon).as_tuple() for r in im.regions]).reshape(-1, 4)
        boxes = square_resize(w, h, max(cfg.image_w, cfg.image_h)).apply(boxes)
        res = assign_anchors(anchors, boxes, cfg.pos_iou, cfg.neg_iou)
        scores, labels = res.max_iou, res.labels
        n_fg = int((labels == 1).sum())
        print(f"{im.filename}: {n_fg} foreground, {int((labels == 0).sum())} background")
    out = _out_dir(cfg)
    (out / "anchors.csv").write_text(anchors_csv(anchors, scores, labels))
    print(f"{len(anchors)} anchors ({cfg.fmap_w}x{cfg.fmap_h} cells x k={acfg.k})")
    return ["anchors.csv"]


def cmd_synth(cfg: RunConfig) -> list[str]:
    d = _load_dataset(cfg)
    try:
        spec = PerturbSpec(cfg.drop_rate, cfg.spurious_rate, cfg.jitter_px, cfg.score_noise, derive_seed(cfg.seed, "synth"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    dets = synth_predictions(d, spec)
    (_out_dir(cfg) / "predictions.jsonl").write_text(write_predictions(dets))
    print(f"{len(dets)} predictions")
    return ["predictions.jsonl"]


def cmd_eval(cfg: RunConfig) -> list[str]:
    d = _load_dataset(cfg)
    preds = _load_predictions(cfg)
    rep = evaluate(preds, d, _eval_config(cfg), jobs=cfg.jobs)
    out = _out_dir(cfg)
    (out / "report.json").write_text(rep.to_json())
    (out / "report.csv").write_text(rep.to_csv())
    plots.plot_pr_curve(rep.pr_curve, out / "pr_curve.png", f"AP = {rep.map_dataset:.4f}")
    pa = "undefined" if rep.pixel_accuracy is None else f"{rep.pixel_accuracy:.4f}"
    print(f"tp {rep.counts.tp}  fp {rep.counts.fp}  fn {rep.counts.fn}")
    print(f"precision {rep.precision:.4f}  recall {rep.recall:.4f}  f1 {rep.f1:.4f}")
    print(f"mAP {rep.map:.4f} ({cfg.ap_mode})  per-image {rep.map_per_image:.4f}  dataset-wide {rep.map_dataset:.4f}")
    print(f"pixel accuracy {pa}")
    return ["report.json", "report.csv", "pr_curve.png"]


def cmd_sweep(cfg: RunConfig) -> list[str]:
    d = _load_dataset(cfg)
    preds = _load_predictions(cfg)
    try:
        rows = sweep_confidence(preds, d, _eval_config(cfg), cfg.thresholds, jobs=cfg.jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _out_dir(cfg)
    text = sweep_csv(rows)
    (out / "sweep.csv").write_text(text)
    plots.plot_sweep(rows, out / "sweep.png")
    sys.stdout.write(text)
    return ["sweep.csv", "sweep.png"]


def cmd_render(cfg: RunConfig) -> list[str]:
    d = _load_dataset(cfg)
    preds = _load_predictions(cfg) if cfg.predictions else []
    ecfg = _eval_config(cfg)
    try:
        spec = OverlaySpec(cfg.overlay_mode, cfg.caption, cfg.fill_alpha, cfg.outline_width)  # type: ignore[arg-type]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    fmt = cfg.image_format.lower()
    if fmt not in ("png", "ppm"):
        raise UsageError("image format must be png or ppm")
    known = d.by_filename()
    missing = sorted({p.image for p in preds} - set(known))
    if missing:
        raise UnknownImageError(missing)
    out = _out_dir(cfg)
    written = []
    for im in d.images:
        if cfg.image and im.filename != cfg.image:
            continue
        dets = [p for p in preds if p.image == im.filename and p.score >= ecfg.score_threshold]
        w, h = infer_canvas(im, dets)
        src = Path(cfg.image_dir) / im.filename if cfg.image_dir else None
        if src is not None and src.is_file():
            pixels = read_image(src)
        else:
            pixels = np.full((h, w, 3), 255, dtype=np.uint8)
        m = match_detections(dets, im.regions, ecfg, canvas=(pixels.shape[1], pixels.shape[0]))
        ious: list[float | None] = [None] * len(dets)
        for i, j in zip(m.order, m.matched_gt):
            ious[i] = float(m.ious[i, j]) if j >= 0 else None
        img = render_overlay(pixels, im.regions, dets, ious, spec, im.filename)
        name = f"{Path(im.filename).stem}.{spec.mode}.{fmt}"
        write_image(img, out / name, fmt.upper())  # type: ignore[arg-type]
        written.append(name)
    print(f"rendered {len(written)} overlays")
    return written


def cmd_losses(cfg: RunConfig) -> list[str]:
    _require(cfg, "log")
    try:
        series = parse_training_log(Path(cfg.log).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError([f"cannot read log: {exc}"]) from exc
    metrics = None
    if cfg.metrics:
        raw = json.loads(Path(cfg.metrics).read_text(encoding="utf-8"))
        metrics = {int(k): float(v) for k, v in raw.items()}
    try:
        sel = select_best_epoch(series, cfg.criterion, metrics)  # type: ignore[arg-type]
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        overfit = detect_overfit(series, cfg.window, cfg.slope_tol)
    except ValueError:
        overfit = None
    out = _out_dir(cfg)
    (out / "selection.json").write_text(sel.to_json() + "\n")
    plots.plot_loss_curves(series, out / "loss_curves.png", overfit)
    print(sel.to_json())
    if overfit is not None:
        print(f"validation loss stalls from epoch {overfit}", file=sys.stderr)
    return ["selection.json", "loss_curves.png"]


COMMANDS: dict[str, Callable[[RunConfig], list[str]]] = {
    "validate": cmd_validate,
    "stats": cmd_stats,
    "split": cmd_split,
    "kfold": cmd_kfold,
    "augment": cmd_augment,
    "anchors": cmd_anchors,
    "synth": cmd_synth,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "render": cmd_render,
    "losses": cmd_losses,
}


# --------------------------------------------------------------------------
# argument parsing


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _flag_type(name: str) -> Callable[[str], Any]:
    kind = _TYPES[name]
    return _float_list if kind is list else kind


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"facet {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON file of settings (flags take precedence)")
    for f in fields(RunConfig):
        common.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f.name,
            type=_flag_type(f.name),
            default=argparse.SUPPRESS,
        )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "validate": "check annotations and list every problem",
        "stats": "count images and instances",
        "split": "seeded train/validation split",
        "kfold": "seeded k-fold partition",
        "augment": "flip/rotate/shear annotations",
        "anchors": "dump an anchor grid, optionally labeled against an image",
        "synth": "perturbed ground-truth predictions",
        "eval": "precision, recall, mAP and pixel accuracy",
        "sweep": "metrics across confidence thresholds",
        "render": "ground-truth / prediction overlays",
        "losses": "pick an epoch from a training log",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    try:
        cfg = resolve_config(config_path, args)
        written = COMMANDS[command](cfg)
        _write_manifest(cfg, command, written)
    except UsageError as exc:
        print(f"facet {command}: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ann.AnnotationError, PredictionError, LogError) as exc:
        problems = getattr(exc, "problems", None) or [str(exc)]
        print(_color("FAIL", "31"), f"{len(problems)} problem(s):", file=sys.stderr)
        for p in problems:
            print(f"  {p}", file=sys.stderr)
        return 1
    except UnknownImageError as exc:
        print(f"facet {command}: missing images: {', '.join(exc.missing)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
