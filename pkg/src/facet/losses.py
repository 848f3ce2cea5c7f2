"""Bookkeeping around the weighted multi-task loss.

The five component losses (RPN class, RPN box, head class, head box, head
mask) come from a training run's log; this module weights and sums them,
reads the logs, flags overfitting and picks the epoch to resume from.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import astuple, dataclass, field, fields
from typing import Literal, Mapping, Sequence

COMPONENTS = ("rpn_class", "rpn_bbox", "mrcnn_class", "mrcnn_bbox", "mrcnn_mask")
LOG_HEADER = ("epoch", "split", *COMPONENTS)

Criterion = Literal["min_train_total", "min_val_total", "max_external_metric"]


class LogError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0
    epsilon: float = 1.0

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"weight {f.name} must be a positive finite number, got {v}")


@dataclass(frozen=True)
class LossComponents:
    rpn_class: float = 0.0
    rpn_bbox: float = 0.0
    mrcnn_class: float = 0.0
    mrcnn_bbox: float = 0.0
    mrcnn_mask: float = 0.0

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"loss {f.name} must be finite and non-negative, got {v}")


def total_loss(w: LossWeights, c: LossComponents) -> float:
    return (
        w.alpha * c.rpn_class
        + w.beta * c.rpn_bbox
        + w.gamma * c.mrcnn_class
        + w.delta * c.mrcnn_bbox
        + w.epsilon * c.mrcnn_mask
    )


def scale_weights(w: LossWeights, n: float) -> LossWeights:
    if not n > 0:
        raise ValueError(f"scale factor must be positive, got {n}")
    return LossWeights(*(n * v for v in astuple(w)))


@dataclass
class LossSeries:
    epochs: list[int]
    train: list[LossComponents]
    val: list[LossComponents | None]
    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self) -> None:
        if not len(self.epochs) == len(self.train) == len(self.val):
            raise ValueError("epochs, train and val must have equal length")
        if any(b <= a for a, b in zip(self.epochs, self.epochs[1:])):
            raise ValueError("epochs must be strictly increasing")

    def __len__(self) -> int:
        return len(self.epochs)

    def train_totals(self) -> list[float]:
        return [total_loss(self.weights, c) for c in self.train]

    def val_totals(self) -> list[float | None]:
        return [None if c is None else total_loss(self.weights, c) for c in self.val]

    def with_weights(self, w: LossWeights) -> "LossSeries":
        return LossSeries(self.epochs, self.train, self.val, w)


def parse_training_log(text: str, weights: LossWeights = LossWeights()) -> LossSeries:
    """Read ``epoch,split,<five losses>`` rows; split is train or val.

    Every epoch needs a train row; val rows are optional.  Row numbers in
    errors count the header as row 1.
    """
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return LossSeries([], [], [], weights)
    if tuple(h.strip() for h in header) != LOG_HEADER:
        raise LogError(f"expected header {','.join(LOG_HEADER)}")
    rows: dict[tuple[int, str], LossComponents] = {}
    for n, row in enumerate(reader, start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != len(LOG_HEADER):
            raise LogError(f"row {n}: expected {len(LOG_HEADER)} columns, got {len(row)}")
        try:
            epoch = int(row[0])
            values = [float(v) for v in row[2:]]
        except ValueError:
            raise LogError(f"row {n}: non-numeric value") from None
        split = row[1].strip()
        if split not in ("train", "val"):
            raise LogError(f"row {n}: split must be train or val, got {split!r}")
        if any(v < 0 or not math.isfinite(v) for v in values):
            raise LogError(f"row {n}: losses must be finite and non-negative")
        if (epoch, split) in rows:
            raise LogError(f"row {n}: duplicate {split} row for epoch {epoch}")
        rows[(epoch, split)] = LossComponents(*values)
    epochs = sorted({e for e, _ in rows})
    missing = [e for e in epochs if (e, "train") not in rows]
    if missing:
        raise LogError(f"epochs without a train row: {missing}")
    return LossSeries(
        epochs,
        [rows[(e, "train")] for e in epochs],
        [rows.get((e, "val")) for e in epochs],
        weights,
    )


def write_training_log(s: LossSeries) -> str:
    lines = [",".join(LOG_HEADER)]
    for e, tr, va in zip(s.epochs, s.train, s.val):
        lines.append(",".join([str(e), "train", *map(repr, astuple(tr))]))
        if va is not None:
            lines.append(",".join([str(e), "val", *map(repr, astuple(va))]))
    return "\n".join(lines) + "\n"


def _moving_average(values: Sequence[float], window: int) -> list[float]:
    return [math.fsum(values[i - window + 1:i + 1]) / window for i in range(window - 1, len(values))]


def detect_overfit(s: LossSeries, window: int = 3, slope_tol: float = 0.0) -> int | None:
    """First epoch where train loss still falls but validation loss does not.

    Uses only epochs that have validation rows.  Both totals are smoothed
    with a trailing moving average of ``window`` epochs; the slope at an
    epoch is the change of that average from the previous epoch.  Returns
    the first epoch with train slope < 0 and val slope >= ``slope_tol``.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    idx = [i for i, v in enumerate(s.val) if v is not None]
    if len(idx) < 2 * window:
        raise ValueError(f"need at least {2 * window} epochs with validation losses, got {len(idx)}")
    train_all = s.train_totals()
    val_all = s.val_totals()
    epochs = [s.epochs[i] for i in idx]
    train_ma = _moving_average([train_all[i] for i in idx], window)
    val_ma = _moving_average([val_all[i] for i in idx], window)  # type: ignore[misc]
    for k in range(1, len(train_ma)):
        if train_ma[k] - train_ma[k - 1] < 0 and val_ma[k] - val_ma[k - 1] >= slope_tol:
            return epochs[k + window - 1]
    return None


@dataclass(frozen=True)
class Selection:
    epoch: int
    criterion: str
    value: float

    def to_json(self) -> str:
        return json.dumps({"epoch": self.epoch, "criterion": self.criterion, "value": self.value})


def select_best_epoch(
    s: LossSeries,
    criterion: Criterion = "min_train_total",
    metrics: Mapping[int, float] | None = None,
) -> Selection:
    """Best epoch by the criterion; the earliest epoch wins ties."""
    if not len(s):
        raise ValueError("empty loss series")
    if criterion == "min_train_total":
        cands = list(zip(s.epochs, s.train_totals()))
        sign = 1.0
    elif criterion == "min_val_total":
        cands = [(e, v) for e, v in zip(s.epochs, s.val_totals()) if v is not None]
        if not cands:
            raise ValueError("series has no validation losses")
        sign = 1.0
    elif criterion == "max_external_metric":
        if not metrics:
            raise ValueError("max_external_metric needs a metric table")
        cands = sorted(metrics.items())
        sign = -1.0
    else:
        raise ValueError(f"unknown criterion {criterion!r}")
    epoch, value = min(cands, key=lambda ev: (sign * ev[1], ev[0]))
    return Selection(int(epoch), criterion, float(value))
