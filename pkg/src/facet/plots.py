"""Report figures written next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from facet.annotations import DatasetStats  # noqa: E402
from facet.evaluation import PRCurve, SweepRow  # noqa: E402
from facet.losses import LossSeries  # noqa: E402

FIGSIZE = (5.0, 3.6)
DPI = 100
# no Software/date stamps, so reruns give identical files
_META = {"Software": None}


def _save(fig: plt.Figure, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata=_META)
    plt.close(fig)
    return path


def plot_pr_curve(curve: PRCurve, path: str | Path, title: str = "") -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    rec, prec = [0.0, *curve.recall], [1.0, *curve.precision]
    env = prec[:]
    for i in range(len(env) - 2, -1, -1):
        env[i] = max(env[i], env[i + 1])
    ax.plot(rec, prec, color="0.6", lw=1, label="precision")
    ax.step(rec, env, where="pre", color="C3", lw=1.5, label="envelope")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_title(title or "precision / recall")
    ax.legend(loc="lower left", frameon=False)
    return _save(fig, path)


def plot_sweep(rows: Sequence[SweepRow], path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    t = [r.threshold for r in rows]
    for name, color in (("precision", "C0"), ("recall", "C1"), ("f1", "C2"), ("map", "C3")):
        ax.plot(t, [getattr(r, name) for r in rows], marker="o", ms=3, color=color, label=name)
    ax.set_xlabel("detection confidence threshold")
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_loss_curves(s: LossSeries, path: str | Path, overfit_epoch: int | None = None) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(s.epochs, s.train_totals(), color="C0", label="train")
    val = [(e, v) for e, v in zip(s.epochs, s.val_totals()) if v is not None]
    if val:
        ax.plot([e for e, _ in val], [v for _, v in val], color="C1", label="val")
    if overfit_epoch is not None:
        ax.axvline(overfit_epoch, color="0.5", ls="--", lw=1, label=f"overfit @ {overfit_epoch}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("weighted total loss")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_instance_histogram(st: DatasetStats, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ks = sorted(st.histogram)
    ax.bar(ks, [st.histogram[k] for k in ks], color="C2", width=0.8)
    ax.axvline(st.mean_instances_per_image, color="k", lw=1, ls="--")
    ax.set_xlabel("instances per image")
    ax.set_ylabel("images")
    ax.set_title(f"{st.n_images} images, {st.n_instances} instances")
    return _save(fig, path)
