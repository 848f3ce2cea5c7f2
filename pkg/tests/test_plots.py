from facet.annotations import stats
from facet.evaluation import SweepRow, pr_curve
from facet.fixtures import facade_dataset
from facet.losses import LossComponents, LossSeries
from facet.plots import plot_instance_histogram, plot_loss_curves, plot_pr_curve, plot_sweep

PNG = b"\x89PNG\r\n\x1a\n"


def test_all_figures_written(tmp_path):
    rows = [SweepRow(t, 1.0, 1 - t / 2, 0.8, 0.7) for t in (0.5, 0.7, 0.9)]
    comps = [LossComponents(*(1 / (i + 1),) * 5) for i in range(6)]
    series = LossSeries(list(range(1, 7)), comps, comps[:3] + [None] * 3)
    paths = [
        plot_pr_curve(pr_curve([True, False, True], 2), tmp_path / "pr.png"),
        plot_sweep(rows, tmp_path / "sweep.png"),
        plot_loss_curves(series, tmp_path / "loss.png", overfit_epoch=3),
        plot_instance_histogram(stats(facade_dataset(5, width=64, height=64)), tmp_path / "hist.png"),
    ]
    for p in paths:
        assert p.read_bytes()[:8] == PNG


def test_figures_reproducible(tmp_path):
    curve = pr_curve([True, True, False, True], 5)
    a = plot_pr_curve(curve, tmp_path / "a.png").read_bytes()
    b = plot_pr_curve(curve, tmp_path / "b.png").read_bytes()
    assert a == b
