import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facet.losses import (
    LogError,
    LossComponents,
    LossSeries,
    LossWeights,
    detect_overfit,
    parse_training_log,
    scale_weights,
    select_best_epoch,
    total_loss,
    write_training_log,
)

HEADER = "epoch,split,rpn_class,rpn_bbox,mrcnn_class,mrcnn_bbox,mrcnn_mask\n"


def flat(v):
    """Components whose unit-weight total is ``v``."""
    return LossComponents(*(v / 5,) * 5)


def series(train, val):
    return LossSeries(list(range(1, len(train) + 1)), [flat(v) for v in train], [None if v is None else flat(v) for v in val])


def test_total_loss_examples():
    assert total_loss(LossWeights(), LossComponents(0.2, 0.2, 0.2, 0.2, 0.2)) == pytest.approx(1.0)
    assert total_loss(LossWeights(3, 2, 7, 1, 5), LossComponents()) == 0.0
    assert total_loss(LossWeights(2, 1, 1, 1, 1), LossComponents(0.5, 0, 0, 0, 0)) == 1.0


def test_weight_and_component_validation():
    with pytest.raises(ValueError):
        LossWeights(alpha=0)
    with pytest.raises(ValueError):
        LossComponents(rpn_bbox=-0.1)
    with pytest.raises(ValueError):
        LossComponents(mrcnn_mask=math.inf)
    with pytest.raises(ValueError):
        scale_weights(LossWeights(), 0)


def test_scale_identity():
    w = LossWeights(1, 2, 3, 4, 5)
    assert scale_weights(w, 1) == w


pos = st.floats(1e-3, 1e3)
comp = st.floats(0, 100)
weights = st.builds(LossWeights, pos, pos, pos, pos, pos)
components = st.builds(LossComponents, comp, comp, comp, comp, comp)


@settings(max_examples=300, deadline=None)
@given(weights, components, st.floats(1e-3, 1e3))
def test_linearity_under_scaling(w, c, n):
    a = total_loss(scale_weights(w, n), c)
    b = n * total_loss(w, c)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(b))


@settings(max_examples=200, deadline=None)
@given(weights, components, components)
def test_linear_in_component(w, c1, c2):
    # L(c1 + c2) = L(c1) + L(c2)
    summed = LossComponents(*(a + b for a, b in zip(
        (c1.rpn_class, c1.rpn_bbox, c1.mrcnn_class, c1.mrcnn_bbox, c1.mrcnn_mask),
        (c2.rpn_class, c2.rpn_bbox, c2.mrcnn_class, c2.mrcnn_bbox, c2.mrcnn_mask),
    )))
    lhs = total_loss(w, summed)
    rhs = total_loss(w, c1) + total_loss(w, c2)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, rhs)


@settings(max_examples=200, deadline=None)
@given(weights, st.lists(components, min_size=20, max_size=20), st.floats(1e-3, 1e3))
def test_argmin_invariant_under_scaling(w, comps, n):
    s = LossSeries(list(range(1, 21)), comps, [None] * 20, w)
    a = select_best_epoch(s)
    b = select_best_epoch(s.with_weights(scale_weights(w, n)))
    totals = s.train_totals()
    best = min(totals)
    # a rescaled tie can only be broken by rounding; both picks must be true minima
    assert a.epoch == b.epoch or math.isclose(totals[b.epoch - 1], best, rel_tol=1e-12)


LOG = HEADER + "\n".join([
    "1,train,0.5,0.4,0.3,0.2,0.1",
    "1,val,0.6,0.5,0.4,0.3,0.2",
    "2,train,0.4,0.3,0.2,0.1,0.1",
    "2,val,0.5,0.4,0.3,0.2,0.2",
    "3,train,0.3,0.2,0.1,0.1,0.1",
    "3,val,0.55,0.4,0.3,0.2,0.2",
]) + "\n"


def test_parse_three_epochs():
    s = parse_training_log(LOG)
    assert s.epochs == [1, 2, 3]
    assert len(s.train) == len([v for v in s.val if v is not None]) == 3
    assert s.train_totals()[0] == pytest.approx(1.5)
    assert s.val_totals()[2] == pytest.approx(1.65)


def test_parse_with_weights():
    s = parse_training_log(LOG, LossWeights(2, 1, 1, 1, 1))
    assert s.train_totals()[0] == pytest.approx(2.0)


def test_parse_empty():
    assert len(parse_training_log(HEADER)) == 0
    assert len(parse_training_log("")) == 0


def test_parse_round_trip():
    s = parse_training_log(LOG)
    assert parse_training_log(write_training_log(s)).train == s.train


@pytest.mark.parametrize("body,msg", [
    ("1,train,0.1,-0.2,0.1,0.1,0.1\n", "row 2"),
    ("1,train,0.1,0.1,0.1,0.1,0.1\n1,train,0.1,0.1,0.1,0.1,0.1\n", "row 3: duplicate"),
    ("1,test,0.1,0.1,0.1,0.1,0.1\n", "split"),
    ("1,train,0.1,0.1\n", "columns"),
    ("x,train,0.1,0.1,0.1,0.1,0.1\n", "non-numeric"),
    ("1,val,0.1,0.1,0.1,0.1,0.1\n", "without a train row"),
])
def test_parse_errors(body, msg):
    with pytest.raises(LogError, match=msg):
        parse_training_log(HEADER + body)


def test_parse_bad_header():
    with pytest.raises(LogError, match="header"):
        parse_training_log("epoch,loss\n1,0.3\n")


def _overfit_series():
    train = [1.0 - 0.9 * i / 19 for i in range(20)]
    val = [1.0 - 0.7 * i / 9 for i in range(10)] + [0.3 + 0.2 * i / 10 for i in range(1, 11)]
    return series(train, val)


def test_overfit_synthetic_curve():
    e = detect_overfit(_overfit_series(), window=3)
    assert e is not None and 10 <= e <= 13
    assert e == 13


def test_overfit_co_decreasing():
    assert detect_overfit(series([1 - i / 20 for i in range(12)], [1.2 - i / 20 for i in range(12)])) is None


def test_overfit_constant_val():
    s = series([1 - i / 20 for i in range(8)], [0.5] * 8)
    # first moving-average slope exists at the fourth epoch
    assert detect_overfit(s, window=3) == 4


def test_overfit_slope_tolerance():
    s = _overfit_series()
    assert detect_overfit(s, slope_tol=0.05) is None


def test_overfit_needs_data():
    with pytest.raises(ValueError):
        detect_overfit(series([1, 0.9, 0.8, 0.7, 0.6], [1, 0.9, 0.8, 0.7, 0.6]), window=3)


def test_overfit_stable_when_appending():
    s = _overfit_series()
    e = detect_overfit(s)
    longer = series(s.train_totals() + [0.05, 0.04, 0.03], s.val_totals() + [0.9, 1.0, 1.1])
    assert detect_overfit(longer) == e


def test_select_best_epoch():
    s = series([0.9, 0.7, 0.5, 0.4], [1.0, 0.8, 0.85, 0.9])
    assert select_best_epoch(s).epoch == 4
    assert select_best_epoch(s, "min_val_total").epoch == 2
    sel = select_best_epoch(s, "max_external_metric", {1: 0.7, 2: 0.9, 3: 0.8})
    assert sel.epoch == 2 and sel.value == 0.9
    assert json.loads(sel.to_json()) == {"epoch": 2, "criterion": "max_external_metric", "value": 0.9}


def test_select_ties_prefer_earlier():
    assert select_best_epoch(series([0.5, 0.3, 0.3, 0.4], [None] * 4)).epoch == 2
    assert select_best_epoch(series([1.0], [None]), "max_external_metric", {3: 0.5, 2: 0.5}).epoch == 2


def test_select_errors():
    s = series([0.5, 0.4], [None, None])
    with pytest.raises(ValueError):
        select_best_epoch(s, "max_external_metric")
    with pytest.raises(ValueError):
        select_best_epoch(s, "min_val_total")
    with pytest.raises(ValueError):
        select_best_epoch(series([], []))


def test_series_validation():
    with pytest.raises(ValueError):
        LossSeries([2, 1], [flat(1), flat(1)], [None, None])
