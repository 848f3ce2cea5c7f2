import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facet.annotations import Dataset, ImageRecord, Region, parse_via, write_via
from facet.augment import (
    AffineParams,
    AugmentItem,
    AugmentPlan,
    affine_polygon,
    apply_plan,
    fliplr_polygon,
    plan_augmentation,
    write_transforms,
)
from facet.fixtures import facade_dataset, unresolved
from facet.geometry import Polygon, polygon_area

int_coord = st.integers(0, 4096).map(float)
int_polys = st.lists(st.tuples(int_coord, int_coord), min_size=3, max_size=12).map(lambda p: Polygon(tuple(p)))
real = st.floats(-1e4, 1e4, allow_nan=False)
real_polys = st.lists(st.tuples(real, real), min_size=3, max_size=12).map(lambda p: Polygon(tuple(p)))


@settings(max_examples=300, deadline=None)
@given(int_polys, st.integers(1, 8192))
def test_flip_is_exact_involution_on_pixel_coordinates(p, w):
    assert fliplr_polygon(fliplr_polygon(p, w), w) == p


@settings(max_examples=300, deadline=None)
@given(real_polys, st.floats(1, 1e4))
def test_flip_involution_on_reals(p, w):
    back = fliplr_polygon(fliplr_polygon(p, w), w)
    for (x, y), (u, v) in zip(p.points, back.points):
        assert abs(x - u) <= 1e-9 * max(1.0, abs(x)) and y == v


def test_flip_example():
    p = Polygon(((0, 0), (4, 0), (4, 4)))
    assert fliplr_polygon(p, 10).points == ((10, 0), (6, 0), (6, 4))
    with pytest.raises(ValueError):
        fliplr_polygon(p, 0)


@settings(max_examples=300, deadline=None)
@given(real_polys, st.floats(-45, 45), st.floats(-16, 16), st.tuples(real, real))
def test_affine_preserves_area(p, rot, shear, center):
    a = polygon_area(p)
    b = polygon_area(affine_polygon(p, AffineParams(rot, shear, center)))
    scale = max(1.0, max(abs(v) for pt in p.points for v in pt) ** 2)
    assert abs(a - b) <= 1e-9 * scale


def test_affine_range_validation():
    with pytest.raises(ValueError):
        AffineParams(46.0, 0.0)
    with pytest.raises(ValueError):
        AffineParams(0.0, -16.5)
    AffineParams(45.0, -16.0)


def test_identity_affine():
    p = Polygon(((1.5, 2), (7, 3), (4, 9)))
    q = affine_polygon(p, AffineParams(0.0, 0.0, (5, 5)))
    assert np.allclose(q.as_array(), p.as_array(), atol=1e-12)


def test_rotation_about_center():
    p = Polygon(((10, 0), (10, 1), (11, 0)))
    q = affine_polygon(p, AffineParams(45.0, 0.0, (0, 0)))
    # counter-clockwise in x-right/y-down pixel coords maps (10,0) onto the diagonal
    assert np.allclose(q.points[0], (10 / 2**0.5, 10 / 2**0.5))


def test_sampled_parameters_stay_in_range():
    d = facade_dataset(10, n_instances=30, width=64, height=64, seed=1)
    plan = plan_augmentation(d, seed=9, per_image_copies=1000)
    assert len(plan.items) == 10**4
    rots = [it.affine.rotation_deg for it in plan.items]
    shears = [it.affine.shear_deg for it in plan.items]
    assert -45 <= min(rots) and max(rots) <= 45
    assert -16 <= min(shears) and max(shears) <= 16
    flips = sum(it.fliplr for it in plan.items)
    assert 4700 < flips < 5300


def test_plan_custom_ranges():
    d = facade_dataset(3, width=64, height=64)
    plan = plan_augmentation(d, 0, 50, rotation_range=(-5, 5), shear_range=(0, 1))
    assert all(-5 <= it.affine.rotation_deg <= 5 and 0 <= it.affine.shear_deg <= 1 for it in plan.items)


def test_plan_deterministic():
    d = facade_dataset(5, width=128, height=128)
    assert plan_augmentation(d, 3, 2) == plan_augmentation(d, 3, 2)
    assert plan_augmentation(d, 3, 2) != plan_augmentation(d, 4, 2)


def test_same_seed_byte_identical_output():
    d = facade_dataset(8, width=256, height=256, seed=2)
    outs = []
    for _ in range(2):
        r = apply_plan(d, plan_augmentation(d, 17, 2))
        outs.append((write_via(r.dataset), write_transforms(r.transforms)))
    assert outs[0] == outs[1]


def test_counts_and_names():
    d = facade_dataset(4, width=200, height=100, seed=4)
    r = apply_plan(d, plan_augmentation(d, 1, 3))
    assert len(r.dataset) == 12
    assert len(r.transforms) == 12
    names = [im.filename for im in r.dataset.images]
    assert len(set(names)) == 12
    assert names[0].startswith("facade_000__aug0_") and names[0].endswith(".png")
    assert {t["source"] for t in r.transforms} == {im.filename for im in d.images}
    assert all(len(t["matrix"]) == 9 for t in r.transforms)
    kept = sum(len(im.regions) for im in r.dataset.images)
    assert kept + r.dropped_polygons == 3 * sum(len(im.regions) for im in d.images)


def test_outputs_stay_on_canvas():
    d = facade_dataset(6, width=300, height=200, seed=8)
    r = apply_plan(d, plan_augmentation(d, 5, 2))
    for im in r.dataset.images:
        for reg in im.regions:
            assert all(0 <= x <= 300 and 0 <= y <= 200 for x, y in reg.polygon.points)
            assert polygon_area(reg.polygon) >= 1.0


def test_identity_plan_is_noop():
    d = facade_dataset(3, width=64, height=64)
    plan = AugmentPlan(0, 3, tuple(AugmentItem(i, 0) for i in range(3)))
    r = apply_plan(d, plan)
    assert [im.regions for im in r.dataset.images] == [im.regions for im in d.images]
    assert r.transforms[0]["op"] == "identity"
    assert r.transforms[0]["matrix"] == [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]


def test_flip_only_plan_matches_fliplr():
    d = facade_dataset(2, width=64, height=48)
    plan = AugmentPlan(0, 2, (AugmentItem(0, 0, fliplr=True), AugmentItem(1, 0, fliplr=True)))
    r = apply_plan(d, plan)
    for src, out in zip(d.images, r.dataset.images):
        assert [reg.polygon for reg in out.regions] == [fliplr_polygon(reg.polygon, 64) for reg in src.regions]
    # flipping twice gives the source back exactly
    twice = apply_plan(r.dataset, plan)
    assert [im.regions for im in twice.dataset.images] == [im.regions for im in d.images]


def test_plan_mismatch_rejected():
    d = facade_dataset(3, width=64, height=64)
    plan = plan_augmentation(d, 0)
    with pytest.raises(ValueError):
        apply_plan(facade_dataset(4, width=64, height=64), plan)


def test_attributes_preserved_and_via_round_trip():
    attrs = {"class": "window", "type": "sash"}
    im = ImageRecord("a.jpg", 5, (Region(Polygon(((10, 10), (30, 10), (30, 30), (10, 30))), attrs),), 64, 64)
    r = apply_plan(Dataset((im,)), plan_augmentation(Dataset((im,)), 2))
    assert dict(r.dataset.images[0].regions[0].attributes) == attrs
    assert parse_via(write_via(r.dataset)).images == tuple(
        type(x)(x.filename, x.file_size, x.regions) for x in r.dataset.images
    )


def test_unresolved_dataset_uses_annotation_extent():
    d = unresolved(facade_dataset(2, width=100, height=100, seed=6))
    r = apply_plan(d, plan_augmentation(d, 3))
    assert len(r.dataset) == 2
    json.loads(write_transforms(r.transforms))
