"""Box geometry: rotated IoU against a Monte-Carlo oracle, crops against a
brute-force containment oracle, plus the motion/metric invariants."""

import math

import numpy as np
import pytest

from pttrack.geometry import (
    Box3D,
    RigidMotion,
    apply_motion,
    center_error,
    crop_points,
    footprint_contains,
    iou3d,
    iou_bev,
    points_from_box_frame,
    points_to_box_frame,
    wrap_angle,
)


# ---------------------------------------------------------------- oracles


def point_in_box(p, box):
    """Scalar containment test written independently of the library path."""
    dx, dy = p[0] - box.center[0], p[1] - box.center[1]
    c, s = math.cos(box.ry), math.sin(box.ry)
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    return (
        abs(lx) <= box.l / 2.0
        and abs(ly) <= box.w / 2.0
        and abs(p[2] - box.center[2]) <= box.h / 2.0
    )


def mc_iou(a, b, n_samples, seed):
    """Monte-Carlo volumetric IoU plus the binomial sigma of the estimate."""
    rng = np.random.default_rng(seed)
    lo = np.minimum(a.center - a.size.max(), b.center - b.size.max())
    hi = np.maximum(a.center + a.size.max(), b.center + b.size.max())
    pts = rng.uniform(lo, hi, size=(n_samples, 3))

    def inside(box):
        d = pts[:, :2] - box.center[:2]
        c, s = math.cos(box.ry), math.sin(box.ry)
        lx = c * d[:, 0] + s * d[:, 1]
        ly = -s * d[:, 0] + c * d[:, 1]
        return (
            (np.abs(lx) <= box.l / 2.0)
            & (np.abs(ly) <= box.w / 2.0)
            & (np.abs(pts[:, 2] - box.center[2]) <= box.h / 2.0)
        )

    in_a, in_b = inside(a), inside(b)
    n_union = int(np.count_nonzero(in_a | in_b))
    n_inter = int(np.count_nonzero(in_a & in_b))
    if n_union == 0:
        return 0.0, 0.0
    p = n_inter / n_union
    sigma = math.sqrt(max(p * (1.0 - p), 1e-12) / n_union)
    return p, sigma


def random_box(rng, span=3.0):
    return Box3D(
        center=rng.uniform(-span, span, 3),
        size=rng.uniform(0.5, 3.0, 3),
        ry=rng.uniform(-math.pi, math.pi),
    )


# ---------------------------------------------------------------- Box3D


def test_box_validation():
    with pytest.raises(ValueError):
        Box3D(center=[0, 0, 0], size=[1, 0, 1])
    with pytest.raises(ValueError):
        Box3D(center=[0, 0, np.nan], size=[1, 1, 1])


def test_ry_normalized_to_halfopen_interval():
    box = Box3D(center=[0, 0, 0], size=[1, 1, 1], ry=3 * math.pi)
    assert -math.pi <= box.ry < math.pi
    assert box.ry == pytest.approx(-math.pi)
    assert wrap_angle(math.pi) == pytest.approx(-math.pi)


def test_seven_tuple_round_trip():
    box = Box3D(center=[1, 2, 3], size=[2, 1.5, 4], ry=0.3)
    again = Box3D.from_seven(box.as_seven())
    assert np.array_equal(again.center, box.center)
    assert again.ry == box.ry


# ---------------------------------------------------------------- iou3d


def test_iou_identity():
    box = Box3D(center=[1.0, -2.0, 0.5], size=[1.5, 2.0, 3.0], ry=0.7)
    assert iou3d(box, box) == pytest.approx(1.0, abs=1e-12)


def test_iou_axis_aligned_half_shift():
    a = Box3D(center=[0, 0, 0], size=[1, 1, 1])
    b = Box3D(center=[0.5, 0, 0], size=[1, 1, 1])
    assert iou3d(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)


def test_iou_disjoint_is_zero():
    a = Box3D(center=[0, 0, 0], size=[1, 1, 1])
    assert iou3d(a, Box3D(center=[5, 0, 0], size=[1, 1, 1])) == 0.0
    assert iou3d(a, Box3D(center=[0, 0, 5], size=[1, 1, 1])) == 0.0


def test_iou_rotated_cube_matches_monte_carlo():
    a = Box3D(center=[0, 0, 0], size=[1, 1, 1], ry=0.0)
    b = Box3D(center=[0, 0, 0], size=[1, 1, 1], ry=math.pi / 4)
    estimate, sigma = mc_iou(a, b, n_samples=1_000_000, seed=7)
    assert sigma < 0.002
    assert abs(iou3d(a, b) - estimate) <= 3 * sigma


def test_iou_matches_monte_carlo_on_random_pairs():
    rng = np.random.default_rng(42)
    for trial in range(100):
        a, b = random_box(rng), random_box(rng)
        estimate, sigma = mc_iou(a, b, n_samples=20_000, seed=1000 + trial)
        assert abs(iou3d(a, b) - estimate) <= 3 * sigma + 1e-9


def test_iou_symmetric():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = random_box(rng), random_box(rng)
        assert iou3d(a, b) == pytest.approx(iou3d(b, a), abs=1e-12)


def rigid_scene_motion(box, translation, dtheta):
    """Rotate about the world origin, then translate: moves the whole scene."""
    c, s = math.cos(dtheta), math.sin(dtheta)
    x, y, z = box.center
    center = [c * x - s * y, s * x + c * y, z]
    return Box3D(center=np.add(center, translation), size=box.size, ry=box.ry + dtheta)


def test_iou_invariant_under_common_motion():
    rng = np.random.default_rng(11)
    for _ in range(30):
        a, b = random_box(rng), random_box(rng)
        base = iou3d(a, b)
        shift = RigidMotion(translation=rng.uniform(-5, 5, 3))
        assert abs(iou3d(apply_motion(a, shift), apply_motion(b, shift)) - base) <= 1e-9
        motion = RigidMotion(translation=rng.uniform(-5, 5, 3), dtheta=rng.uniform(-3, 3))
        moved = iou3d(apply_motion(a, motion), apply_motion(b, motion))
        assert abs(moved - base) <= 1e-6


def test_apply_motion_matches_scene_isometry_oracle():
    rng = np.random.default_rng(12)
    for _ in range(30):
        box = random_box(rng)
        t = rng.uniform(-5, 5, 3)
        ang = rng.uniform(-3, 3)
        got = apply_motion(box, RigidMotion(translation=t, dtheta=ang))
        want = rigid_scene_motion(box, t, ang)
        assert np.allclose(got.center, want.center, atol=1e-12)
        assert np.allclose(got.size, want.size, atol=0)
        assert math.isclose(math.cos(got.ry - want.ry), 1.0, abs_tol=1e-12)


def test_iou_treats_flipped_box_as_same_solid():
    a = Box3D(center=[0, 0, 0], size=[1, 1, 2], ry=0.3)
    flipped = Box3D(center=[0, 0, 0], size=[1, 1, 2], ry=0.3 + math.pi)
    assert iou3d(a, flipped) == pytest.approx(1.0, abs=1e-9)


def test_iou_bev_ignores_vertical_offset():
    a = Box3D(center=[0, 0, 0], size=[1, 1, 1])
    b = Box3D(center=[0, 0, 10], size=[1, 1, 1])
    assert iou_bev(a, b) == pytest.approx(1.0, abs=1e-12)
    assert iou3d(a, b) == 0.0


# ---------------------------------------------------------------- center error


def test_center_error_cases():
    a = Box3D(center=[0, 0, 0], size=[1, 1, 1])
    assert center_error(a, a) == 0.0
    b = Box3D(center=[3, 4, 0], size=[1, 1, 1])
    assert center_error(a, b) == pytest.approx(5.0)
    c = Box3D(center=[1, 1, 1], size=[1, 1, 1])
    d = Box3D(center=[2, 3, 4], size=[1, 1, 1])
    assert center_error(c, d) == pytest.approx(math.sqrt(14.0))


def test_center_error_triangle_inequality():
    rng = np.random.default_rng(5)
    for _ in range(100):
        a, b, c = (random_box(rng) for _ in range(3))
        assert center_error(a, c) <= center_error(a, b) + center_error(b, c) + 1e-12


# ---------------------------------------------------------------- motion


def test_apply_motion_identity():
    box = Box3D(center=[1, 2, 3], size=[1, 2, 3], ry=0.5)
    same = apply_motion(box, RigidMotion(translation=[0, 0, 0]))
    assert np.array_equal(same.center, box.center)
    assert same.ry == box.ry


def test_apply_motion_translation_and_wrap():
    box = Box3D(center=[0, 0, 0], size=[1, 1, 1], ry=0.25)
    moved = apply_motion(box, RigidMotion(translation=[1, 0, 0]))
    assert np.allclose(moved.center, [1, 0, 0])
    # dtheta normalizes to zero before application, so ry is bit-identical
    spun = apply_motion(box, RigidMotion(translation=[0, 0, 0], dtheta=2 * math.pi))
    assert spun.ry == box.ry


# ---------------------------------------------------------------- crops


def test_crop_empty_cloud():
    box = Box3D(center=[0, 0, 0], size=[1, 1, 1])
    pts, idx = crop_points(np.empty((0, 3)), box, margin=1.0)
    assert len(pts) == 0 and len(idx) == 0


def test_crop_center_always_included():
    box = Box3D(center=[2, -1, 0.5], size=[1, 2, 3], ry=1.1)
    for margin in (0.0, 0.5, 10.0):
        _, idx = crop_points(box.center.reshape(1, 3), box, margin)
        assert list(idx) == [0]


def test_crop_matches_bruteforce_oracle():
    rng = np.random.default_rng(17)
    for _ in range(100):
        box = random_box(rng)
        margin = float(rng.uniform(0, 1.5))
        cloud = rng.uniform(-5, 5, size=(rng.integers(1, 120), 3))
        grown = Box3D(
            center=box.center,
            size=[box.w + 2 * margin, box.h, box.l + 2 * margin],
            ry=box.ry,
        )
        expect = [i for i, p in enumerate(cloud) if point_in_box(p, grown)]
        _, idx = crop_points(cloud, box, margin)
        assert list(idx) == expect


def test_crop_preserves_input_order():
    box = Box3D(center=[0, 0, 0], size=[4, 4, 4])
    cloud = np.array([[1, 0, 0], [0, 1, 0], [-1, 0, 0], [9, 9, 9]], dtype=float)
    pts, idx = crop_points(cloud, box, 0.0)
    assert list(idx) == [0, 1, 2]
    assert np.array_equal(pts, cloud[:3])


def test_frame_round_trip():
    rng = np.random.default_rng(23)
    box = random_box(rng)
    cloud = rng.uniform(-4, 4, size=(50, 3))
    back = points_from_box_frame(points_to_box_frame(cloud, box), box)
    assert np.allclose(back, cloud, atol=1e-12)


def test_footprint_contains_ignores_height():
    box = Box3D(center=[0, 0, 0], size=[1, 1, 1])
    pts = np.array([[0.0, 0.0, 100.0], [2.0, 0.0, 0.0]])
    mask = footprint_contains(box, pts)
    assert mask.tolist() == [True, False]
