"""Binarization, border extraction, components, and convex hulls."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import centered_scene, hd_camera
from gaze_pose.errors import DegenerateGeometryError, RoiBoundsError
from gaze_pose.imgproc import (
    BinaryMask,
    GrayImage,
    Roi,
    adaptive_threshold,
    connected_dark_components,
    convex_hull,
    extract_border_points,
    fixed_threshold,
    hull_area,
    select_iris_hull,
)
from gaze_pose.synth import render_frame


def full_roi(img: GrayImage) -> Roi:
    return Roi(0, 0, img.width, img.height)


class TestAdaptiveThreshold:
    def test_uniform_roi_yields_empty_mask(self):
        img = GrayImage.from_array(np.full((10, 10), 100, dtype=np.uint8))
        mask = adaptive_threshold(img, full_roi(img), 0.8)
        assert not mask.bits.any()  # thd = 80, 100 >= 80

    def test_bimodal_roi_marks_exactly_the_dark_half(self):
        arr = np.full((10, 10), 160, dtype=np.uint8)
        arr[:5] = 40
        img = GrayImage.from_array(arr)
        mask = adaptive_threshold(img, full_roi(img), 0.8)
        assert mask.bits[:5].all() and not mask.bits[5:].any()

    def test_all_zero_roi_gives_empty_mask_without_error(self):
        img = GrayImage.from_array(np.zeros((10, 10), dtype=np.uint8))
        mask = adaptive_threshold(img, full_roi(img), 0.5)
        assert not mask.bits.any()  # 0 < 0 is false

    def test_roi_outside_image_raises(self):
        img = GrayImage.from_array(np.zeros((10, 10), dtype=np.uint8))
        with pytest.raises(RoiBoundsError):
            adaptive_threshold(img, Roi(4, 4, 8, 8), 0.5)

    @pytest.mark.parametrize("k", [0.0, 1.0, -0.2, 1.5])
    def test_k_out_of_range_rejected(self, k):
        img = GrayImage.from_array(np.zeros((10, 10), dtype=np.uint8))
        with pytest.raises(ValueError):
            adaptive_threshold(img, full_roi(img), k)

    def test_mask_dimensions_match_roi(self):
        img = GrayImage.from_array(np.zeros((20, 30), dtype=np.uint8))
        mask = adaptive_threshold(img, Roi(2, 3, 12, 9), 0.5)
        assert (mask.width, mask.height) == (12, 9)

    @given(
        data=st.lists(st.integers(50, 255), min_size=64, max_size=64),
        c=st.integers(1, 40),
    )
    @settings(max_examples=50, deadline=None)
    def test_darkening_keeps_dark_pixels_dark(self, data, c):
        # lowering every pixel by c lowers the threshold by only c*k < c,
        # so a pixel classified dark stays dark after the shift
        arr = np.array(data, dtype=np.uint8).reshape(8, 8)
        img1 = GrayImage.from_array(arr)
        img2 = GrayImage.from_array((arr.astype(int) - c).clip(0).astype(np.uint8))
        m1 = adaptive_threshold(img1, full_roi(img1), 0.7)
        m2 = adaptive_threshold(img2, full_roi(img2), 0.7)
        assert (m2.bits | ~m1.bits).all()

    def test_scaling_intensities_preserves_classification(self):
        rng = np.random.default_rng(0)
        arr = rng.integers(10, 120, size=(12, 12)).astype(np.uint8)  # 2x stays < 256
        img1 = GrayImage.from_array(arr)
        img2 = GrayImage.from_array((arr * 2).astype(np.uint8))
        m1 = adaptive_threshold(img1, full_roi(img1), 0.7)
        m2 = adaptive_threshold(img2, full_roi(img2), 0.7)
        assert (m1.bits == m2.bits).all()

    def test_shadowed_render_iou_beats_fixed_cutoff(self):
        import math

        from conftest import BASE_GAZE, sd_camera
        from gaze_pose.synth import EyeScene, rotation_about_axis

        gaze = rotation_about_axis(np.array([0.0, 1.0, 0.0]), math.radians(30)) @ BASE_GAZE
        scene = EyeScene(
            eye_center=np.array([0.0, 0.0, 50.0]),
            gaze_normal=gaze,
            shadow_dir=(1.0, 0.4),
            shadow_strength=0.4,
        )
        img, meta = render_frame(scene, sd_camera(), (640, 360))
        truth = meta["iris_mask"]
        # evaluate over a box around the iris
        e = meta["iris_ellipse"]
        half = e["ax_maj"] * 0.75
        roi = Roi(
            int(e["p_x"] - half), int(e["p_y"] - half), int(2 * half), int(2 * half)
        )
        truth_roi = truth[roi.y0 : roi.y0 + roi.h, roi.x0 : roi.x0 + roi.w]

        def iou(bits):
            inter = (bits & truth_roi).sum()
            union = (bits | truth_roi).sum()
            return inter / union

        adaptive = adaptive_threshold(img, roi, 0.7)
        fixed = fixed_threshold(img, roi, 128.0)
        assert iou(adaptive.bits) >= 0.8
        assert iou(fixed.bits) < 0.5


class TestBorderPoints:
    def test_square_perimeter(self):
        bits = np.zeros((10, 10), dtype=bool)
        bits[3:6, 4:7] = True
        pts = extract_border_points(BinaryMask(10, 10, bits))
        assert len(pts) == 8  # 3x3 block: all but the center pixel
        assert not any((p == [5, 4]).all() for p in pts)

    def test_all_dark_mask_returns_outer_ring(self):
        bits = np.ones((6, 8), dtype=bool)
        pts = extract_border_points(BinaryMask(8, 6, bits))
        expect = {
            (x, y)
            for x in range(8)
            for y in range(6)
            if x in (0, 7) or y in (0, 5)
        }
        assert {tuple(p) for p in pts.astype(int)} == expect

    def test_empty_mask_returns_empty(self):
        pts = extract_border_points(BinaryMask(5, 5, np.zeros((5, 5), dtype=bool)))
        assert len(pts) == 0

    def test_border_subset_of_dark_and_no_interior(self):
        rng = np.random.default_rng(1)
        bits = rng.random((20, 20)) < 0.5
        pts = extract_border_points(BinaryMask(20, 20, bits)).astype(int)
        for x, y in pts:
            assert bits[y, x]
            neighbors_dark = (
                y > 0
                and bits[y - 1, x]
                and y < 19
                and bits[y + 1, x]
                and x > 0
                and bits[y, x - 1]
                and x < 19
                and bits[y, x + 1]
            )
            assert not neighbors_dark

    def test_render_border_points_near_true_ellipse(self):
        from gaze_pose.ellipse_fit import Ellipse, point_ellipse_distance

        scene = centered_scene(15.0)
        img, meta = render_frame(scene, hd_camera(), (1920, 1080))
        e = meta["iris_ellipse"]
        half = e["ax_maj"] * 0.75
        roi = Roi(int(e["p_x"] - half), int(e["p_y"] - half), int(2 * half), int(2 * half))
        mask = adaptive_threshold(img, roi, 0.7)
        pts = extract_border_points(mask) + np.array([roi.x0, roi.y0])
        truth = Ellipse(e["p_x"], e["p_y"], e["ax_maj"], e["ax_min"], e["psi"])
        assert float(np.max(point_ellipse_distance(truth, pts))) <= 1.5


class TestConvexHull:
    def test_interior_point_removed(self):
        pts = np.array([[0, 0], [4, 0], [4, 4], [0, 4], [2, 2]], dtype=float)
        hull = convex_hull(pts)
        assert {tuple(p) for p in hull} == {(0, 0), (4, 0), (4, 4), (0, 4)}

    def test_collinear_raises(self):
        with pytest.raises(DegenerateGeometryError):
            convex_hull(np.array([[0, 0], [1, 1], [2, 2]], dtype=float))

    def test_too_few_points_raises(self):
        with pytest.raises(DegenerateGeometryError):
            convex_hull(np.array([[0, 0], [1, 0]], dtype=float))

    def test_random_disc_points_all_contained(self):
        rng = np.random.default_rng(7)
        r = np.sqrt(rng.random(200)) * 50
        t = rng.random(200) * 2 * np.pi
        pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
        hull = convex_hull(pts)
        # brute-force half-plane test against every hull edge (CCW)
        for i in range(len(hull)):
            a, b = hull[i], hull[(i + 1) % len(hull)]
            cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (
                pts[:, 0] - a[0]
            )
            assert (cross >= -1e-9).all()

    def test_hull_is_convex_and_ccw(self):
        rng = np.random.default_rng(3)
        pts = rng.random((60, 2)) * 100
        hull = convex_hull(pts)
        n = len(hull)
        for i in range(n):
            o, a, b = hull[i], hull[(i + 1) % n], hull[(i + 2) % n]
            cross = (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
            assert cross > 0


class TestComponents:
    def test_two_squares(self):
        bits = np.zeros((20, 20), dtype=bool)
        bits[1:4, 1:4] = True
        bits[10:15, 10:15] = True
        comps = connected_dark_components(BinaryMask(20, 20, bits))
        assert sorted(len(c) for c in comps) == [9, 25]

    def test_empty_mask(self):
        assert connected_dark_components(BinaryMask(5, 5, np.zeros((5, 5), bool))) == []

    def test_select_iris_hull_prefers_largest_area(self):
        bits = np.zeros((30, 30), dtype=bool)
        bits[2:6, 2:6] = True  # small square
        bits[10:26, 10:26] = True  # large square
        hull = select_iris_hull(BinaryMask(30, 30, bits))
        assert hull[:, 0].min() >= 10 and hull[:, 1].min() >= 10

    def test_select_iris_hull_empty_mask_raises(self):
        with pytest.raises(DegenerateGeometryError):
            select_iris_hull(BinaryMask(5, 5, np.zeros((5, 5), bool)))

    def test_glint_holes_do_not_shrink_hull(self):
        scene = centered_scene(10.0)
        scene = type(scene)(
            eye_center=scene.eye_center,
            gaze_normal=scene.gaze_normal,
            glints=((-0.3, -0.3, 8.0, 0.95), (0.25, 0.2, 8.0, 0.95)),
        )
        img, meta = render_frame(scene, hd_camera(), (1920, 1080))
        e = meta["iris_ellipse"]
        half = e["ax_maj"] * 0.75
        roi = Roi(int(e["p_x"] - half), int(e["p_y"] - half), int(2 * half), int(2 * half))
        mask = adaptive_threshold(img, roi, 0.7)
        hull = select_iris_hull(mask)
        true_area = np.pi * (e["ax_maj"] / 2) * (e["ax_min"] / 2)
        assert abs(hull_area(hull) - true_area) / true_area <= 0.05
