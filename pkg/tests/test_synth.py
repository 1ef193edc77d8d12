"""Forward model, rasterizer, and sweep dataset generation."""

import json
import math

import numpy as np
import pytest

from conftest import centered_scene, hd_camera, make_scene, sd_camera
from gaze_pose.ellipse_fit import fit_ellipse_direct, ransac_fit_ellipse
from gaze_pose.errors import DegenerateProjectionError, OutOfViewError
from gaze_pose.gaze_geometry import CameraIntrinsics
from gaze_pose.imgproc import Roi, adaptive_threshold, select_iris_hull
from gaze_pose.synth import (
    EyeScene,
    SweepSpec,
    generate_sweep,
    project_iris_ellipse,
    project_sclera_ellipse,
    render_frame,
    rotation_about_axis,
    sweep_scenes,
)


class TestRotation:
    def test_ninety_about_z(self):
        R = rotation_about_axis(np.array([0.0, 0.0, 1.0]), math.pi / 2)
        assert R @ np.array([1.0, 0, 0]) == pytest.approx([0, 1, 0])

    def test_orthonormal(self):
        R = rotation_about_axis(np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8]), 1.1)
        assert R @ R.T == pytest.approx(np.eye(3))
        assert np.linalg.det(R) == pytest.approx(1.0)


class TestForwardModel:
    def test_frontal_iris_is_circle_at_principal_point(self):
        # iris circle of radius 6 facing the camera at depth 50
        offset = math.sqrt(12.0**2 - 6.0**2)
        scene = EyeScene(
            eye_center=np.array([0.0, 0.0, 50.0 + offset]),
            gaze_normal=np.array([0.0, 0.0, -1.0]),
            iris_radius=6.0,
        )
        cam = CameraIntrinsics(1000, 1000, 320, 240)
        e = project_iris_ellipse(scene, cam)
        assert scene.iris_center == pytest.approx([0, 0, 50])
        assert (e.p_x, e.p_y) == pytest.approx((320, 240))
        assert e.ax_maj == pytest.approx(e.ax_min)
        assert e.ax_maj == pytest.approx(1000 * 6.0 / 50.0)

    def test_centered_tilt_gives_cosine_ratio(self):
        e = project_iris_ellipse(centered_scene(30.0), hd_camera())
        assert e.ax_min / e.ax_maj == pytest.approx(math.cos(math.radians(30)), abs=1e-9)

    def test_behind_camera_raises(self):
        scene = make_scene(eye_z=-100.0)
        with pytest.raises(DegenerateProjectionError):
            project_iris_ellipse(scene, hd_camera())

    def test_sclera_silhouette_circle_for_on_axis_eye(self):
        scene = make_scene(eye_z=100.0)
        e = project_sclera_ellipse(scene, hd_camera())
        assert e.ax_maj == pytest.approx(e.ax_min, rel=1e-9)
        assert (e.p_x, e.p_y) == pytest.approx((960, 540))

    def test_sclera_silhouette_matches_dense_sphere_outline(self):
        # silhouette of the eyeball seen off-axis, checked against a
        # brute-force projection of the sphere's limb circle
        scene = make_scene(eye_z=120.0, eye_xy=(15.0, -10.0))
        cam = hd_camera()
        e = project_sclera_ellipse(scene, cam)
        E = scene.eye_center
        dist = np.linalg.norm(E)
        shrink = 1 - (12.0 / dist) ** 2
        center = E * shrink
        radius = 12.0 * math.sqrt(shrink)
        n = E / dist
        seed = np.array([0.0, 1.0, 0.0])
        e1 = np.cross(n, seed)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        ts = np.linspace(0, 2 * math.pi, 5000)
        pts3 = center + radius * (np.outer(np.cos(ts), e1) + np.outer(np.sin(ts), e2))
        px = cam.pr_x - cam.f_x * pts3[:, 0] / pts3[:, 2]
        py = cam.pr_y + cam.f_y * pts3[:, 1] / pts3[:, 2]
        fit = fit_ellipse_direct(np.column_stack([px, py]))
        assert fit.p_x == pytest.approx(e.p_x, abs=1e-6)
        assert fit.p_y == pytest.approx(e.p_y, abs=1e-6)
        assert fit.ax_maj == pytest.approx(e.ax_maj, rel=1e-6)
        assert fit.ax_min == pytest.approx(e.ax_min, rel=1e-6)


class TestRenderer:
    def test_iris_darker_than_sclera(self):
        scene = centered_scene(0.0)
        img, meta = render_frame(scene, hd_camera(), (1920, 1080))
        mask = meta["iris_mask"]
        ys, xs = np.nonzero(mask)
        iris_mean = img.pixels[mask].mean()
        # sclera sample: ring around the iris
        e = meta["sclera_ellipse"]
        sy = int(e["p_y"])
        sx = int(e["p_x"] + e["ax_maj"] / 4)
        sclera_mean = img.pixels[sy - 5 : sy + 5, sx - 5 : sx + 5].mean()
        assert iris_mean < 0.5 * sclera_mean

    def test_metadata_ellipse_matches_forward_model(self):
        scene = centered_scene(20.0, 50.0)
        cam = hd_camera()
        _, meta = render_frame(scene, cam, (1920, 1080))
        e = project_iris_ellipse(scene, cam)
        assert meta["iris_ellipse"] == {
            "p_x": e.p_x,
            "p_y": e.p_y,
            "ax_maj": e.ax_maj,
            "ax_min": e.ax_min,
            "psi": e.psi,
        }

    def test_mask_is_pixels_inside_analytic_ellipse(self):
        scene = centered_scene(25.0, 120.0)
        cam = hd_camera()
        img, meta = render_frame(scene, cam, (1920, 1080))
        e = project_iris_ellipse(scene, cam)
        xs, ys = np.meshgrid(np.arange(1920.0), np.arange(1080.0))
        inside = e.contains(np.column_stack([xs.ravel(), ys.ravel()])).reshape(1080, 1920)
        assert (inside == meta["iris_mask"]).all()

    def test_shadow_ramp_ratio(self):
        scene = EyeScene(
            eye_center=np.array([0.0, 0.0, 5000.0]),  # eye far away: background only
            gaze_normal=np.array([0.0, 0.0, -1.0]),
            shadow_dir=(1.0, 0.0),
            shadow_strength=0.5,
        )
        img, _ = render_frame(scene, CameraIntrinsics(100, 100, 320, 180), (640, 360))
        row = img.pixels[300].astype(float)  # away from the tiny eye
        assert row[-1] / row[0] == pytest.approx(0.5, abs=0.01)

    def test_out_of_view_raises(self):
        scene = make_scene(eye_xy=(200.0, 0.0), eye_z=100.0)
        with pytest.raises(OutOfViewError):
            render_frame(scene, hd_camera(), (1920, 1080))

    def test_rasterization_fidelity(self):
        scene = centered_scene(20.0, 30.0)
        cam = hd_camera()
        img, meta = render_frame(scene, cam, (1920, 1080))
        e = meta["iris_ellipse"]
        assert e["ax_maj"] >= 60
        half = e["ax_maj"] * 0.75
        roi = Roi(int(e["p_x"] - half), int(e["p_y"] - half), int(2 * half), int(2 * half))
        mask = adaptive_threshold(img, roi, 0.7)
        hull = select_iris_hull(mask) + np.array([roi.x0, roi.y0])
        fit, _ = ransac_fit_ellipse(hull)
        assert math.hypot(fit.p_x - e["p_x"], fit.p_y - e["p_y"]) <= 0.5
        assert abs(fit.ax_maj - e["ax_maj"]) / e["ax_maj"] <= 0.01
        assert abs(fit.ax_min - e["ax_min"]) / e["ax_min"] <= 0.01

    def test_glints_render_bright_inside_iris(self):
        scene = centered_scene(5.0)
        scene = type(scene)(
            eye_center=scene.eye_center,
            gaze_normal=scene.gaze_normal,
            glints=((0.0, 0.0, 6.0, 0.95),),
        )
        img, meta = render_frame(scene, hd_camera(), (1920, 1080))
        e = meta["iris_ellipse"]
        assert img.pixels[int(e["p_y"]), int(e["p_x"])] >= 200


class TestSweep:
    def spec(self, frames, cam=None):
        cam = cam or sd_camera()
        return SweepSpec(
            axis=np.array([0.0, 1.0, 0.0]),
            angle_start=-30.0,
            angle_end=30.0,
            frames=frames,
            width=640,
            height=360,
            cam=cam,
        )

    def test_two_frames_are_endpoints(self):
        scenes = sweep_scenes(self.spec(2), make_scene(eye_z=50.0))
        assert [a for a, _ in scenes] == [-30.0, 30.0]

    def test_thirteen_frames_at_five_degrees(self):
        scenes = sweep_scenes(self.spec(13), make_scene(eye_z=50.0))
        assert [a for a, _ in scenes] == pytest.approx(list(range(-30, 31, 5)))

    def test_single_frame_rejected(self):
        with pytest.raises(ValueError):
            self.spec(1)

    def test_generate_sweep_writes_dataset(self, tmp_path):
        manifest = generate_sweep(self.spec(3), make_scene(eye_z=50.0), tmp_path)
        assert len(manifest["frames"]) == 3
        for entry in manifest["frames"]:
            assert (tmp_path / entry["image"]).exists()
            assert (tmp_path / entry["mask"]).exists()
            assert (tmp_path / entry["boxes"]).exists()
            with open(tmp_path / entry["meta"]) as fh:
                meta = json.load(fh)
            assert "iris_ellipse" in meta and "gaze_normal" in meta
        with open(tmp_path / "manifest.json") as fh:
            on_disk = json.load(fh)
        assert on_disk["frames"] == manifest["frames"]
