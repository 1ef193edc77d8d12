"""Shared helpers for the test suite."""

from __future__ import annotations

import math

import numpy as np

from gaze_pose.gaze_geometry import CameraIntrinsics
from gaze_pose.synth import EyeScene


def ellipse_points(
    p_x: float,
    p_y: float,
    ax_maj: float,
    ax_min: float,
    psi: float,
    n: int = 24,
    phase: float = 0.1,
) -> np.ndarray:
    """Exact boundary samples of an ellipse via its parametric form."""
    ts = phase + np.linspace(0.0, 2 * math.pi, n, endpoint=False)
    a, b = ax_maj / 2.0, ax_min / 2.0
    c, s = math.cos(psi), math.sin(psi)
    x = a * np.cos(ts)
    y = b * np.sin(ts)
    return np.column_stack([p_x + c * x - s * y, p_y + s * x + c * y])


def hd_camera() -> CameraIntrinsics:
    return CameraIntrinsics(f_x=2200.0, f_y=2200.0, pr_x=960.0, pr_y=540.0)


def sd_camera() -> CameraIntrinsics:
    return CameraIntrinsics(f_x=550.0, f_y=550.0, pr_x=320.0, pr_y=180.0)


BASE_GAZE = np.array([0.0, 0.5, -0.8660254037844386])


def make_scene(
    gaze=BASE_GAZE,
    eye_z: float = 100.0,
    eye_xy=(0.0, 0.0),
    **kwargs,
) -> EyeScene:
    return EyeScene(
        eye_center=np.array([eye_xy[0], eye_xy[1], eye_z]),
        gaze_normal=np.asarray(gaze, dtype=np.float64),
        **kwargs,
    )


def centered_scene(theta_deg: float, azimuth_deg: float = 0.0, eye_z: float = 100.0) -> EyeScene:
    """Scene whose iris center sits exactly on the optical axis.

    The gaze is tilted theta_deg away from facing the camera, leaning in
    the given azimuth; the eye center is placed so the iris lands on the
    axis at depth eye_z.
    """
    th, az = math.radians(theta_deg), math.radians(azimuth_deg)
    g = np.array(
        [math.sin(th) * math.cos(az), math.sin(th) * math.sin(az), -math.cos(th)]
    )
    offset = math.sqrt(12.0**2 - 5.9**2)
    eye_center = np.array([0.0, 0.0, eye_z]) - offset * g
    return EyeScene(eye_center=eye_center, gaze_normal=g)
