"""Iris position and gaze direction from single grayscale frames.

Classical pipeline: adaptive binarization, border extraction, convex
hull, robust ellipse fitting, circle-pose unprojection, off-center
correction, and mirror-ambiguity resolution — validated end to end
against a built-in synthetic eye renderer, with a kinematic
camera-servo simulator on top.
"""

from .ellipse_fit import Ellipse, RansacConfig, fit_ellipse_direct, ransac_fit_ellipse
from .errors import (
    DegenerateGeometryError,
    DegenerateProjectionError,
    DetectionFailureError,
    FitFailureError,
    GazePoseError,
    OutOfViewError,
    RobustFitFailureError,
    RoiBoundsError,
    SidecarParseError,
)
from .gaze_geometry import (
    CameraIntrinsics,
    CandidateNormals,
    GazeEstimate,
    IrisModel,
    estimate_gaze,
)
from .imgproc import BinaryMask, GrayImage, Roi, adaptive_threshold, load_image, save_image
from .roi import RoiPair, intensity_roi, load_sidecar_boxes, make_roi_provider, oracle_roi
from .synth import EyeScene, SweepSpec, generate_sweep, project_iris_ellipse, render_frame
from .track_servo import (
    FrameResult,
    ServoState,
    TrackerState,
    process_frame,
    run_servo_experiment,
    servo_target,
    step_servo,
    summarize,
)

__version__ = "0.1.0"
