"""Exception hierarchy shared across the pipeline."""


class GazePoseError(Exception):
    """Base class for all pipeline errors."""


class RoiBoundsError(GazePoseError):
    """ROI is not fully contained in its image."""


class DegenerateGeometryError(GazePoseError):
    """Too few or collinear points for the requested construction."""


class FitFailureError(GazePoseError):
    """The least-squares conic is rank deficient or not an ellipse."""


class RobustFitFailureError(FitFailureError):
    """No RANSAC iteration reached the required inlier fraction."""


class OutOfViewError(GazePoseError):
    """The eye does not project inside the image."""


class DegenerateProjectionError(GazePoseError):
    """Iris plane passes through (or behind) the camera origin."""


class DetectionFailureError(GazePoseError):
    """No plausible iris region was found in the frame."""


class SidecarParseError(GazePoseError):
    """A detector sidecar box file is malformed."""
