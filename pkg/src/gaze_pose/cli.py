"""Command-line surface: dataset synthesis, single-frame detection,
sequence tracking, and the camera-servo experiment.

Exit codes are stable across commands: 0 success, 2 usage error,
3 detection failure, 4 fit failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .ellipse_fit import RansacConfig, ransac_fit_ellipse
from .errors import (
    DegenerateGeometryError,
    DegenerateProjectionError,
    DetectionFailureError,
    FitFailureError,
    OutOfViewError,
    RoiBoundsError,
    SidecarParseError,
)
from .gaze_geometry import CameraIntrinsics, IrisModel, estimate_gaze
from .imgproc import adaptive_threshold, load_image, select_iris_hull
from .report import (
    frame_record,
    render_servo_figure,
    render_track_figures,
    write_frame_records,
    write_servo_csv,
    write_track_summary_csv,
)
from .roi import make_roi_provider, sclera_center
from .synth import EyeScene, SweepSpec, generate_sweep, rotation_about_axis
from .track_servo import (
    TrackerState,
    process_frame,
    run_servo_experiment,
    summarize,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DETECTION = 3
EXIT_FIT = 4
EXIT_IO = 5

CONFIG_ENV_VAR = "GAZE_POSE_CONFIG"


@dataclass(frozen=True)
class Config:
    """Every tunable constant of the pipeline in one flat record."""

    f_x: float = 2200.0
    f_y: float = 2200.0
    pr_x: float = 960.0
    pr_y: float = 540.0
    iris_radius_mm: float = 5.9
    eye_radius_mm: float = 12.0
    threshold_k: float = 0.7
    ransac_iterations: int = 200
    ransac_tol_px: float = 1.5
    ransac_min_inlier_frac: float = 0.5
    ambiguity_eps_px: float = 3.0
    servo_distance_mm: float = 209.0
    servo_max_step_mm: float = 0.0  # 0 disables the rate limit
    servo_max_step_deg: float = 0.0
    rng_seed: int = 42
    roi_provider: str = "oracle"
    sclera_mode: str = "box"

    def __post_init__(self):
        positive = (
            "f_x",
            "f_y",
            "iris_radius_mm",
            "eye_radius_mm",
            "threshold_k",
            "ransac_iterations",
            "ransac_tol_px",
            "ransac_min_inlier_frac",
            "ambiguity_eps_px",
            "servo_distance_mm",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be positive")
        if self.roi_provider not in ("oracle", "sidecar", "intensity"):
            raise ValueError(f"unknown roi_provider {self.roi_provider!r}")
        if self.sclera_mode not in ("box", "bright"):
            raise ValueError(f"unknown sclera_mode {self.sclera_mode!r}")

    def camera(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.f_x, self.f_y, self.pr_x, self.pr_y)

    def iris(self) -> IrisModel:
        return IrisModel(Ir_R=self.iris_radius_mm)

    def ransac(self) -> RansacConfig:
        return RansacConfig(
            iterations=self.ransac_iterations,
            inlier_tol=self.ransac_tol_px,
            min_inlier_frac=self.ransac_min_inlier_frac,
            rng_seed=self.rng_seed,
        )

    def to_text(self) -> str:
        lines = ["# gaze-pose configuration (key = value)"]
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Config":
        fields = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in fields:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            default = getattr(cls, key, None)
            field_type = type(getattr(cls(), key))
            kwargs[key] = field_type(value) if field_type is not bool else value == "True"
        return cls(**kwargs)


def load_config(path: Optional[str]) -> Config:
    """Resolve config from --config, the env var, or defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return Config()
    return Config.from_text(Path(path).read_text(encoding="utf-8"))


def _default_optics(width: int, height: int) -> tuple[float, float]:
    """(focal length px, eye distance mm) scaled to the resolution."""
    if (width, height) == (640, 360):
        return 550.0, 50.0
    scale = width / 1920.0
    return 2200.0 * scale, 100.0 * scale


def _parse_res(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise ValueError(f"bad resolution {text!r}, expected WIDTHxHEIGHT") from exc


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as exc:
        raise ValueError(f"bad range {text!r}, expected LO:HI") from exc


def _parse_axis(text: str) -> np.ndarray:
    named = {"x": [1, 0, 0], "y": [0, 1, 0], "z": [0, 0, 1]}
    if text in named:
        return np.array(named[text], dtype=np.float64)
    try:
        vec = np.array([float(v) for v in text.split(",")], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"bad axis {text!r}") from exc
    if vec.shape != (3,) or np.linalg.norm(vec) == 0:
        raise ValueError(f"bad axis {text!r}")
    return vec


DEFAULT_BASE_GAZE = np.array([0.0, 0.5, -0.8660254037844386])


def _scene_from_manifest(manifest: dict) -> tuple[EyeScene, SweepSpec]:
    sc = manifest["scene"]
    sw = manifest["sweep"]
    intr = manifest["intrinsics"]
    scene = EyeScene(
        eye_center=np.array(sc["eye_center"]),
        gaze_normal=np.array(sc["base_gaze"]),
        eye_radius=sc["eye_radius_mm"],
        iris_radius=sc["iris_radius_mm"],
        ambient=sc["ambient"],
        shadow_dir=tuple(sc["shadow_dir"]),
        shadow_strength=sc["shadow_strength"],
        glints=tuple(tuple(g) for g in sc["glints"]),
    )
    spec = SweepSpec(
        axis=np.array(sw["axis"]),
        angle_start=sw["angle_start"],
        angle_end=sw["angle_end"],
        frames=sw["frames"],
        width=manifest["width"],
        height=manifest["height"],
        cam=CameraIntrinsics(intr["f_x"], intr["f_y"], intr["pr_x"], intr["pr_y"]),
    )
    return scene, spec


def cmd_synth(args: argparse.Namespace) -> int:
    width, height = _parse_res(args.res)
    lo, hi = _parse_range(args.range)
    focal, eye_z = _default_optics(width, height)
    if args.eye_z is not None:
        eye_z = args.eye_z
    cam = CameraIntrinsics(f_x=focal, f_y=focal, pr_x=width / 2.0, pr_y=height / 2.0)
    glints = ()
    if args.glints > 0:
        # small bright discs spread inside the iris
        radius_px = max(2.0, focal * 5.9 / eye_z * 0.06)
        spots = [(-0.35, -0.3), (0.3, -0.25), (0.1, 0.35), (-0.2, 0.25)]
        glints = tuple(
            (u, v, radius_px, 0.95) for u, v in spots[: args.glints]
        )
    scene = EyeScene(
        eye_center=np.array([0.0, 0.0, eye_z]),
        gaze_normal=DEFAULT_BASE_GAZE.copy(),
        shadow_dir=(1.0, 0.4),
        shadow_strength=args.shadow,
        glints=glints,
    )
    spec = SweepSpec(
        axis=_parse_axis(args.axis),
        angle_start=lo,
        angle_end=hi,
        frames=args.frames,
        width=width,
        height=height,
        cam=cam,
    )
    manifest = generate_sweep(spec, scene, args.out, seed=args.seed)
    print(f"wrote {len(manifest['frames'])} frames to {args.out}")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    img = load_image(args.image)
    meta: Optional[dict] = None
    if args.meta is not None:
        with open(args.meta, encoding="utf-8") as fh:
            meta = json.load(fh)
    provider_kind = args.provider or cfg.roi_provider
    if provider_kind == "sidecar":
        boxes = args.boxes or str(Path(args.image).with_suffix(".txt"))
        meta = dict(meta or {}, boxes=boxes)
    provider = make_roi_provider(provider_kind, k=cfg.threshold_k)
    pair = provider(img, meta)
    mask = adaptive_threshold(img, pair.iris_roi, cfg.threshold_k)
    hull = select_iris_hull(mask)
    pts = hull + np.array([pair.iris_roi.x0, pair.iris_roi.y0], dtype=np.float64)
    ellipse, _ = ransac_fit_ellipse(pts, cfg.ransac())
    estimate = estimate_gaze(
        ellipse,
        sclera_center(pair, img, mode=cfg.sclera_mode, k=cfg.threshold_k),
        cfg.camera(),
        cfg.iris(),
        ambiguity_eps=cfg.ambiguity_eps_px,
    )
    record = {
        "image": str(args.image),
        "lost": False,
        "ellipse": {
            "p_x": ellipse.p_x,
            "p_y": ellipse.p_y,
            "ax_maj": ellipse.ax_maj,
            "ax_min": ellipse.ax_min,
            "psi": ellipse.psi,
        },
        "position_mm": estimate.position.tolist(),
        "normal": estimate.normal.tolist(),
        "theta": estimate.theta,
        "psi": estimate.psi,
        "gamma": estimate.gamma,
        "ambiguity_resolved": estimate.ambiguity_resolved,
    }
    print(json.dumps(record, sort_keys=True))
    return EXIT_OK


def cmd_track(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    dataset = Path(args.dataset)
    with open(dataset / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    intr = manifest["intrinsics"]
    cam = CameraIntrinsics(intr["f_x"], intr["f_y"], intr["pr_x"], intr["pr_y"])
    provider_kind = args.provider or cfg.roi_provider
    provider = make_roi_provider(provider_kind, k=cfg.threshold_k)

    results = []
    state = TrackerState()
    for entry in manifest["frames"]:
        img = load_image(dataset / entry["image"])
        with open(dataset / entry["meta"], encoding="utf-8") as fh:
            meta = json.load(fh)
        meta["boxes"] = str(dataset / entry["boxes"])
        result, state = process_frame(
            img,
            provider,
            cam,
            cfg.iris(),
            state,
            meta=meta,
            index=entry["index"],
            k=cfg.threshold_k,
            ransac_cfg=cfg.ransac(),
            ambiguity_eps=cfg.ambiguity_eps_px,
            sclera_mode=cfg.sclera_mode,
            fixed_thd=args.fixed_threshold,
        )
        results.append(result)

    out_dir = Path(args.out) if args.out else dataset / "results"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_frame_records(results, out_dir / "frames.jsonl")
    summary = summarize(results)
    write_track_summary_csv(summary, out_dir / "summary.csv")
    figures = [] if args.no_figures else render_track_figures(results, out_dir)
    print(json.dumps(summary, sort_keys=True))
    for fig in figures:
        print(f"figure: {fig}")
    return EXIT_OK


def cmd_servo(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    dataset = Path(args.dataset)
    with open(dataset / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    scene, spec = _scene_from_manifest(manifest)

    if args.at == "10deg-intervals":
        lo = math.ceil(spec.angle_start / 10.0) * 10.0
        hi = math.floor(spec.angle_end / 10.0) * 10.0
        angles = np.arange(lo, hi + 1e-9, 10.0)
    else:
        angles = spec.angles()
    poses = []
    for angle in angles:
        R = rotation_about_axis(spec.axis, math.radians(float(angle)))
        g = R @ scene.gaze_normal
        pose_scene = dataclasses.replace(scene, gaze_normal=g)
        poses.append((float(angle), pose_scene.iris_center, g))

    report = run_servo_experiment(
        poses,
        D=cfg.servo_distance_mm,
        max_step_mm=cfg.servo_max_step_mm or None,
        max_step_rad=math.radians(cfg.servo_max_step_deg) if cfg.servo_max_step_deg else None,
        noise=args.noise,
        seed=cfg.rng_seed,
    )
    out_dir = Path(args.out) if args.out else dataset / "results"
    out_dir.mkdir(parents=True, exist_ok=True)
    write_servo_csv(report, out_dir / "servo.csv")
    if not args.no_figures:
        fig = render_servo_figure(report, out_dir)
        print(f"figure: {fig}")
    print(
        json.dumps(
            {
                "avg_distance_mm": report["avg_distance_mm"],
                "avg_angle_error_deg": report["avg_angle_error_deg"],
                "poses": len(report["rows"]),
            },
            sort_keys=True,
        )
    )
    return EXIT_OK


def cmd_config(args: argparse.Namespace) -> int:
    if args.action == "init":
        text = Config().to_text()
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
            print(f"wrote defaults to {args.out}")
        else:
            sys.stdout.write(text)
        return EXIT_OK
    # show: resolved configuration
    cfg = load_config(args.config)
    sys.stdout.write(cfg.to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gaze-pose",
        description="Iris position and gaze direction from single grayscale frames.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic eye-rotation sweep")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--frames", type=int, default=13)
    p.add_argument("--range", default="-30:30", help="rotation range LO:HI degrees")
    p.add_argument("--axis", default="y", help="rotation axis: x|y|z or 'ax,ay,az'")
    p.add_argument("--res", default="1920x1080", help="frame resolution WIDTHxHEIGHT")
    p.add_argument("--shadow", type=float, default=0.0, help="shadow ramp strength [0,1)")
    p.add_argument("--glints", type=int, default=0, help="number of specular glints (0-4)")
    p.add_argument("--eye-z", type=float, default=None, help="eye distance in mm")
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("detect", help="estimate gaze from a single frame")
    p.add_argument("image", help="PNG or PGM frame")
    p.add_argument("--config", default=None)
    p.add_argument("--provider", choices=("oracle", "sidecar", "intensity"), default=None)
    p.add_argument("--meta", default=None, help="ground-truth metadata JSON (oracle)")
    p.add_argument("--boxes", default=None, help="detector box file (sidecar)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("track", help="track a rendered sweep dataset")
    p.add_argument("dataset", help="dataset directory with manifest.json")
    p.add_argument("--config", default=None)
    p.add_argument("--provider", choices=("oracle", "sidecar", "intensity"), default=None)
    p.add_argument("--out", default=None, help="output directory (default <dataset>/results)")
    p.add_argument(
        "--fixed-threshold",
        type=float,
        default=None,
        help="replace adaptive binarization with a constant cutoff (ablation)",
    )
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("servo", help="run the camera-servo experiment on a sweep")
    p.add_argument("dataset", help="dataset directory with manifest.json")
    p.add_argument("--config", default=None)
    p.add_argument("--noise", action="store_true", help="inject seeded estimation noise")
    p.add_argument(
        "--at",
        choices=("10deg-intervals", "all"),
        default="10deg-intervals",
        help="pose sampling within the sweep range",
    )
    p.add_argument("--out", default=None)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_servo)

    p = sub.add_parser("config", help="emit or show configuration")
    p.add_argument("action", choices=("init", "show"))
    p.add_argument("--out", default=None, help="write defaults here (init)")
    p.add_argument("--config", default=None, help="config to resolve (show)")
    p.set_defaults(func=cmd_config)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (
        DetectionFailureError,
        OutOfViewError,
        DegenerateGeometryError,
        DegenerateProjectionError,
        RoiBoundsError,
        SidecarParseError,
    ) as exc:
        print(f"detection failure: {exc}", file=sys.stderr)
        return EXIT_DETECTION
    except FitFailureError as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
