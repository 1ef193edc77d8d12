"""Result persistence: JSON-lines frame records, CSV summaries, and
matplotlib figures rendered to files alongside the delimited output."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .track_servo import FrameResult  # noqa: E402


def frame_record(result: FrameResult) -> dict:
    """Flat, losslessly serializable record for one tracked frame."""
    rec: dict = {
        "frame": result.index,
        "lost": result.lost,
        "elapsed_ms": result.elapsed_ms,
    }
    if result.ellipse is not None:
        e = result.ellipse
        rec["ellipse"] = {
            "p_x": e.p_x,
            "p_y": e.p_y,
            "ax_maj": e.ax_maj,
            "ax_min": e.ax_min,
            "psi": e.psi,
        }
    if result.estimate is not None:
        est = result.estimate
        rec.update(
            {
                "position_mm": est.position.tolist(),
                "normal": est.normal.tolist(),
                "theta": est.theta,
                "psi": est.psi,
                "gamma": est.gamma,
                "ambiguity_resolved": est.ambiguity_resolved,
            }
        )
    if result.center_error_px is not None:
        rec["center_error_px"] = result.center_error_px
    if result.normal_error_deg is not None:
        rec["normal_error_deg"] = result.normal_error_deg
    if result.error is not None:
        rec["error"] = result.error
    return rec


def write_frame_records(results: list[FrameResult], path) -> None:
    """One JSON record per line, UTF-8, deterministic key order."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(frame_record(r), sort_keys=True) + "\n")


def write_track_summary_csv(summary: dict, path) -> None:
    keys = [
        "frames",
        "lost",
        "tracked",
        "center_error_mean_px",
        "center_error_std_px",
        "center_error_max_px",
        "normal_error_mean_deg",
        "normal_error_std_deg",
        "normal_error_max_deg",
    ]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        writer.writerow(["" if summary[k] is None else summary[k] for k in keys])


def write_servo_csv(report: dict, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["angle_deg", "distance_mm", "angle_error_deg"])
        for row in report["rows"]:
            writer.writerow([row["angle_deg"], row["distance_mm"], row["angle_error_deg"]])
        writer.writerow(["average", report["avg_distance_mm"], report["avg_angle_error_deg"]])


def render_track_figures(results: list[FrameResult], out_dir) -> list[Path]:
    """Per-frame error curves as PNG files; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    idx = [r.index for r in results]
    written = []

    fig, ax = plt.subplots(figsize=(8, 4))
    errs = [r.center_error_px if r.center_error_px is not None else np.nan for r in results]
    ax.plot(idx, errs, lw=1.0, color="tab:blue")
    lost_idx = [r.index for r in results if r.lost]
    if lost_idx:
        ax.scatter(lost_idx, [0] * len(lost_idx), marker="x", color="tab:red", label="lost")
        ax.legend()
    ax.set_xlabel("frame")
    ax.set_ylabel("center error [px]")
    ax.set_title("Iris center deviation per frame")
    fig.tight_layout()
    p = out_dir / "center_error.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    normal_errs = [
        r.normal_error_deg if r.normal_error_deg is not None else np.nan for r in results
    ]
    if not all(np.isnan(v) for v in normal_errs):
        fig, ax = plt.subplots(figsize=(8, 4))
        ax.plot(idx, normal_errs, lw=1.0, color="tab:green")
        ax.set_xlabel("frame")
        ax.set_ylabel("normal error [deg]")
        ax.set_title("Gaze normal angular error per frame")
        fig.tight_layout()
        p = out_dir / "normal_error.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)
    return written


def render_servo_figure(report: dict, out_dir) -> Path:
    """Distance and pointing error across the servo pose sweep."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    angles = [r["angle_deg"] for r in report["rows"]]
    dist = [r["distance_mm"] for r in report["rows"]]
    ang_err = [r["angle_error_deg"] for r in report["rows"]]

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax1.plot(angles, dist, "o-", color="tab:blue")
    ax1.axhline(report["standoff_mm"], color="gray", ls="--", lw=0.8, label="standoff")
    ax1.set_ylabel("camera distance [mm]")
    ax1.legend()
    ax2.plot(angles, ang_err, "o-", color="tab:orange")
    ax2.set_ylabel("pointing error [deg]")
    ax2.set_xlabel("eyeball rotation [deg]")
    fig.suptitle("Servo hold quality across poses")
    fig.tight_layout()
    p = out_dir / "servo_report.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    return p
