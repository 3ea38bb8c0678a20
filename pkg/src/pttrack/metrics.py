"""One-pass-evaluation metrics: Success and Precision AUC, density report.

Success scores per-frame 3D IoU against 21 thresholds from 0 to 1 in steps
of 0.05; Precision scores per-frame center error against 21 thresholds from
0 to 2 m in steps of 0.1. Both AUCs are the mean of the per-threshold pass
fractions, scaled to [0, 100]. Thresholds are built by integer division so
grid points like 0.5 and 1.0 compare exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Box3D, center_error, iou3d

SUCCESS_THRESHOLDS = tuple(i / 20 for i in range(21))
PRECISION_THRESHOLDS = tuple(i / 10 for i in range(21))

DENSITY_FLAG_BELOW = 20


@dataclass(frozen=True)
class OpeCurve:
    """Pass fraction per ascending threshold."""

    thresholds: tuple
    rates: tuple

    def auc(self) -> float:
        return float(np.mean(self.rates) * 100.0)


def _check_pair(pred, gt):
    if len(pred) != len(gt):
        raise ValueError(f"got {len(pred)} predictions for {len(gt)} ground truths")
    if len(pred) == 0:
        raise ValueError("need at least one frame")


def success_curve(pred: list[Box3D], gt: list[Box3D]) -> OpeCurve:
    """Fraction of frames with IoU at or above each overlap threshold."""
    _check_pair(pred, gt)
    overlaps = np.array([iou3d(p, g) for p, g in zip(pred, gt)])
    rates = tuple(float(np.mean(overlaps >= tau)) for tau in SUCCESS_THRESHOLDS)
    return OpeCurve(thresholds=SUCCESS_THRESHOLDS, rates=rates)


def precision_curve(pred: list[Box3D], gt: list[Box3D]) -> OpeCurve:
    """Fraction of frames with center error at or below each threshold."""
    _check_pair(pred, gt)
    errors = np.array([center_error(p, g) for p, g in zip(pred, gt)])
    rates = tuple(float(np.mean(errors <= tau)) for tau in PRECISION_THRESHOLDS)
    return OpeCurve(thresholds=PRECISION_THRESHOLDS, rates=rates)


def success_auc(pred: list[Box3D], gt: list[Box3D]) -> float:
    return success_curve(pred, gt).auc()


def precision_auc(pred: list[Box3D], gt: list[Box3D]) -> float:
    return precision_curve(pred, gt).auc()


@dataclass(frozen=True)
class DensityRecord:
    """First-frame on-target point count paired with tracklet success."""

    name: str
    first_count: int
    success: float
    flagged: bool  # below the sparse-failure regime threshold


def density_report(tracklets, successes) -> list[DensityRecord]:
    """Scatter pairs of (first-frame in-box count, success), flagging sparse
    initializations (< 20 points)."""
    if len(tracklets) != len(successes):
        raise ValueError("tracklets and successes must align")
    records = []
    for trk, succ in zip(tracklets, successes):
        count = trk.first_frame_in_box_count()
        records.append(
            DensityRecord(
                name=trk.name,
                first_count=count,
                success=float(succ),
                flagged=count < DENSITY_FLAG_BELOW,
            )
        )
    return records


# ---------------------------------------------------------------- reports


def render_report(rows: list, density: list | None = None) -> str:
    """Human-readable metric report.

    ``rows`` holds (name, success, precision, carried_frames) tuples.
    """
    lines = ["tracklet            success  precision  carried"]
    for name, succ, prec, carried in rows:
        lines.append(f"{name:<18s} {succ:8.4f} {prec:10.4f} {carried:8d}")
    if rows:
        mean_s = float(np.mean([r[1] for r in rows]))
        mean_p = float(np.mean([r[2] for r in rows]))
        lines.append(f"{'mean':<18s} {mean_s:8.4f} {mean_p:10.4f}")
    else:
        lines.append("no tracklets evaluated")
    if density is not None:
        lines.append("")
        lines.append("density breakdown (first-frame in-box count vs success):")
        for rec in density:
            flag = "  FLAGGED(<20)" if rec.flagged else ""
            lines.append(f"{rec.name:<18s} {rec.first_count:6d} {rec.success:8.4f}{flag}")
    return "\n".join(lines) + "\n"


def render_report_kv(rows: list, density: list | None = None) -> str:
    """Machine-readable key=value variant of :func:`render_report`."""
    lines = []
    for name, succ, prec, carried in rows:
        lines.append(f"tracklet.{name}.success = {succ!r}")
        lines.append(f"tracklet.{name}.precision = {prec!r}")
        lines.append(f"tracklet.{name}.carried_frames = {carried}")
    if rows:
        lines.append(f"mean.success = {float(np.mean([r[1] for r in rows]))!r}")
        lines.append(f"mean.precision = {float(np.mean([r[2] for r in rows]))!r}")
    lines.append(f"count = {len(rows)}")
    if density is not None:
        for rec in density:
            lines.append(f"density.{rec.name}.first_count = {rec.first_count}")
            lines.append(f"density.{rec.name}.flagged = {rec.flagged}")
    return "\n".join(lines) + "\n"
