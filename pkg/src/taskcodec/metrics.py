"""Evaluation metrics and rate-distortion curve analytics.

BD-rate follows the usual recipe: piecewise-cubic-Hermite interpolation of
log10(rate) as a function of quality, integrated over the quality interval
where both curves overlap. Negative percentages mean the test curve needs
less rate than the anchor at equal quality.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

PSNR_CAP_DB = 100.0

MODES = ("direct", "scalable", "standalone", "base")


class NoOverlapError(ValueError):
    """The two curves share no quality interval; BD-rate is undefined."""


def psnr(x: np.ndarray, x_hat: np.ndarray, max_value: float = 1.0) -> float:
    """10*log10(max^2 / MSE), capped at 100 dB for near-identical inputs."""
    if max_value <= 0:
        raise ValueError("max_value must be positive")
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError("shape mismatch")
    mse = float(np.mean((x - x_hat) ** 2))
    if mse < max_value**2 * 1e-10:
        return PSNR_CAP_DB
    return 10.0 * np.log10(max_value**2 / mse)


def bpp(total_bits: float, height: int, width: int) -> float:
    """Bits per pixel. `total_bits` may come from the entropy estimate or
    from an actual bitstream; callers flag which."""
    if height <= 0 or width <= 0:
        raise ValueError("dimensions must be positive")
    return float(total_bits) / (height * width)


def miou(prediction_labels: np.ndarray, target_labels: np.ndarray,
         num_classes: int) -> float:
    """Mean IoU over classes present in target or prediction; classes absent
    from both are excluded from the mean."""
    pred = np.asarray(prediction_labels)
    target = np.asarray(target_labels)
    if pred.size == 0 or target.size == 0:
        raise ValueError("empty inputs")
    if pred.shape != target.shape:
        raise ValueError("shape mismatch")
    if pred.max() >= num_classes or target.max() >= num_classes:
        raise ValueError("labels must be < num_classes")

    ious = []
    for k in range(num_classes):
        p = pred == k
        t = target == k
        union = np.logical_or(p, t).sum()
        if union == 0:
            continue
        ious.append(np.logical_and(p, t).sum() / union)
    return float(np.mean(ious))


# ---------------------------------------------------------------------------
# RD curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RDPoint:
    bpp: float
    quality: float
    lam: float
    seed: int
    mode: str
    metric_kind: str = "psnr"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.bpp <= 0:
            raise ValueError("bpp must be > 0 for coded modes")


@dataclass(frozen=True)
class RDCurve:
    """RD points ordered by strictly increasing bpp. Quality monotonicity is
    not assumed; low-rate regimes can legitimately outperform."""

    points: tuple[RDPoint, ...]
    metric_kind: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        bpps = [p.bpp for p in self.points]
        if any(b2 <= b1 for b1, b2 in zip(bpps, bpps[1:])):
            raise ValueError("points must have strictly increasing bpp")

    @classmethod
    def from_points(cls, points, metric_kind: str, **metadata) -> "RDCurve":
        ordered = tuple(sorted(points, key=lambda p: p.bpp))
        return cls(points=ordered, metric_kind=metric_kind, metadata=dict(metadata))

    @property
    def rates(self) -> np.ndarray:
        return np.array([p.bpp for p in self.points], dtype=np.float64)

    @property
    def qualities(self) -> np.ndarray:
        return np.array([p.quality for p in self.points], dtype=np.float64)


def bd_rate(anchor: RDCurve, test: RDCurve) -> float:
    """Bjontegaard-delta rate of `test` against `anchor`, in percent.

    Fits log10(rate) over quality with PCHIP, integrates the difference over
    the overlapping quality range and maps the mean log offset back to a
    percentage. Raises NoOverlapError when the quality ranges do not meet.
    """
    fits = []
    for curve in (anchor, test):
        if len(curve.points) < 4:
            raise ValueError("BD-rate needs at least 4 points per curve")
        quality = curve.qualities
        log_rate = np.log10(curve.rates)
        order = np.argsort(quality)
        quality, log_rate = quality[order], log_rate[order]
        if np.any(np.diff(quality) <= 0):
            raise ValueError("curve has duplicate quality values; cannot fit")
        fits.append(PchipInterpolator(quality, log_rate))

    lo = max(anchor.qualities.min(), test.qualities.min())
    hi = min(anchor.qualities.max(), test.qualities.max())
    if hi <= lo:
        raise NoOverlapError(
            f"no quality overlap: anchor spans "
            f"[{anchor.qualities.min():.4g}, {anchor.qualities.max():.4g}], "
            f"test spans [{test.qualities.min():.4g}, {test.qualities.max():.4g}]"
        )

    anchor_fit, test_fit = fits
    mean_log_diff = (test_fit.integrate(lo, hi) - anchor_fit.integrate(lo, hi)) / (hi - lo)
    return float((10.0**mean_log_diff - 1.0) * 100.0)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("mode", "lambda", "seed", "bpp", "metric_kind", "metric_value")


def write_rd_csv(points: list[RDPoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for p in points:
            writer.writerow([p.mode, repr(p.lam), p.seed, repr(p.bpp),
                             p.metric_kind, repr(p.quality)])


def read_rd_csv(path: str | Path) -> list[RDPoint]:
    points = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            points.append(RDPoint(
                bpp=float(row["bpp"]),
                quality=float(row["metric_value"]),
                lam=float(row["lambda"]),
                seed=int(row["seed"]),
                mode=row["mode"],
                metric_kind=row["metric_kind"],
            ))
    return points


def bd_rate_report(anchor: RDCurve, test: RDCurve, anchor_id: str,
                   test_id: str) -> dict:
    """JSON-ready BD-rate record; "no_overlap" is an explicit outcome."""
    try:
        value: float | str = bd_rate(anchor, test)
    except NoOverlapError:
        value = "no_overlap"
    return {"anchor_id": anchor_id, "test_id": test_id, "bd_rate_percent": value}


def write_bd_rate_reports(reports: list[dict], path: str | Path) -> None:
    Path(path).write_text(json.dumps(reports, indent=2, sort_keys=True) + "\n")
