"""Angular error metrics and the six summary statistics used in result tables."""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, DegenerateColorError

GEO_GUARD = 1e-12


def angle_between(a, b) -> np.ndarray:
    """Angle in degrees between rows of ``a`` and ``b`` (broadcasting).

    Uses ``atan2(|a x b|, a . b)``, which equals the clamped arccosine of the
    normalized dot product but keeps full precision near 0 and 180 degrees.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = _unit_rows(a)
    b = _unit_rows(b)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


def _unit_rows(v: np.ndarray) -> np.ndarray:
    # divide by the largest component first so tiny or huge vectors keep precision
    peak = np.max(np.abs(v), axis=-1, keepdims=True)
    if np.any(peak == 0) or not np.all(np.isfinite(peak)):
        raise DegenerateColorError("angle undefined for a zero or non-finite vector")
    v = v / peak
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _angle3(a, b) -> float:
    """Scalar twin of :func:`angle_between` for two 3-vectors (no numpy overhead)."""
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    if len(a) != 3 or len(b) != 3:
        raise DataError("expected two 3-vectors")
    if not all(map(math.isfinite, a + b)):
        raise DegenerateColorError("angle undefined for a non-finite vector")
    pa = max(abs(x) for x in a)
    pb = max(abs(x) for x in b)
    if pa == 0 or pb == 0:
        raise DegenerateColorError("angle undefined for a zero vector")
    a = [x / pa for x in a]
    b = [x / pb for x in b]
    na, nb = math.hypot(*a), math.hypot(*b)
    a = [x / na for x in a]
    b = [x / nb for x in b]
    cx = a[1] * b[2] - a[2] * b[1]
    cy = a[2] * b[0] - a[0] * b[2]
    cz = a[0] * b[1] - a[1] * b[0]
    return math.degrees(math.atan2(math.hypot(cx, cy, cz), a[0] * b[0] + a[1] * b[1] + a[2] * b[2]))


def recovery_error(est, gt) -> float:
    """Angle between the estimated and true illuminant, in degrees."""
    return _angle3(est, gt)


def reproduction_error(est, gt_white) -> float:
    """Angle between the white surface corrected by ``est`` and ideal white."""
    est = [float(x) for x in est]
    if len(est) != 3 or min(est) <= 0:
        raise DegenerateColorError("division by zero channel: estimate must be positive")
    return _angle3([g / e for g, e in zip(gt_white, est)], (1.0, 1.0, 1.0))


def reproduction_errors(est, gt_white) -> np.ndarray:
    est = np.asarray(est, dtype=np.float64)
    gt_white = np.asarray(gt_white, dtype=np.float64)
    if np.any(est <= 0):
        raise DegenerateColorError("division by zero channel: estimate must be positive")
    return angle_between(gt_white / est, np.ones(3))


def recovery_errors(est, gt) -> np.ndarray:
    return angle_between(est, gt)


ERROR_KINDS = {"recovery": recovery_errors, "reproduction": reproduction_errors}


@dataclass(frozen=True)
class ErrorSummary:
    mean: float
    median: float
    trimean: float
    best25_mean: float
    worst25_mean: float
    geo_average: float

    def as_row(self) -> list[float]:
        return list(astuple(self))


SUMMARY_COLUMNS = [f.name for f in fields(ErrorSummary)]


def summarize(errors: Iterable[float]) -> ErrorSummary:
    """Mean, median, trimean, best/worst 25% means and their geometric mean.

    Quartiles interpolate linearly between order statistics at positions
    ``0.25*(N-1)`` and ``0.75*(N-1)``. Best and worst 25% average the
    ``ceil(N/4)`` lowest and highest values.
    """
    e = np.sort(np.asarray(list(errors), dtype=np.float64))
    if e.size == 0:
        raise DataError("cannot summarize an empty error list")
    if np.any(~np.isfinite(e)) or np.any(e < 0):
        raise DataError("errors must be finite and nonnegative")
    q1, med, q3 = np.quantile(e, [0.25, 0.5, 0.75])
    n4 = math.ceil(e.size / 4)
    stats = [
        float(np.mean(e)),
        float(med),
        float((q1 + 2 * med + q3) / 4),
        float(np.mean(e[:n4])),
        float(np.mean(e[-n4:])),
    ]
    guarded = np.maximum(stats, GEO_GUARD)
    geo = float(np.exp(np.mean(np.log(guarded))))
    # the product of five values is bounded by their extremes; clamp rounding
    geo = min(max(geo, min(stats)), max(stats))
    return ErrorSummary(*stats, geo)


def score_manifest(manifest, estimates: Sequence[Mapping], kind: str = "recovery") -> dict[str, ErrorSummary]:
    """Per-method summaries of ``kind`` errors.

    ``estimates`` rows need ``image``, ``method`` and ``eR``/``eG``/``eB``;
    an optional ``params`` column distinguishes runs of the same method.
    Every manifest image must have a row for every method present.
    """
    if kind not in ERROR_KINDS:
        raise DataError(f"unknown error kind {kind!r}")
    gt = {e.image_path: np.asarray(e.ground_truth) for e in manifest.entries}
    by_method: dict[str, dict[str, np.ndarray]] = {}
    for row in estimates:
        key = f"{row['method']}({row['params']})" if row.get("params") else row["method"]
        by_method.setdefault(key, {})[row["image"]] = np.array(
            [float(row["eR"]), float(row["eG"]), float(row["eB"])]
        )
    if not by_method:
        raise DataError("no estimates given")
    gaps = [f"{m}:{img}" for m, rows in by_method.items() for img in gt if img not in rows]
    if gaps:
        raise DataError("missing estimates for " + ", ".join(sorted(gaps)))
    out = {}
    for method, rows in sorted(by_method.items()):
        images = list(gt)
        errs = ERROR_KINDS[kind](np.array([rows[i] for i in images]), np.array([gt[i] for i in images]))
        out[method] = summarize(errs)
    return out


def write_summary_csv(path, table: Mapping[str, ErrorSummary], extra: Mapping[str, str] | None = None) -> None:
    """``method`` plus the six statistics; ``extra`` columns are prepended."""
    extra = dict(extra or {})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*extra, "method", *SUMMARY_COLUMNS])
        for method, s in table.items():
            w.writerow([*extra.values(), method, *(f"{v:.6f}" for v in s.as_row())])
