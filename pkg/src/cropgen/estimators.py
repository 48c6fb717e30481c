"""Statistics-based illumination estimators.

All functions take a linear image, either ``(H, W, 3)`` or a ``(N, 3)``
pixel list (Gray-Edge needs the 2-D layout), and return a unit-norm RGB
estimate. Pixels that are zero in every channel are not masked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import correlate1d, gaussian_filter

from .errors import DataError, DegenerateSceneError

_CENTRAL = np.array([-0.5, 0.0, 0.5])
_SECOND = np.array([1.0, -2.0, 1.0])


def _pixels(img) -> np.ndarray:
    px = np.asarray(img, dtype=np.float64).reshape(-1, 3)
    if px.shape[0] == 0:
        raise DataError("empty image")
    return px


def _unit(v: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(v))
    if not peak > 0 or not np.isfinite(peak):
        raise DegenerateSceneError("degenerate scene: estimate is a zero vector")
    v = v / peak  # tiny inputs would underflow the norm otherwise
    return v / np.linalg.norm(v)


def white_patch(img, percentile: float = 100.0) -> np.ndarray:
    """Per-channel maximum, or a per-channel percentile (linear interpolation)."""
    if not 0 < percentile <= 100:
        raise DataError("percentile must be in (0, 100]")
    px = _pixels(img)
    if percentile == 100:
        return _unit(px.max(axis=0))
    return _unit(np.percentile(px, percentile, axis=0))


def gray_world(img) -> np.ndarray:
    return _unit(_pixels(img).mean(axis=0))


def minkowski_mean(values: np.ndarray, p: float) -> np.ndarray:
    """``(mean(v**p))**(1/p)`` over axis 0, computed relative to the
    per-column maximum so large ``p`` neither overflows nor underflows."""
    if p == 1:
        return values.mean(axis=0)
    peak = values.max(axis=0)
    safe = np.where(peak > 0, peak, 1.0)
    return peak * np.mean((values / safe) ** p, axis=0) ** (1.0 / p)


def shades_of_gray(img, p: float = 2.0) -> np.ndarray:
    if p < 1:
        raise DataError("Minkowski p must be >= 1")
    return _unit(minkowski_mean(_pixels(img), p))


def derivative_magnitude(channel: np.ndarray, order: int) -> np.ndarray:
    """Per-pixel derivative magnitude with reflective borders.

    Order 1: ``sqrt(dx^2 + dy^2)`` from central differences. Order 2:
    ``sqrt(dxx^2 + dyy^2 + dxy^2)`` with ``dxy`` the central difference of
    the central difference.
    """
    if order == 1:
        dx = correlate1d(channel, _CENTRAL, axis=1, mode="reflect")
        dy = correlate1d(channel, _CENTRAL, axis=0, mode="reflect")
        return np.hypot(dx, dy)
    if order == 2:
        dxx = correlate1d(channel, _SECOND, axis=1, mode="reflect")
        dyy = correlate1d(channel, _SECOND, axis=0, mode="reflect")
        dxy = correlate1d(correlate1d(channel, _CENTRAL, axis=1, mode="reflect"), _CENTRAL, axis=0, mode="reflect")
        return np.sqrt(dxx**2 + dyy**2 + dxy**2)
    raise DataError(f"derivative order must be 1 or 2, got {order}")


def gray_edge(img, p: float = 1.0, order: int = 1, sigma: float = 1.0) -> np.ndarray:
    """Minkowski mean of per-channel derivative magnitudes.

    Each channel is first smoothed with a Gaussian truncated at 3 sigma
    (reflective borders); ``sigma=0`` skips smoothing.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError("gray_edge needs an (H, W, 3) image")
    if img.shape[0] < 3 or img.shape[1] < 3:
        raise DataError("gray_edge needs an image of at least 3x3 pixels")
    if p < 1 or sigma < 0:
        raise DataError("need p >= 1 and sigma >= 0")
    mags = []
    for c in range(3):
        ch = img[..., c]
        if sigma > 0:
            ch = gaussian_filter(ch, sigma, mode="reflect", truncate=3.0)
        mags.append(derivative_magnitude(ch, order).reshape(-1))
    return _unit(minkowski_mean(np.stack(mags, axis=1), p))


@dataclass(frozen=True)
class EstimatorConfig:
    """Method plus parameters. ``p=None`` resolves to 2 for Shades-of-Gray
    and 1 otherwise."""

    method: str
    p: Optional[float] = None
    derivative_order: int = 1
    sigma: float = 1.0
    percentile: float = 100.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise DataError(f"unknown method {self.method!r}")
        if self.p is None:
            object.__setattr__(self, "p", 2.0 if self.method == "shades_of_gray" else 1.0)
        if self.derivative_order not in (1, 2):
            raise DataError("derivative order must be 1 or 2")
        if not 0 < self.percentile <= 100:
            raise DataError("percentile must be in (0, 100]")
        if self.p < 1 or self.sigma < 0:
            raise DataError("need p >= 1 and sigma >= 0")

    @property
    def label(self) -> str:
        """``method(params)``, or the bare method name when it has none."""
        return f"{self.method}({self.params})" if self.params else self.method

    @property
    def params(self) -> str:
        """Every parameter the method reads, defaults included."""
        return {
            "white_patch": f"percentile={self.percentile:g}",
            "gray_world": "",
            "shades_of_gray": f"p={self.p:g}",
            "gray_edge": f"p={self.p:g};order={self.derivative_order};sigma={self.sigma:g}",
        }[self.method]

    def estimator(self) -> Callable[[np.ndarray], np.ndarray]:
        if self.method == "white_patch":
            return lambda img: white_patch(img, self.percentile)
        if self.method == "gray_world":
            return gray_world
        if self.method == "shades_of_gray":
            return lambda img: shades_of_gray(img, self.p)
        return lambda img: gray_edge(img, self.p, self.derivative_order, self.sigma)

    def __call__(self, img) -> np.ndarray:
        return self.estimator()(img)


METHODS = ("white_patch", "gray_world", "shades_of_gray", "gray_edge")
