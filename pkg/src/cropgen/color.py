"""Color primitives shared by every other module.

Images are plain numpy arrays of shape ``(height, width, 3)``:

* ``uint8``   display-referred sRGB (source images, quantized colors)
* ``uint16``  linear raw output, full scale 65535
* ``float64`` linear intensities, normally scaled to [0, 1]
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DataError, DegenerateColorError

DEFAULT_K_BITS = 3
RAW_MAX = 65535

# sRGB EOTF constants (IEC 61966-2-1)
_A = 0.055
_GAMMA = 2.4
_SRGB_KNEE = 0.04045
_LINEAR_KNEE = 0.0031308


def quantize_channel(v: int, k: int = DEFAULT_K_BITS) -> int:
    """Zero the ``k`` least significant bits of an 8-bit value."""
    if not 0 <= v <= 255:
        raise DataError(f"channel value {v} outside [0, 255]")
    if not 0 <= k <= 7:
        raise DataError(f"k={k} outside [0, 7]")
    return v & (0xFF << k) & 0xFF


def quantize_image(img: np.ndarray, k: int = DEFAULT_K_BITS) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise DataError(f"expected an 8-bit image, got dtype {img.dtype}")
    if not 0 <= k <= 7:
        raise DataError(f"k={k} outside [0, 7]")
    return img & np.uint8((0xFF << k) & 0xFF)


def levels(k: int = DEFAULT_K_BITS) -> int:
    """Distinct values per channel once ``k`` bits are zeroed."""
    return 1 << (8 - k)


def color_index(q: np.ndarray, k: int = DEFAULT_K_BITS) -> np.ndarray:
    """Dense index of quantized colors: ``(r>>k)*L^2 + (g>>k)*L + (b>>k)``.

    Works on a single triple or any array with a trailing axis of 3.
    """
    q = np.asarray(q).astype(np.int64)
    L = levels(k)
    s = q >> k
    return (s[..., 0] * L + s[..., 1]) * L + s[..., 2]


def index_to_color(idx: np.ndarray, k: int = DEFAULT_K_BITS) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64)
    L = levels(k)
    r, rem = np.divmod(idx, L * L)
    g, b = np.divmod(rem, L)
    return (np.stack([r, g, b], axis=-1) << k).astype(np.uint8)


def all_quantized_colors(k: int = DEFAULT_K_BITS) -> np.ndarray:
    """Every quantized color in index order, shape ``(L**3, 3)`` uint8."""
    return index_to_color(np.arange(levels(k) ** 3), k)


def _check_unit(v: np.ndarray, what: str) -> None:
    if np.any(~np.isfinite(v)) or np.any(v < 0.0) or np.any(v > 1.0):
        raise DataError(f"{what} input outside [0, 1]")


def srgb_to_linear(v):
    """sRGB EOTF. Accepts scalars or arrays in [0, 1]."""
    a = np.asarray(v, dtype=np.float64)
    _check_unit(a, "srgb_to_linear")
    out = np.where(a <= _SRGB_KNEE, a / 12.92, ((a + _A) / (1 + _A)) ** _GAMMA)
    return float(out) if out.ndim == 0 else out


def linear_to_srgb(v):
    a = np.asarray(v, dtype=np.float64)
    _check_unit(a, "linear_to_srgb")
    out = np.where(
        a <= _LINEAR_KNEE, a * 12.92, (1 + _A) * a ** (1 / _GAMMA) - _A
    )
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TransferFunction:
    """An invertible display transfer pair; ``encode`` maps linear to display."""

    name: str
    encode: Callable[[np.ndarray], np.ndarray]
    decode: Callable[[np.ndarray], np.ndarray]


SRGB = TransferFunction("srgb", linear_to_srgb, srgb_to_linear)


def srgb8_to_linear(img: np.ndarray) -> np.ndarray:
    """8-bit sRGB image to float linear in [0, 1]."""
    return srgb_to_linear(np.asarray(img, dtype=np.float64) / 255.0)


def normalize(v, axis: int = -1) -> np.ndarray:
    """Scale to unit L2 norm along ``axis``; zero vectors are rejected."""
    v = np.asarray(v, dtype=np.float64)
    peak = np.max(np.abs(v), axis=axis, keepdims=True)
    if np.any(peak == 0) or np.any(~np.isfinite(peak)):
        raise DegenerateColorError("degenerate color: zero or non-finite vector")
    v = v / peak
    return v / np.linalg.norm(v, axis=axis, keepdims=True)


def to_chromaticity(c) -> tuple[float, float]:
    """rb-chromaticity ``(R/(R+G+B), B/(R+G+B))``."""
    r, g, b = (float(x) for x in c)
    s = r + g + b
    if not s > 0 or min(r, g, b) < 0:
        raise DegenerateColorError(f"degenerate color {tuple(c)}")
    return r / s, b / s


def chromaticity_to_rgb(rc: float, bc: float) -> np.ndarray:
    """Inverse of :func:`to_chromaticity` up to scale, returned unit-norm."""
    return normalize(np.array([rc, max(1.0 - rc - bc, 0.0), bc]))
