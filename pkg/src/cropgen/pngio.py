"""PNG reading and writing for 8-bit sources and 16-bit linear outputs.

Outputs carry no gAMA/sRGB chunk; linearity is recorded in the dataset
manifest instead.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import png

from .errors import DataError


def read_png(path) -> np.ndarray:
    """Read an RGB(A) PNG as ``(H, W, 3)`` uint8 or uint16, alpha dropped."""
    reader = png.Reader(filename=str(path))
    width, height, rows, info = reader.asDirect()
    planes = info["planes"]
    dtype = np.uint16 if info["bitdepth"] > 8 else np.uint8
    arr = np.vstack([np.asarray(row, dtype=dtype) for row in rows])
    arr = arr.reshape(height, width, planes)
    if planes in (1, 2):
        arr = np.repeat(arr[..., :1], 3, axis=2)
    return np.ascontiguousarray(arr[..., :3])


def write_png(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"expected (H, W, 3) image, got shape {img.shape}")
    if img.dtype == np.uint8:
        bitdepth = 8
    elif img.dtype == np.uint16:
        bitdepth = 16
    else:
        raise DataError(f"unsupported dtype {img.dtype}; use uint8 or uint16")
    h, w, _ = img.shape
    writer = png.Writer(w, h, greyscale=False, bitdepth=bitdepth)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        writer.write(fh, img.reshape(h, w * 3))
