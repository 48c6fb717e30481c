"""Calibration tables: the appearance of every quantized printed color under
every illuminant, ``S`` raw samples per (color, illuminant) cell.

Two synthetic oracles stand in for photographing a printed pattern: a
diagonal (von Kries) model and a spectral model that integrates
illuminant x reflectance x sensitivity over wavelength.

Binary layout (little-endian)::

    magic "CROPTBL1" | u16 version | u8 k_bits | u8 reserved
    u32 S | u32 num_illums | u32 num_colors
    per illuminant: 32-byte UTF-8 id, 3 x f64 camera_rgb, f64 temperature (NaN if none)
    per illuminant, per color index, S x 3 x u16 samples
    u32 CRC32 of everything above
"""

from __future__ import annotations

import io
import math
import struct
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .color import (
    DEFAULT_K_BITS,
    RAW_MAX,
    all_quantized_colors,
    color_index,
    levels,
    srgb8_to_linear,
)
from .errors import (
    BadMagicError,
    ChecksumError,
    DataError,
    ExposureError,
    MissingIlluminantError,
    TableFormatError,
    TruncatedTableError,
    VersionMismatchError,
)
from .illuminants import IlluminantSpec, SensorModel, Spectrum, default_sensor

MAGIC = b"CROPTBL1"
VERSION = 1
HEADER = struct.Struct("<8sHBBIII")
ILLUM_RECORD = struct.Struct("<32s3dd")
CRC = struct.Struct("<I")
ID_BYTES = 32

DEFAULT_SAMPLES = 25
EXPOSURE_FRACTION = 0.9
CLAMP_FRACTION = 0.999
SAMPLE_CEILING = math.floor(CLAMP_FRACTION * RAW_MAX)


@dataclass
class CalibrationTable:
    """Dense table of raw samples.

    ``samples`` has shape ``(num_illums, num_colors, S, 3)`` and dtype
    uint16; for tables opened lazily it is a read-only memory map.
    """

    sensor_name: str
    k_bits: int
    samples_per_cell: int
    illuminants: list[IlluminantSpec]
    samples: np.ndarray
    exposure: Optional[float] = None
    _crc: Optional[int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        expect = (len(self.illuminants), levels(self.k_bits) ** 3, self.samples_per_cell, 3)
        if self.samples.shape != expect:
            raise DataError(f"samples shape {self.samples.shape} != {expect}")
        self._index = {s.id: i for i, s in enumerate(self.illuminants)}

    @property
    def num_colors(self) -> int:
        return levels(self.k_bits) ** 3

    def illuminant_index(self, illum) -> int:
        key = illum.id if isinstance(illum, IlluminantSpec) else illum
        try:
            return self._index[key]
        except KeyError:
            raise MissingIlluminantError(f"illuminant {key!r} is not in the table") from None

    def checksum(self) -> int:
        """CRC32 of the serialized table, as stored in its file trailer."""
        if self._crc is None:
            crc = 0
            for chunk in _serialize(self):
                crc = zlib.crc32(chunk, crc)
            self._crc = crc
        return self._crc


def lookup(table: CalibrationTable, q, illum_index: int) -> np.ndarray:
    """The ``(S, 3)`` samples of color ``q`` under illuminant ``illum_index``."""
    q = np.asarray(q)
    step = 1 << table.k_bits
    if q.shape != (3,) or np.any(q < 0) or np.any(q > 255) or np.any(q % step):
        raise DataError(f"{tuple(q)} is not a valid color for k_bits={table.k_bits}")
    if not 0 <= illum_index < len(table.illuminants):
        raise MissingIlluminantError(f"illuminant index {illum_index} out of range")
    return table.samples[illum_index, int(color_index(q, table.k_bits))]


# -- reflectance ---------------------------------------------------------


@dataclass(frozen=True)
class ReflectanceModel:
    """Reflectance curves ``R(l) = sum_j a_j(q) B_j(l)`` for printed colors.

    ``coefficients`` maps an ``(N, 3)`` uint8 color array to ``(N, n_basis)``.
    """

    wavelengths: np.ndarray
    basis: np.ndarray
    coefficients: Callable[[np.ndarray], np.ndarray]

    def reflectance(self, q) -> Spectrum:
        a = self.coefficients(np.asarray(q, dtype=np.uint8).reshape(1, 3))[0]
        return Spectrum(self.wavelengths, a @ self.basis)


def raised_cosine_basis(wavelengths, knots=(450.0, 540.0, 610.0)) -> np.ndarray:
    """Three smooth curves (R, G, B rows) summing to one at every wavelength.

    Blue is flat below the first knot, red flat above the last, and
    neighbours cross-fade with half-cosines between knots.
    """
    wl = np.asarray(wavelengths, dtype=np.float64)
    lo, mid, hi = knots
    blue = np.where(wl <= lo, 1.0, np.where(wl >= mid, 0.0, 0.5 * (1 + np.cos(np.pi * (wl - lo) / (mid - lo)))))
    red = np.where(wl <= mid, 0.0, np.where(wl >= hi, 1.0, 0.5 * (1 - np.cos(np.pi * (wl - mid) / (hi - mid)))))
    green = 1.0 - blue - red
    return np.stack([red, green, blue])


def smooth_reflectance_model(sensor: Optional[SensorModel] = None) -> ReflectanceModel:
    """Fit basis weights so that under a flat spectrum ``sensor`` sees each
    color's linear sRGB value relative to a perfect white.

    Weights are clamped to [0, 1]; with a partition-of-unity basis this keeps
    every curve within [0, 1].
    """
    sensor = sensor or default_sensor()
    wl = sensor.wavelengths
    basis = raised_cosine_basis(wl)
    # A[c, j]: response of channel c to basis curve j under a flat spectrum
    A = trapezoid(sensor.sensitivities[:, None, :] * basis[None, :, :], wl, axis=2)
    white = A.sum(axis=1)
    solve = np.linalg.inv(A) * white[None, :]

    def coefficients(colors: np.ndarray) -> np.ndarray:
        lin = srgb8_to_linear(colors)
        return np.clip(lin @ solve.T, 0.0, 1.0)

    return ReflectanceModel(wl, basis, coefficients)


def constant_reflectance(value: float, wavelengths) -> ReflectanceModel:
    wl = np.asarray(wavelengths, dtype=np.float64)
    return ReflectanceModel(wl, np.ones((1, wl.size)), lambda c: np.full((len(c), 1), float(value)))


# -- synthesis -----------------------------------------------------------


def _encode(bases: Sequence[np.ndarray], noise: float, S: int, seed: int,
            exposure: Optional[float], threads: int) -> tuple[np.ndarray, float]:
    peak = max(float(b.max()) for b in bases)
    limit = EXPOSURE_FRACTION * RAW_MAX
    if exposure is None:
        exposure = limit / peak if peak > 0 else 1.0
    elif exposure * peak > limit * (1 + 1e-12):
        raise ExposureError(
            f"exposure {exposure} puts the brightest cell at {exposure * peak:.1f} > {limit:.1f}"
        )
    n_colors = bases[0].shape[0]
    out = np.empty((len(bases), n_colors, S, 3), dtype=np.uint16)

    def one(i):
        scaled = exposure * bases[i][:, None, :]
        if noise > 0:
            rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
            scaled = scaled * (1.0 + rng.normal(0.0, noise, size=(n_colors, S, 3)))
        else:
            scaled = np.broadcast_to(scaled, (n_colors, S, 3))
        out[i] = np.clip(np.rint(scaled), 0, SAMPLE_CEILING)

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        list(pool.map(one, range(len(bases))))
    return out, exposure


def _check_common(illums, noise, S, k_bits):
    if not illums:
        raise DataError("no illuminants given")
    if noise < 0:
        raise DataError("noise sigma must be >= 0")
    if S < 1:
        raise DataError("samples per cell must be >= 1")
    if not 0 <= k_bits <= 7:
        raise DataError("k_bits must be in [0, 7]")


def synth_table_diagonal(
    illums: Sequence[IlluminantSpec],
    sensor: SensorModel,
    noise: float = 0.0,
    S: int = DEFAULT_SAMPLES,
    seed: int = 0,
    k_bits: int = DEFAULT_K_BITS,
    exposure: Optional[float] = None,
    threads: int = 1,
) -> CalibrationTable:
    """Von Kries table: ``exposure * M @ (e_raw * linear(q))`` with noise.

    ``e_raw = M^-1 camera_rgb`` so a printed white always reproduces the
    illuminant's ``camera_rgb`` direction exactly.
    """
    _check_common(illums, noise, S, k_bits)
    if sensor.mode != "diagonal":
        raise DataError("synth_table_diagonal needs a diagonal sensor")
    lin = srgb8_to_linear(all_quantized_colors(k_bits))
    bases = []
    for s in illums:
        e_raw = np.linalg.solve(sensor.matrix, s.rgb)
        if np.any(e_raw < -1e-12):
            raise DataError(f"illuminant {s.id} is not reachable through the sensor matrix")
        bases.append(np.clip((lin * np.clip(e_raw, 0, None)) @ sensor.matrix.T, 0.0, None))
    samples, exposure = _encode(bases, noise, S, seed, exposure, threads)
    return CalibrationTable(sensor.name, k_bits, S, list(illums), samples, exposure)


def synth_table_spectral(
    illums: Sequence[IlluminantSpec],
    sensor: SensorModel,
    reflectance: Optional[ReflectanceModel] = None,
    noise: float = 0.0,
    S: int = DEFAULT_SAMPLES,
    seed: int = 0,
    k_bits: int = DEFAULT_K_BITS,
    exposure: Optional[float] = None,
    threads: int = 1,
) -> CalibrationTable:
    """Spectral table: ``base_c = sum_l I(l) R_q(l) rho_c(l) dl`` (trapezoid)."""
    _check_common(illums, noise, S, k_bits)
    if sensor.mode != "spectral":
        raise DataError("synth_table_spectral needs a spectral sensor")
    reflectance = reflectance or smooth_reflectance_model()
    wl = sensor.wavelengths
    if not np.array_equal(reflectance.wavelengths, wl):
        raise DataError("reflectance and sensor use different wavelength grids")
    coeffs = reflectance.coefficients(all_quantized_colors(k_bits))
    curves = coeffs @ reflectance.basis
    if curves.min() < -1e-12 or curves.max() > 1 + 1e-12:
        raise DataError("reflectance curves leave [0, 1]")
    bases = []
    for s in illums:
        if s.spd is None:
            raise DataError(f"illuminant {s.id} has no spectrum")
        if not np.array_equal(s.spd.wavelengths, wl):
            raise DataError(f"illuminant {s.id} spectrum is on a different grid")
        # K[j, c] = response of channel c to basis curve j under this light
        K = trapezoid(s.spd.values * reflectance.basis[:, None, :] * sensor.sensitivities[None], wl, axis=2)
        bases.append(np.clip(coeffs @ K, 0.0, None))
    samples, exposure = _encode(bases, noise, S, seed, exposure, threads)
    return CalibrationTable(sensor.name, k_bits, S, list(illums), samples, exposure)


# -- file format -----------------------------------------------------------


def _id_bytes(ident: str) -> bytes:
    raw = ident.encode("utf-8")
    if len(raw) > ID_BYTES:
        raise DataError(f"illuminant id {ident!r} exceeds {ID_BYTES} bytes")
    return raw.ljust(ID_BYTES, b"\0")


def _serialize(table: CalibrationTable) -> Iterator[bytes]:
    yield HEADER.pack(MAGIC, VERSION, table.k_bits, 0, table.samples_per_cell,
                      len(table.illuminants), table.num_colors)
    block = io.BytesIO()
    for s in table.illuminants:
        t = math.nan if s.temperature_kelvin is None else s.temperature_kelvin
        block.write(ILLUM_RECORD.pack(_id_bytes(s.id), *s.camera_rgb, t))
    yield block.getvalue()
    for i in range(len(table.illuminants)):
        yield np.ascontiguousarray(table.samples[i], dtype="<u2").tobytes()


def write_table(table: CalibrationTable, path) -> None:
    crc = 0
    with open(path, "wb") as fh:
        for chunk in _serialize(table):
            crc = zlib.crc32(chunk, crc)
            fh.write(chunk)
        fh.write(CRC.pack(crc))
    table._crc = crc


def table_file_size(num_illums: int, S: int, k_bits: int = DEFAULT_K_BITS) -> int:
    n_colors = levels(k_bits) ** 3
    return HEADER.size + num_illums * ILLUM_RECORD.size + num_illums * n_colors * S * 6 + CRC.size


def read_table(path, lazy: bool = False, verify: bool = True,
               sensor_name: str = "unknown") -> CalibrationTable:
    """Load a table. ``lazy`` memory-maps the sample block so illuminants are
    paged in on first access. The sensor name is not part of the file."""
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        head = fh.read(HEADER.size)
        if len(head) < len(MAGIC) or head[: len(MAGIC)] != MAGIC:
            raise BadMagicError(f"{path}: bad magic")
        if len(head) < HEADER.size:
            raise TruncatedTableError(f"{path}: truncated header")
        magic, version, k_bits, _, S, n_ill, n_col = HEADER.unpack(head)
        if version != VERSION:
            raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
        if k_bits > 7 or n_col != levels(k_bits) ** 3:
            raise TableFormatError(f"{path}: inconsistent k_bits={k_bits} / num_colors={n_col}")
        expected = table_file_size(n_ill, S, k_bits)
        if size < expected:
            raise TruncatedTableError(f"{path}: {size} bytes, expected {expected}")
        if size > expected:
            raise TableFormatError(f"{path}: {size - expected} unexpected trailing bytes")
        if verify:
            fh.seek(0)
            crc = 0
            remaining = expected - CRC.size
            while remaining:
                chunk = fh.read(min(remaining, 1 << 22))
                crc = zlib.crc32(chunk, crc)
                remaining -= len(chunk)
            (stored,) = CRC.unpack(fh.read(CRC.size))
            if crc != stored:
                raise ChecksumError(f"{path}: CRC mismatch ({crc:08x} != {stored:08x})")
        fh.seek(HEADER.size)
        illums = []
        for _ in range(n_ill):
            raw_id, r, g, b, t = ILLUM_RECORD.unpack(fh.read(ILLUM_RECORD.size))
            ident = raw_id.rstrip(b"\0").decode("utf-8")
            temp = None if math.isnan(t) else t
            kind = "grid" if temp is None else "planckian"
            illums.append(IlluminantSpec.from_rgb(ident, kind, (r, g, b), temp))
            # keep the stored bits so rewriting is byte-identical
            object.__setattr__(illums[-1], "camera_rgb", (r, g, b))
        fh.seek(expected - CRC.size)
        (stored,) = CRC.unpack(fh.read(CRC.size))
    offset = HEADER.size + n_ill * ILLUM_RECORD.size
    shape = (n_ill, n_col, S, 3)
    if lazy:
        samples = np.memmap(path, dtype="<u2", mode="r", offset=offset, shape=shape)
    else:
        samples = np.fromfile(path, dtype="<u2", count=math.prod(shape), offset=offset).reshape(shape)
    table = CalibrationTable(sensor_name, k_bits, S, illums, samples)
    table._crc = stored
    return table
