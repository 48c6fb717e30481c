"""Ground-truth illuminant sets: an rb-chromaticity lattice plus black-body colors.

Each illuminant carries its camera response ``camera_rgb`` (unit L2 norm),
which is what generated images use as ground truth.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .color import chromaticity_to_rgb, normalize, to_chromaticity
from .errors import DataError, DegenerateColorError, GridMismatchError

# CODATA 2018 exact values
PLANCK_H = 6.62607015e-34
LIGHT_C = 299792458.0
BOLTZMANN_K = 1.380649e-23

DEFAULT_WAVELENGTHS = np.arange(380.0, 781.0, 5.0)

FULL_SIMPLEX = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))

DEFAULT_TEMPERATURES = tuple(float(t) for t in np.linspace(2000.0, 12000.0, 50))
# Lattice step that, with the default projector gamut and the 50-point locus,
# gives 657 grid + 50 black-body = 707 illuminants (found by scanning the step).
DEFAULT_GRID_STEP = 0.02318

CHROMA_DEDUP_TOL = 1e-4


@dataclass(frozen=True)
class Spectrum:
    wavelengths: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        wl = np.asarray(self.wavelengths, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if wl.ndim != 1 or v.shape != wl.shape:
            raise DataError("spectrum values must match the wavelength grid")
        object.__setattr__(self, "wavelengths", wl)
        object.__setattr__(self, "values", v)

    def __mul__(self, other: "Spectrum") -> "Spectrum":
        _check_grid(self.wavelengths, other.wavelengths)
        return Spectrum(self.wavelengths, self.values * other.values)


def _check_grid(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape or not np.array_equal(a, b):
        raise GridMismatchError("spectra are sampled on different wavelength grids")


def planck_radiance(wavelength_nm, temperature):
    """Black-body spectral radiance B(lambda, T) in SI units."""
    lam = np.asarray(wavelength_nm, dtype=np.float64) * 1e-9
    x = PLANCK_H * LIGHT_C / (lam * BOLTZMANN_K * temperature)
    return 2.0 * PLANCK_H * LIGHT_C**2 / lam**5 / np.expm1(x)


def planck_spd(temperature: float, wavelengths=DEFAULT_WAVELENGTHS) -> Spectrum:
    """Planck spectrum sampled on ``wavelengths`` (nm), scaled to peak 1."""
    if not temperature > 0:
        raise DataError(f"temperature must be positive, got {temperature}")
    wl = np.asarray(wavelengths, dtype=np.float64)
    if wl.min() < 300.0 or wl.max() > 830.0:
        raise DataError("wavelength grid must lie within [300, 830] nm")
    b = planck_radiance(wl, temperature)
    return Spectrum(wl, b / b.max())


def gaussian_curves(centers, sigma, wavelengths=DEFAULT_WAVELENGTHS) -> np.ndarray:
    wl = np.asarray(wavelengths, dtype=np.float64)
    return np.stack([np.exp(-0.5 * ((wl - c) / sigma) ** 2) for c in centers])


@dataclass(frozen=True)
class SensorModel:
    """Camera sensor.

    ``spectral`` sensors integrate spectra against three sensitivity curves.
    ``diagonal`` sensors act on a nominal RGB response through per-channel
    ``gains`` followed by a 3x3 ``matrix``.
    """

    name: str
    mode: str
    wavelengths: Optional[np.ndarray] = None
    sensitivities: Optional[np.ndarray] = None
    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))
    gains: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        if self.mode == "spectral":
            wl = np.asarray(self.wavelengths, dtype=np.float64)
            sens = np.asarray(self.sensitivities, dtype=np.float64)
            if sens.shape != (3, wl.size):
                raise DataError("sensitivities must have shape (3, len(wavelengths))")
            if np.any(np.diff(wl) <= 0):
                raise DataError("wavelength grid must be strictly increasing")
            if wl[0] > 400.0 or wl[-1] < 700.0:
                raise DataError("wavelength grid must cover [400, 700] nm")
            if np.any(sens < 0):
                raise DataError("sensitivities must be nonnegative")
            object.__setattr__(self, "wavelengths", wl)
            object.__setattr__(self, "sensitivities", sens)
        elif self.mode == "diagonal":
            m = np.asarray(self.matrix, dtype=np.float64)
            g = np.asarray(self.gains, dtype=np.float64)
            if m.shape != (3, 3) or abs(np.linalg.det(m)) < 1e-12:
                raise DataError("diagonal sensor matrix must be an invertible 3x3")
            if g.shape != (3,) or np.any(g <= 0):
                raise DataError("gains must be three positive numbers")
            object.__setattr__(self, "matrix", m)
            object.__setattr__(self, "gains", g)
        else:
            raise DataError(f"unknown sensor mode {self.mode!r}")

    def respond(self, spd: Spectrum) -> np.ndarray:
        """Unnormalized trapezoidal response ``sum I(l) rho_c(l) dl``."""
        if self.mode != "spectral":
            raise DataError("spectral response requires a spectral sensor")
        _check_grid(spd.wavelengths, self.wavelengths)
        return trapezoid(spd.values * self.sensitivities, self.wavelengths, axis=1)

    def respond_rgb(self, nominal) -> np.ndarray:
        if self.mode != "diagonal":
            raise DataError("respond_rgb requires a diagonal sensor")
        return self.matrix @ (self.gains * np.asarray(nominal, dtype=np.float64))


def gaussian_sensor(
    name="gauss-450-540-610",
    centers=(610.0, 540.0, 450.0),
    sigma=30.0,
    wavelengths=DEFAULT_WAVELENGTHS,
) -> SensorModel:
    """Three Gaussian sensitivities, channels ordered R, G, B."""
    wl = np.asarray(wavelengths, dtype=np.float64)
    return SensorModel(name, "spectral", wl, gaussian_curves(centers, sigma, wl))


def default_sensor() -> SensorModel:
    return gaussian_sensor()


def alternate_sensor() -> SensorModel:
    """A second spectral camera with shifted, wider curves."""
    return gaussian_sensor("gauss-460-530-600", (600.0, 530.0, 460.0), 36.0)


def diagonal_sensor(name="diagonal", matrix=None, gains=None) -> SensorModel:
    return SensorModel(
        name,
        "diagonal",
        matrix=np.eye(3) if matrix is None else matrix,
        gains=np.ones(3) if gains is None else gains,
    )


def illuminant_rgb(spd: Spectrum, sensor: SensorModel) -> np.ndarray:
    """Camera response to a light source, L2-normalized."""
    return normalize(sensor.respond(spd))


@dataclass(frozen=True)
class Projector:
    """Three emission primaries (R, G, B rows) and a transmission curve."""

    wavelengths: np.ndarray
    primaries: np.ndarray
    transmission: np.ndarray

    def filter(self, spd: Spectrum) -> Spectrum:
        _check_grid(spd.wavelengths, self.wavelengths)
        return Spectrum(self.wavelengths, spd.values * self.transmission)

    def mix(self, weights) -> Spectrum:
        v = np.asarray(weights, dtype=np.float64) @ self.primaries
        return Spectrum(self.wavelengths, v * self.transmission)


def default_projector(wavelengths=DEFAULT_WAVELENGTHS) -> Projector:
    wl = np.asarray(wavelengths, dtype=np.float64)
    prim = gaussian_curves((620.0, 540.0, 455.0), 20.0, wl)
    return Projector(wl, prim, np.ones_like(wl))


@dataclass(frozen=True)
class IlluminantSpec:
    id: str
    kind: str
    chromaticity: tuple[float, float]
    camera_rgb: tuple[float, float, float]
    temperature_kelvin: Optional[float] = None
    spd: Optional[Spectrum] = field(default=None, compare=False, repr=False)

    @classmethod
    def from_rgb(cls, id, kind, rgb, temperature=None, spd=None) -> "IlluminantSpec":
        e = normalize(np.clip(rgb, 0.0, None))
        return cls(id, kind, to_chromaticity(e), tuple(float(x) for x in e),
                   None if temperature is None else float(temperature), spd)

    @property
    def rgb(self) -> np.ndarray:
        return np.array(self.camera_rgb)


@dataclass
class IlluminantSetConfig:
    """Lattice and locus parameters.

    ``gamut=None`` means the projector's own triangle of primaries as seen by
    the reference sensor; pass :data:`FULL_SIMPLEX` or any convex polygon in
    rb-chromaticity otherwise.
    """

    grid_step: Optional[float] = DEFAULT_GRID_STEP
    gamut: Optional[Sequence[tuple[float, float]]] = None
    temperatures: Sequence[float] = DEFAULT_TEMPERATURES
    reference_sensor: SensorModel = field(default_factory=default_sensor)
    projector: Projector = field(default_factory=default_projector)


def projector_gamut(config: IlluminantSetConfig) -> list[tuple[float, float]]:
    p = config.projector
    return [
        to_chromaticity(config.reference_sensor.respond(Spectrum(p.wavelengths, row * p.transmission)))
        for row in p.primaries
    ]


def _inside_convex(pt, poly, eps=1e-12) -> bool:
    sign = 0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        cross = (x1 - x0) * (pt[1] - y0) - (y1 - y0) * (pt[0] - x0)
        if abs(cross) <= eps:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


def lattice_points(step: float, polygon=FULL_SIMPLEX) -> list[tuple[float, float]]:
    """Points ``(i*step, j*step)`` of the rb simplex lying inside ``polygon``."""
    if not step > 0:
        raise DataError("grid step must be positive")
    n = int(math.floor(1.0 / step + 1e-9))
    pts = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            rc, bc = i * step, j * step
            if rc + bc <= 1.0 + 1e-12 and _inside_convex((rc, bc), polygon):
                pts.append((rc, bc))
    return pts


def _grid_spd(rc, bc, config: IlluminantSetConfig) -> Optional[Spectrum]:
    """Projector mixture whose reference-sensor response has chromaticity (rc, bc)."""
    p = config.projector
    cols = [config.reference_sensor.respond(Spectrum(p.wavelengths, row * p.transmission))
            for row in p.primaries]
    w = np.linalg.solve(np.stack(cols, axis=1), chromaticity_to_rgb(rc, bc))
    if np.any(w < -1e-12):
        return None
    spd = p.mix(np.clip(w, 0.0, None))
    return Spectrum(spd.wavelengths, spd.values / spd.values.max())


def _same_sensor(a: SensorModel, b: SensorModel) -> bool:
    if a is b:
        return True
    return (a.mode == b.mode == "spectral" and a.name == b.name
            and np.array_equal(a.wavelengths, b.wavelengths)
            and np.array_equal(a.sensitivities, b.sensitivities))


def _camera_rgb(nominal, spd, sensor: SensorModel, reference: SensorModel, what: str):
    if sensor.mode == "diagonal":
        return sensor.respond_rgb(nominal)
    if _same_sensor(sensor, reference):
        return nominal
    if spd is None:
        raise DataError(f"{what} lies outside the projector gamut; no spectrum for {sensor.name}")
    return sensor.respond(spd)


def build_illuminant_set(
    config: Optional[IlluminantSetConfig] = None, sensor: Optional[SensorModel] = None
) -> list[IlluminantSpec]:
    """Lattice illuminants followed by black-body illuminants, deduplicated.

    Spectra and lattice chromaticities are defined through the reference
    sensor; ``camera_rgb`` is the response of ``sensor`` (default: reference).
    """
    config = config or IlluminantSetConfig()
    ref = config.reference_sensor
    sensor = sensor or ref
    if config.grid_step is None and not len(config.temperatures):
        raise DataError("empty illuminant configuration")

    out: list[IlluminantSpec] = []
    if config.grid_step is not None:
        poly = projector_gamut(config) if config.gamut is None else list(config.gamut)
        for i, (rc, bc) in enumerate(lattice_points(config.grid_step, poly)):
            spd = _grid_spd(rc, bc, config)
            nominal = chromaticity_to_rgb(rc, bc)
            rgb = _camera_rgb(nominal, spd, sensor, ref, f"grid point ({rc}, {bc})")
            out.append(IlluminantSpec.from_rgb(f"grid-{i:05d}", "grid", rgb, spd=spd))

    for t in sorted(config.temperatures):
        spd = config.projector.filter(planck_spd(t, config.projector.wavelengths))
        nominal = ref.respond(spd)
        rgb = _camera_rgb(nominal, spd, sensor, ref, f"{t} K")
        out.append(IlluminantSpec.from_rgb(f"planck-{t:07.1f}K", "planckian", rgb, t, spd))

    out = _dedup(out)
    out.sort(key=lambda s: (s.kind, s.id))
    return out


def _dedup(specs: list[IlluminantSpec]) -> list[IlluminantSpec]:
    kept: list[IlluminantSpec] = []
    coords = np.empty((0, 2))
    for s in specs:
        c = np.array(s.chromaticity)
        if coords.size and np.min(np.linalg.norm(coords - c, axis=1)) < CHROMA_DEDUP_TOL:
            continue
        kept.append(s)
        coords = np.vstack([coords, c])
    return kept


def nearest_illuminants(targets, illums: Sequence[IlluminantSpec]) -> list[IlluminantSpec]:
    """For each target RGB, the illuminant with the smallest recovery angle.

    Exact ties go to the smaller id.
    """
    from .metrics import angle_between

    if not illums:
        raise DataError("illuminant set is empty")
    targets = list(targets)
    if not targets:
        return []
    ordered = sorted(illums, key=lambda s: s.id)
    E = np.array([s.camera_rgb for s in ordered])
    out = []
    for t in targets:
        t = np.asarray(t, dtype=np.float64)
        if not np.all(np.isfinite(t)) or not np.any(t != 0):
            raise DegenerateColorError(f"degenerate target {tuple(t)}")
        ang = angle_between(E, t[None, :])
        out.append(ordered[int(np.argmin(ang))])
    return out


CSV_HEADER = ["id", "kind", "temperature_K", "rc", "bc", "eR", "eG", "eB"]


def _g9(x: float) -> str:
    return f"{x:.9g}"


def write_illuminants_csv(path, illums: Sequence[IlluminantSpec]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for s in illums:
            t = "" if s.temperature_kelvin is None else _g9(s.temperature_kelvin)
            w.writerow([s.id, s.kind, t, *map(_g9, s.chromaticity), *map(_g9, s.camera_rgb)])


def read_illuminants_csv(path) -> list[IlluminantSpec]:
    """Inverse of :func:`write_illuminants_csv`; spectra are not stored."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise DataError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            t = float(row["temperature_K"]) if row["temperature_K"] else None
            rgb = [float(row[k]) for k in ("eR", "eG", "eB")]
            out.append(IlluminantSpec.from_rgb(row["id"], row["kind"], rgb, t))
    return out


def attach_spectra(illums, config: Optional[IlluminantSetConfig] = None) -> list[IlluminantSpec]:
    """Rebuild spectra for illuminants read back from CSV.

    Black-body entries use their temperature; lattice entries are re-solved
    as projector mixtures from their reference-sensor chromaticity.
    """
    config = config or IlluminantSetConfig()
    out = []
    for s in illums:
        if s.kind == "planckian":
            spd = config.projector.filter(planck_spd(s.temperature_kelvin, config.projector.wavelengths))
        else:
            spd = _grid_spd(*s.chromaticity, config)
        out.append(IlluminantSpec(s.id, s.kind, s.chromaticity, s.camera_rgb,
                                  s.temperature_kelvin, spd))
    return out


def write_scatter_csv(path, illums: Sequence[IlluminantSpec]) -> None:
    """Chromaticity scatter (``kind,rc,bc``) for plotting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "kind", "rc", "bc"])
        for s in illums:
            w.writerow([s.id, s.kind, *map(_g9, s.chromaticity)])
