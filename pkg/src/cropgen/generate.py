"""Image generation: quantize a source image, then replace every pixel with a
raw sample of the matching calibration cell under the chosen illuminant."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import __version__
from .calib import CalibrationTable
from .color import RAW_MAX, color_index, quantize_image
from .errors import DataError
from .illuminants import IlluminantSpec, nearest_illuminants
from .pngio import read_png, write_png
from .streams import derive_seed, stream_key, uniform_ints

log = logging.getLogger(__name__)

GENERATOR_VERSION = f"cropgen {__version__}"
SamplePolicy = Union[str, int]
_CHUNK = 1 << 16


@dataclass
class GenerationRequest:
    """One image to generate.

    ``sample_policy`` is ``"random"`` (uniform choice among the S samples,
    drawn from a stream keyed by seed, image index and pixel index),
    ``"mean"`` (rounded mean of the S samples) or an int selecting a fixed
    sample.
    """

    source: np.ndarray
    illuminant: Union[IlluminantSpec, str]
    table: CalibrationTable
    seed: int
    sample_policy: SamplePolicy = "random"
    image_index: int = 0


def parse_sample_policy(text: str) -> SamplePolicy:
    """``random``, ``mean`` or ``fixed:<i>``."""
    if text in ("random", "mean"):
        return text
    if text.startswith("fixed:"):
        return int(text.split(":", 1)[1])
    raise DataError(f"unknown sample policy {text!r}")


def _check_policy(policy: SamplePolicy, S: int) -> None:
    if isinstance(policy, (int, np.integer)) and not isinstance(policy, bool):
        if not 0 <= policy < S:
            raise DataError(f"fixed sample index {policy} outside [0, {S})")
    elif policy not in ("random", "mean"):
        raise DataError(f"unknown sample policy {policy!r}")


def generate_image(req: GenerationRequest, threads: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Return the 16-bit linear raw image and its ground-truth illuminant.

    Output is independent of ``threads``: random draws depend only on
    ``(seed, image_index, pixel_index)``.
    """
    src = np.asarray(req.source)
    if src.dtype != np.uint8 or src.ndim != 3 or src.shape[2] != 3:
        raise DataError(f"source must be an (H, W, 3) 8-bit image, got {src.dtype} {src.shape}")
    table = req.table
    ill = table.illuminant_index(req.illuminant)
    S = table.samples_per_cell
    _check_policy(req.sample_policy, S)
    h, w, _ = src.shape
    idx = color_index(quantize_image(src, table.k_bits), table.k_bits).reshape(-1)
    cells = table.samples[ill]
    out = np.empty((idx.size, 3), dtype=np.uint16)
    key = stream_key(req.seed, req.image_index)

    def fill(start: int) -> None:
        stop = min(start + _CHUNK, idx.size)
        sel = idx[start:stop]
        if req.sample_policy == "random":
            pick = uniform_ints(key, np.arange(start, stop), S)
            out[start:stop] = cells[sel, pick]
        elif req.sample_policy == "mean":
            out[start:stop] = np.rint(cells[sel].mean(axis=1))
        else:
            out[start:stop] = cells[sel, int(req.sample_policy)]

    starts = range(0, idx.size, _CHUNK)
    if threads > 1 and idx.size > _CHUNK:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, starts))
    else:
        for s in starts:
            fill(s)
    return out.reshape(h, w, 3), np.asarray(table.illuminants[ill].camera_rgb)


def random_scene(width: int, height: int, seed: int) -> np.ndarray:
    """8-bit scene with i.i.d. uniform channels."""
    if width <= 0 or height <= 0:
        raise DataError(f"scene dimensions must be positive, got {width}x{height}")
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)


# -- datasets ---------------------------------------------------------------


@dataclass
class ManifestEntry:
    image_path: str
    illuminant_id: str
    ground_truth: list[float]
    source_id: str
    seed: int
    table_checksum: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    generator_version: str = GENERATOR_VERSION
    created: str = ""
    linear_scale: int = RAW_MAX
    black_level: int = 0
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        raw = json.loads(text)
        try:
            entries = [ManifestEntry(**e) for e in raw.pop("entries")]
            return cls(entries=entries, **raw)
        except TypeError as exc:
            raise DataError(f"malformed manifest: {exc}") from None


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(manifest.to_json(), encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    return DatasetManifest.from_json(Path(path).read_text(encoding="utf-8"))


def write_gt_csv(path, entries: Sequence[ManifestEntry]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "eR", "eG", "eB"])
        for e in entries:
            w.writerow([e.image_path, *(f"{v:.9g}" for v in e.ground_truth)])


def read_gt_csv(path) -> dict[str, np.ndarray]:
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[row["image"]] = np.array([float(row["eR"]), float(row["eG"]), float(row["eB"])])
    return out


def load_linear(path) -> np.ndarray:
    """16-bit raw PNG to float linear in [0, 1]."""
    img = read_png(path)
    if img.dtype != np.uint16:
        raise DataError(f"{path}: expected a 16-bit linear image")
    return img.astype(np.float64) / RAW_MAX


def choose_illuminants(
    n: int,
    table: CalibrationTable,
    policy: str,
    seed: int,
    illuminants: Optional[Sequence] = None,
    targets: Optional[Sequence] = None,
) -> list[IlluminantSpec]:
    """Pick one illuminant per image.

    ``paired``: ``illuminants[i]`` for image i. ``random``: uniform with
    replacement from ``illuminants`` (default: the whole table).
    ``nearest``: the table illuminant closest to ``targets[i % len]``.
    """
    pool = table.illuminants
    if policy == "paired":
        if illuminants is None or len(illuminants) != n:
            raise DataError("paired policy needs exactly one illuminant per source")
        return [pool[table.illuminant_index(s)] for s in illuminants]
    if policy == "random":
        cands = pool if illuminants is None else [pool[table.illuminant_index(s)] for s in illuminants]
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x11]))
        return [cands[i] for i in rng.integers(0, len(cands), size=n)]
    if policy == "nearest":
        if not targets:
            raise DataError("nearest policy needs a target list")
        return nearest_illuminants([targets[i % len(targets)] for i in range(n)], pool)
    raise DataError(f"unknown illuminant policy {policy!r}")


def _as_sources(sources) -> list[tuple[str, np.ndarray]]:
    out = []
    for s in sources:
        if isinstance(s, (str, Path)):
            out.append((Path(s).stem, read_png(s)))
        else:
            sid, img = s
            out.append((str(sid), np.asarray(img)))
    return out


def generate_dataset(
    sources,
    table: CalibrationTable,
    seed: int,
    out_dir,
    illuminant_policy: str = "paired",
    illuminants: Optional[Sequence] = None,
    targets: Optional[Sequence] = None,
    sample_policy: SamplePolicy = "random",
    threads: int = 1,
    created: Optional[str] = None,
) -> DatasetManifest:
    """Generate one image per source, write PNGs, ``manifest.json`` and ``gt.csv``.

    ``sources`` holds PNG paths or ``(source_id, uint8 array)`` pairs.
    """
    srcs = _as_sources(sources)
    if not srcs:
        raise DataError("no source images")
    chosen = choose_illuminants(len(srcs), table, illuminant_policy, seed, illuminants, targets)
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    checksum = f"{table.checksum():08x}"

    def one(i: int) -> ManifestEntry:
        sid, img = srcs[i]
        image_seed = derive_seed(seed, i)
        raw, gt = generate_image(GenerationRequest(img, chosen[i], table, image_seed, sample_policy, i))
        rel = f"images/{i:05d}_{sid}.png"
        write_png(out_dir / rel, raw)
        return ManifestEntry(rel, chosen[i].id, [float(v) for v in gt], sid, image_seed, checksum)

    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        entries = list(pool.map(one, range(len(srcs))))
    log.info("generated %d images in %s", len(entries), out_dir)

    manifest = DatasetManifest(
        entries=entries,
        created=datetime.now(timezone.utc).isoformat(timespec="seconds") if created is None else created,
        params={
            "master_seed": seed,
            "illuminant_policy": illuminant_policy,
            "sample_policy": str(sample_policy),
            "k_bits": table.k_bits,
            "samples_per_cell": table.samples_per_cell,
            "sensor": table.sensor_name,
        },
    )
    write_manifest(manifest, out_dir / "manifest.json")
    write_gt_csv(out_dir / "gt.csv", entries)
    return manifest
