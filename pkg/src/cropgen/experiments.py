"""Experiment runners: the color-reduction sweep and the 2x2x2 generated-dataset
benchmark, plus the synthetic corpora that make both runnable offline."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter, zoom

from .calib import CalibrationTable, synth_table_diagonal, synth_table_spectral
from .color import SRGB, TransferFunction, normalize, quantize_image, srgb_to_linear
from .errors import DataError, DegenerateSceneError
from .estimators import EstimatorConfig
from .generate import (
    GenerationRequest,
    choose_illuminants,
    generate_dataset,
    generate_image,
    load_linear,
    read_gt_csv,
)
from .illuminants import (
    IlluminantSetConfig,
    SensorModel,
    build_illuminant_set,
)
from .metrics import ErrorSummary, SUMMARY_COLUMNS, ERROR_KINDS, summarize
from .streams import derive_seed

log = logging.getLogger(__name__)

SWEEP_METHODS = (
    EstimatorConfig("gray_world"),
    EstimatorConfig("shades_of_gray"),
    EstimatorConfig("gray_edge"),
)
BENCHMARK_METHODS = (
    EstimatorConfig("white_patch"),
    EstimatorConfig("gray_world"),
    EstimatorConfig("shades_of_gray", p=2),
)
NEUTRAL = np.full(3, 1 / np.sqrt(3))


CHANNEL_FLOOR = 1e-9


def _estimate(method, img) -> tuple[np.ndarray, bool]:
    """Estimate, falling back to neutral gray for degenerate scenes.

    Channels below ``CHANNEL_FLOOR`` are raised to it so the reproduction
    error stays finite (it tends to its limiting value as a channel
    vanishes); such estimates are reported as degenerate too.
    """
    try:
        e = method(img)
    except DegenerateSceneError:
        return NEUTRAL, True
    if np.any(e < CHANNEL_FLOOR):
        return normalize(np.maximum(e, CHANNEL_FLOOR)), True
    return e, False


def _label(method) -> str:
    return getattr(method, "label", getattr(method, "__name__", repr(method)))


# -- synthetic corpora -------------------------------------------------------


def synthetic_corpus(n: int, width: int = 96, height: int = 96, seed: int = 0,
                     texture: float = 0.35) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Linear images with known illuminants, exactly representable as 8-bit sRGB.

    Each scene is a few smooth colored regions multiplied by a fine
    achromatic texture of relative amplitude ``texture``, lit by a random
    black-body-like illuminant, encoded to 8-bit sRGB and decoded back.
    """
    if n < 1:
        raise DataError("corpus size must be positive")
    images, gts = [], []
    for i in range(n):
        rng = np.random.default_rng(derive_seed(seed, i))
        coarse = rng.uniform(0.15, 0.9, size=(4, 4, 3))
        regions = zoom(coarse, (height / 4, width / 4, 1), order=0)[:height, :width]
        regions = gaussian_filter(regions, (2, 2, 0))
        fine = 1.0 + texture * rng.uniform(-1.0, 1.0, size=(height, width, 1))
        gt = normalize(rng.uniform(0.25, 1.0, size=3))
        linear = np.clip(regions * fine * gt / gt.max(), 0.0, 1.0)
        u8 = np.rint(SRGB.encode(linear) * 255).astype(np.uint8)
        images.append(srgb_to_linear(u8 / 255.0))
        gts.append(gt)
    return images, gts


def smooth_srgb_scenes(n: int, width: int = 64, height: int = 64, seed: int = 0) -> list[tuple[str, np.ndarray]]:
    """Photo-like 8-bit sources: blurred random color fields with mild texture."""
    out = []
    for i in range(n):
        rng = np.random.default_rng(derive_seed(seed, 10_000 + i))
        field_ = rng.uniform(0, 1, size=(height, width, 3))
        field_ = gaussian_filter(field_, (height / 8, width / 8, 0))
        field_ = (field_ - field_.min()) / max(np.ptp(field_), 1e-9)
        field_ = np.clip(field_ + 0.04 * rng.normal(size=field_.shape), 0, 1)
        out.append((f"scene{i:04d}", np.rint(field_ * 255).astype(np.uint8)))
    return out


def with_white_patch(img: np.ndarray, size: int = 4) -> np.ndarray:
    """Copy of an 8-bit scene with a top-left square of full white."""
    out = np.array(img, copy=True)
    out[:size, :size] = 255
    return out


# -- color reduction sweep ---------------------------------------------------


@dataclass
class ReductionSweepResult:
    rows: list[tuple[int, str, float]]
    baseline: dict[str, float]
    distinct_colors: dict[int, list[int]]
    degenerate: dict[int, int]
    corpus_id: str = ""
    config: dict = field(default_factory=dict)

    def median(self, k: int, method: str) -> float:
        for kk, m, v in self.rows:
            if kk == k and m == method:
                return v
        raise KeyError((k, method))


def reduce_colors(linear: np.ndarray, k: int, transfer: TransferFunction = SRGB) -> tuple[np.ndarray, np.ndarray]:
    """Linear -> display 8-bit -> zero ``k`` low bits -> linear.

    Returns the reduced linear image and its 8-bit display form. Inputs above
    1 are first scaled by the image maximum.
    """
    img = np.asarray(linear, dtype=np.float64)
    peak = img.max()
    if peak > 1:
        img = img / peak
    u8 = np.rint(np.asarray(transfer.encode(np.clip(img, 0, 1))) * 255).astype(np.uint8)
    q = quantize_image(u8, k)
    return np.asarray(transfer.decode(q / 255.0)), q


def _distinct(q: np.ndarray) -> int:
    return int(np.unique(q.reshape(-1, 3), axis=0).shape[0])


def reduction_sweep(
    corpus: Sequence[np.ndarray],
    gts: Sequence,
    methods: Sequence = SWEEP_METHODS,
    transfer: TransferFunction = SRGB,
    ks: Sequence[int] = range(8),
    corpus_id: str = "",
) -> ReductionSweepResult:
    """Median reproduction error per (k, method) after dropping ``k`` bits."""
    if not corpus:
        raise DataError("empty corpus")
    if len(corpus) != len(gts):
        raise DataError(f"{len(corpus)} images but {len(gts)} ground-truth rows")
    gts = np.asarray(gts, dtype=np.float64)
    labels = [_label(m) for m in methods]

    baseline = {}
    for m, lab in zip(methods, labels):
        est = np.array([_estimate(m, img)[0] for img in corpus])
        baseline[lab] = float(np.median(ERROR_KINDS["reproduction"](est, gts)))

    rows, distinct, degenerate = [], {}, {}
    for k in ks:
        reduced = [reduce_colors(img, k, transfer) for img in corpus]
        distinct[k] = [_distinct(q) for _, q in reduced]
        degenerate[k] = 0
        for m, lab in zip(methods, labels):
            ests = []
            for lin, _ in reduced:
                e, bad = _estimate(m, lin)
                degenerate[k] += bad
                ests.append(e)
            errs = ERROR_KINDS["reproduction"](np.array(ests), gts)
            rows.append((k, lab, float(np.median(errs))))
        log.info("k=%d done", k)
    return ReductionSweepResult(rows, baseline, distinct, degenerate, corpus_id,
                                {"transfer": transfer.name, "methods": labels, "ks": list(ks),
                                 "error": "reproduction", "statistic": "median"})


def write_sweep_csv(path, result: ReductionSweepResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "method", "median_error"])
        for k, m, v in result.rows:
            w.writerow([k, m, f"{v:.6f}"])


def load_corpus(directory) -> tuple[list[np.ndarray], list[np.ndarray], list[str]]:
    """16-bit linear PNGs listed in ``<directory>/gt.csv``."""
    directory = Path(directory)
    gt = read_gt_csv(directory / "gt.csv")
    if not gt:
        raise DataError(f"{directory}/gt.csv lists no images")
    names = sorted(gt)
    return [load_linear(directory / n) for n in names], [gt[n] for n in names], names


# -- generated-dataset benchmark ---------------------------------------------


@dataclass
class SensorOption:
    name: str
    sensor: SensorModel
    noise: float


TableBuilder = Callable[[list, SensorOption, int], CalibrationTable]


def default_table_builder(illums, option: SensorOption, seed: int, S: int = 25) -> CalibrationTable:
    if option.sensor.mode == "diagonal":
        return synth_table_diagonal(illums, option.sensor, option.noise, S, seed)
    return synth_table_spectral(illums, option.sensor, noise=option.noise, S=S, seed=seed)


def planckian_targets(sensor_illums, n: int = 30, seed: int = 0, jitter: float = 0.01) -> list[np.ndarray]:
    """Daylight-like target illuminants: black-body colors 2500-8000 K as seen
    through the set's sensor, with small chromatic jitter."""
    planck = [s for s in sensor_illums if s.kind == "planckian"
              and 2500 <= s.temperature_kelvin <= 8000]
    if not planck:
        raise DataError("illuminant set has no black-body entries in 2500-8000 K")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(planck), size=n)
    return [normalize(np.clip(planck[i].rgb * (1 + jitter * rng.normal(size=3)), 1e-6, None)) for i in picks]


@dataclass
class CartesianRunSpec:
    """Two scene sets x two sensors x two illuminant policies."""

    scenes: dict[str, list]
    sensors: list[SensorOption]
    illum_config: IlluminantSetConfig = field(default_factory=IlluminantSetConfig)
    targets: Optional[Callable[[list], list]] = None
    seed: int = 0
    samples_per_cell: int = 25
    error_kind: str = "recovery"
    sample_policy: object = "random"

    def __post_init__(self):
        if len(self.scenes) != 2 or len(self.sensors) != 2:
            raise DataError("a Cartesian run needs exactly two scene sets and two sensors")
        if self.error_kind not in ERROR_KINDS:
            raise DataError(f"unknown error kind {self.error_kind!r}")

    def configurations(self) -> list[tuple[str, SensorOption, str]]:
        return list(product(self.scenes, self.sensors, ("nearest", "random")))


@dataclass
class BenchmarkReport:
    tables: dict[str, dict[str, ErrorSummary]]
    config: dict


def cartesian_benchmark(
    spec: CartesianRunSpec,
    methods: Sequence[EstimatorConfig] = BENCHMARK_METHODS,
    table_builder: Optional[TableBuilder] = None,
    out_dir=None,
    threads: int = 1,
) -> BenchmarkReport:
    """Build tables, generate the eight datasets, estimate and summarize.

    Tables are synthesized only for the illuminants a configuration uses.
    With ``out_dir`` every dataset is written (PNGs, manifest, gt.csv) and
    estimated from the files it produced.
    """
    builder = table_builder or (lambda ill, opt, seed: default_table_builder(ill, opt, seed, spec.samples_per_cell))
    tables: dict[str, dict[str, ErrorSummary]] = {}
    illum_sets = {opt.name: build_illuminant_set(spec.illum_config, opt.sensor) for opt in spec.sensors}

    for ci, (scene_name, opt, policy) in enumerate(spec.configurations()):
        label = f"{scene_name} scenes, {opt.name} sensor, {policy} illuminations"
        sources = spec.scenes[scene_name]
        full = illum_sets[opt.name]
        cfg_seed = derive_seed(spec.seed, ci)
        targets = (spec.targets or planckian_targets)(full) if policy == "nearest" else None
        # choose against a table-less stand-in, then synthesize only what is used
        chosen = choose_illuminants(len(sources), _IllumPool(full), policy, cfg_seed, targets=targets)
        used = sorted({s.id: s for s in chosen}.values(), key=lambda s: s.id)
        table = builder(used, opt, derive_seed(spec.seed, 100 + spec.sensors.index(opt)))
        gts = np.array([s.camera_rgb for s in chosen])

        if out_dir is not None:
            ddir = Path(out_dir) / f"config{ci}"
            manifest = generate_dataset(sources, table, cfg_seed, ddir, "paired", chosen,
                                        sample_policy=spec.sample_policy, threads=threads,
                                        created="")
            images = [load_linear(ddir / e.image_path) for e in manifest.entries]
        else:
            images = [
                generate_image(GenerationRequest(img, chosen[i], table, derive_seed(cfg_seed, i),
                                                 spec.sample_policy, i), threads)[0] / 65535.0
                for i, (_, img) in enumerate(sources)
            ]
        tables[label] = {}
        for m in methods:
            est = np.array([_estimate(m, img)[0] for img in images])
            tables[label][m.label] = summarize(ERROR_KINDS[spec.error_kind](est, gts))
        log.info("%s: %d images", label, len(images))

    config = {
        "seed": spec.seed,
        "error": spec.error_kind,
        "samples_per_cell": spec.samples_per_cell,
        "sample_policy": str(spec.sample_policy),
        "sensors": [{"name": o.name, "mode": o.sensor.mode, "noise": o.noise} for o in spec.sensors],
        "scenes": {k: len(v) for k, v in spec.scenes.items()},
        "methods": [asdict(m) for m in methods],
        "grid_step": spec.illum_config.grid_step,
        "num_temperatures": len(spec.illum_config.temperatures),
    }
    return BenchmarkReport(tables, config)


class _IllumPool:
    """Minimal table stand-in so illuminant choice works before synthesis."""

    def __init__(self, illums):
        self.illuminants = list(illums)
        self._index = {s.id: i for i, s in enumerate(self.illuminants)}

    def illuminant_index(self, s):
        return self._index[s.id if hasattr(s, "id") else s]


def write_benchmark_csv(path, report: BenchmarkReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["configuration", "method", *SUMMARY_COLUMNS])
        for cfg, rows in report.tables.items():
            for method, s in rows.items():
                w.writerow([cfg, method, *(f"{v:.6f}" for v in s.as_row())])


def write_run_config(path, config: dict) -> None:
    Path(path).write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
