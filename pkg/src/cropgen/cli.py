"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 I/O error.
Settings resolve as flags, then ``--config`` file, then built-in defaults;
every subcommand writes the resolved settings to ``<subcommand>_config.json``
in the output directory.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .calib import DEFAULT_SAMPLES, read_table, synth_table_diagonal, synth_table_spectral, write_table
from .color import DEFAULT_K_BITS
from .errors import DataError
from .estimators import METHODS, EstimatorConfig
from .experiments import (
    CartesianRunSpec,
    SensorOption,
    _estimate,
    cartesian_benchmark,
    load_corpus,
    reduction_sweep,
    smooth_srgb_scenes,
    synthetic_corpus,
    write_sweep_csv,
    write_benchmark_csv,
)
from .generate import (
    GENERATOR_VERSION,
    generate_dataset,
    load_linear,
    parse_sample_policy,
    random_scene,
    read_manifest,
)
from .illuminants import (
    DEFAULT_GRID_STEP,
    DEFAULT_TEMPERATURES,
    FULL_SIMPLEX,
    IlluminantSetConfig,
    alternate_sensor,
    attach_spectra,
    build_illuminant_set,
    default_sensor,
    diagonal_sensor,
    read_illuminants_csv,
    write_illuminants_csv,
    write_scatter_csv,
)
from .metrics import ERROR_KINDS, score_manifest, write_summary_csv
from .streams import derive_seed

log = logging.getLogger("cropgen")

SENSORS = {"default": default_sensor, "alternate": alternate_sensor, "diagonal": diagonal_sensor}
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors print the full help to stderr and exit with status 1."""

    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"\n{self.prog}: error: {message}\n")


# -- argument types ------------------------------------------------------------


def _optional_float(text: str):
    return None if str(text).lower() == "none" else float(text)


def _temperatures(text: str) -> tuple[float, ...]:
    """``start:stop:count`` (inclusive linspace), a comma list, or ``none``."""
    text = str(text).strip()
    if text.lower() == "none":
        return ()
    if ":" in text:
        a, b, n = text.split(":")
        return tuple(float(t) for t in np.linspace(float(a), float(b), int(n)))
    return tuple(float(t) for t in text.split(","))


def _size(text: str) -> tuple[int, int]:
    w, _, h = str(text).lower().partition("x")
    return int(w), int(h or w)


def _methods(text: str) -> tuple[str, ...]:
    names = tuple(m.strip() for m in str(text).split(",") if m.strip())
    bad = [m for m in names if m not in METHODS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
    return names


def _bool(text: str) -> bool:
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


# -- parser ----------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    g.add_argument("--threads", type=int, default=0, help="worker threads, 0 = one per CPU")
    g.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    g.add_argument("--out-dir", default=".", help="directory for relative output paths")
    g.add_argument("--config", help="flat key = value file; flags override it")
    return p


def _set_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid-step", type=_optional_float, default=DEFAULT_GRID_STEP,
                   help="rb lattice step, or 'none' for no lattice")
    p.add_argument("--gamut", choices=["projector", "simplex"], default="projector")
    p.add_argument("--temperatures", type=_temperatures, default=DEFAULT_TEMPERATURES,
                   help="black-body temperatures: start:stop:count, a comma list, or 'none'")


def _estimator_options(p: argparse.ArgumentParser, methods: str) -> None:
    p.add_argument("--methods", type=_methods, default=_methods(methods))
    p.add_argument("--p", type=float, default=None,
                   help="Minkowski norm (default 2 for shades_of_gray, 1 for gray_edge)")
    p.add_argument("--order", type=int, default=1, choices=[1, 2], help="Gray-Edge derivative order")
    p.add_argument("--sigma", type=float, default=1.0, help="Gray-Edge smoothing sigma")
    p.add_argument("--percentile", type=float, default=100.0, help="White-Patch percentile")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = _common()
    parser = _Parser(prog="cropgen", description="Ground-truth color constancy dataset generator.")
    parser.add_argument("--version", action="version", version=GENERATOR_VERSION)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    subs = {}

    def add(name, help_):
        subs[name] = sub.add_parser(name, help=help_, description=help_, parents=[common])
        return subs[name]

    p = add("illum-set", "Build the illuminant set and write it as CSV.")
    _set_options(p)
    p.add_argument("--sensor", choices=sorted(SENSORS), default="default")
    p.add_argument("--out", default="illums.csv")
    p.add_argument("--scatter", default="scatter.csv")

    p = add("calibrate-synth", "Synthesize a calibration table.")
    _set_options(p)
    p.add_argument("--illums", help="illuminant CSV; default builds the set from the set options")
    p.add_argument("--sensor", choices=sorted(SENSORS), default="default")
    p.add_argument("--mode", choices=["auto", "diagonal", "spectral"], default="auto",
                   help="auto follows the sensor type")
    p.add_argument("--noise", type=float, default=0.01, help="multiplicative noise sigma")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="samples per cell")
    p.add_argument("--k-bits", type=int, default=DEFAULT_K_BITS)
    p.add_argument("--exposure", type=_optional_float, default=None, help="default: automatic")
    p.add_argument("--max-illums", type=int, default=0,
                   help="keep this many evenly spaced illuminants, 0 = all")
    p.add_argument("--out", default="table.bin")

    p = add("generate", "Generate a dataset from source images and a table.")
    p.add_argument("--table", required=True)
    p.add_argument("--sources", help="glob of 8-bit PNG sources")
    p.add_argument("--random-scenes", type=int, default=0, help="add this many uniform random scenes")
    p.add_argument("--scene-size", type=_size, default=(64, 64), help="WxH of random scenes")
    p.add_argument("--illum-policy", choices=["paired", "random", "nearest"], default="random")
    p.add_argument("--illum-ids", help="comma list of illuminant ids (paired, or random pool)")
    p.add_argument("--targets", help="CSV with eR,eG,eB columns for the nearest policy")
    p.add_argument("--sample-policy", default="random", help="random, mean or fixed:<i>")
    p.add_argument("--dataset", default="dataset", help="dataset directory under --out-dir")

    p = add("estimate", "Run estimators on a generated dataset.")
    p.add_argument("--manifest", required=True)
    _estimator_options(p, ",".join(METHODS))
    p.add_argument("--out", default="estimates.csv")

    p = add("evaluate", "Score estimates against a manifest.")
    p.add_argument("--manifest", required=True)
    p.add_argument("--estimates", required=True)
    p.add_argument("--error", choices=sorted(ERROR_KINDS), default="recovery")
    p.add_argument("--out", default="summary.csv")

    p = add("reduce-experiment", "Median error after dropping low bits, k = 0..7.")
    p.add_argument("--corpus", help="directory with gt.csv and 16-bit PNGs; default synthetic")
    p.add_argument("--synthetic", type=int, default=20, help="synthetic corpus size")
    p.add_argument("--scene-size", type=_size, default=(96, 96))
    p.add_argument("--texture", type=float, default=0.35, help="synthetic fine-texture amplitude")
    _estimator_options(p, "gray_world,shades_of_gray,gray_edge")
    p.add_argument("--out", default="fig6.csv")

    p = add("benchmark", "Two scene sets x two sensors x two illuminant policies.")
    _set_options(p)
    p.add_argument("--sources", help="glob of 8-bit PNG sources; default synthetic smooth scenes")
    p.add_argument("--images", type=int, default=12, help="images per scene set")
    p.add_argument("--scene-size", type=_size, default=(64, 64))
    p.add_argument("--sensor-a", choices=sorted(SENSORS), default="default")
    p.add_argument("--noise-a", type=float, default=0.05)
    p.add_argument("--sensor-b", choices=sorted(SENSORS), default="alternate")
    p.add_argument("--noise-b", type=float, default=0.01)
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    p.add_argument("--sample-policy", default="random")
    p.add_argument("--error", choices=sorted(ERROR_KINDS), default="recovery")
    _estimator_options(p, "white_patch,gray_world,shades_of_gray")
    p.add_argument("--write-datasets", action="store_true", help="also write the eight datasets")
    p.add_argument("--out", default="table1.csv")
    return parser, subs


# -- configuration -----------------------------------------------------------------


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected key = value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(sub: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions}
    for key, value in values.items():
        if key not in actions or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r}")
        a = actions[key]
        if isinstance(a, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            sub.set_defaults(**{key: _bool(value)})
        else:
            # string defaults pass through the argument's type converter
            a.required = False
            sub.set_defaults(**{key: value})


def _parse(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a subcommand is required")
    if args.config:
        _apply_config(subs[args.command], read_config_file(args.config))
        args = parser.parse_args(argv)
    if args.threads < 0:
        subs[args.command].error("--threads must be >= 0")
    return args


def _jsonable(v):
    if isinstance(v, (tuple, list)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def _echo(args, out_dir: Path, extra: dict | None = None) -> None:
    cfg = {k: _jsonable(v) for k, v in vars(args).items()}
    cfg["generator_version"] = GENERATOR_VERSION
    if "gray_edge" in (getattr(args, "methods", None) or ()):
        cfg["assumptions"] = [
            "gray_edge Minkowski p, derivative order and sigma are assumed defaults "
            "unless given explicitly; no published setting is known"
        ]
    cfg.update(extra or {})
    path = out_dir / f"{args.command}_config.json"
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _threads(args) -> int:
    return args.threads or os.cpu_count() or 1


def _set_config(args) -> IlluminantSetConfig:
    return IlluminantSetConfig(
        grid_step=args.grid_step,
        gamut=FULL_SIMPLEX if args.gamut == "simplex" else None,
        temperatures=args.temperatures,
    )


def _estimator_configs(args) -> list[EstimatorConfig]:
    out = []
    for m in args.methods:
        p = args.p if m in ("shades_of_gray", "gray_edge") else None
        out.append(EstimatorConfig(m, p=p, derivative_order=args.order, sigma=args.sigma,
                                   percentile=args.percentile))
    return out


def _sources(pattern) -> list[str]:
    if not pattern:
        return []
    paths = sorted(glob.glob(pattern))
    if not paths:
        raise FileNotFoundError(f"no files match {pattern}")
    return paths


# -- subcommands -----------------------------------------------------------------


def cmd_illum_set(args, out_dir: Path) -> None:
    illums = build_illuminant_set(_set_config(args), SENSORS[args.sensor]())
    write_illuminants_csv(out_dir / args.out, illums)
    write_scatter_csv(out_dir / args.scatter, illums)
    n_grid = sum(s.kind == "grid" for s in illums)
    log.info("%d illuminants (%d lattice, %d black-body)", len(illums), n_grid, len(illums) - n_grid)
    _echo(args, out_dir, {"count": len(illums), "grid_count": n_grid})


def cmd_calibrate_synth(args, out_dir: Path) -> None:
    sensor = SENSORS[args.sensor]()
    mode = sensor.mode if args.mode == "auto" else args.mode
    cfg = _set_config(args)
    if args.illums:
        illums = read_illuminants_csv(args.illums)
        if mode == "spectral":
            illums = attach_spectra(illums, cfg)
    else:
        illums = build_illuminant_set(cfg, sensor)
    if args.max_illums and args.max_illums < len(illums):
        keep = np.unique(np.linspace(0, len(illums) - 1, args.max_illums).round().astype(int))
        illums = [illums[i] for i in keep]
    log.info("synthesizing %s table for %d illuminants", mode, len(illums))
    common = dict(noise=args.noise, S=args.samples, seed=args.seed, k_bits=args.k_bits,
                  exposure=args.exposure, threads=_threads(args))
    if mode == "diagonal":
        table = synth_table_diagonal(illums, sensor, **common)
    else:
        table = synth_table_spectral(illums, sensor, **common)
    write_table(table, out_dir / args.out)
    _echo(args, out_dir, {"mode": mode, "num_illuminants": len(illums), "exposure_used": table.exposure,
                          "checksum": f"{table.checksum():08x}"})


def _read_targets(path) -> list[np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return [np.array([float(r["eR"]), float(r["eG"]), float(r["eB"])]) for r in rows]
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad target row ({exc})") from None


def cmd_generate(args, out_dir: Path) -> None:
    table = read_table(args.table, lazy=True)
    sources: list = _sources(args.sources)
    w, h = args.scene_size
    for i in range(args.random_scenes):
        sources.append((f"random{i:04d}", random_scene(w, h, derive_seed(args.seed, 50_000 + i))))
    if not sources:
        raise UsageError("generate needs --sources and/or --random-scenes")
    ids = [s.strip() for s in args.illum_ids.split(",")] if args.illum_ids else None
    targets = _read_targets(args.targets) if args.targets else None
    manifest = generate_dataset(sources, table, args.seed, out_dir / args.dataset, args.illum_policy,
                                illuminants=ids, targets=targets,
                                sample_policy=parse_sample_policy(args.sample_policy),
                                threads=_threads(args))
    log.info("wrote %d images", len(manifest.entries))
    _echo(args, out_dir)


def cmd_estimate(args, out_dir: Path) -> None:
    manifest = read_manifest(args.manifest)
    root = Path(args.manifest).parent
    configs = _estimator_configs(args)

    def one(entry):
        img = load_linear(root / entry.image_path)
        rows = []
        for c in configs:
            e, bad = _estimate(c, img)
            if bad:
                log.warning("%s: degenerate %s estimate, using fallback", entry.image_path, c.method)
            rows.append([entry.image_path, c.method, c.params, *(f"{v:.9g}" for v in e)])
        return rows

    with ThreadPoolExecutor(max_workers=_threads(args)) as pool:
        results = list(pool.map(one, manifest.entries))
    with open(out_dir / args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["image", "method", "params", "eR", "eG", "eB"])
        for rows in results:
            wr.writerows(rows)
    _echo(args, out_dir, {"resolved_methods": [c.label for c in configs]})


def cmd_evaluate(args, out_dir: Path) -> None:
    manifest = read_manifest(args.manifest)
    with open(args.estimates, newline="") as fh:
        rows = list(csv.DictReader(fh))
    table = score_manifest(manifest, rows, args.error)
    write_summary_csv(out_dir / args.out, table, {"error": args.error})
    _echo(args, out_dir)


def cmd_reduce(args, out_dir: Path) -> None:
    if args.corpus:
        images, gts, _ = load_corpus(args.corpus)
        corpus_id = str(args.corpus)
    else:
        w, h = args.scene_size
        images, gts = synthetic_corpus(args.synthetic, w, h, args.seed, args.texture)
        corpus_id = f"synthetic(n={args.synthetic},size={w}x{h},texture={args.texture:g},seed={args.seed})"
    result = reduction_sweep(images, gts, _estimator_configs(args), corpus_id=corpus_id)
    write_sweep_csv(out_dir / args.out, result)
    _echo(args, out_dir, {"corpus_id": corpus_id, "baseline": result.baseline,
                          "max_distinct_colors": {str(k): max(v) for k, v in result.distinct_colors.items()},
                          "degenerate": {str(k): v for k, v in result.degenerate.items()},
                          "sweep": result.config})


def cmd_benchmark(args, out_dir: Path) -> None:
    w, h = args.scene_size
    paths = _sources(args.sources)
    if paths:
        from .pngio import read_png

        corpus = [(Path(p).stem, read_png(p)) for p in paths[: args.images]]
    else:
        corpus = smooth_srgb_scenes(args.images, w, h, args.seed)
    randoms = [(f"random{i:04d}", random_scene(w, h, derive_seed(args.seed, 50_000 + i)))
               for i in range(args.images)]
    sensors = [
        SensorOption(f"A:{args.sensor_a}", SENSORS[args.sensor_a](), args.noise_a),
        SensorOption(f"B:{args.sensor_b}", SENSORS[args.sensor_b](), args.noise_b),
    ]
    spec = CartesianRunSpec({"corpus": corpus, "random": randoms}, sensors, _set_config(args),
                            seed=args.seed, samples_per_cell=args.samples, error_kind=args.error,
                            sample_policy=parse_sample_policy(args.sample_policy))
    report = cartesian_benchmark(spec, _estimator_configs(args),
                                 out_dir=out_dir / "datasets" if args.write_datasets else None,
                                 threads=_threads(args))
    write_benchmark_csv(out_dir / args.out, report)
    _echo(args, out_dir, {"benchmark": report.config})


COMMANDS = {
    "illum-set": cmd_illum_set,
    "calibrate-synth": cmd_calibrate_synth,
    "generate": cmd_generate,
    "estimate": cmd_estimate,
    "evaluate": cmd_evaluate,
    "reduce-experiment": cmd_reduce,
    "benchmark": cmd_benchmark,
}


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except UsageError as exc:
        build_parser()[0].print_help(sys.stderr)
        print(f"cropgen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cropgen: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out_dir)
    except UsageError as exc:
        print(f"cropgen {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"cropgen: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"cropgen: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # pypng format errors and the like
        if type(exc).__module__ == "png":
            print(f"cropgen: data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        raise
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
