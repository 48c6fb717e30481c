"""End-to-end acceptance checks, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary.
"""

from __future__ import annotations

import math
import time

import mpmath as mp
import numpy as np
import pytest

from cropgen.calib import read_table, synth_table_diagonal, synth_table_spectral, write_table
from cropgen.color import color_index, quantize_channel, quantize_image
from cropgen.errors import BadMagicError, ChecksumError, DegenerateSceneError, TableFormatError
from cropgen.estimators import EstimatorConfig, gray_edge, gray_world, shades_of_gray, white_patch
from cropgen.experiments import reduction_sweep, synthetic_corpus, with_white_patch
from cropgen.generate import (
    GenerationRequest,
    generate_dataset,
    generate_image,
    random_scene,
    read_manifest,
    write_manifest,
)
from cropgen.illuminants import (
    FULL_SIMPLEX,
    IlluminantSetConfig,
    build_illuminant_set,
    default_sensor,
    diagonal_sensor,
)
from cropgen.metrics import (
    recovery_error,
    recovery_errors,
    reproduction_error,
    reproduction_errors,
    summarize,
)
from cropgen.pngio import read_png
from cropgen.streams import derive_seed

from conftest import make_illums

ANGLE_111_110 = 35.264389682754654  # acos(2/sqrt(6)) in degrees, mpmath
ANGLE_211_111 = 19.471220634490691  # acos(4/(sqrt(6)*sqrt(3))) in degrees, mpmath


# -- 1 ---------------------------------------------------------------------------


def _mp_angle(x, y):
    x = [mp.mpf(float(v)) for v in x]
    y = [mp.mpf(float(v)) for v in y]
    dot = mp.fsum(i * j for i, j in zip(x, y))
    norm = mp.sqrt(mp.fsum(i * i for i in x) * mp.fsum(j * j for j in y))
    return mp.degrees(mp.acos(dot / norm))


def _mp_reproduction(est, gt):
    w = [mp.mpf(float(g)) / mp.mpf(float(e)) for e, g in zip(est, gt)]
    return _mp_angle(w, (1, 1, 1))


def _pairs(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(1e-3, 1.0, size=(n, 3))
    b = rng.uniform(1e-3, 1.0, size=(n, 3))
    wide = slice(0, n // 10)
    a[wide] *= 10.0 ** rng.uniform(-3, 3, size=(n // 10, 1))
    near = slice(n // 10, n // 10 + n // 100)
    b[near] = a[near] * (1 + 1e-7 * rng.normal(size=(n // 100, 3)))
    return a, b


def test_criterion_01_metric_oracle():
    """1  metric oracle equivalence: 1e5 pairs vs 40-digit oracle within 1e-9 deg, < 10 s"""
    n = 100_000
    est, gt = _pairs(n, 1)

    t0 = time.perf_counter()
    rec_vec = recovery_errors(est, gt)
    rep_vec = reproduction_errors(est, gt)
    rec = np.array([recovery_error(e, g) for e, g in zip(est, gt)])
    rep = np.array([reproduction_error(e, g) for e, g in zip(est, gt)])
    elapsed = time.perf_counter() - t0

    mp.mp.dps = 40
    rec_oracle = np.array([float(_mp_angle(e, g)) for e, g in zip(est, gt)])
    rep_oracle = np.array([float(_mp_reproduction(e, g)) for e, g in zip(est, gt)])

    assert np.max(np.abs(rec - rec_oracle)) < 1e-9
    assert np.max(np.abs(rec_vec - rec_oracle)) < 1e-9
    assert np.max(np.abs(rep - rep_oracle)) < 1e-9
    assert np.max(np.abs(rep_vec - rep_oracle)) < 1e-9
    assert elapsed < 10.0, f"metrics took {elapsed:.2f} s"


# -- 2 ---------------------------------------------------------------------------


def test_criterion_02_closed_forms():
    """2  closed-form anchors 35.264 / 19.471 deg and scale invariance over 1e4 scalings"""
    assert abs(recovery_error((1, 1, 1), (1, 1, 0)) - ANGLE_111_110) < 1e-6
    assert abs(reproduction_error((1, 1, 1), (2, 1, 1)) - ANGLE_211_111) < 1e-6

    rng = np.random.default_rng(2)
    a = rng.uniform(1e-3, 1.0, size=(10_000, 3))
    b = rng.uniform(1e-3, 1.0, size=(10_000, 3))
    s = 10.0 ** rng.uniform(-6, 6, size=(10_000, 1))
    # powers of two scale without rounding, so the result must be bit-identical
    p2 = 2.0 ** rng.integers(-60, 60, size=(10_000, 1))
    base_rec, base_rep = recovery_errors(a, b), reproduction_errors(a, b)
    assert np.array_equal(recovery_errors(a * p2, b), base_rec)
    assert np.array_equal(recovery_errors(a, b * p2), base_rec)
    assert np.array_equal(reproduction_errors(a * p2, b), base_rep)
    assert np.array_equal(reproduction_errors(a, b * p2), base_rep)
    # general scalings only perturb the inputs by their own rounding
    assert np.max(np.abs(recovery_errors(a * s, b) - base_rec)) < 1e-12
    assert np.max(np.abs(reproduction_errors(a * s, b / s) - base_rep)) < 1e-12
    for i in range(0, 10_000, 97):
        assert recovery_error(a[i] * p2[i], b[i]) == recovery_error(a[i], b[i])
        assert reproduction_error(a[i], b[i] * p2[i]) == reproduction_error(a[i], b[i])


# -- 3 ---------------------------------------------------------------------------


def test_criterion_03_quantization():
    """3  quantization: idempotence, mod-8 membership, <= 32768 colors (exhaustive + 100 images, < 5 s)"""
    t0 = time.perf_counter()
    for v in range(256):
        q = quantize_channel(v, 3)
        assert q % 8 == 0 and quantize_channel(q, 3) == q and 0 <= v - q < 8
    every = np.array([[[r, g, b] for b in range(256)] for r in range(0, 256, 5) for g in range(256)],
                     dtype=np.uint8)
    q = quantize_image(every, 3)
    assert np.all(q % 8 == 0) and np.array_equal(quantize_image(q, 3), q)

    rng = np.random.default_rng(3)
    for _ in range(100):
        h, w = rng.integers(16, 200, size=2)
        img = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
        q = quantize_image(img, 3)
        assert np.all(q % 8 == 0)
        assert np.array_equal(quantize_image(q, 3), q)
        assert np.unique(color_index(q)).size <= 32768
        assert np.all(color_index(q) < 32768)
    assert time.perf_counter() - t0 < 5.0


# -- 4 ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def provenance_table():
    rng = np.random.default_rng(4)
    illums = make_illums(rng.uniform(0.1, 1.0, size=(10, 3)))
    return synth_table_diagonal(illums, diagonal_sensor(), noise=0.05, seed=44)


def test_criterion_04_generator_provenance(tmp_path, provenance_table):
    """4  generator provenance: every pixel from its cell, no clipping, bit-identical reruns across threads"""
    table = provenance_table
    sources = [(f"src{i:02d}", random_scene(64, 64, derive_seed(4, i))) for i in range(20)]
    runs = {}
    for name, threads in (("t1", 1), ("t4", 4), ("again", 1)):
        runs[name] = generate_dataset(sources, table, 404, tmp_path / name, "random",
                                      threads=threads, created="")

    m = runs["t1"]
    for i, ((_, src), entry) in enumerate(zip(sources, m.entries)):
        ill = table.illuminant_index(entry.illuminant_id)
        raw, gt = generate_image(GenerationRequest(src, entry.illuminant_id, table, entry.seed, "random", i))
        on_disk = read_png(tmp_path / "t1" / entry.image_path)
        assert np.array_equal(on_disk, raw)
        idx = color_index(quantize_image(src)).reshape(-1)
        cells = table.samples[ill][idx]
        assert np.all(np.all(cells == raw.reshape(-1, 1, 3), axis=2).any(axis=1))
        assert raw.max() < 65535
        assert list(gt) == entry.ground_truth
        big, _ = generate_image(GenerationRequest(np.tile(src, (6, 6, 1)), entry.illuminant_id, table,
                                                  entry.seed), threads=1)
        big4, _ = generate_image(GenerationRequest(np.tile(src, (6, 6, 1)), entry.illuminant_id, table,
                                                   entry.seed), threads=4)
        assert np.array_equal(big, big4)

    for other in ("t4", "again"):
        assert runs[other].to_json() == m.to_json()
        for e in m.entries:
            a = (tmp_path / "t1" / e.image_path).read_bytes()
            assert a == (tmp_path / other / e.image_path).read_bytes()


# -- 5 ---------------------------------------------------------------------------


def test_criterion_05_von_kries_end_to_end():
    """5  von Kries end-to-end: White-Patch median < 0.1 deg on 50 images; Gray-world within 1 deg at 1e6 px; < 60 s"""
    t0 = time.perf_counter()
    pool = build_illuminant_set(sensor=diagonal_sensor())
    rng = np.random.default_rng(5)
    illums = [pool[i] for i in rng.choice(len(pool), 50, replace=False)]
    table = synth_table_diagonal(illums, diagonal_sensor(), noise=0.0, S=1)

    errs = []
    for i, s in enumerate(illums):
        src = with_white_patch(random_scene(64, 64, derive_seed(5, i)))
        raw, gt = generate_image(GenerationRequest(src, s, table, seed=i))
        errs.append(recovery_error(white_patch(raw / 65535.0), gt))
    assert np.median(errs) < 0.1

    for j in range(4):
        raw, gt = generate_image(GenerationRequest(random_scene(1000, 1000, derive_seed(55, j)),
                                                   illums[j], table, seed=j))
        est = gray_world(raw / 65535.0)
        # brute-force oracle: mean of every quantized color's cell, i.e. the
        # expectation of a uniform random scene; it carries the quantization bias
        expected = table.samples[j, :, 0].astype(np.float64).mean(axis=0)
        corrected = est / expected * np.asarray(gt)
        assert recovery_error(est, expected) < 1.0
        assert recovery_error(corrected, gt) < 1.0
        assert recovery_error(est, gt) < 1.0
    assert time.perf_counter() - t0 < 60.0


# -- 6 ---------------------------------------------------------------------------


def test_criterion_06_estimator_identities():
    """6  estimator identities: SoG(p=1) == gray_world, SoG(p=100) ~ White-Patch, uniform Gray-Edge degenerate"""
    rng = np.random.default_rng(6)
    for _ in range(100):
        img = rng.uniform(0, 1, size=tuple(rng.integers(8, 64, size=2)) + (3,))
        assert np.array_equal(shades_of_gray(img, 1), gray_world(img))

    for _ in range(100):
        bright = rng.uniform(0.4, 1.0, 3)
        dark = bright * rng.uniform(0.0, 0.1, 3)
        mask = rng.random((48, 48)) < rng.uniform(0.1, 0.9)
        img = np.where(mask[..., None], bright, dark)
        assert recovery_error(shades_of_gray(img, 100), white_patch(img)) < 0.5

    for c in ((0.2, 0.4, 0.6), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0)):
        for order in (1, 2):
            with pytest.raises(DegenerateSceneError):
                gray_edge(np.tile(c, (16, 16, 1)), order=order)


# -- 7 ---------------------------------------------------------------------------


def test_criterion_07_summary_statistics():
    """7  summary statistics: hand-derived row for [0..4] and ordering over 1e4 random lists"""
    s = summarize([0, 1, 2, 3, 4])
    assert s.median == 2 and s.trimean == 2 and s.best25_mean == 0.5 and s.worst25_mean == 3.5
    assert s.mean == 2
    assert s.geo_average == pytest.approx((2 * 2 * 2 * 0.5 * 3.5) ** 0.2, rel=1e-12)

    rng = np.random.default_rng(7)
    for _ in range(10_000):
        n = int(rng.integers(1, 60))
        errs = rng.gamma(1.5, 3.0, size=n) * (rng.random(n) > 0.05)
        s = summarize(errs)
        srt = np.sort(errs)
        assert s.best25_mean <= s.median <= s.worst25_mean
        assert srt[0] <= s.best25_mean and s.worst25_mean <= srt[-1]
        assert srt[0] <= s.mean <= srt[-1] and srt[0] <= s.trimean <= srt[-1]
        five = s.as_row()[:5]
        assert min(five) <= s.geo_average <= max(five)
        n4 = math.ceil(n / 4)
        assert s.best25_mean == pytest.approx(srt[:n4].mean(), abs=1e-12)
        assert s.worst25_mean == pytest.approx(srt[-n4:].mean(), abs=1e-12)


# -- 8 ---------------------------------------------------------------------------


def test_criterion_08_reduction_sweep():
    """8  reduction sweep: k=0 equals baseline, colors non-increasing, <= 8 at k=7, Gray-Edge worse at k=7"""
    images, gts = synthetic_corpus(20, 96, 96, seed=8)
    result = reduction_sweep(images, gts)
    for label, base in result.baseline.items():
        assert abs(result.median(0, label) - base) < 1e-3
    counts = np.array([result.distinct_colors[k] for k in range(8)])
    assert np.all(np.diff(counts, axis=0) <= 0)
    assert np.all(counts[7] <= 8)
    ge = EstimatorConfig("gray_edge").label
    assert result.median(7, ge) > result.median(0, ge)


# -- 9 ---------------------------------------------------------------------------


def test_criterion_09_noise_ordering():
    """9  noise ordering: White-Patch median worse under sigma 0.05 than 0.01 in 5/5 seeds"""
    pool = build_illuminant_set()
    sensor = default_sensor()
    wins = 0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        illums = [pool[i] for i in rng.choice(len(pool), 10, replace=False)]
        sources = [random_scene(64, 64, derive_seed(seed, i)) for i in range(20)]
        picks = rng.integers(0, len(illums), size=len(sources))
        medians = {}
        for name, sigma in (("A", 0.05), ("B", 0.01)):
            table = synth_table_spectral(illums, sensor, noise=sigma, seed=derive_seed(seed, 900))
            est, gt = [], []
            for i, (src, p) in enumerate(zip(sources, picks)):
                raw, g = generate_image(GenerationRequest(src, illums[p], table, derive_seed(seed, i),
                                                          "random", i))
                est.append(white_patch(raw / 65535.0))
                gt.append(g)
            medians[name] = float(np.median(recovery_errors(np.array(est), np.array(gt))))
        wins += medians["A"] > medians["B"]
    assert wins == 5


# -- 10 --------------------------------------------------------------------------


def test_criterion_10_file_roundtrip(tmp_path, provenance_table):
    """10 file formats: table and manifest write-read-write byte-identical; bad magic and CRC distinct errors"""
    t1, t2 = tmp_path / "t1.bin", tmp_path / "t2.bin"
    write_table(provenance_table, t1)
    write_table(read_table(t1), t2)
    assert t1.read_bytes() == t2.read_bytes()
    write_table(read_table(t1, lazy=True), t2)
    assert t1.read_bytes() == t2.read_bytes()

    m = generate_dataset([("s", random_scene(16, 16, 1))], provenance_table, 10, tmp_path / "d", "random")
    m1 = tmp_path / "d" / "manifest.json"
    m2 = tmp_path / "m2.json"
    write_manifest(read_manifest(m1), m2)
    assert m1.read_bytes() == m2.read_bytes()
    assert read_manifest(m2) == m

    raw = t1.read_bytes()
    (tmp_path / "magic.bin").write_bytes(b"NOTATABL" + raw[8:])
    flipped = bytearray(raw)
    flipped[len(raw) // 2] ^= 0x01
    (tmp_path / "crc.bin").write_bytes(bytes(flipped))
    with pytest.raises(BadMagicError) as magic:
        read_table(tmp_path / "magic.bin")
    with pytest.raises(ChecksumError) as crc:
        read_table(tmp_path / "crc.bin")
    assert type(magic.value) is not type(crc.value)
    assert isinstance(magic.value, TableFormatError) and isinstance(crc.value, TableFormatError)


# -- 11 --------------------------------------------------------------------------


def test_criterion_11_illuminant_counts():
    """11 illuminant counts: step 0.05 over the full simplex gives 231; default set gives 707"""
    brute = sum(1 for i in range(21) for j in range(21) if i + j <= 20)
    assert brute == 231
    cfg = IlluminantSetConfig(grid_step=0.05, gamut=FULL_SIMPLEX, temperatures=())
    assert len(build_illuminant_set(cfg)) == brute
    assert len(build_illuminant_set()) == 707
