from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cropgen.errors import DataError, DegenerateColorError
from cropgen.generate import DatasetManifest, ManifestEntry
from cropgen.metrics import (
    SUMMARY_COLUMNS,
    angle_between,
    recovery_error,
    reproduction_error,
    score_manifest,
    summarize,
    write_summary_csv,
)

# acos(2/sqrt(6)) and acos(4/(sqrt(6)*sqrt(3))) in degrees, mpmath at 40 digits
ANGLE_111_110 = 35.26438968275465
ANGLE_211_111 = 19.47122063449069

pos = st.floats(1e-3, 1e3)
vec = st.tuples(pos, pos, pos).map(np.array)


def test_recovery_examples():
    assert recovery_error((1, 1, 1), (2, 2, 2)) == 0.0
    assert recovery_error((1, 0, 0), (0, 1, 0)) == pytest.approx(90.0, abs=1e-12)
    assert recovery_error((1, 1, 1), (1, 1, 0)) == pytest.approx(ANGLE_111_110, abs=1e-9)
    assert recovery_error((1, 0, 0), (-1, 0, 0)) == pytest.approx(180.0, abs=1e-12)
    with pytest.raises(DegenerateColorError):
        recovery_error((0, 0, 0), (1, 1, 1))


def test_reproduction_examples():
    assert reproduction_error((0.3, 0.2, 0.9), (0.3, 0.2, 0.9)) == 0.0
    assert reproduction_error((1, 1, 1), (2, 1, 1)) == pytest.approx(ANGLE_211_111, abs=1e-9)
    assert reproduction_error((3, 3, 3), (2, 1, 1)) == reproduction_error((1, 1, 1), (2, 1, 1))
    with pytest.raises(DegenerateColorError, match="zero channel"):
        reproduction_error((1, 0, 1), (1, 1, 1))


@given(vec, vec, pos)
def test_recovery_symmetric_and_scale_invariant(a, b, s):
    e = recovery_error(a, b)
    assert 0 <= e <= 180
    assert recovery_error(b, a) == pytest.approx(e, abs=1e-9)
    assert recovery_error(s * a, b) == pytest.approx(e, abs=1e-9)
    assert recovery_error(a, s * b) == pytest.approx(e, abs=1e-9)


@given(vec, vec, pos, pos)
def test_reproduction_invariance_and_bound(est, gt, s, t):
    e = reproduction_error(est, gt)
    assert e == pytest.approx(reproduction_error(s * est, t * gt), abs=1e-9)
    assert 0 <= e <= math.degrees(math.acos(1 / math.sqrt(3))) + 1e-9


@given(vec, pos)
def test_zero_iff_parallel(a, s):
    assert recovery_error(a, s * a) == pytest.approx(0.0, abs=1e-6)
    b = a.copy()
    b[0] *= 1.01
    assert recovery_error(a, b) > 0


def test_stability_contrast():
    rng = np.random.default_rng(0)
    U = np.ones(3)
    recoveries = []
    for _ in range(50):
        w = rng.uniform(0.1, 3.0, 3) * U
        assert reproduction_error(w, w) == 0.0
        recoveries.append(recovery_error(np.ones(3), w))
    assert np.ptp(recoveries) > 5.0


def test_angle_precision_near_zero():
    a = np.array([1.0, 1.0, 1.0])
    b = np.array([1.0, 1.0, 1.0 + 1e-10])
    # exact angle is sqrt(2/3) * 1e-10 / sqrt(3) radians to first order
    expected = math.degrees(math.sqrt(2 / 3) * 1e-10 / math.sqrt(3))
    assert angle_between(a, b) == pytest.approx(expected, rel=1e-5)
    assert angle_between(a * 1e-200, b * 1e-200) == pytest.approx(expected, rel=1e-5)


def _quartile_oracle(values, q):
    s = sorted(values)
    pos = q * (len(s) - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


def test_summarize_examples():
    s = summarize([2, 2, 2, 2])
    assert s.as_row() == [2.0] * 6
    s = summarize([0, 1, 2, 3, 4])
    assert (s.mean, s.median, s.trimean, s.best25_mean, s.worst25_mean) == (2, 2, 2, 0.5, 3.5)
    assert s.geo_average == pytest.approx((2 * 2 * 2 * 0.5 * 3.5) ** 0.2, rel=1e-12)
    assert summarize([7.25]).as_row() == [7.25] * 6
    with pytest.raises(DataError):
        summarize([])
    with pytest.raises(DataError):
        summarize([1.0, float("nan")])


@given(st.lists(st.floats(0, 180), min_size=1, max_size=60))
def test_summarize_matches_oracle_and_ordering(errs):
    s = summarize(errs)
    q1, med, q3 = (_quartile_oracle(errs, q) for q in (0.25, 0.5, 0.75))
    n4 = math.ceil(len(errs) / 4)
    srt = sorted(errs)
    assert s.median == pytest.approx(med, abs=1e-9)
    assert s.trimean == pytest.approx((q1 + 2 * med + q3) / 4, abs=1e-9)
    assert s.best25_mean == pytest.approx(sum(srt[:n4]) / n4, abs=1e-9)
    assert s.worst25_mean == pytest.approx(sum(srt[-n4:]) / n4, abs=1e-9)
    assert s.best25_mean <= s.median + 1e-12 <= s.worst25_mean + 2e-12
    five = s.as_row()[:5]
    assert min(five) <= s.geo_average <= max(five)


def _manifest(gts):
    entries = [ManifestEntry(f"img{i}.png", f"e{i}", list(map(float, g)), f"s{i}", i, "00000000")
               for i, g in enumerate(gts)]
    return DatasetManifest(entries)


def _rows(method, ests, names=None):
    return [{"image": f"img{i}.png" if names is None else names[i], "method": method, "params": "",
             "eR": e[0], "eG": e[1], "eB": e[2]} for i, e in enumerate(ests)]


def test_score_perfect_and_known_errors(tmp_path):
    rng = np.random.default_rng(3)
    gts = rng.uniform(0.1, 1, size=(5, 3))
    m = _manifest(gts)
    assert score_manifest(m, _rows("gw", gts))["gw"].as_row() == [0.0] * 6

    # rotate each ground truth by a chosen angle to get errors 0..4 degrees
    ests = []
    for g, ang in zip(gts, range(5)):
        g = g / np.linalg.norm(g)
        perp = np.cross(g, [0, 0, 1.0])
        perp /= np.linalg.norm(perp)
        r = math.radians(ang)
        ests.append(math.cos(r) * g + math.sin(r) * perp)
    table = score_manifest(m, _rows("rot", ests))
    assert np.allclose(table["rot"].as_row()[:5], [2, 2, 2, 0.5, 3.5], atol=1e-9)

    write_summary_csv(tmp_path / "s.csv", table, {"error": "recovery"})
    header = (tmp_path / "s.csv").read_text().splitlines()[0].split(",")
    assert header == ["error", "method", *SUMMARY_COLUMNS]


def test_score_reports_gaps():
    m = _manifest(np.ones((3, 3)))
    with pytest.raises(DataError, match="img2.png"):
        score_manifest(m, _rows("gw", np.ones((2, 3))))
    with pytest.raises(DataError):
        score_manifest(m, [])
    with pytest.raises(DataError):
        score_manifest(m, _rows("gw", np.ones((3, 3))), kind="angular")


def test_score_separates_params():
    m = _manifest(np.ones((2, 3)))
    rows = _rows("sog", np.ones((2, 3)))
    rows += [dict(r, params="p=4") for r in rows]
    assert set(score_manifest(m, rows, "reproduction")) == {"sog", "sog(p=4)"}
