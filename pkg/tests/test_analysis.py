import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from addressless.analysis import (
    AnalysisError,
    UndersampledError,
    expected_scan_time,
    expected_scan_time_exact,
    grid_uniformity,
    nybble_entropy,
    read_suffix_file,
    scatter_csv,
    scatter_points,
    security_margin,
)

# frozen from the plain-math oracle script
ENTROPY_3_1 = 0.2028195311147832
CHI2_ONE_CELL_2560 = 652800.0
SCAN_TIME_64_1E4 = 322122.5472


def test_entropy_constant_samples():
    assert np.all(nybble_entropy([0x0123456789ABCDEF] * 50) == 0)


def test_entropy_uniform_nybble():
    samples = [v << 60 for v in range(16)]
    e = nybble_entropy(samples)
    assert e[0] == pytest.approx(1.0)
    assert np.all(e[1:] == 0)


def test_entropy_two_symbols():
    samples = [0x1 << 8, 0x1 << 8, 0x1 << 8, 0x2 << 8]
    e = nybble_entropy(samples)
    assert e[13] == pytest.approx(ENTROPY_3_1, abs=1e-12)


def test_entropy_empty():
    with pytest.raises(AnalysisError):
        nybble_entropy([])


@settings(max_examples=50)
@given(st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=200), st.randoms())
def test_entropy_bounds_and_permutation_invariance(samples, rnd):
    e = nybble_entropy(samples)
    assert np.all((e >= 0) & (e <= 1))
    shuffled = list(samples)
    rnd.shuffle(shuffled)
    assert np.allclose(nybble_entropy(shuffled), e)


def test_scatter_examples():
    pts = scatter_points([0, 0xFFFF_FFFF_0000_0000, 0x8000_0000_8000_0000])
    assert tuple(pts[0]) == (0.0, 0.0)
    assert tuple(pts[1]) == (0.0, (2**32 - 1) / 2**32)
    assert tuple(pts[2]) == (0.5, 0.5)


def test_scatter_ranges():
    rng = np.random.default_rng(1)
    pts = scatter_points(rng.integers(0, 2**64, 1000, dtype=np.uint64))
    assert np.all((pts >= 0) & (pts < 1))


def test_scatter_csv():
    text = scatter_csv([0x8000_0000_8000_0000], tag="collected")
    assert text.splitlines() == ["x,y,tag", "0.5,0.5,collected"]


@pytest.mark.parametrize(
    "n, p, expected",
    [(32, 1, 0.75), (64, 10_000, SCAN_TIME_64_1E4), (46, 1, 12288.0)],
)
def test_expected_scan_time(n, p, expected):
    assert expected_scan_time(n, p) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("n, p", [(0, 1), (64, 0), (-3, 5), (64, -1)])
def test_domain_errors(n, p):
    with pytest.raises(AnalysisError):
        expected_scan_time(n, p)
    with pytest.raises(AnalysisError):
        security_margin(n, p)


@pytest.mark.parametrize(
    "n, p, margin, safe",
    [(64, 1, 64.0, True), (64, 10_000, 50.7123, True), (50, 10_000, 36.7123, False)],
)
def test_security_margin(n, p, margin, safe):
    m = security_margin(n, p)
    assert m.margin == pytest.approx(margin, abs=1e-4)
    assert m.safe is safe


@pytest.mark.parametrize("n", range(33, 71))
@pytest.mark.parametrize("p", [1, 10, 10_000])
def test_margin_agrees_with_scan_time(n, p):
    assert security_margin(n, p).safe == (expected_scan_time_exact(n, p) >= expected_scan_time_exact(46, 1))


def test_margin_boundary_powers_of_two():
    assert security_margin(56, 1024).safe
    assert not security_margin(56, 1025).safe


def _grid_samples(cells):
    """Suffixes landing in the given (col, row) grid cells."""
    return [(row << 60) | (col << 28) for col, row in cells]


def test_uniformity_equal_counts():
    cells = [(c, r) for c in range(16) for r in range(16)] * 10
    res = grid_uniformity(_grid_samples(cells))
    assert res.statistic == 0 and res.passed


def test_uniformity_single_cell():
    res = grid_uniformity(_grid_samples([(3, 7)] * 2560))
    assert res.statistic == pytest.approx(CHI2_ONE_CELL_2560)
    assert not res.passed


def test_uniformity_undersampled():
    with pytest.raises(UndersampledError):
        grid_uniformity(np.arange(2559, dtype=np.uint64))


def test_uniformity_seeded_uniform_source():
    rng = np.random.default_rng(12345)
    assert grid_uniformity(rng.integers(0, 2**64, 10**5, dtype=np.uint64), alpha=0.001).passed


def test_uniformity_permutation_invariant():
    rng = np.random.default_rng(3)
    s = rng.integers(0, 2**64, 5000, dtype=np.uint64)
    assert grid_uniformity(s).statistic == grid_uniformity(rng.permutation(s)).statistic


def test_read_suffix_file(tmp_path):
    f = tmp_path / "s.txt"
    f.write_text("# collected\n0000000000000001\n\nffffffffffffffff  # max\n")
    assert read_suffix_file(f).tolist() == [1, 2**64 - 1]
    f.write_text("xyz\n")
    with pytest.raises(AnalysisError):
        read_suffix_file(f)
