"""Statistics over generated suffixes and the scan-cost calculators."""

import csv
import io
import json
import math
from fractions import Fraction
from typing import NamedTuple

import numpy as np
from scipy.stats import chi2

MIN_MARGIN_BITS = 46
GRID = 16
SCAN_TIME_UNIT = "formula units"


class AnalysisError(ValueError):
    pass


class UndersampledError(AnalysisError):
    pass


def as_suffixes(samples):
    arr = np.asarray(samples, dtype=np.uint64).ravel()
    if arr.size == 0:
        raise AnalysisError("empty sample set")
    return arr


def nybbles(samples):
    """(N, 16) array; column 0 is the most significant nybble."""
    s = as_suffixes(samples)
    shifts = np.arange(60, -4, -4, dtype=np.uint64)
    return ((s[:, None] >> shifts) & np.uint64(0xF)).astype(np.intp)


def nybble_entropy(samples):
    """Normalized Shannon entropy of each of the 16 nybble positions, each in [0, 1]."""
    nyb = nybbles(samples)
    n = nyb.shape[0]
    out = np.empty(16)
    for k in range(16):
        counts = np.bincount(nyb[:, k], minlength=16)
        p = counts[counts > 0] / n
        out[k] = -(p * np.log2(p)).sum() / 4
    return np.clip(out, 0.0, 1.0)


class ScatterPoint(NamedTuple):
    x: float
    y: float


def scatter_points(samples):
    """x from the low 32 suffix bits, y from the high 32, both scaled into [0, 1)."""
    s = as_suffixes(samples) if len(samples) else np.zeros(0, np.uint64)
    x = (s & np.uint64(0xFFFFFFFF)).astype(np.float64) / 2.0**32
    y = (s >> np.uint64(32)).astype(np.float64) / 2.0**32
    return np.column_stack([x, y])


def _check_domain(suffix_bits, p_salts):
    if not isinstance(suffix_bits, (int, np.integer)) or suffix_bits < 1:
        raise AnalysisError(f"suffix_bits must be a positive integer, got {suffix_bits!r}")
    if not isinstance(p_salts, (int, np.integer)) or p_salts < 1:
        raise AnalysisError(f"p_salts must be a positive integer, got {p_salts!r}")


def expected_scan_time_exact(suffix_bits, p_salts):
    _check_domain(suffix_bits, p_salts)
    return Fraction(3, 4 * int(p_salts)) * Fraction(2) ** (int(suffix_bits) - 32)


def expected_scan_time(suffix_bits, p_salts):
    """3 * 2**(N - 32) / (4 P), in the formula's own (unstated) time unit."""
    return float(expected_scan_time_exact(suffix_bits, p_salts))


class Margin(NamedTuple):
    margin: float
    safe: bool


def security_margin(suffix_bits, p_salts):
    _check_domain(suffix_bits, p_salts)
    m = suffix_bits - math.log2(p_salts)
    # exact integer comparison; float log2 can land a hair under 46 for P = 2**k
    safe = 2**suffix_bits >= p_salts * 2**MIN_MARGIN_BITS
    return Margin(m, safe)


class UniformityResult(NamedTuple):
    statistic: float
    critical: float
    alpha: float
    passed: bool
    counts: np.ndarray


def grid_counts(samples, grid=GRID):
    pts = scatter_points(samples)
    ix = np.minimum((pts[:, 0] * grid).astype(np.intp), grid - 1)
    iy = np.minimum((pts[:, 1] * grid).astype(np.intp), grid - 1)
    return np.bincount(iy * grid + ix, minlength=grid * grid).reshape(grid, grid)


def grid_uniformity(samples, alpha=0.001, grid=GRID):
    """Pearson chi-square of scatter cell counts against the uniform expectation."""
    s = as_suffixes(samples)
    cells = grid * grid
    if s.size < 10 * cells:
        raise UndersampledError(f"need at least {10 * cells} samples, got {s.size}")
    counts = grid_counts(s, grid)
    expected = s.size / cells
    stat = float(((counts - expected) ** 2).sum() / expected)
    crit = float(chi2.ppf(1 - alpha, cells - 1))
    return UniformityResult(stat, crit, alpha, stat < crit, counts)


# -- output ------------------------------------------------------------------


def entropy_report(samples):
    e = nybble_entropy(samples)
    return {"n": int(as_suffixes(samples).size), "entropy": [round(float(v), 6) for v in e]}


def scatter_csv(samples, tag="generated"):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "tag"])
    for x, y in scatter_points(samples):
        w.writerow([repr(float(x)), repr(float(y)), tag])
    return buf.getvalue()


def scan_time_report(suffix_bits, p_salts):
    return {
        "suffix_bits": suffix_bits,
        "p_salts": p_salts,
        "expected_time": expected_scan_time(suffix_bits, p_salts),
        "unit": SCAN_TIME_UNIT,
        "note": "time unit of the formula is unstated; value reported as evaluated",
    }


def margin_report(suffix_bits, p_salts):
    m = security_margin(suffix_bits, p_salts)
    return {"suffix_bits": suffix_bits, "p_salts": p_salts, "margin": m.margin, "safe": m.safe}


def uniformity_report(samples, alpha=0.001):
    r = grid_uniformity(samples, alpha)
    return {"n": int(as_suffixes(samples).size), "statistic": r.statistic,
            "critical": r.critical, "alpha": alpha, "passed": bool(r.passed)}


def read_suffix_file(path):
    """One 16-hex-digit suffix per line; blank lines and ``#`` comments skipped."""
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                v = int(line, 16)
            except ValueError:
                raise AnalysisError(f"{path}:{lineno}: not hex: {line!r}") from None
            if not 0 <= v < 1 << 64:
                raise AnalysisError(f"{path}:{lineno}: wider than 64 bits")
            out.append(v)
    return np.array(out, dtype=np.uint64)


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True)
