"""Empirical check of the e^alpha ratio bound on one sketch coordinate."""

from dataclasses import dataclass
import math

import numpy as np

from .distinct import DISABLED, DistinctConfig, NoisySketch, from_fixed, laplace_unit
from .keyed import derive_seed, keyed_words
from .stable import x_column
from .stream import Update


@dataclass
class HistogramCheck:
    runs: int
    alpha: float
    bins_used: int
    max_ratio: float
    violations: int
    shift: float
    scale: float

    @property
    def passed(self):
        return self.violations == 0 and self.bins_used > 0


def noiseless_entry_gap(config: DistinctConfig, stream, neighbor, coord) -> float:
    """sk_coord(neighbor) - sk_coord(stream), computed exactly then rounded."""
    quiet = DistinctConfig(config.calibration, config.Z, config.alpha, config.approx_eps, DISABLED)
    a = NoisySketch(quiet).update_many(stream).acc[coord]
    b = NoisySketch(quiet).update_many(neighbor).acc[coord]
    return from_fixed(b - a)


def extremal_neighbor_pair(config: DistinctConfig, coord=0):
    """Single-item streams of mass Z whose coordinate gap is largest.

    The first stream puts Z on the item with the largest |X[i, coord]|, the
    neighbor moves that mass to the largest entry of opposite sign.
    """
    col = x_column(config.params, coord)
    top = int(np.argmax(np.abs(col)))
    other = np.where(np.sign(col) != np.sign(col[top]), np.abs(col), -1.0)
    if other.max() < 0:
        other = np.where(np.arange(len(col)) != top, np.abs(col), -1.0)
    low = int(np.argmax(other))
    return [Update(top, config.Z)], [Update(low, config.Z)]


def histogram_ratio_test(config: DistinctConfig, stream, neighbor, coord=0, runs=100_000,
                         seed=0, n_bins=24, min_expected=500, sigmas=3.0,
                         claimed_alpha=None) -> HistogramCheck:
    """Compare released-coordinate histograms of two neighboring streams.

    Both sides draw their own Laplace noise (independent keys), the values
    are binned on a common grid centred at the first stream's noiseless
    entry, and each bin with at least ``min_expected`` hits on both sides
    is tested in both directions for p <= e^alpha q beyond ``sigmas``
    standard errors of the difference. ``claimed_alpha`` replaces the
    config's alpha in the bound only, which lets a test confirm that an
    understated budget is detected.
    """
    scale = float(config.sensitivities()[coord] / config.alpha)
    shift = noiseless_entry_gap(config, stream, neighbor, coord)
    ks, kn = derive_seed(seed, "left-noise"), derive_seed(seed, "right-noise")
    idx = np.arange(runs)
    # each run is a fresh sketch: its own noise seed, drawn on the sketch's key path
    x = scale * laplace_unit(keyed_words(ks, idx, 0), coord)
    y = shift + scale * laplace_unit(keyed_words(kn, idx, 0), coord)
    edges = np.linspace(min(0.0, shift) - 6 * scale, max(0.0, shift) + 6 * scale, n_bins + 1)
    p = np.histogram(x, edges)[0] / runs
    q = np.histogram(y, edges)[0] / runs
    alpha = config.alpha if claimed_alpha is None else claimed_alpha
    ea = math.exp(alpha)
    keep = (np.minimum(p, q) * runs) >= min_expected
    violations, max_ratio = 0, 0.0
    for a, b in ((p, q), (q, p)):
        se = np.sqrt(a * (1 - a) / runs + ea ** 2 * b * (1 - b) / runs)
        bad = keep & (a - ea * b > sigmas * se)
        violations += int(bad.sum())
        if keep.any():
            max_ratio = max(max_ratio, float(np.max(a[keep] / b[keep])))
    return HistogramCheck(runs, alpha, int(keep.sum()), max_ratio, violations, shift, scale)
