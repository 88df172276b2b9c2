"""Pan-private distinct count over turnstile streams.

The state is r linear measurements of the frequency vector along p-stable
directions, each started from Laplace noise calibrated to that column's
global sensitivity 2 Z max_i |X[i, j]|. The estimate is the lower median of
|entry|^p divided by sfp = median |X_0|^p.

Entries are exact fixed-point integers (value * 2**1074), so every update is
applied without rounding: deletions cancel exactly and the state depends only
on the net frequency vector, never on arrival order.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
import math

import numpy as np

from .errors import ConfigError, InputError, SnapshotError
from .keyed import clamp_open, keyed_uniform
from .snapshot import IntrusionSnapshot, config_hash, pack_ints, unpack_ints
from .stable import Calibration, x_block
from .stream import aggregate, clean

FRAC_BITS = 1074
_LN_SCALE = FRAC_BITS * math.log(2.0)
STANDARD = "standard"
DISABLED = "disabled"
SNAPSHOT_KIND = "pp-distinct"


def default_r(approx_eps, delta, c=8.0):
    """Sketch width ceil(c / eps^2 * ln(1/delta))."""
    return math.ceil(c / approx_eps ** 2 * math.log(1 / delta))


def to_fixed(values) -> np.ndarray:
    """Exact integer images value * 2**FRAC_BITS of finite doubles."""
    x = np.asarray(values, dtype=float)
    if not np.isfinite(x).all():
        raise InputError("cannot represent non-finite values exactly")
    mant, exp = np.frexp(x)
    mant = (mant * 2.0 ** 53).astype(np.int64)
    shift = exp.astype(np.int64) - 53 + FRAC_BITS
    sub = shift < 0
    if not sub.any():
        return mant.astype(object) << shift.astype(object)
    # subnormals: the mantissa carries trailing zeros, shift right instead
    out = mant.astype(object) << np.where(sub, 0, shift).astype(object)
    out[sub] = mant[sub].astype(object) >> (-shift[sub]).astype(object)
    return out


def from_fixed(v: int) -> float:
    try:
        return v / (1 << FRAC_BITS)
    except OverflowError:
        return math.copysign(math.inf, v)


def lower_median(values):
    """The ceil(r/2)-th smallest of r values."""
    v = np.sort(np.asarray(values), axis=-1)
    return v[..., math.ceil(v.shape[-1] / 2) - 1]


def laplace_unit(key, stream, counter=0):
    """Standard Laplace draws by inverse CDF from one keyed uniform each."""
    u = clamp_open(keyed_uniform(key, stream, counter)) - 0.5
    return -np.sign(u) * np.log1p(-2.0 * np.abs(u))


@dataclass(frozen=True)
class DistinctConfig:
    calibration: Calibration
    Z: int
    alpha: float
    approx_eps: float
    noise_mode: str = STANDARD
    noise_seed: int = 0

    def __post_init__(self):
        if self.calibration is None:
            raise ConfigError("a calibration is required")
        if self.Z < 2:
            raise ConfigError("Z must be at least 2")
        if self.noise_mode not in (STANDARD, DISABLED):
            raise ConfigError(f"unknown noise mode {self.noise_mode!r}")
        if self.noise_mode == STANDARD and not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if not self.p * math.log2(self.Z) < self.approx_eps:
            raise ConfigError(
                f"p log2(Z) = {self.p * math.log2(self.Z):.4g} must stay below "
                f"approx_eps = {self.approx_eps}")

    @classmethod
    def from_total(cls, calibration, Z, alpha_total, approx_eps, **kw):
        """Split a total budget alpha' evenly over the r sketch entries."""
        return cls(calibration, Z, alpha_total / calibration.params.r, approx_eps, **kw)

    @property
    def params(self):
        return self.calibration.params

    @property
    def p(self):
        return self.calibration.params.p

    @property
    def r(self):
        return self.calibration.params.r

    @property
    def alpha_total(self):
        return self.alpha * self.r

    def sensitivities(self) -> np.ndarray:
        """GS_j = 2 Z ||X_j||_inf."""
        return 2.0 * self.Z * np.asarray(self.calibration.row_norms)

    def to_dict(self):
        return {
            "calibration": self.calibration.to_dict(),
            "Z": self.Z,
            "alpha": self.alpha,
            "approx_eps": self.approx_eps,
            "noise_mode": self.noise_mode,
            "noise_seed": self.noise_seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(Calibration.from_dict(d["calibration"]), int(d["Z"]), float(d["alpha"]),
                   float(d["approx_eps"]), d["noise_mode"], int(d["noise_seed"]))


@lru_cache(maxsize=256)
def _fixed_row(params, item):
    return to_fixed(x_block(params, [item])[0])


def _initial_noise(config: DistinctConfig) -> list:
    if config.noise_mode == DISABLED:
        return [0] * config.r
    rho = laplace_unit(config.noise_seed, np.arange(config.r))
    norms = to_fixed(config.calibration.row_norms)
    out = []
    for j in range(config.r):
        # eta_j = (2 Z rho_j / alpha) * ||X_j||_inf, rounded once onto the grid
        factor = Fraction(2.0 * config.Z * float(rho[j]) / config.alpha)
        out.append(round(factor * int(norms[j])))
    return out


class NoisySketch:
    """The r-entry pan-private distinct-count state."""

    def __init__(self, config: DistinctConfig, acc=None):
        self.config = config
        self.acc = list(acc) if acc is not None else _initial_noise(config)
        if len(self.acc) != config.r:
            raise ConfigError("entry count does not match r")

    @property
    def entries(self) -> np.ndarray:
        return np.array([from_fixed(v) for v in self.acc])

    def update(self, item, delta=None):
        """Apply one update; accepts ``update(u)`` or ``update(item, delta)``."""
        if delta is None:
            item, delta = item
        item, delta = int(item), int(delta)
        if not 0 <= item < self.config.params.m:
            raise InputError(f"item {item} outside universe [0, {self.config.params.m})")
        if delta == 0:
            return self
        row = _fixed_row(self.config.params, item)
        self.acc = [a + delta * x for a, x in zip(self.acc, row)]
        return self

    def update_many(self, stream, chunk=256):
        """Apply a whole stream; identical result to sequential updates."""
        m = self.config.params.m
        net = aggregate(clean(stream), m)
        items = np.flatnonzero(net)
        acc = np.array(self.acc, dtype=object)
        for start in range(0, len(items), chunk):
            block = items[start:start + chunk]
            fixed = to_fixed(x_block(self.config.params, block))
            acc = acc + (net[block].astype(object)[:, None] * fixed).sum(axis=0)
        self.acc = list(acc)
        return self

    def log_entries(self) -> np.ndarray:
        """ln |entry_j|, with -inf for exact zeros."""
        return np.array([math.log(abs(v)) - _LN_SCALE if v else -math.inf for v in self.acc])

    def estimate(self) -> float:
        """Lower median of |entry_j|^p, divided by sfp."""
        med = lower_median(self.log_entries())
        if med == -math.inf:
            return 0.0
        return math.exp(self.config.p * med) / self.config.calibration.sfp

    def copy(self):
        return NoisySketch(self.config, self.acc)

    def snapshot(self) -> IntrusionSnapshot:
        cfg = self.config.to_dict()
        header = {"config": cfg, "config_hash": config_hash(cfg), "r": self.config.r}
        return IntrusionSnapshot(SNAPSHOT_KIND, header, pack_ints(self.acc))

    @classmethod
    def restore(cls, snap) -> "NoisySketch":
        if isinstance(snap, (bytes, bytearray)):
            snap = IntrusionSnapshot.from_bytes(snap)
        if snap.kind != SNAPSHOT_KIND:
            raise SnapshotError(f"expected a {SNAPSHOT_KIND} snapshot, got {snap.kind}")
        cfg = snap.header["config"]
        if config_hash(cfg) != snap.header.get("config_hash"):
            raise SnapshotError("config hash mismatch")
        config = DistinctConfig.from_dict(cfg)
        return cls(config, unpack_ints(snap.payload, config.r))


def new_sketch(config: DistinctConfig) -> NoisySketch:
    return NoisySketch(config)


def theoretical_additive_error(config: DistinctConfig, delta: float) -> float:
    """xi / sfp with xi = ((2 Z max_j ||X_j||_inf / alpha) ln(1/delta))^p.

    Zero when noise is disabled. Evaluated in log space because the base can
    exceed the double range.
    """
    if not 0 < delta < 1:
        raise InputError("delta must lie in (0, 1)")
    if config.noise_mode == DISABLED:
        return 0.0
    log_base = (math.log(2.0 * config.Z) + math.log(config.calibration.max_norm)
                - math.log(config.alpha) + math.log(math.log(1.0 / delta)))
    return math.exp(config.p * log_base) / config.calibration.sfp
