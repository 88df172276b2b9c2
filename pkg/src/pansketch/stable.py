"""p-stable variates keyed by item id, and their offline calibration.

Entry ``X[i, j]`` of the (never stored) m x r projection matrix is produced by
seeding the keyed generator with ``(master_seed, i)`` and taking the j-th pair
of uniforms. Variates are computed in log space: for small p they routinely
reach 1e100 and beyond, and the direct formula under- or overflows long
before the result does.
"""

from dataclasses import dataclass, field
import json
import os

import numpy as np

from .errors import ConfigError, InputError, NumericError
from .keyed import clamp_open, derive_seed, keyed_uniform

CALIBRATION_FORMAT = "pansketch-calibration"
CALIBRATION_VERSION = 1
CALIBRATION_ENV = "PANSKETCH_CALIBRATION"

# log of the largest magnitude a variate may take; keeps every entry finite
LOG_CAP = 709.0


@dataclass(frozen=True)
class StableParams:
    p: float
    r: int
    m: int
    master_seed: int

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ConfigError(f"p must lie in (0, 1], got {self.p}")
        if self.r < 1 or self.m < 1:
            raise ConfigError("r and m must be positive")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must be a 64-bit unsigned key")


def stable_log_variate(r1, r2, p):
    """Return ``(sign, log|X|)`` of stable(r1, r2, p), elementwise.

    theta = pi (r1 - 1/2);
    X = sin(p theta) / cos(theta)^(1/p) * (cos(theta (1-p)) / -ln r2)^((1-p)/p).
    """
    r1 = clamp_open(np.asarray(r1, dtype=float))
    r2 = clamp_open(np.asarray(r2, dtype=float))
    theta = np.pi * (r1 - 0.5)
    s = np.sin(p * theta)
    with np.errstate(divide="ignore"):
        logmag = np.log(np.abs(s)) - np.log(np.cos(theta)) / p
        if p != 1:
            w = -np.log(r2)
            logmag = logmag + (1 - p) / p * (np.log(np.cos(theta * (1 - p))) - np.log(w))
    if np.isnan(logmag).any():
        raise NumericError("stable variate produced NaN")
    return np.sign(s), np.minimum(logmag, LOG_CAP)


def stable_variate(r1, r2, p):
    """stable(r1, r2, p); at p = 1 this is tan(pi (r1 - 1/2))."""
    sign, logmag = stable_log_variate(r1, r2, p)
    out = sign * np.exp(logmag)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _uniform_pairs(params, items, cols):
    items = np.asarray(items, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    r1 = keyed_uniform(params.master_seed, items, 2 * cols)
    r2 = keyed_uniform(params.master_seed, items, 2 * cols + 1)
    return r1, r2


def x_block(params: StableParams, items) -> np.ndarray:
    """Matrix rows X[i, :] for every i in ``items``; shape (len(items), r)."""
    items = np.asarray(items, dtype=np.int64).reshape(-1, 1)
    if items.size and (items.min() < 0 or items.max() >= params.m):
        raise InputError("item outside the universe")
    cols = np.arange(params.r, dtype=np.int64).reshape(1, -1)
    r1, r2 = _uniform_pairs(params, items, cols)
    return stable_variate(r1, r2, params.p)


def x_column(params: StableParams, j: int) -> np.ndarray:
    """Column X[:, j] over the whole universe."""
    if not 0 <= j < params.r:
        raise InputError(f"column {j} outside [0, {params.r})")
    r1, r2 = _uniform_pairs(params, np.arange(params.m, dtype=np.int64), j)
    return stable_variate(r1, r2, params.p)


def x_row(params: StableParams, item: int) -> np.ndarray:
    return x_block(params, [item])[0]


def x_entry(params: StableParams, i: int, j: int) -> float:
    if not 0 <= j < params.r:
        raise InputError(f"column {j} outside [0, {params.r})")
    return float(x_row(params, i)[j])


@dataclass(frozen=True)
class Calibration:
    """Offline constants for one projection matrix.

    ``sfp`` is the Monte Carlo median of |X_0|^p; ``row_norms[j]`` is the exact
    max_i |X[i, j]| over the whole universe.
    """
    params: StableParams
    sfp: float
    row_norms: tuple = field(repr=False)
    n_samples: int
    sfp_seed: int = 0

    def __post_init__(self):
        if not self.sfp > 0:
            raise ConfigError("sfp must be positive")
        if len(self.row_norms) != self.params.r:
            raise ConfigError("need one row norm per sketch column")

    @property
    def max_norm(self):
        return max(self.row_norms)

    def to_dict(self):
        return {
            "format": CALIBRATION_FORMAT,
            "version": CALIBRATION_VERSION,
            "p": self.params.p,
            "m": self.params.m,
            "r": self.params.r,
            "master_seed": self.params.master_seed,
            "n_samples": self.n_samples,
            "sfp_seed": self.sfp_seed,
            "sfp": self.sfp,
            "row_norms": list(self.row_norms),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != CALIBRATION_FORMAT:
            raise ConfigError("not a calibration record")
        if d.get("version") != CALIBRATION_VERSION:
            raise ConfigError(f"unsupported calibration version {d.get('version')}")
        params = StableParams(float(d["p"]), int(d["r"]), int(d["m"]), int(d["master_seed"]))
        return cls(params, float(d["sfp"]), tuple(float(x) for x in d["row_norms"]),
                   int(d["n_samples"]), int(d.get("sfp_seed", 0)))

    def save(self, path):
        # repr-based float encoding in json round-trips every double exactly
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path=None):
        path = path or os.environ.get(CALIBRATION_ENV)
        if not path:
            raise ConfigError(f"no calibration file given and ${CALIBRATION_ENV} unset")
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot read calibration {path}: {exc}") from None


def estimate_sfp(p, n_samples, seed=0, chunk=1_000_000):
    """Monte Carlo median of |X_0|^p from ``n_samples`` fresh variates."""
    if n_samples < 100_000:
        raise ConfigError("sfp needs at least 1e5 samples")
    key = derive_seed(seed, "sfp")
    out = np.empty(n_samples)
    for start in range(0, n_samples, chunk):
        idx = np.arange(start, min(start + chunk, n_samples), dtype=np.int64)
        r1 = keyed_uniform(key, idx, 0)
        r2 = keyed_uniform(key, idx, 1)
        _, logmag = stable_log_variate(r1, r2, p)
        out[start:start + len(idx)] = np.exp(p * logmag)
    return float(np.median(out))


def column_norms(params: StableParams, chunk_cells=4_000_000) -> np.ndarray:
    """max_i |X[i, j]| for every column by enumerating the universe."""
    best = np.full(params.r, -np.inf)
    step = max(1, chunk_cells // params.r)
    cols = np.arange(params.r, dtype=np.int64).reshape(1, -1)
    for start in range(0, params.m, step):
        items = np.arange(start, min(start + step, params.m), dtype=np.int64).reshape(-1, 1)
        r1, r2 = _uniform_pairs(params, items, cols)
        _, logmag = stable_log_variate(r1, r2, params.p)
        np.maximum(best, logmag.max(axis=0), out=best)
    return np.exp(best)


def calibrate(params: StableParams, n_samples: int = 1_000_000, seed: int = 0) -> Calibration:
    sfp = estimate_sfp(params.p, n_samples, seed)
    norms = column_norms(params)
    return Calibration(params, sfp, tuple(float(x) for x in norms), n_samples, seed)

