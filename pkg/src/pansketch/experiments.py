"""Seeded Monte Carlo accuracy experiments with CSV output."""

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass, field, replace
import io
import math
import time
from typing import Optional

import numpy as np

from .cropped_sum import CroppedSumState
from .distinct import DISABLED, STANDARD, DistinctConfig, NoisySketch, theoretical_additive_error
from .dot_product import DotPairState
from .errors import ConfigError
from .heavy_hitters import HHConfig, HHEstimator, additive_envelope
from .keyed import derive_seed
from .stable import Calibration
from .stream import StateVector, StreamSpec, generate, oracle_stats

KINDS = ("distinct", "croppedsum", "hh", "dot", "t2")

TRIAL_COLUMNS = ["trial", "truth", "estimate", "abs_error", "rel_error", "lower", "upper",
                 "within_bound"]
SUMMARY_COLUMNS = ["mean_abs_error", "p90_abs_error", "fraction_within_bound"]
COLUMNS = TRIAL_COLUMNS + SUMMARY_COLUMNS


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: estimator kind and parameters, stream recipe, trials.

    ``params`` by kind:
      distinct: Z, alpha_total (inf disables noise), approx_eps, delta
      croppedsum: tau, priv_eps, alpha
      hh: k, c, beta, delta, priv_eps, alpha, optional h / u0
      dot, t2: tau, priv_eps, alpha (dot also reads ``right_stream``)
    Every trial regenerates its stream from a sub-seed of ``seed``.
    """
    kind: str
    stream: StreamSpec
    params: dict = field(default_factory=dict)
    trials: int = 10
    seed: int = 0
    right_stream: Optional[StreamSpec] = None
    timing: bool = False


@dataclass
class TrialRow:
    trial: int
    truth: float
    estimate: float
    lower: float
    upper: float
    elapsed: float = 0.0

    @property
    def abs_error(self):
        return abs(self.estimate - self.truth)

    @property
    def rel_error(self):
        return self.abs_error / abs(self.truth) if self.truth else math.inf

    @property
    def within_bound(self):
        return self.lower <= self.estimate <= self.upper


def _stream_for(spec: ExperimentSpec, trial, which="stream"):
    base = spec.stream if which == "stream" else spec.right_stream
    return generate(replace(base, seed=derive_seed(spec.seed, f"{which}-{trial}")))


def _distinct_trial(spec, trial, calibration):
    p = spec.params
    alpha_total = float(p.get("alpha_total", 1.0))
    noisy = not math.isinf(alpha_total)
    cfg = DistinctConfig.from_total(
        calibration, int(p["Z"]), alpha_total if noisy else calibration.params.r,
        float(p["approx_eps"]), noise_mode=STANDARD if noisy else DISABLED,
        noise_seed=derive_seed(spec.seed, f"noise-{trial}"))
    stream = _stream_for(spec, trial)
    truth = oracle_stats(StateVector.from_stream(spec.stream.m, stream), "distinct")
    est = NoisySketch(cfg).update_many(stream).estimate()
    add = theoretical_additive_error(cfg, float(p.get("delta", 0.05)))
    eps = cfg.approx_eps
    return truth, est, (1 - eps) * truth - add, (1 + eps) * truth + add


def _croppedsum_trial(spec, trial, _):
    p = spec.params
    stream = _stream_for(spec, trial)
    state = StateVector.from_stream(spec.stream.m, stream, spec.stream.mode)
    truth = oracle_stats(state, "T", k=1, tau=int(p["tau"]))
    cs = CroppedSumState(spec.stream.m, int(p["tau"]), float(p["priv_eps"]),
                         derive_seed(spec.seed, f"coins-{trial}"))
    est = cs.ingest(stream).estimate()
    b = cs.error_bound(float(p.get("alpha", 2.0)))
    return truth, est, truth - b, truth + b


def _hh_trial(spec, trial, _):
    p = spec.params
    stream = _stream_for(spec, trial)
    state = StateVector.from_stream(spec.stream.m, stream, spec.stream.mode)
    f1 = int(state.a.sum())
    k, c, delta = p["k"], p.get("c", 2.0), p.get("delta", 0.1)
    known = p.get("u0") is None
    cfg = HHConfig(k=k, c=c, beta=p.get("beta", 0.5), delta=delta,
                   priv_eps=p.get("priv_eps", 0.5), h=p.get("h"),
                   hash_key=derive_seed(spec.seed, f"hash-{trial}"),
                   f1=f1 if known else None, u0=None if known else int(p["u0"]),
                   seed=derive_seed(spec.seed, f"coins-{trial}"))
    est = HHEstimator(cfg).ingest(stream).estimate()
    truth = oracle_stats(state, "HH", k=k)
    env = additive_envelope(c, float(p.get("alpha", 2.0)), cfg.h, cfg.priv_eps)
    upper = oracle_stats(state, "HH", k=2 * c * c * k * k / delta)
    return truth, est, (1 - cfg.beta) * truth - env, upper + env


def _dot_trial(spec, trial, _, self_paired=False):
    p = spec.params
    tau = int(p["tau"])
    left = _stream_for(spec, trial)
    right = left if self_paired else _stream_for(spec, trial, "right_stream")
    m = spec.stream.m
    a = StateVector.from_stream(m, left, spec.stream.mode)
    b = StateVector.from_stream(m, right, spec.stream.mode)
    truth = oracle_stats(a, "dot", other=b, tau=tau)
    pair = DotPairState(m, tau, float(p["priv_eps"]), derive_seed(spec.seed, f"coins-{trial}"))
    est = pair.ingest(left, right).estimate_dot()
    bound = pair.error_bound(float(p.get("alpha", 2.0)))
    return truth, est, truth - bound, truth + bound


_RUNNERS = {
    "distinct": _distinct_trial,
    "croppedsum": _croppedsum_trial,
    "hh": _hh_trial,
    "dot": _dot_trial,
    "t2": lambda spec, trial, cal: _dot_trial(spec, trial, cal, self_paired=True),
}


def run_trials(spec: ExperimentSpec, calibration: Optional[Calibration] = None, workers=1):
    if spec.kind not in _RUNNERS:
        raise ConfigError(f"unknown experiment kind {spec.kind!r}")
    if spec.kind == "distinct" and calibration is None:
        raise ConfigError("distinct-count experiments need a calibration")
    if spec.kind == "dot" and spec.right_stream is None:
        raise ConfigError("dot experiments need a right_stream spec")

    def one(trial):
        t0 = time.perf_counter()
        truth, est, lo, hi = _RUNNERS[spec.kind](spec, trial, calibration)
        return TrialRow(trial, float(truth), float(est), float(lo), float(hi),
                        time.perf_counter() - t0)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, range(spec.trials)))
    return [one(t) for t in range(spec.trials)]


def summarize(rows):
    if not rows:
        return {"mean_abs_error": "", "p90_abs_error": "", "fraction_within_bound": ""}
    errs = np.array([r.abs_error for r in rows])
    return {
        "mean_abs_error": float(errs.mean()),
        "p90_abs_error": float(np.quantile(errs, 0.9)),
        "fraction_within_bound": float(np.mean([r.within_bound for r in rows])),
    }


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, fh, timing=False):
    cols = COLUMNS + (["elapsed_s"] if timing else [])
    w = csv.writer(fh, lineterminator="\r\n")
    w.writerow(cols)
    for r in rows:
        rec = [r.trial, r.truth, r.estimate, r.abs_error, r.rel_error, r.lower, r.upper,
               r.within_bound, "", "", ""]
        if timing:
            rec.append(r.elapsed)
        w.writerow([_fmt(v) for v in rec])
    s = summarize(rows)
    rec = ["summary"] + [""] * (len(TRIAL_COLUMNS) - 1) + [_fmt(s[c]) for c in SUMMARY_COLUMNS]
    if timing:
        rec.append("")
    w.writerow(rec)


def run_experiment(spec: ExperimentSpec, out_path=None, calibration=None, workers=1):
    """Run every trial and write the CSV (trial rows then one summary row).

    Returns ``(rows, summary)``. Elapsed times are only written with
    ``spec.timing`` so that default output is byte-for-byte reproducible.
    """
    rows = run_trials(spec, calibration, workers)
    if out_path is not None:
        buf = io.StringIO()
        write_csv(rows, buf, spec.timing)
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    return rows, summarize(rows)


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
