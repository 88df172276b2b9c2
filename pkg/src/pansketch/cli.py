"""Command-line front end.

Every random choice derives from ``--seed`` through named sub-seeds
(``matrix``, ``noise``, ``stream``, ``hash``, ``coins``), so each command's
output depends only on its flags and input files. Failures exit with status 1
and one stderr line ``error: <ErrorType>: <message>``; usage errors exit 2.
"""

import argparse
import csv
import math
import os
import sys

from . import attack, distinct
from .cropped_sum import CroppedSumState
from .dot_product import DotPairState
from .dpcheck import extremal_neighbor_pair, histogram_ratio_test
from .errors import ConfigError, InputError, PanSketchError, SnapshotError
from .experiments import ExperimentSpec, KINDS, run_experiment
from .heavy_hitters import HHConfig, HHEstimator
from .keyed import derive_seed
from .snapshot import IntrusionSnapshot
from .stable import CALIBRATION_ENV, Calibration, StableParams, calibrate
from .stream import CASH_REGISTER, MODES, StreamSpec, read_updates

ATTACK_COLUMNS = ["trial", "target", "noise_scale", "hamming_error", "queries_used"]


def _budget(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("budget must be positive (inf disables noise)")
    return v


def _add_seed(p):
    p.add_argument("--seed", type=int, default=0, help="master seed for all sub-seeds")


def _add_distinct(p):
    g = p.add_argument_group("distinct count")
    g.add_argument("--calibration", help=f"calibration file (default: ${CALIBRATION_ENV})")
    g.add_argument("--p", type=float, help="stability index, when calibrating on the fly")
    g.add_argument("--r", type=int, help="sketch width, when calibrating on the fly")
    g.add_argument("--sfp-samples", type=int, default=1_000_000)
    g.add_argument("--z", type=int, default=100, help="frequency bound Z")
    g.add_argument("--alpha-total", type=_budget, default=1.0, help="total privacy budget")
    g.add_argument("--eps", type=float, default=0.25, help="approximation parameter")
    g.add_argument("--delta", type=float, default=0.05)
    g.add_argument("--unsafe-no-noise", action="store_true",
                   help="disable the noise (NOT private; testing only)")


def _add_cropped(p, tau_default=8):
    g = p.add_argument_group("cropped sums")
    g.add_argument("--tau", type=int, default=tau_default)
    g.add_argument("--priv-eps", type=float, default=0.5)
    g.add_argument("--alpha", type=float, default=2.0, help="deviation level of the bound")


def _add_hh(p):
    g = p.add_argument_group("heavy hitters")
    g.add_argument("--k", type=float, default=10)
    g.add_argument("--c", type=float, default=2.0)
    g.add_argument("--beta", type=float, default=0.5)
    g.add_argument("--hh-delta", type=float, default=0.1)
    g.add_argument("--h", type=int, help="bucket count (default: smallest admissible)")
    g.add_argument("--f1", type=int, help="known stream mass")
    g.add_argument("--u0", type=int, help="upper bound on the stream mass")
    g.add_argument("--hash-key", type=int, help="hash key (default: derived from --seed)")


def _add_stream(p, prefix=""):
    g = p.add_argument_group(f"{prefix or 'stream'} generator")
    dash = f"{prefix}-" if prefix else ""
    g.add_argument(f"--{dash}generator", default="uniform",
                   choices=["uniform", "zipf", "binary-support"])
    g.add_argument(f"--{dash}length", type=int, default=1000)
    g.add_argument(f"--{dash}support", type=int, default=0)
    g.add_argument(f"--{dash}zipf-s", type=float, default=1.1)
    if not prefix:
        g.add_argument("--m", type=int, default=1000, help="universe size")
        g.add_argument("--mode", default=CASH_REGISTER, choices=MODES)
        g.add_argument("--delete-fraction", type=float, default=0.0)


def build_parser():
    ap = argparse.ArgumentParser(prog="pansketch", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="compute sfp and column norms for a matrix")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--out", required=True)
    _add_seed(p)

    p = sub.add_parser("ingest", help="run an update file through an estimator, save a snapshot")
    p.add_argument("input", help="update file, one '<item> <delta>' per line")
    p.add_argument("--out", required=True)
    p.add_argument("--estimator", default="distinct", choices=["distinct", "croppedsum", "hh"])
    p.add_argument("--m", type=int, help="universe size (cropped sums)")
    _add_seed(p)
    _add_distinct(p)
    _add_cropped(p)
    _add_hh(p)

    p = sub.add_parser("query", help="estimate from a saved snapshot")
    p.add_argument("snapshot")

    p = sub.add_parser("experiment", help="seeded Monte Carlo accuracy run, CSV out")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--timing", action="store_true", help="add an elapsed_s column")
    _add_seed(p)
    _add_stream(p)
    _add_stream(p, "right")
    _add_distinct(p)
    _add_cropped(p, tau_default=9)
    _add_hh(p)

    p = sub.add_parser("attack", help="single-intrusion reconstruction attack, CSV out")
    p.add_argument("decoder", choices=["union", "dotproduct"])
    p.add_argument("--target", default="exact", choices=attack.TARGETS)
    p.add_argument("--n", type=int, default=24)
    p.add_argument("--L", "--l", dest="L", type=int, default=3)
    p.add_argument("--queries", type=int, help="dot-product query count")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--noise-scales", "--alpha-total", default="inf",
                   help="comma separated total budgets; inf means noiseless")
    p.add_argument("--alpha1", type=float, default=0.25)
    p.add_argument("--alpha2", type=float, default=1.0)
    p.add_argument("--out", "--csv", dest="out", required=True)
    _add_seed(p)

    p = sub.add_parser("neighbor-test", help="histogram ratio check on one sketch coordinate")
    p.add_argument("--m", type=int, help="universe size, when calibrating on the fly")
    p.add_argument("--coord", type=int, default=0)
    p.add_argument("--runs", type=int, default=100_000)
    _add_seed(p)
    _add_distinct(p)

    for name in ("dot", "t2"):
        p = sub.add_parser(name, help=f"one-shot cropped {'dot product' if name == 'dot' else 'T_2'}")
        p.add_argument("left")
        if name == "dot":
            p.add_argument("right")
        p.add_argument("--m", type=int, required=True)
        _add_seed(p)
        _add_cropped(p, tau_default=9)
    return ap


def resolve_calibration(args, m):
    """Load from --calibration or the environment, else calibrate on the fly."""
    path = args.calibration or os.environ.get(CALIBRATION_ENV)
    if path:
        cal = Calibration.load(path)
        if args.p is not None and args.p != cal.params.p:
            raise ConfigError(f"--p {args.p} disagrees with calibration p {cal.params.p}")
        if args.r is not None and args.r != cal.params.r:
            raise ConfigError(f"--r {args.r} disagrees with calibration r {cal.params.r}")
        if m is not None and m > cal.params.m:
            raise ConfigError(f"universe {m} exceeds calibrated m {cal.params.m}")
        return cal
    if args.p is None or args.r is None or m is None:
        raise ConfigError("missing calibration: give --calibration, set "
                          f"${CALIBRATION_ENV}, or pass --p, --r and --m")
    params = StableParams(args.p, args.r, m, derive_seed(args.seed, "matrix"))
    return calibrate(params, args.sfp_samples, derive_seed(args.seed, "sfp"))


def _distinct_config(args, cal):
    noisy = not (args.unsafe_no_noise or math.isinf(args.alpha_total))
    mode = distinct.STANDARD if noisy else distinct.DISABLED
    total = args.alpha_total if noisy else float(cal.params.r)
    return distinct.DistinctConfig.from_total(cal, args.z, total, args.eps, noise_mode=mode,
                                              noise_seed=derive_seed(args.seed, "noise"))


def _hash_key(args):
    return args.hash_key if args.hash_key is not None else derive_seed(args.seed, "hash")


def cmd_calibrate(args):
    params = StableParams(args.p, args.r, args.m, derive_seed(args.seed, "matrix"))
    cal = calibrate(params, args.samples, derive_seed(args.seed, "sfp"))
    cal.save(args.out)
    print(f"calibration p={cal.params.p} r={cal.params.r} m={cal.params.m} "
          f"sfp={cal.sfp!r} max_norm={cal.max_norm!r} -> {args.out}")


def cmd_ingest(args):
    stream = read_updates(args.input)
    if args.estimator == "distinct":
        cal = resolve_calibration(args, args.m)
        est = distinct.NoisySketch(_distinct_config(args, cal)).update_many(stream)
    elif args.estimator == "croppedsum":
        if args.m is None:
            raise ConfigError("--m is required for cropped sums")
        est = CroppedSumState(args.m, args.tau, args.priv_eps, derive_seed(args.seed, "coins"))
        est.ingest(stream)
    else:
        cfg = HHConfig(k=args.k, c=args.c, beta=args.beta, delta=args.hh_delta,
                       priv_eps=args.priv_eps, h=args.h, hash_key=_hash_key(args),
                       f1=args.f1, u0=args.u0, seed=derive_seed(args.seed, "coins"))
        est = HHEstimator(cfg).ingest(stream)
    snap = est.snapshot()
    snap.save(args.out)
    print(f"snapshot kind={snap.kind} updates={len(stream)} sha256={snap.checksum} -> {args.out}")


_QUERY = {
    distinct.SNAPSHOT_KIND: (distinct.NoisySketch.restore, "distinct count"),
    "cropped-sum": (CroppedSumState.restore, "cropped sum T_1"),
    "heavy-hitters": (HHEstimator.restore, "heavy hitters"),
    "dot-pair": (lambda s: DotPairState.restore(s), "cropped dot product"),
    attack.EXACT_KIND: (attack.ExactDistinct.restore, "distinct count (exact)"),
}


def query_snapshot(path):
    snap = IntrusionSnapshot.load(path)
    if snap.kind not in _QUERY:
        raise SnapshotError(f"cannot query snapshots of kind {snap.kind}")
    restore, label = _QUERY[snap.kind]
    est = restore(snap)
    value = est.estimate_dot() if snap.kind == "dot-pair" else est.estimate()
    return snap.kind, label, value


def cmd_query(args):
    kind, label, value = query_snapshot(args.snapshot)
    print(f"kind={kind} estimate={value!r}")
    # the clamp is for reading only; the raw value above is unclamped
    print(f"{label}: {max(0.0, value):.6g}")


def _stream_spec(args, prefix=""):
    get = (lambda k: getattr(args, f"{prefix}_{k}")) if prefix else (lambda k: getattr(args, k))
    return StreamSpec(m=args.m, generator=get("generator"), length=get("length"),
                      mode=args.mode, zipf_s=get("zipf_s"), support=get("support"),
                      delete_fraction=args.delete_fraction)


def cmd_experiment(args):
    if args.trials < 0:
        raise InputError("--trials must be non-negative")
    cal = None
    if args.kind == "distinct":
        params = {"Z": args.z, "approx_eps": args.eps, "delta": args.delta,
                  "alpha_total": math.inf if args.unsafe_no_noise else args.alpha_total}
        cal = resolve_calibration(args, args.m)
    elif args.kind == "hh":
        params = {"k": args.k, "c": args.c, "beta": args.beta, "delta": args.hh_delta,
                  "priv_eps": args.priv_eps, "alpha": args.alpha, "h": args.h, "u0": args.u0}
    else:
        params = {"tau": args.tau, "priv_eps": args.priv_eps, "alpha": args.alpha}
    spec = ExperimentSpec(args.kind, _stream_spec(args), params, args.trials, args.seed,
                          _stream_spec(args, "right"), args.timing)
    try:
        open(args.out, "a").close()
    except OSError as exc:
        raise InputError(f"cannot write {args.out}: {exc.strerror}") from None
    rows, summary = run_experiment(spec, args.out, cal, args.workers)
    if rows:
        print(f"{args.kind}: {len(rows)} trials, mean abs err {summary['mean_abs_error']:.4g}, "
              f"p90 abs err {summary['p90_abs_error']:.4g}, "
              f"within bound {summary['fraction_within_bound']:.3f} -> {args.out}")
    else:
        print(f"{args.kind}: 0 trials -> {args.out}")


def parse_scales(text):
    try:
        scales = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"bad --noise-scales {text!r}") from None
    if not scales or any(not s > 0 for s in scales):
        raise InputError("noise scales must be positive")
    return scales


def run_attack(decoder, target, n, L, trials, scales, seed, queries=None,
               alpha1=0.25, alpha2=1.0):
    """Yield one CSV record per (trial, noise scale)."""
    for t in range(trials):
        tseed = derive_seed(seed, f"trial-{t}")
        sparse = L if decoder == "union" else None
        secret = attack.BinarySecret.random(n, derive_seed(tseed, "secret"), sparse)
        for scale in scales:
            snap = attack.build_target(target, secret, scale, tseed)
            oracle = attack.IntrusionOracle(snap)
            if decoder == "union":
                a1, a2 = (0.0, 0.0) if target == "exact" else (alpha1, alpha2)
                res = attack.union_decode(oracle, n, L, a1, a2, secret)
            else:
                res = attack.dot_decode(oracle, n, queries, secret, derive_seed(tseed, "queries"))
            yield {"trial": t, "target": target, "noise_scale": repr(scale),
                   "hamming_error": res.hamming_error, "queries_used": res.queries_used}


def cmd_attack(args):
    scales = parse_scales(args.noise_scales)
    if args.target == "exact" and scales != [math.inf]:
        scales = [math.inf]
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, ATTACK_COLUMNS, lineterminator="\r\n")
        w.writeheader()
        errs = []
        for rec in run_attack(args.decoder, args.target, args.n, args.L, args.trials, scales,
                              args.seed, args.queries, args.alpha1, args.alpha2):
            w.writerow(rec)
            errs.append(rec["hamming_error"])
    mean = sum(errs) / len(errs) if errs else float("nan")
    print(f"attack {args.decoder} vs {args.target}: {len(errs)} runs, "
          f"mean hamming error {mean:.3g} -> {args.out}")


def cmd_neighbor_test(args):
    cal = resolve_calibration(args, args.m)
    if args.unsafe_no_noise or math.isinf(args.alpha_total):
        raise ConfigError("neighbor-test needs noise; drop --unsafe-no-noise")
    cfg = _distinct_config(args, cal)
    if not 0 <= args.coord < cfg.r:
        raise InputError(f"--coord must lie in [0, {cfg.r})")
    stream, neighbor = extremal_neighbor_pair(cfg, args.coord)
    res = histogram_ratio_test(cfg, stream, neighbor, args.coord, args.runs, args.seed)
    print(f"neighbor-test coord={args.coord} runs={res.runs} alpha={res.alpha:.4g} "
          f"bins={res.bins_used} max_ratio={res.max_ratio:.4f} bound={math.exp(res.alpha):.4f} "
          f"violations={res.violations}")
    if not res.passed:
        raise PanSketchError("ratio bound violated beyond sampling slack")


def cmd_pair(args):
    pair = DotPairState(args.m, args.tau, args.priv_eps, derive_seed(args.seed, "coins"))
    left = read_updates(args.left)
    right = read_updates(args.right) if args.command == "dot" else left
    value = pair.ingest(left, right).estimate_dot()
    print(f"kind={args.command} estimate={value!r} bound={pair.error_bound(args.alpha)!r}")
    print(f"{'cropped dot product' if args.command == 'dot' else 'T_2'}: {max(0.0, value):.6g}")


COMMANDS = {
    "calibrate": cmd_calibrate,
    "ingest": cmd_ingest,
    "query": cmd_query,
    "experiment": cmd_experiment,
    "attack": cmd_attack,
    "neighbor-test": cmd_neighbor_test,
    "dot": cmd_pair,
    "t2": cmd_pair,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (PanSketchError, ValueError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
