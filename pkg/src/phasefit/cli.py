"""Command-line front end: ``phasefit {regime,entropy,fit,sweep,slope}``.

Exit codes: 0 success, 1 computation failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy
from scipy import linalg

from phasefit import __version__, entropy, krr, regime, sim

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SWEEP_COLUMNS = [
    "n", "sigma", "gamma_true", "degree_token", "degree_used", "lambda",
    "mise_mean", "mise_stderr", "smse_mean", "replications", "seed",
]


class UsageError(Exception):
    pass


def fmt(value):
    """17 significant digits for floats so CSV values round-trip exactly."""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return "" if value is None else str(value)


def load_schema(name):
    return json.loads(resources.files("phasefit").joinpath(name).read_text())


def validate(instance, schema_name):
    """Raise :class:`UsageError` naming the offending field path."""
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise UsageError(f"config error at {path}: {err.message}")


def _emit(obj, as_json, out):
    if as_json:
        json.dump(obj, out, indent=2, sort_keys=True)
        out.write("\n")
    else:
        for key, value in obj.items():
            shown = value if isinstance(value, (dict, float)) else fmt(value)
            out.write(f"{key}: {shown}\n")


# -- regime -----------------------------------------------------------------

def _radii_for(args, gamma):
    if args.radii:
        return entropy.make_radii(entropy.RadiusProfile.explicit(args.radii), gamma)
    return entropy.make_radii(entropy.RadiusProfile(args.profile, args.c_bar), gamma)


def cmd_regime(args, out):
    sigma_sq = args.sigma**2
    if args.analytic:
        rep = regime.classify_analytic(args.n, sigma_sq)
        payload = rep.to_dict()
    elif args.class_kind in ("ellipsoid", "holder_sub"):
        radii = _radii_for(args, args.gamma)
        rate = regime.nonstandard_rate(args.class_kind, args.n, sigma_sq, args.gamma, list(radii))
        payload = regime.RegimeReport(
            args.n, sigma_sq, args.gamma, None, regime.LARGE_N, args.gamma + 1, rate,
            f"{args.class_kind}: scale^(2/(2g+3)) (sigma^2/n)^((2g+2)/(2g+3))",
        ).to_dict()
    else:
        rep = regime.classify(args.n, sigma_sq, args.gamma, args.class_kind, args.profile)
        payload = rep.to_dict()
    if args.d is not None:
        small, log_thr = regime.multivariate_threshold(args.n, sigma_sq, args.gamma, args.d)
        payload["multivariate"] = {"d": args.d, "small_n": small, "log_threshold": log_thr}
    validate(payload, "regime_report.schema.json")
    _emit(payload, args.json, out)


# -- entropy ----------------------------------------------------------------

def _delta_grid(args):
    if args.deltas:
        return [float(d) for d in args.deltas]
    lo, hi, count = args.delta_grid
    if not (0 < lo < hi) or int(count) < 1:
        raise UsageError("--delta-grid needs 0 < lo < hi and count >= 1")
    return list(np.geomspace(lo, hi, int(count)))


def cmd_entropy(args, out):
    radii = _radii_for(args, args.gamma)
    kind = entropy.ClassKind(args.class_kind)
    decay = args.eigen_decay if kind is entropy.ClassKind.ELLIPSOID else None
    spec = entropy.SmoothnessClassSpec(args.gamma, tuple(radii), kind, eigen_decay=decay)
    rows = [entropy.class_entropy(spec, d).as_row() for d in _delta_grid(args)]
    if args.json:
        json.dump(rows, out, indent=2)
        out.write("\n")
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["delta", "lower_log", "upper_log", "branch"])
    for row in rows:
        writer.writerow([fmt(row[c]) for c in ("delta", "lower_log", "upper_log", "branch")])


# -- fit --------------------------------------------------------------------

def _read_xy(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2:
        raise UsageError(f"{path}: expected columns x,y")
    return data[:, 0], data[:, 1]


def cmd_fit(args, out):
    if args.data:
        xs, ys = _read_xy(args.data)
    else:
        truth = sim.test_function(args.truth, gamma=args.truth_gamma)
        xs, ys = sim.gen_data(truth, args.n, args.sigma, args.seed)
    if args.c_bar_fit is not None:
        model = krr.fit_constrained(args.order, xs, ys, args.c_bar_fit)
    else:
        lam = args.lam if args.lam is not None else krr.classical_lambda(len(xs), args.order)
        model = krr.fit(args.order, xs, ys, lam)
    payload = {
        "n": model.n,
        "order": model.order_k,
        "lambda": model.lam,
        "rkhs_norm_sq": model.rkhs_norm,
        "training_mse": float(np.mean((krr.fitted_values(model, ys) - ys) ** 2)),
        "method": model.metadata["method"],
        "jitter": model.metadata["jitter"],
    }
    if args.predict_out:
        grid = np.linspace(0.0, 1.0, args.grid)
        with open(args.predict_out, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "f_hat"])
            for x, v in zip(grid, krr.predict(model, grid)):
                writer.writerow([fmt(x), fmt(v)])
    _emit(payload, args.json, out)


# -- sweep ------------------------------------------------------------------

def load_config(path):
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None
    validate(raw, "experiment_config.schema.json")
    try:
        config = sim.ExperimentConfig(**raw)
    except ValueError as exc:
        raise UsageError(f"config error: {exc}") from None
    try:
        config.build_truth()
    except sim.CertificateError:
        raise
    except (TypeError, ValueError) as exc:
        raise UsageError(f"config error at truth/params: {exc}") from None
    return raw, config


def sweep_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([fmt(v) for v in (
            r.n, r.sigma, r.gamma_true, r.degree_token, r.degree_used, r.lam,
            r.mise_mean, r.mise_stderr, r.smse_mean, r.replications, r.seed,
        )])
    return buf.getvalue()


def config_hash(raw_config):
    canonical = json.dumps(raw_config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def run_metadata(raw_config, rows, certificate=None):
    return {
        "truth_certificate": certificate,
        "prng": sim.PRNG_ID,
        "seed_derivation": "seed XOR blake2b-64('n:degree:rep'), little-endian",
        "constants": {
            "entropy": dict(entropy.CONSTANTS),
            "jitter_scale": krr.JITTER_SCALE,
            "residual_rtol": krr.RESIDUAL_RTOL,
            "residual_rounding_factor": krr.ROUNDING_FACTOR,
            "lambda_min": krr.LAMBDA_MIN,
            "banded_min_n": krr.BANDED_MIN_N,
            "bump_grid": sim.BUMP_GRID,
            "max_failure_fraction": sim.MAX_FAILURE_FRACTION,
        },
        "versions": {
            "phasefit": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "config": raw_config,
        "config_sha256": config_hash(raw_config),
        "rows": [
            {"n": r.n, "degree_token": r.degree_token, "failures": r.failures,
             "stderr_defined": r.stderr_defined}
            for r in rows
        ],
    }


def cmd_sweep(args, out):
    raw, config = load_config(args.config)
    rows = sim.sweep(config, threads=args.threads)
    text = sweep_csv(rows)
    if args.out:
        out_path = Path(args.out)
        out_path.write_text(text)
        meta_path = Path(args.metadata) if args.metadata else out_path.with_suffix(".meta.json")
        meta_path.write_text(json.dumps(run_metadata(raw, rows, config.build_truth().certificate), indent=2, sort_keys=True) + "\n")
    else:
        out.write(text)


# -- slope ------------------------------------------------------------------

def cmd_slope(args, out):
    with open(args.csv) as fh:
        rows = list(csv.DictReader(fh))
    missing = {"n", "mise_mean"} - set(rows[0] if rows else {})
    if missing:
        raise UsageError(f"{args.csv}: missing columns {sorted(missing)}")
    if args.degree_token:
        rows = [r for r in rows if r["degree_token"] == args.degree_token]
    if args.degree_used is not None:
        rows = [r for r in rows if int(r["degree_used"]) == args.degree_used]
    if args.sigma is not None:
        rows = [r for r in rows if math.isclose(float(r["sigma"]), args.sigma)]
    ns = [float(r["n"]) for r in rows]
    mises = [float(r["mise_mean"]) for r in rows]
    if len(ns) < 3:
        raise UsageError(f"need at least 3 rows after filtering, got {len(ns)}")
    slope, intercept, r2 = sim.slope_fit(ns, mises)
    lo, hi = sim.slope_ci(ns, mises, args.level)
    _emit({"slope": slope, "ci_low": lo, "ci_high": hi, "level": args.level,
           "intercept": intercept, "r_squared": r2, "points": len(ns)}, args.json, out)


# -- parser -----------------------------------------------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _add_class_flags(p):
    p.add_argument("--class", dest="class_kind", default="holder_full",
                   choices=[k.value for k in entropy.ClassKind])
    p.add_argument("--profile", default="constant",
                   choices=["constant", "factorial_minus_one", "factorial"])
    p.add_argument("--c-bar", type=_positive_float, default=1.0)
    p.add_argument("--radii", type=_positive_float, nargs="+",
                   help="explicit R_0..R_{gamma+1}; overrides --profile")


def build_parser():
    parser = argparse.ArgumentParser(prog="phasefit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("regime", help="regime, gamma* and predicted MISE rate")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--sigma", type=_positive_float, required=True)
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--gamma", type=int)
    grp.add_argument("--analytic", action="store_true")
    _add_class_flags(p)
    p.add_argument("--d", type=_positive_int, help="dimension for the multivariate threshold")
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_regime)

    p = sub.add_parser("entropy", help="log covering/packing bounds over a delta grid")
    p.add_argument("--gamma", type=int, required=True)
    _add_class_flags(p)
    p.add_argument("--eigen-decay", type=_positive_float, default=1.0)
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--deltas", type=_positive_float, nargs="+")
    grp.add_argument("--delta-grid", type=float, nargs=3, metavar=("LO", "HI", "COUNT"))
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_entropy)

    p = sub.add_parser("fit", help="single KRR fit")
    p.add_argument("--order", type=int, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="CSV with header and columns x,y")
    src.add_argument("--truth", choices=["PolyStar", "Bump"])
    p.add_argument("--truth-gamma", type=int, default=0)
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    reg = p.add_mutually_exclusive_group()
    reg.add_argument("--lambda", dest="lam", type=float)
    reg.add_argument("--c-bar", dest="c_bar_fit", type=_positive_float,
                     help="fit over the RKHS ball of this radius instead of a fixed lambda")
    p.add_argument("--predict-out", help="write predictions on a uniform grid to this CSV")
    p.add_argument("--grid", type=_positive_int, default=101)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("sweep", help="Monte Carlo MISE sweep from a JSON config")
    p.add_argument("config")
    p.add_argument("--out", help="CSV path; metadata goes next to it (stdout if omitted)")
    p.add_argument("--metadata", help="metadata JSON path")
    p.add_argument("--threads", type=_positive_int,
                   help="worker threads (default: PHASEFIT_THREADS or 1)")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("slope", help="log-log slope of mise_mean against n")
    p.add_argument("csv")
    p.add_argument("--degree-token")
    p.add_argument("--degree-used", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--json", action="store_true")
    p.set_defaults(handler=cmd_slope)
    return parser


def main(argv=None, out=None):
    out = out if out is not None else sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.handler(args, out)
    except UsageError as exc:
        print(f"phasefit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (krr.FitError, sim.MonteCarloError, sim.CertificateError,
            linalg.LinAlgError, OverflowError, RuntimeError) as exc:
        print(f"phasefit {args.command}: computation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"phasefit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
