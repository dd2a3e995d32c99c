"""Command-line interface.

Subcommands: simulate, fit, cv, debias, infer, study.  Structured
results go to JSON (with an embedded run manifest), tabular data to CSV
(with a sibling ``<name>.manifest.json``).  Exit codes: 0 success,
1 usage error, 2 data/validation error, 3 numeric/convergence error.
Errors print to stderr as ``fgray: error [CODE]: message``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .censoring import build_risk_grid, km_censoring
from .data import load_csv, save_csv, standardize, validate
from .debias import nodewise_precision, one_step_estimate
from .errors import DataError, FGrayError, NumericError
from .inference import (
    basis_contrast,
    contrast_inference,
    corrected_standard_errors,
    influence_functions,
)
from .pseudolik import RiskSetKernel, score_contributions
from .simulate import BlockDesign, CensoringSpec, IndependentDesign, generate, resolve_censoring
from .solver import cross_validate, fit_fine_gray_lasso, lambda_path
from .study import StudyDesign, power_sweep, run_study

log = logging.getLogger("fgray")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


# ---- manifest --------------------------------------------------------------


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def make_manifest(command: str, config: dict, inputs: list, outputs: list,
                  seed, started: float) -> dict:
    checksums = {str(p): _sha256(p) for p in inputs}
    stable = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": checksums,
        "version": __version__,
    }
    run_id = hashlib.sha256(
        json.dumps(stable, sort_keys=True).encode()
    ).hexdigest()[:16]
    return {
        **stable,
        "outputs": [str(p) for p in outputs],
        "run_id": run_id,
        # the only time-varying fields in any artifact
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "wall_clock_seconds": round(time.monotonic() - started, 3),
    }


def _config_snapshot(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    return {k: v for k, v in sorted(cfg.items())}


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest_sibling(path, manifest: dict) -> None:
    write_json(str(path) + ".manifest.json", {"manifest": manifest})


# ---- shared option groups ---------------------------------------------------


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("-v", "--verbose", action="store_true")
    sp.add_argument("-q", "--quiet", action="store_true")
    sp.add_argument("--dry-run", action="store_true",
                    help="validate inputs, print the resolved config, skip computing")


def _add_data_opts(sp):
    sp.add_argument("--input", required=True, help="dataset CSV")
    sp.add_argument("--time-col", default="time")
    sp.add_argument("--status-col", default="status")
    sp.add_argument("--id-col", default=None)
    sp.add_argument("--horizon", type=float, default=None,
                    help="study end time; later observations are censored at it")
    sp.add_argument("--no-standardize", action="store_true",
                    help="fit on the raw covariate scale")


def _add_fit_opts(sp):
    sp.add_argument("--lambda", dest="lam", default="cv",
                    help="'cv' or a numeric penalty value")
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--n-lambdas", type=int, default=100)
    sp.add_argument("--lambda-min-ratio", type=float, default=0.01)
    sp.add_argument("--lambda-selection", choices=("min", "1se"), default="min")


def _add_nodewise_opts(sp):
    sp.add_argument("--lambda-j", default="cv",
                    help="'cv' (per-row cross-validation) or a shared numeric value")
    sp.add_argument("--lambda-j-shared", action="store_true",
                    help="tune one shared nodewise penalty instead of per-row")


# ---- pipeline helpers -------------------------------------------------------


def _load_dataset(args):
    data = load_csv(
        args.input,
        time_col=args.time_col,
        status_col=args.status_col,
        id_col=args.id_col,
        horizon=args.horizon,
    )
    report = validate(data)
    report.raise_if_invalid()
    if args.no_standardize:
        return data, None
    sdata, transform = standardize(data)
    return sdata, transform


def _select_lambda(args, data, grid, kernel):
    lambdas = lambda_path(
        data, grid, args.n_lambdas, args.lambda_min_ratio, kernel=kernel
    )
    if args.lam == "cv":
        cv = cross_validate(data, lambdas, folds=args.folds, seed=args.seed)
        lam = cv.lambda_min if args.lambda_selection == "min" else cv.lambda_1se
        log.info("cross-validated penalty: %.6g", lam)
        return lam, cv.lambda_grid, cv
    try:
        lam = float(args.lam)
    except ValueError:
        raise _UsageError(f"--lambda must be 'cv' or a number, got {args.lam!r}")
    if lam < 0:
        raise _UsageError("--lambda must be nonnegative")
    return lam, lambdas, None


def _fit_at(data, grid, kernel, lam, lambdas, verbose=False):
    warm = None
    fit = None
    for l in lambdas[lambdas >= lam]:
        fit = fit_fine_gray_lasso(data, grid, float(l), beta0=warm, kernel=kernel)
        warm = fit.beta
        if verbose:
            log.info("path lambda=%.6g: %d nonzero, kkt=%.2e",
                     l, int(np.count_nonzero(fit.beta)), fit.kkt_residual)
    if fit is None or fit.lam != lam:
        fit = fit_fine_gray_lasso(data, grid, lam, beta0=warm, kernel=kernel)
    return fit


def _nodewise_lambda_arg(args):
    if args.lambda_j == "cv":
        return "cv"
    try:
        return float(args.lambda_j)
    except ValueError:
        raise _UsageError(
            f"--lambda-j must be 'cv' or a number, got {args.lambda_j!r}"
        )


def _shared_nodewise_lambda(xi, seed, n_lambdas=25):
    """One common nodewise penalty: the median of a small per-row CV sample."""
    from .debias import cv_nodewise_lambdas

    p = xi.p
    take = min(p, 20)
    rows = np.linspace(0, p - 1, take).astype(np.int64)
    lams = cv_nodewise_lambdas(xi, rows, seed=seed, n_lambdas=n_lambdas)
    return float(np.median(lams))


# ---- subcommands ------------------------------------------------------------


def cmd_simulate(args):
    spec = CensoringSpec(
        kind=args.censoring,
        param=args.censoring_param,
        target_rate=args.censoring_rate,
    )
    kwargs = dict(n=args.n, p=args.p, mixture_p=args.mixture_p, censoring=spec)
    if args.beta1:
        kwargs["beta1"] = np.array([float(x) for x in args.beta1.split(",")])
    if args.beta2:
        kwargs["beta2"] = np.array([float(x) for x in args.beta2.split(",")])
    cls = IndependentDesign if args.setup in ("1", "independent") else BlockDesign
    design = resolve_censoring(cls(**kwargs))
    if args.dry_run:
        print(json.dumps({"resolved": _config_snapshot(args)}, indent=2, sort_keys=True))
        return EXIT_OK
    started = time.monotonic()
    data = generate(design, seed=args.seed)
    save_csv(data, args.out)
    manifest = make_manifest("simulate", _config_snapshot(args), [], [args.out],
                             args.seed, started)
    write_manifest_sibling(args.out, manifest)
    log.info("wrote %d subjects x %d covariates to %s", data.n, data.p, args.out)
    return EXIT_OK


def cmd_fit(args):
    started = time.monotonic()
    data, transform = _load_dataset(args)
    if args.dry_run:
        print(json.dumps({"resolved": _config_snapshot(args),
                          "n": data.n, "p": data.p}, indent=2, sort_keys=True))
        return EXIT_OK
    grid = build_risk_grid(data, km_censoring(data))
    kern = RiskSetKernel(data, grid)
    lam, lambdas, _ = _select_lambda(args, data, grid, kern)
    fit = _fit_at(data, grid, kern, lam, lambdas, verbose=args.verbose)
    if args.dump_weights:
        _dump_weights(grid, args.dump_weights)

    beta = fit.beta
    if transform is not None and args.original_scale:
        beta = transform.coefficients_to_original(beta)
    payload = {
        "lambda": fit.lam,
        "lambda_source": "cv" if args.lam == "cv" else "fixed",
        "beta": beta.tolist(),
        "nonzero": [int(j) + 1 for j in np.flatnonzero(fit.beta)],
        "objective": fit.objective,
        "iterations": fit.iterations,
        "converged": fit.converged,
        "kkt_residual": fit.kkt_residual,
        "n": data.n,
        "p": data.p,
        "scale": "original" if (transform and args.original_scale) else
                 ("standardized" if transform else "raw"),
    }
    manifest = make_manifest("fit", _config_snapshot(args), [args.input],
                             [args.out], args.seed, started)
    write_json(args.out, {"manifest": manifest, "fit": payload})
    if not fit.converged:
        log.warning("solver did not certify convergence (kkt=%.2e)",
                    fit.kkt_residual)
    log.info("wrote %s", args.out)
    return EXIT_OK


def _dump_weights(grid, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", *[repr(float(t)) for t in grid.event_times]])
        for i in range(grid.n):
            writer.writerow([i, *[repr(float(w)) for w in grid.weights[i]]])


def cmd_cv(args):
    started = time.monotonic()
    data, _ = _load_dataset(args)
    if args.dry_run:
        print(json.dumps({"resolved": _config_snapshot(args),
                          "n": data.n, "p": data.p}, indent=2, sort_keys=True))
        return EXIT_OK
    grid = build_risk_grid(data, km_censoring(data))
    kern = RiskSetKernel(data, grid)
    lambdas = lambda_path(data, grid, args.n_lambdas, args.lambda_min_ratio,
                          kernel=kern)
    cv = cross_validate(data, lambdas, folds=args.folds, seed=args.seed)
    payload = {
        "lambda_grid": cv.lambda_grid.tolist(),
        "mean_loss": cv.mean_loss.tolist(),
        "se_loss": cv.se_loss.tolist(),
        "lambda_min": cv.lambda_min,
        "lambda_1se": cv.lambda_1se,
        "null_deviance": cv.null_deviance,
        "folds": args.folds,
    }
    manifest = make_manifest("cv", _config_snapshot(args), [args.input],
                             [args.out] + ([args.out_csv] if args.out_csv else []),
                             args.seed, started)
    write_json(args.out, {"manifest": manifest, "cv": payload})
    if args.out_csv:
        with open(args.out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda", "mean_loss", "se_loss"])
            for lam, m, s in zip(cv.lambda_grid, cv.mean_loss, cv.se_loss):
                writer.writerow([repr(float(lam)), repr(float(m)), repr(float(s))])
        write_manifest_sibling(args.out_csv, manifest)
    log.info("lambda_min=%.6g lambda_1se=%.6g", cv.lambda_min, cv.lambda_1se)
    return EXIT_OK


def _debias_pipeline(args, rows=None, loaded=None):
    """Shared by debias/infer: fit, nodewise rows, one-step, influence."""
    data, transform = loaded if loaded is not None else _load_dataset(args)
    grid = build_risk_grid(data, km_censoring(data))
    kern = RiskSetKernel(data, grid)
    lam, lambdas, _ = _select_lambda(args, data, grid, kern)
    fit = _fit_at(data, grid, kern, lam, lambdas, verbose=args.verbose)
    xi = score_contributions(data, grid, fit.beta)
    lam_j = _nodewise_lambda_arg(args)
    if args.lambda_j_shared and lam_j == "cv":
        lam_j = _shared_nodewise_lambda(xi, seed=args.seed)
        log.info("shared nodewise penalty: %.6g", lam_j)
    precision = nodewise_precision(xi, lambdas=lam_j, rows=rows, seed=args.seed)
    score_vec = kern.score(kern.state(fit.beta))
    ones = one_step_estimate(fit.beta, precision, score_vec)
    infl = influence_functions(data, grid, fit.beta, kernel=kern)
    return data, transform, grid, kern, fit, precision, ones, infl


def cmd_debias(args):
    started = time.monotonic()
    if args.dry_run:
        data, _ = _load_dataset(args)
        print(json.dumps({"resolved": _config_snapshot(args),
                          "n": data.n, "p": data.p}, indent=2, sort_keys=True))
        return EXIT_OK
    data, transform, grid, kern, fit, precision, ones, infl = _debias_pipeline(args)
    se_corr, _ = corrected_standard_errors(data, grid, ones, precision, kernel=kern)
    b = ones.b
    if transform is not None and args.original_scale:
        b = transform.coefficients_to_original(b)
        se_corr = transform.se_to_original(se_corr)
    payload = {
        "beta_init": fit.beta.tolist(),
        "b": b.tolist(),
        "se_corrected": se_corr.tolist(),
        "lambda": fit.lam,
        "nodewise_lambdas": {
            "min": float(precision.lambdas.min()),
            "median": float(np.median(precision.lambdas)),
            "max": float(precision.lambdas.max()),
        },
        "theta_row_sparsity": {
            "mean_nonzero": float(np.mean((precision.rows != 0).sum(axis=1))),
            "max_nonzero": int(np.max((precision.rows != 0).sum(axis=1))),
        },
        "kkt_diagnostics": {
            "max_solver_residual": float(precision.kkt_residuals.max()),
            "max_diag_error": float(precision.diag_err.max()),
            "max_offdiag": float(precision.offdiag_max.max()),
            "max_offdiag_bound": float(precision.offdiag_bound.max()),
        },
        "scale": "original" if (transform and args.original_scale) else
                 ("standardized" if transform else "raw"),
    }
    manifest = make_manifest("debias", _config_snapshot(args), [args.input],
                             [args.out], args.seed, started)
    write_json(args.out, {"manifest": manifest, "debias": payload})
    log.info("wrote %s", args.out)
    return EXIT_OK


def _parse_contrasts(args, p):
    contrasts = []
    for spec in args.contrast or []:
        if not spec.startswith("e:"):
            raise _UsageError(f"--contrast must look like e:<j>, got {spec!r}")
        try:
            j = int(spec[2:])
        except ValueError:
            raise _UsageError(f"bad contrast index in {spec!r}")
        if not 1 <= j <= p:
            raise DataError(f"contrast index {j} outside 1..{p}")
        contrasts.append((f"e{j}", basis_contrast(j - 1, p)))
    if args.contrast_file:
        with open(args.contrast_file, newline="", encoding="utf-8") as fh:
            for rownum, rec in enumerate(csv.reader(fh), start=1):
                if not rec:
                    continue
                name = rec[0].strip()
                vals = rec[1:]
                if len(vals) != p:
                    raise DataError(
                        f"{args.contrast_file}: row {rownum} has {len(vals)} "
                        f"coefficients, expected {p}"
                    )
                try:
                    c = np.array([float(v) for v in vals])
                except ValueError:
                    raise DataError(
                        f"{args.contrast_file}: non-numeric value in row {rownum}"
                    ) from None
                contrasts.append((name, c))
    if not contrasts:
        raise _UsageError("no contrasts given; use --contrast or --contrast-file")
    return contrasts


def cmd_infer(args):
    started = time.monotonic()
    if args.dry_run:
        data, _ = _load_dataset(args)
        _parse_contrasts(args, data.p)
        print(json.dumps({"resolved": _config_snapshot(args),
                          "n": data.n, "p": data.p}, indent=2, sort_keys=True))
        return EXIT_OK
    loaded = _load_dataset(args)
    contrasts = _parse_contrasts(args, loaded[0].p)
    # only the precision rows touched by some contrast are needed
    rows = sorted({int(j) for _, c in contrasts for j in np.flatnonzero(c)})
    data, transform, grid, kern, fit, precision, ones, infl = _debias_pipeline(
        args, rows=np.array(rows, dtype=np.int64), loaded=loaded
    )
    se_corr_rows, infl_corr = corrected_standard_errors(
        data, grid, ones, precision, kernel=kern
    )

    out_rows = []
    for name, c in contrasts:
        if args.original_scale and transform is not None:
            c = c / transform.scales
        ci = contrast_inference(
            c, ones, precision, infl, alpha=args.alpha,
            null_value=args.null, influence_corrected=infl_corr,
        )
        out_rows.append([
            name, repr(ci.estimate), repr(ci.se), repr(ci.se_corrected),
            repr(ci.ci[0]), repr(ci.ci[1]), repr(ci.z), repr(ci.p_value),
        ])
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["contrast_id", "estimate", "se", "se_corrected",
                         "ci_lo", "ci_hi", "z", "p_value"])
        writer.writerows(out_rows)
    manifest_inputs = [args.input] + (
        [args.contrast_file] if args.contrast_file else []
    )
    manifest = make_manifest("infer", _config_snapshot(args), manifest_inputs,
                             [args.out], args.seed, started)
    write_manifest_sibling(args.out, manifest)
    log.info("wrote %s (%d contrasts)", args.out, len(out_rows))
    return EXIT_OK


def _design_from_json(path, seed_override=None) -> StudyDesign:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    setup = raw.pop("setup", None)
    design_name = raw.pop("design", None)
    if design_name is None:
        design_name = {1: "independent", 2: "block",
                       "1": "independent", "2": "block"}.get(setup, setup)
    if design_name not in ("independent", "block"):
        raise DataError(f"{path}: unknown design/setup {setup or design_name!r}")
    censoring = raw.pop("censoring", {"kind": "uniform", "target_rate": 0.3})
    if isinstance(censoring, str):
        censoring = {"kind": censoring}
    overrides = raw.pop("beta_overrides", {}) or {}
    tracked = raw.pop("tracked_coefficients", raw.pop("tracked", None))
    known = {
        "n", "p", "n_reps", "seed", "alpha", "mixture_p", "cv_folds",
        "n_lambdas", "lambda_min_ratio", "lambda_selection",
        "nodewise_lambda", "nodewise_n_lambdas", "standardize",
        "beta1", "beta2",
    }
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"{path}: unknown design fields {sorted(unknown)}")
    kwargs = dict(raw)
    for key in ("beta1", "beta2"):
        if key in overrides and overrides[key] is not None:
            kwargs[key] = tuple(overrides[key])
        elif key in kwargs and kwargs[key] is not None:
            kwargs[key] = tuple(kwargs[key])
    if tracked is not None:
        kwargs["tracked"] = tuple(int(j) for j in tracked)
    if seed_override is not None:
        kwargs["seed"] = seed_override
    try:
        return StudyDesign(
            design=design_name,
            censoring=CensoringSpec(**censoring),
            **kwargs,
        )
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad design file: {exc}") from None


def _parse_sweep(spec: str) -> list[float]:
    try:
        lo, hi, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise _UsageError(f"--power-sweep must be lo:hi:step, got {spec!r}")
    if step <= 0 or hi < lo:
        raise _UsageError("--power-sweep needs step > 0 and hi >= lo")
    k = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(k)]


def cmd_study(args):
    started = time.monotonic()
    design = _design_from_json(args.design, seed_override=args.seed_override)
    if args.dry_run:
        payload = asdict(design)
        payload["censoring"] = asdict(design.censoring)
        print(json.dumps({"resolved": payload}, indent=2, sort_keys=True))
        return EXIT_OK

    outputs = []
    if args.power_sweep:
        values = _parse_sweep(args.power_sweep)
        points = power_sweep(design, values, threads=args.threads)
        out_csv = f"{args.out_prefix}_power.csv"
        with open(out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["beta_value", "n", "rejection_rate", "mc_se", "n_reps"])
            for pt in points:
                writer.writerow([repr(pt.beta_value), pt.n,
                                 repr(pt.rejection_rate), repr(pt.mc_se),
                                 pt.n_reps])
        outputs.append(out_csv)
        manifest = make_manifest("study", _config_snapshot(args), [args.design],
                                 outputs, design.seed, started)
        write_manifest_sibling(out_csv, manifest)
        log.info("wrote %s", out_csv)
        return EXIT_OK

    result = run_study(design, threads=args.threads)
    out_json = f"{args.out_prefix}.json"
    out_csv = f"{args.out_prefix}.csv"
    manifest = make_manifest("study", _config_snapshot(args), [args.design],
                             [out_json, out_csv], design.seed, started)
    write_json(out_json, {"manifest": manifest, "result": result.result_payload()})
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coefficient", "true_value", "mean_estimate",
                         "sd_estimate", "mean_se", "mean_se_corrected",
                         "coverage", "rejection_rate"])
        for c in result.coefficients:
            writer.writerow([c.label, repr(c.true_value), repr(c.mean_estimate),
                             repr(c.sd_estimate), repr(c.mean_se),
                             repr(c.mean_se_corrected), repr(c.coverage),
                             repr(c.rejection_rate)])
    write_manifest_sibling(out_csv, manifest)
    if result.n_failed:
        log.warning("%d of %d replicates failed", result.n_failed, result.n_reps)
        for rep, msg in result.failures[:10]:
            log.warning("  replicate %d: %s", rep, msg)
    log.info("wrote %s and %s", out_json, out_csv)
    return EXIT_OK


# ---- parser -----------------------------------------------------------------


def build_parser() -> _Parser:
    top = _Parser(prog="fgray", description=__doc__)
    top.add_argument("--version", action="version",
                     version=f"fgray {__version__}")
    sub = top.add_subparsers(dest="command", required=True,
                             parser_class=_Parser)

    sp = sub.add_parser("simulate", help="draw a synthetic dataset CSV")
    _add_common(sp)
    sp.add_argument("--setup", choices=("1", "2", "independent", "block"),
                    default="independent")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--mixture-p", type=float, default=0.6)
    sp.add_argument("--censoring", choices=("none", "uniform", "exponential"),
                    default="uniform")
    sp.add_argument("--censoring-param", type=float, default=None)
    sp.add_argument("--censoring-rate", type=float, default=0.3)
    sp.add_argument("--beta1", default=None, help="comma-separated values")
    sp.add_argument("--beta2", default=None, help="comma-separated values")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="penalized fit at a fixed or CV-chosen penalty")
    _add_common(sp)
    _add_data_opts(sp)
    _add_fit_opts(sp)
    sp.add_argument("--original-scale", action="store_true",
                    help="report back-transformed coefficients")
    sp.add_argument("--dump-weights", default=None,
                    help="write the IPCW weight matrix to this CSV")
    sp.add_argument("--out", required=True, help="output JSON")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("cv", help="cross-validate the penalty")
    _add_common(sp)
    _add_data_opts(sp)
    sp.add_argument("--folds", type=int, default=10)
    sp.add_argument("--n-lambdas", type=int, default=100)
    sp.add_argument("--lambda-min-ratio", type=float, default=0.01)
    sp.add_argument("--out", required=True, help="output JSON")
    sp.add_argument("--out-csv", default=None, help="optional loss-curve CSV")
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("debias", help="one-step corrected estimate and diagnostics")
    _add_common(sp)
    _add_data_opts(sp)
    _add_fit_opts(sp)
    _add_nodewise_opts(sp)
    sp.add_argument("--original-scale", action="store_true")
    sp.add_argument("--out", required=True, help="output JSON")
    sp.set_defaults(func=cmd_debias)

    sp = sub.add_parser("infer", help="confidence intervals and Wald tests")
    _add_common(sp)
    _add_data_opts(sp)
    _add_fit_opts(sp)
    _add_nodewise_opts(sp)
    sp.add_argument("--contrast", action="append", default=None,
                    metavar="e:<j>", help="basis contrast, 1-based; repeatable")
    sp.add_argument("--contrast-file", default=None,
                    help="CSV without header: contrast_id, c1..cp per row")
    sp.add_argument("--alpha", type=float, default=0.05)
    sp.add_argument("--null", type=float, default=0.0,
                    help="null value for the Wald test")
    sp.add_argument("--original-scale", action="store_true")
    sp.add_argument("--out", required=True, help="output CSV")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("study", help="Monte Carlo coverage/power study")
    _add_common(sp)
    sp.add_argument("--design", required=True, help="JSON design file")
    sp.add_argument("--out-prefix", required=True)
    sp.add_argument("--power-sweep", default=None, metavar="lo:hi:step",
                    help="sweep the first cause-1 coefficient; emit a power curve")
    sp.add_argument("--seed-override", type=int, default=None,
                    help="replace the design-file seed")
    sp.set_defaults(func=cmd_study)

    return top


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        level = logging.INFO
        if getattr(args, "verbose", False):
            level = logging.DEBUG
        if getattr(args, "quiet", False):
            level = logging.WARNING
        logging.basicConfig(stream=sys.stderr, level=level,
                            format="fgray: %(levelname)s: %(message)s")
        return args.func(args)
    except _UsageError as exc:
        print(f"fgray: error [E_USAGE]: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"fgray: error [E_DATA]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"fgray: error [E_NUMERIC]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FGrayError as exc:
        print(f"fgray: error [E_DATA]: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
