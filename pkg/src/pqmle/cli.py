"""Command line entry point: ``pqmle {fit,path,select,mc,empirics}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from importlib import resources

import numpy as np

from . import empirics as emp
from .archmodel import ArchXDataset, ArchXModel, NumericError
from .montecarlo import ConfigError, ScenarioConfig, emit_table, run_scenario
from .optimizer import maximize_penalized
from .penalties import Family, PenaltySpec
from .selection import IcKind, PostCache, build_grid, find_lambda_max, fit_path, gss_select

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataFileError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _echo_config(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print("# resolved configuration: " + json.dumps(cfg, default=str, sort_keys=True),
          file=sys.stderr)


def read_series(path, x_col: str = "x", y_cols=None, p: int = 1, presample=None) -> ArchXDataset:
    if not os.path.exists(path):
        raise DataFileError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if x_col not in fields:
            if len(fields) == 1:
                x_col = fields[0]
            else:
                raise DataFileError(f"{path}: column {x_col!r} not found in {fields}")
        ys = [c for c in (y_cols or []) if c]
        if ys == ["all"]:
            ys = [c for c in fields if c != x_col]
        missing = [c for c in ys if c not in fields]
        if missing:
            raise DataFileError(f"{path}: covariate columns {missing} not found")
        xs, yrows = [], []
        for i, rec in enumerate(reader, start=2):
            try:
                xs.append(float(rec[x_col]))
                yrows.append([float(rec[c]) for c in ys])
            except (TypeError, ValueError):
                raise DataFileError(f"{path}: row {i} is not numeric") from None
    y = np.asarray(yrows, dtype=float).reshape(len(xs), len(ys))
    try:
        return ArchXDataset(np.asarray(xs), p=p, y=y, presample_value=presample)
    except ValueError as exc:
        raise DataFileError(f"{path}: {exc}") from None


def _dataset(args) -> ArchXDataset:
    return read_series(args.data, args.x_col, args.y_cols.split(",") if args.y_cols else None,
                       args.p, args.presample)


def _family(args) -> PenaltySpec:
    return PenaltySpec(Family.parse(args.penalty), 0.0, args.scad_a)


def _check_ic(kind: str, n: int):
    try:
        IcKind.parse(kind).g(n)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _dump(obj, args):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if getattr(args, "output", None):
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_fit(args) -> int:
    data = _dataset(args)
    model = ArchXModel(data)
    spec = _family(args).with_lambda(args.lam)
    fit = maximize_penalized(model, spec, restarts=args.restarts, seed=args.seed,
                             beta_upper=args.beta_upper)
    th = model.unpack(fit.theta)
    report = {"n": data.n, "p": data.p, "q": data.q, "penalty": spec.family.value,
              "lambda": spec.lam, "mu": th.mu, "omega": th.omega,
              "alpha": th.alpha.tolist(), "xi": th.xi.tolist(), **fit.to_dict(),
              "d": model.dim}
    if args.json:
        _dump(report, args)
    else:
        print(f"n={data.n} p={data.p} q={data.q} penalty={spec.family.value} lambda={spec.lam:.4g}")
        print(f"mu={th.mu:.4f} omega={th.omega:.4f}")
        print("alpha=" + " ".join(f"{v:.4f}" for v in th.alpha))
        if data.q:
            print("xi=" + " ".join(f"{v:.4f}" for v in th.xi))
        print(f"zero loadings (0-based): {list(fit.active_zero)}")
        print(f"loglik={fit.loglik:.4f} Q_n={fit.objective:.4f} d_hat={fit.d_hat}/{model.dim}")
        print(f"converged={fit.converged} iterations={fit.iterations} restarts={fit.restarts_used}")
    return EXIT_OK if fit.converged else EXIT_NUMERIC


def _write_trace(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def cmd_path(args) -> int:
    args.method = "grid"
    return cmd_select(args)


def cmd_select(args) -> int:
    data = _dataset(args)
    _check_ic(args.ic, data.n)
    model = ArchXModel(data)
    fam = _family(args)
    kw = {"restarts": args.restarts, "seed": args.seed}
    lam_max = find_lambda_max(model, fam, **kw)
    cache = PostCache(model)
    if args.method == "grid":
        path = fit_path(model, fam, build_grid(lam_max, args.m), args.ic, not args.no_post,
                        post_cache=cache, **kw)
        rows = [(lam, f.d_hat, ic, (path.icm[i] if path.icm is not None else float("nan")))
                for i, (lam, f, ic) in enumerate(zip(path.grid, path.fits, path.ic))]
        chosen, post, lam = path.chosen_fit, path.chosen_post_fit, path.chosen_lambda
        evals = len(path.grid)
    else:
        g = gss_select(model, fam, lam_max, args.ic, post_cache=cache, **kw)
        rows = [(lam_i, d_hat, float("nan"), icm) for lam_i, d_hat, icm in g.trace]
        chosen, post, lam, evals = g.penalized_fit, g.fit, g.lam, g.evaluations
    if args.trace:
        _write_trace(args.trace, ["lambda", "d_hat", "ic", "icm"], rows)
    report = {"method": args.method, "ic": IcKind.parse(args.ic).value, "penalty": fam.family.value,
              "lambda_max": lam_max, "lambda": lam, "d_hat": chosen.d_hat,
              "zero_set": list(chosen.active_zero), "evaluations": evals,
              "post_fit": post.to_dict() if post is not None else None,
              "penalized_fit": chosen.to_dict()}
    if args.json:
        _dump(report, args)
    else:
        print(f"method={args.method} ic={report['ic']} penalty={report['penalty']}")
        print(f"lambda_max={lam_max:.4g} chosen lambda={lam:.4g} d_hat={chosen.d_hat}")
        print(f"zero loadings (0-based): {list(chosen.active_zero)}")
        print(f"penalized optimizations: {evals}")
    return EXIT_OK


def _config_path(name: str) -> str:
    if os.path.exists(name):
        return name
    bundled = resources.files("pqmle") / "configs" / name
    if bundled.is_file():
        return str(bundled)
    raise DataFileError(f"config file not found: {name}")


def cmd_mc(args) -> int:
    path = _config_path(args.config)
    try:
        cfg = ScenarioConfig.from_file(path)
        overrides = {"seed": args.seed}
        if args.estimators:
            overrides["estimators"] = args.estimators.split(",")
        if args.replications:
            overrides["replications"] = args.replications
        cfg = dataclasses.replace(cfg, **overrides)
    except ConfigError as exc:
        print(f"config error in field {exc.field}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print("# scenario: " + json.dumps(cfg.resolved(), sort_keys=True), file=sys.stderr)
    report = run_scenario(cfg, workers=args.workers)
    os.makedirs(args.out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(path))[0]
    for fmt, ext in (("csv", "csv"), ("markdown", "md")):
        with open(os.path.join(args.out_dir, f"{stem}.{ext}"), "w") as fh:
            fh.write(emit_table(report, fmt))
    print(emit_table(report, "markdown"), end="")
    if report.flagged:
        print("warning: more than 10% of fits failed for at least one estimator", file=sys.stderr)
    return EXIT_OK


def cmd_empirics(args) -> int:
    if not os.path.exists(args.data):
        raise DataFileError(f"data file not found: {args.data}")
    series = emp.load_prices_csv(args.data, args.date_col, args.price_col, args.date_format,
                                 scale=1.0 if args.no_scale else 100.0)
    result = emp.run_empirics(series, p=args.p, family=args.penalty, kind=args.ic,
                              method=args.method, max_lag=args.max_lag,
                              presample_value=args.presample, restarts=args.restarts,
                              seed=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    emp.emit_figure_data(series, result.theta, result.garch, args.max_lag, args.out_dir,
                         data=result.data, acf_kw={"sim_n": args.sim_n, "seed": args.seed})
    doc = emp.write_summary(result, os.path.join(args.out_dir, "summary.json"))
    if args.json:
        print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        print(f"n={result.data.n} p={args.p} lambda={result.lam:.4g}")
        print(f"non-zero lags ({len(result.selected_lags)}): {result.selected_lags}")
        print("criteria: " + ", ".join(f"{k}={v:.2f}" for k, v in result.criteria.items()))
        g = result.garch
        print(f"GARCH(1,1): omega={g.omega_g:.4f} arch={g.arch_coef:.4f} garch={g.garch_coef:.4f}")
    return EXIT_OK


def _data_opts(p):
    p.add_argument("--data", required=True, help="CSV with a header row")
    p.add_argument("--x-col", default="x")
    p.add_argument("--y-cols", default=None, help="comma-separated covariate columns, or 'all'")
    p.add_argument("--p", type=int, default=1, help="ARCH lag order")
    p.add_argument("--presample", type=float, default=None,
                   help="value for unavailable presample squared deviations (default: sample variance)")


def _fit_opts(p):
    p.add_argument("--penalty", default="scad", choices=["lasso", "hard", "scad"])
    p.add_argument("--scad-a", type=float, default=3.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--output", default=None, help="also write the JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pqmle", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="penalised fit at one lambda")
    _data_opts(p)
    _fit_opts(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--beta-upper", type=float, default=10.0)
    p.set_defaults(func=cmd_fit)

    for name, fn in (("path", cmd_path), ("select", cmd_select)):
        p = sub.add_parser(name, help="fit a lambda path" if name == "path" else "choose lambda")
        _data_opts(p)
        _fit_opts(p)
        p.add_argument("--ic", default="bic", choices=["aic", "hqic", "bic"])
        p.add_argument("--m", type=int, default=100, help="grid size")
        p.add_argument("--no-post", action="store_true", help="grid: use IC instead of ICm")
        p.add_argument("--trace", default=None, help="write the criterion trace CSV here")
        if name == "select":
            p.add_argument("--method", default="gss", choices=["grid", "gss"])
        p.set_defaults(func=fn)

    p = sub.add_parser("mc", help="Monte Carlo scenario")
    p.add_argument("--config", required=True, help="scenario file or bundled name (table1_mini.cfg)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--estimators", default=None)
    p.add_argument("--replications", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", default="mc_out")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("empirics", help="returns pipeline and figure data")
    p.add_argument("--data", required=True)
    p.add_argument("--date-col", default="date")
    p.add_argument("--price-col", default="price")
    p.add_argument("--date-format", default=None)
    p.add_argument("--no-scale", action="store_true", help="do not multiply log-returns by 100")
    p.add_argument("--p", type=int, default=130)
    p.add_argument("--penalty", default="scad", choices=["lasso", "hard", "scad"])
    p.add_argument("--ic", default="bic", choices=["aic", "hqic", "bic"])
    p.add_argument("--method", default="gss", choices=["grid", "gss"])
    p.add_argument("--max-lag", type=int, default=200)
    p.add_argument("--presample", type=float, default=None)
    p.add_argument("--sim-n", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--out-dir", default="empirics_out")
    p.set_defaults(func=cmd_empirics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    _echo_config(args)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFileError, emp.DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
