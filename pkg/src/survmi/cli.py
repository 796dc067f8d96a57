"""Command-line front end.

Subcommands:
  simulate  run one simulation cell or the whole catalog, emit table rows
  analyze   fit MI-pooled Cox or Poisson models on a user CSV
  impute    write m completed copies of a CSV with missing indicators

Every command is a pure function of (config, input files, seed), so
repeated invocations produce byte-identical outputs.  Exit codes:
0 success, 1 usage/config error, 2 numerical failure.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import datamodel, sim
from .datamodel import CsvSchema, load_csv, write_csv
from .errors import DataError, NumericalError, SurvmiError
from .cox import cox_fit
from .mi import (CoxAnalysis, ImputationModelSpec, PoissonAnalysis,
                 fit_imputation_model, impute_from_fit, mi_analyze,
                 pooled_incidence)
from .glm import PriorSpec
from scipy import stats

SEED_ENV = "SURVMI_SEED"

_MECHANISMS = {
    "mar": (sim.MarLogistic(), None),
    "mcar": (sim.McarQ1(), None),
    "mnar-30-50": (sim.Mnar(0.3, 0.5), None),
    "mnar-20-60": (sim.Mnar(0.2, 0.6), None),
    "q0-correct": (sim.WithQ0Missing(), "correct"),
    "q0-extra": (sim.WithQ0Missing(), "extra"),
    "q0-omit": (sim.WithQ0Missing(), "omit"),
}


class _Parser(argparse.ArgumentParser):
    # usage errors are exit code 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _build_parser():
    parser = _Parser(prog="survmi")
    sub = parser.add_subparsers(dest="command", required=True)

    sim_p = sub.add_parser("simulate", help="run simulation cells")
    sim_p.add_argument("--config", help="JSON config with a serialized scenario")
    sim_p.add_argument("--catalog", action="store_true",
                       help="run every catalog cell")
    sim_p.add_argument("--desk-scale", action="store_true",
                       help="reduced replication (200 reps, 300 bootstraps)")
    sim_p.add_argument("--beta", type=float)
    sim_p.add_argument("--mechanism", choices=sorted(_MECHANISMS))
    sim_p.add_argument("--impute-spec", choices=sim.IMPUTE_SPECS)
    sim_p.add_argument("--analysis", choices=("cox", "poisson"))
    sim_p.add_argument("--n", type=int)
    sim_p.add_argument("--reps", type=int)
    sim_p.add_argument("--m", type=int)
    sim_p.add_argument("--bootstrap-B", type=int, dest="bootstrap_B")
    sim_p.add_argument("--level", type=float)
    sim_p.add_argument("--methods", help="comma-separated method names")
    sim_p.add_argument("--seed", type=int)
    sim_p.add_argument("--jobs", type=int, default=1)
    sim_p.add_argument("--timings", action="store_true",
                       help="append a (non-deterministic) runtime column")
    sim_p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    sim_p.add_argument("-o", "--output")

    an_p = sub.add_parser("analyze", help="MI-pooled fit on a CSV dataset")
    an_p.add_argument("data", help="input CSV")
    an_p.add_argument("--config", help="JSON config; flags override")
    _schema_flags(an_p)
    an_p.add_argument("--analysis", choices=("cox", "poisson"), default="cox")
    an_p.add_argument("--m", type=int, default=10)
    an_p.add_argument("--level", type=float, default=0.95)
    an_p.add_argument("--no-impute", action="store_true",
                      help="treat missing indicators as censored instead")
    an_p.add_argument("--no-time-term", action="store_true",
                      help="exclude follow-up time from the imputation model")
    an_p.add_argument("--rate-at", action="append", default=[],
                      help="comma-separated baseline covariate point for "
                           "incidence (poisson only); repeatable")
    an_p.add_argument("--seed", type=int)
    an_p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    an_p.add_argument("-o", "--output")

    im_p = sub.add_parser("impute", help="write m completed datasets")
    im_p.add_argument("data", help="input CSV")
    im_p.add_argument("--config", help="JSON config; flags override")
    _schema_flags(im_p)
    im_p.add_argument("--m", type=int, default=10)
    im_p.add_argument("--no-time-term", action="store_true")
    im_p.add_argument("--seed", type=int)
    im_p.add_argument("-o", "--output", required=True,
                      help="output prefix; files are <prefix>_<j>.csv")
    return parser


def _schema_flags(p):
    p.add_argument("--time-col", default="time")
    p.add_argument("--status-col", default="status")
    p.add_argument("--screen-col", default="screen")
    p.add_argument("--baseline-cols", default="",
                   help="comma-separated baseline covariate columns")
    p.add_argument("--screen-cols", default="",
                   help="comma-separated screen-time covariate columns")


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}")


def _resolve_seed(args, config):
    if args.seed is not None:
        return args.seed
    if "seed" in config:
        return int(config["seed"])
    env = os.environ.get(SEED_ENV)
    if env is not None:
        return int(env)
    return None


def _schema_from_args(args, config):
    def pick(flag, key, default):
        v = getattr(args, flag)
        return v if v != default or key not in config else config[key]

    baseline = pick("baseline_cols", "baseline_cols", "")
    screen = pick("screen_cols", "screen_cols", "")
    return CsvSchema(
        time=pick("time_col", "time_col", "time"),
        status=pick("status_col", "status_col", "status"),
        screen=pick("screen_col", "screen_col", "screen"),
        baseline=tuple(c for c in baseline.split(",") if c),
        screen_covariates=tuple(c for c in screen.split(",") if c),
    )


def _emit(rows, header, fmt, output):
    if fmt == "csv":
        lines = [",".join(header)]
        lines += [",".join(str(c) for c in row) for row in rows]
    else:
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join("---" for _ in header) + "|"]
        lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    text = "\n".join(lines) + "\n"
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fmt(x, digits=6):
    if x is None:
        return ""
    return format(float(x), f".{digits}g")


# ---------------------------------------------------------------------------
# simulate

def _scenario_from_args(args, config):
    seed = _resolve_seed(args, config)
    if seed is None:
        raise DataError(
            f"simulate requires a seed (--seed, config, or ${SEED_ENV})")
    if config.get("scenario"):
        scenario = sim.SimScenario.from_dict(config["scenario"])
        scenario = sim.replace(scenario, seed=seed)
    else:
        if args.beta is None:
            raise DataError("either --catalog, a config scenario, or --beta is required")
        mech_name = args.mechanism or "mar"
        mechanism, forced_spec = _MECHANISMS[mech_name]
        impute_spec = args.impute_spec or forced_spec or "correct"
        analysis = args.analysis or "cox"
        methods = (sim.ALL_METHODS if analysis == "cox" else sim.POISSON_METHODS)
        if args.methods:
            methods = tuple(args.methods.split(","))
        scenario = sim.SimScenario(
            beta_true=args.beta, mechanism=mechanism,
            imputation_spec=impute_spec, analysis=analysis,
            methods=methods, seed=seed,
            name=f"{mech_name}_beta{args.beta:g}")
    overrides = {}
    if args.n is not None:
        overrides["n"] = args.n
    if args.reps is not None:
        overrides["n_reps"] = args.reps
    if args.m is not None:
        overrides["m"] = args.m
    if args.bootstrap_B is not None:
        overrides["bootstrap_B"] = args.bootstrap_B
    if args.level is not None:
        overrides["level"] = args.level
    if args.desk_scale:
        overrides.setdefault("n_reps", 200)
        overrides.setdefault("bootstrap_B", 300)
    if overrides:
        scenario = sim.replace(scenario, **overrides)
    return scenario


def _summary_rows(summary, timings):
    rows = []
    s = summary.scenario
    for method in s.methods:
        ms = summary.methods[method]
        row = [s.name or "-", _fmt(s.beta_true), method,
               _fmt(ms.bias), _fmt(ms.se_bias), _fmt(ms.mean_width),
               _fmt(ms.se_width), _fmt(ms.coverage), _fmt(ms.mc_error)]
        if s.analysis == "poisson":
            for q in sim.Y1_QUARTILES:
                mean, se = (ms.incidence or {}).get(q, (None, None))
                row += [_fmt(mean), _fmt(se)]
        else:
            row += ["", "", "", "", "", ""]
        if timings:
            row.append(_fmt(ms.mean_runtime))
        rows.append(row)
    return rows


def cmd_simulate(args):
    config = _load_config(args.config)
    header = ["scenario", "beta", "method", "bias", "se_bias", "width",
              "se_width", "coverage", "mc_error",
              "inc_q1", "inc_q1_se", "inc_q2", "inc_q2_se",
              "inc_q3", "inc_q3_se"]
    if args.timings:
        header.append("runtime")
    rows = []
    if args.catalog:
        seed = _resolve_seed(args, config)
        if seed is None:
            raise DataError(
                f"simulate requires a seed (--seed, config, or ${SEED_ENV})")
        catalog = sim.scenario_catalog(desk_scale=args.desk_scale, seed=seed)
        overrides = {}
        if args.n is not None:
            overrides["n"] = args.n
        if args.reps is not None:
            overrides["n_reps"] = args.reps
        if args.m is not None:
            overrides["m"] = args.m
        if args.bootstrap_B is not None:
            overrides["bootstrap_B"] = args.bootstrap_B
        if args.methods:
            requested = tuple(args.methods.split(","))
        for name in sorted(catalog):
            scenario = catalog[name]
            if overrides:
                scenario = sim.replace(scenario, **overrides)
            if args.methods:
                methods = tuple(m for m in requested if m in scenario.methods)
                scenario = sim.replace(scenario, methods=methods or scenario.methods)
            summary = sim.run_scenario(scenario, jobs=args.jobs)
            rows += _summary_rows(summary, args.timings)
    else:
        scenario = _scenario_from_args(args, config)
        summary = sim.run_scenario(scenario, jobs=args.jobs)
        rows += _summary_rows(summary, args.timings)
    _emit(rows, header, args.format, args.output)
    return 0


# ---------------------------------------------------------------------------
# analyze

def _imputation_spec(args):
    return ImputationModelSpec(include_time=not args.no_time_term,
                               prior=PriorSpec.cauchy())


def cmd_analyze(args):
    config = _load_config(args.config)
    schema = _schema_from_args(args, config)
    if not schema.baseline:
        raise DataError("--baseline-cols (or config baseline_cols) is required")
    dataset = load_csv(args.data, schema)
    seed = _resolve_seed(args, config)
    rng = np.random.default_rng(0 if seed is None else seed)
    level = args.level
    spec = _imputation_spec(args)
    names = list(schema.baseline)
    effect_scale = "hr" if args.analysis == "cox" else "rate_ratio"

    if args.no_impute or dataset.n_missing == 0:
        filled = dataset.status.copy()
        filled[dataset.missing_mask] = datamodel.CENSORED
        completed = dataset.with_status(filled)
        if args.analysis == "cox":
            fit = cox_fit(completed)
            coef, cov = fit.beta, fit.covariance
            offset = 0
        else:
            coef, cov = PoissonAnalysis().fit(completed)
            offset = 1
        z = stats.norm.ppf((1 + level) / 2)
        rows = []
        for j, name in enumerate(names):
            b = coef[j + offset]
            se = float(np.sqrt(cov[j + offset, j + offset]))
            p = 2 * stats.norm.sf(abs(b) / se) if se > 0 else 0.0
            rows.append([name, _fmt(np.exp(b)), _fmt(np.exp(b - z * se)),
                         _fmt(np.exp(b + z * se)), _fmt(p)])
        pooled = None
        alpha_cov = (coef, cov)
    else:
        analysis = CoxAnalysis() if args.analysis == "cox" else PoissonAnalysis()
        result = mi_analyze(dataset, spec, args.m, analysis, level, rng)
        pooled = result.pooled
        offset = 0 if args.analysis == "cox" else 1
        rows = []
        for j, name in enumerate(names):
            b = pooled.beta_bar[j + offset]
            lo, hi = result.intervals[j + offset]
            rows.append([name, _fmt(np.exp(b)), _fmt(np.exp(lo)),
                         _fmt(np.exp(hi)), _fmt(result.p_values[j + offset])])
        alpha_cov = None

    header = ["covariate", effect_scale, "lcl", "ucl", "p"]
    if args.analysis == "poisson" and args.rate_at:
        for point in args.rate_at:
            try:
                values = [float(v) for v in point.split(",")]
            except ValueError:
                raise DataError(f"bad --rate-at point {point!r}")
            if len(values) != len(names):
                raise DataError(
                    f"--rate-at needs {len(names)} values, got {len(values)}")
            x = np.array([1.0, *values])
            if pooled is not None:
                rate, (lo, hi) = pooled_incidence(pooled, x, level)
            else:
                coef, cov = alpha_cov
                lp = float(x @ coef)
                se = float(np.sqrt(x @ cov @ x))
                z = stats.norm.ppf((1 + level) / 2)
                rate = np.exp(lp)
                lo, hi = np.exp(lp - z * se), np.exp(lp + z * se)
            label = "rate@" + ",".join(_fmt(v) for v in values)
            rows.append([label, _fmt(rate), _fmt(lo), _fmt(hi), ""])
    _emit(rows, header, args.format, args.output)
    return 0


# ---------------------------------------------------------------------------
# impute

def cmd_impute(args):
    config = _load_config(args.config)
    schema = _schema_from_args(args, config)
    dataset = load_csv(args.data, schema)
    seed = _resolve_seed(args, config)
    rng = np.random.default_rng(0 if seed is None else seed)
    spec = _imputation_spec(args)
    if dataset.n_missing == 0:
        sys.stderr.write("warning: no missing statuses; copies are identical\n")
        fit = None
    else:
        fit = fit_imputation_model(dataset, spec)
    width = max(3, len(str(args.m)))
    for j, child in enumerate(rng.spawn(args.m), start=1):
        completed = (dataset if fit is None
                     else impute_from_fit(dataset, fit, spec, child))
        write_csv(completed, f"{args.output}_{j:0{width}d}.csv", schema)
    return 0


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "impute":
            return cmd_impute(args)
        raise DataError(f"unknown command {args.command!r}")
    except DataError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2
    except SurvmiError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
