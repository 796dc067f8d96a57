"""Monte-Carlo harness: synthetic cohorts, missingness mechanisms,
the six compared estimation methods, and per-scenario summaries.

Cohorts follow a proportional-hazards design: exponential failure times
with hazard exp(beta * y1) against a unit baseline hazard, exponential
censoring, a screener variable driven by the true failure indicator, and
a working indicator forced to censored when the screener is negative.
Replicates use counter-based substreams keyed by (seed, replicate,
purpose) so the results are independent of execution order and of the
parallelism degree.
"""

import time as _time
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from . import datamodel, rng as rngmod
from .ck import ck_bootstrap_ci
from .cox import cox_fit
from .errors import AllReplicatesFailed, NumericalError
from .glm import PriorSpec
from .mi import (CoxAnalysis, ImputationModelSpec, PoissonAnalysis, mi_analyze,
                 pooled_incidence)

FULL_DATA = "full_data"
COMPLETE_CASE = "complete_case"
ALL_CENSORED = "all_censored"
ALL_FAILURES = "all_failures"
COOK_KOSOROK = "cook_kosorok"
MULTIPLE_IMPUTATION = "multiple_imputation"

ALL_METHODS = (FULL_DATA, COMPLETE_CASE, ALL_CENSORED, ALL_FAILURES,
               COOK_KOSOROK, MULTIPLE_IMPUTATION)
POISSON_METHODS = tuple(m for m in ALL_METHODS if m != COOK_KOSOROK)

METHOD_LABELS = {
    FULL_DATA: "Full Data",
    COMPLETE_CASE: "Complete Case",
    ALL_CENSORED: "Treat all as Censored",
    ALL_FAILURES: "Treat all as Failures",
    COOK_KOSOROK: "Cook & Kosorok",
    MULTIPLE_IMPUTATION: "Multiple Imputation",
}

IMPUTE_SPECS = ("correct", "extra", "omit")

# quartiles of the baseline covariate distribution N(2, 1), used for
# incidence reporting
Y1_QUARTILES = tuple(float(2.0 + stats.norm.ppf(q)) for q in (0.25, 0.5, 0.75))


# ---------------------------------------------------------------------------
# missingness mechanisms

@dataclass(frozen=True)
class MarLogistic:
    """Indicator missing with probability expit(a + b*y1 + c*time),
    positively-screened subjects only."""

    intercept: float = -0.2
    coef_baseline: float = -0.3
    coef_time: float = 0.1
    kind: str = "mar"


@dataclass(frozen=True)
class McarQ1:
    """A fixed fraction of positively-screened indicators missing."""

    rate: float = 0.4
    kind: str = "mcar"


@dataclass(frozen=True)
class Mnar:
    """Missingness depends on the (possibly unobserved) indicator:
    separate rates for censored subjects and failures among the
    positively screened."""

    p_censored: float = 0.3
    p_failure: float = 0.5
    kind: str = "mnar"


@dataclass(frozen=True)
class WithQ0Missing:
    """Logistic missingness on positive screens plus a fixed fraction of
    negative-screen indicators missing."""

    q0_rate: float = 0.4
    base: MarLogistic = field(default_factory=MarLogistic)
    kind: str = "q0"


def mechanism_to_dict(mech):
    d = {"kind": mech.kind}
    if isinstance(mech, MarLogistic):
        d.update(intercept=mech.intercept, coef_baseline=mech.coef_baseline,
                 coef_time=mech.coef_time)
    elif isinstance(mech, McarQ1):
        d.update(rate=mech.rate)
    elif isinstance(mech, Mnar):
        d.update(p_censored=mech.p_censored, p_failure=mech.p_failure)
    elif isinstance(mech, WithQ0Missing):
        d.update(q0_rate=mech.q0_rate, base=mechanism_to_dict(mech.base))
    else:
        raise ValueError(f"unknown mechanism {mech!r}")
    return d


def mechanism_from_dict(d):
    kind = d["kind"]
    if kind == "mar":
        return MarLogistic(intercept=d["intercept"],
                           coef_baseline=d["coef_baseline"],
                           coef_time=d["coef_time"])
    if kind == "mcar":
        return McarQ1(rate=d["rate"])
    if kind == "mnar":
        return Mnar(p_censored=d["p_censored"], p_failure=d["p_failure"])
    if kind == "q0":
        return WithQ0Missing(q0_rate=d["q0_rate"],
                             base=mechanism_from_dict(d["base"]))
    raise ValueError(f"unknown mechanism kind {kind!r}")


# ---------------------------------------------------------------------------
# scenarios

@dataclass(frozen=True)
class SimScenario:
    beta_true: float
    mechanism: object = field(default_factory=MarLogistic)
    n: int = 1000
    n_reps: int = 1000
    censor_mean: float = 5.0
    imputation_spec: str = "correct"
    analysis: str = "cox"  # "cox" or "poisson"
    m: int = 10
    bootstrap_B: int = 1000
    level: float = 0.95
    methods: tuple = ALL_METHODS
    # the published table widths match plain normal quantiles on the
    # pooled variance, not the t reference
    mi_interval: str = "normal"  # "normal" or "t"
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if self.n < 2 or self.n_reps < 1:
            raise ValueError("n must be >= 2 and n_reps >= 1")
        if self.censor_mean <= 0:
            raise ValueError("censor_mean must be positive")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.imputation_spec not in IMPUTE_SPECS:
            raise ValueError(f"unknown imputation spec {self.imputation_spec!r}")
        if self.analysis not in ("cox", "poisson"):
            raise ValueError(f"unknown analysis {self.analysis!r}")
        if self.mi_interval not in ("normal", "t"):
            raise ValueError(f"unknown mi_interval {self.mi_interval!r}")
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ValueError(f"unknown method {m!r}")

    def to_dict(self):
        return {
            "beta_true": self.beta_true,
            "mechanism": mechanism_to_dict(self.mechanism),
            "n": self.n,
            "n_reps": self.n_reps,
            "censor_mean": self.censor_mean,
            "imputation_spec": self.imputation_spec,
            "analysis": self.analysis,
            "m": self.m,
            "bootstrap_B": self.bootstrap_B,
            "level": self.level,
            "methods": list(self.methods),
            "mi_interval": self.mi_interval,
            "seed": self.seed,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["mechanism"] = mechanism_from_dict(d["mechanism"])
        d["methods"] = tuple(d["methods"])
        return cls(**d)


def imputation_model_spec(name, prior=None):
    """Logistic-model covariate choice by scenario label: the correct
    model uses the screener response, time, and the baseline covariate;
    "extra" adds the extraneous covariate; "omit" drops the screener
    response."""
    if prior is None:
        prior = PriorSpec.cauchy()
    screen_terms = {"correct": (0,), "extra": (0, 1), "omit": ()}[name]
    return ImputationModelSpec(screen_terms=screen_terms, baseline_terms=(0,),
                               include_time=True, prior=prior)


# ---------------------------------------------------------------------------
# data generation

@dataclass(frozen=True)
class GeneratedCohort:
    failure_time: np.ndarray  # latent
    censor_time: np.ndarray  # latent
    time: np.ndarray  # observed min
    delta_true: np.ndarray  # latent failure indicator
    y1: np.ndarray
    y2: np.ndarray
    y3: np.ndarray
    screen: np.ndarray  # positive final screener
    delta_work: np.ndarray  # working indicator, 0 on a negative screen
    xi: np.ndarray = None  # observation indicator for delta_work


def generate_cohort(scenario, rng):
    """One synthetic cohort (missingness not yet applied)."""
    n = scenario.n
    y1 = rng.normal(2.0, 1.0, n)
    # inverse-CDF exponential draw with hazard exp(beta * y1)
    failure = -np.log(rng.random(n)) / np.exp(scenario.beta_true * y1)
    censor = -scenario.censor_mean * np.log(rng.random(n))
    delta_true = (failure <= censor).astype(int)
    y2 = rng.normal(delta_true.astype(float), 0.3)
    y3 = rng.normal(0.0, 1.0, n)
    screen = y2 > 0.5
    delta_work = np.where(screen, delta_true, 0)
    return GeneratedCohort(
        failure_time=failure, censor_time=censor,
        time=np.minimum(failure, censor), delta_true=delta_true,
        y1=y1, y2=y2, y3=y3, screen=screen, delta_work=delta_work)


def apply_missingness(cohort, mechanism, rng):
    """Return the cohort with the observation indicator xi set."""
    n = len(cohort.time)
    u = rng.random(n)
    if isinstance(mechanism, MarLogistic):
        eta = (mechanism.intercept + mechanism.coef_baseline * cohort.y1
               + mechanism.coef_time * cohort.time)
        miss = cohort.screen & (u < 1 / (1 + np.exp(-eta)))
    elif isinstance(mechanism, McarQ1):
        miss = cohort.screen & (u < mechanism.rate)
    elif isinstance(mechanism, Mnar):
        p = np.where(cohort.delta_true == 1, mechanism.p_failure,
                     mechanism.p_censored)
        miss = cohort.screen & (u < p)
    elif isinstance(mechanism, WithQ0Missing):
        eta = (mechanism.base.intercept
               + mechanism.base.coef_baseline * cohort.y1
               + mechanism.base.coef_time * cohort.time)
        miss = np.where(cohort.screen, u < 1 / (1 + np.exp(-eta)),
                        rng.random(n) < mechanism.q0_rate)
    else:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    return replace(cohort, xi=(~miss).astype(int))


def _cohort_dataset(cohort, status):
    return datamodel.Dataset.from_arrays(
        time=cohort.time, status=status, screen=cohort.screen,
        baseline=cohort.y1, screencov=np.column_stack([cohort.y2, cohort.y3]),
        baseline_names=("y1",), screen_names=("y2", "y3"))


def working_dataset(cohort):
    """Dataset as an analyst would see it: the working indicator, with
    missing statuses where the clinical exam did not happen."""
    status = np.where(cohort.xi == 1, cohort.delta_work, datamodel.MISSING)
    return _cohort_dataset(cohort, status)


# ---------------------------------------------------------------------------
# methods

@dataclass(frozen=True)
class MethodResult:
    estimate: float
    lo: float
    hi: float
    runtime: float
    incidence: dict = None  # quartile -> rate, Poisson analyses only


def _coef_index(analysis):
    # Cox models the baseline covariate directly; the Poisson design has
    # an intercept in front
    return 0 if analysis == "cox" else 1


def _plain_fit(dataset, scenario):
    """Unpooled fit with a Wald normal interval."""
    idx = _coef_index(scenario.analysis)
    if scenario.analysis == "cox":
        fit = cox_fit(dataset)
        coef, cov = fit.beta, fit.covariance
    else:
        coef, cov = PoissonAnalysis().fit(dataset)
    z = stats.norm.ppf((1 + scenario.level) / 2)
    se = np.sqrt(cov[idx, idx])
    incidence = None
    if scenario.analysis == "poisson":
        incidence = {q: float(np.exp(coef[0] + coef[1] * q))
                     for q in Y1_QUARTILES}
    return float(coef[idx]), float(coef[idx] - z * se), float(coef[idx] + z * se), incidence


def run_method(method, cohort, scenario, rng):
    """Apply one estimation method to a cohort with missingness applied.

    The returned runtime covers only the estimation call, not data
    generation.
    """
    if method not in scenario.methods:
        raise ValueError(f"method {method!r} not enabled in this scenario")
    spec = imputation_model_spec(scenario.imputation_spec)
    idx = _coef_index(scenario.analysis)

    if method == FULL_DATA:
        ds = _cohort_dataset(cohort, cohort.delta_true)
        t0 = _time.perf_counter()
        est, lo, hi, inc = _plain_fit(ds, scenario)
        return MethodResult(est, lo, hi, _time.perf_counter() - t0, inc)
    if method == COMPLETE_CASE:
        keep = np.flatnonzero(cohort.xi == 1)
        ds = _cohort_dataset(cohort, cohort.delta_work).take(keep)
        t0 = _time.perf_counter()
        est, lo, hi, inc = _plain_fit(ds, scenario)
        return MethodResult(est, lo, hi, _time.perf_counter() - t0, inc)
    if method in (ALL_CENSORED, ALL_FAILURES):
        fill = 0 if method == ALL_CENSORED else 1
        status = np.where(cohort.xi == 1, cohort.delta_work, fill)
        ds = _cohort_dataset(cohort, status)
        t0 = _time.perf_counter()
        est, lo, hi, inc = _plain_fit(ds, scenario)
        return MethodResult(est, lo, hi, _time.perf_counter() - t0, inc)
    if method == COOK_KOSOROK:
        if scenario.analysis != "cox":
            raise ValueError("the weighted-Cox comparator has no Poisson form")
        ds = working_dataset(cohort)
        t0 = _time.perf_counter()
        point, intervals, _ = ck_bootstrap_ci(ds, spec, scenario.bootstrap_B,
                                              scenario.level, rng)
        return MethodResult(float(point[idx]), float(intervals[idx, 0]),
                            float(intervals[idx, 1]),
                            _time.perf_counter() - t0)
    if method == MULTIPLE_IMPUTATION:
        ds = working_dataset(cohort)
        analysis = CoxAnalysis() if scenario.analysis == "cox" else PoissonAnalysis()
        t0 = _time.perf_counter()
        result = mi_analyze(ds, spec, scenario.m, analysis, scenario.level, rng)
        if scenario.mi_interval == "normal":
            z = stats.norm.ppf((1 + scenario.level) / 2)
            se = np.sqrt(np.diag(result.pooled.total_var))
            intervals = np.column_stack([result.pooled.beta_bar - z * se,
                                         result.pooled.beta_bar + z * se])
        else:
            intervals = result.intervals
        incidence = None
        if scenario.analysis == "poisson":
            incidence = {}
            for q in Y1_QUARTILES:
                rate, _ = pooled_incidence(result.pooled, np.array([1.0, q]),
                                           scenario.level)
                incidence[q] = rate
        return MethodResult(float(result.pooled.beta_bar[idx]),
                            float(intervals[idx, 0]),
                            float(intervals[idx, 1]),
                            _time.perf_counter() - t0, incidence)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# scenario execution

_METHOD_IDS = {m: i for i, m in enumerate(ALL_METHODS)}


def run_replicate(scenario, rep):
    """One replicate: generate, apply missingness, run every enabled
    method with its own substream.  Pure function of (scenario, rep)."""
    cohort = generate_cohort(
        scenario, rngmod.substream(scenario.seed, rep, rngmod.GENERATE))
    cohort = apply_missingness(
        cohort, scenario.mechanism,
        rngmod.substream(scenario.seed, rep, rngmod.MISSINGNESS))
    out = {}
    for method in scenario.methods:
        rng = rngmod.substream(scenario.seed, rep,
                               rngmod.METHOD_BASE + _METHOD_IDS[method])
        try:
            out[method] = run_method(method, cohort, scenario, rng)
        except NumericalError as exc:
            out[method] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass(frozen=True)
class MethodSummary:
    bias: float
    se_bias: float  # None when fewer than 2 successful replicates
    mean_width: float
    se_width: float
    coverage: float
    mc_error: float
    mean_runtime: float
    n_used: int
    n_failed: int
    incidence: dict = None  # quartile -> (mean rate, se)


@dataclass(frozen=True)
class ScenarioSummary:
    scenario: SimScenario
    methods: dict  # method name -> MethodSummary


def summarize(scenario, replicate_results):
    methods = {}
    for method in scenario.methods:
        results = [r[method] for r in replicate_results]
        ok = [r for r in results if isinstance(r, MethodResult)]
        n_failed = len(results) - len(ok)
        if not ok:
            raise AllReplicatesFailed(
                f"every replicate failed for method {method!r}")
        est = np.array([r.estimate for r in ok])
        widths = np.array([r.hi - r.lo for r in ok])
        cover = np.array([r.lo <= scenario.beta_true <= r.hi for r in ok])
        r_n = len(ok)
        se = (lambda a: float(np.std(a, ddof=1) / np.sqrt(r_n))) if r_n > 1 else None
        incidence = None
        if ok[0].incidence is not None:
            incidence = {}
            for q in Y1_QUARTILES:
                rates = np.array([r.incidence[q] for r in ok])
                incidence[q] = (float(rates.mean()),
                                se(rates) if se else None)
        methods[method] = MethodSummary(
            bias=float(est.mean() - scenario.beta_true),
            se_bias=se(est) if se else None,
            mean_width=float(widths.mean()),
            se_width=se(widths) if se else None,
            coverage=float(cover.mean()),
            mc_error=float(np.sqrt(scenario.level * (1 - scenario.level)
                                   / scenario.n_reps)),
            mean_runtime=float(np.mean([r.runtime for r in ok])),
            n_used=r_n,
            n_failed=n_failed,
            incidence=incidence,
        )
    return ScenarioSummary(scenario=scenario, methods=methods)


def run_scenario(scenario, jobs=1):
    """Execute every replicate (optionally in parallel) and summarize.

    Replicates are keyed by index through the substream scheme, so the
    summary statistics are identical for any `jobs`.
    """
    if jobs == 1:
        results = [run_replicate(scenario, rep) for rep in range(scenario.n_reps)]
    else:
        results = Parallel(n_jobs=jobs)(
            delayed(run_replicate)(scenario, rep)
            for rep in range(scenario.n_reps))
    return summarize(scenario, results)


# ---------------------------------------------------------------------------
# catalog

_FAMILIES = (
    ("mar", MarLogistic(), "correct", "cox"),
    ("mcar", McarQ1(), "correct", "cox"),
    ("extra", MarLogistic(), "extra", "cox"),
    ("omit", MarLogistic(), "omit", "cox"),
    ("q0-correct", WithQ0Missing(), "correct", "cox"),
    ("q0-extra", WithQ0Missing(), "extra", "cox"),
    ("q0-omit", WithQ0Missing(), "omit", "cox"),
    ("mnar-30-50", Mnar(0.3, 0.5), "correct", "cox"),
    ("mnar-20-60", Mnar(0.2, 0.6), "correct", "cox"),
    ("poisson", MarLogistic(), "correct", "poisson"),
)

CATALOG_BETAS = (-0.5, -1.5, -3.0)


def scenario_catalog(desk_scale=False, seed=0):
    """Every simulation cell: 3 coefficient values x 10 scenario
    families.  Desk scale swaps in reduced replication (200 replicates,
    300 bootstrap resamples) and changes nothing else."""
    n_reps = 200 if desk_scale else 1000
    bootstrap_B = 300 if desk_scale else 1000
    catalog = {}
    for family, mechanism, impute, analysis in _FAMILIES:
        for beta in CATALOG_BETAS:
            name = f"{family}_beta{beta:g}"
            catalog[name] = SimScenario(
                beta_true=beta, mechanism=mechanism, n=1000, n_reps=n_reps,
                imputation_spec=impute, analysis=analysis, m=10,
                bootstrap_B=bootstrap_B, level=0.95,
                methods=ALL_METHODS if analysis == "cox" else POISSON_METHODS,
                seed=seed, name=name)
    return catalog
