"""Multiple imputation of missing failure indicators and Rubin pooling.

The imputation model is a Cauchy-prior logistic regression for case
status, fit once per dataset on the positively-screened subjects with
observed indicators.  Each imputation draws coefficients from the
approximate posterior, converts them to per-subject event probabilities,
and fills the missing indicators with Bernoulli draws.  Completed
datasets are analyzed with either a Cox or a Poisson model and the m
fits are pooled into a single estimate with t-based intervals.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import datamodel
from .cox import cox_fit
from .errors import DegenerateTrainingSet, DimensionMismatch, MTooSmall
from .glm import PriorSpec, logistic_fit, poisson_fit, posterior_draw, predict_prob

DF_RULE_PAPER = "paper"
DF_RULE_SQUARED = "squared"


@dataclass(frozen=True)
class ImputationModelSpec:
    """Covariate choice for the case-probability logistic model.

    `screen_terms` / `baseline_terms` index into the dataset's screen
    and baseline covariate blocks (None means all); an intercept is
    always included.
    """

    screen_terms: tuple = None
    baseline_terms: tuple = None
    include_time: bool = True
    prior: PriorSpec = field(default_factory=PriorSpec.cauchy)

    def design(self, dataset, rows=None):
        if rows is None:
            rows = np.arange(len(dataset))
        cols = [np.ones(len(rows))]
        screen_idx = (range(dataset.n_screencov) if self.screen_terms is None
                      else self.screen_terms)
        for j in screen_idx:
            cols.append(dataset.screencov[rows, j])
        baseline_idx = (range(dataset.n_baseline) if self.baseline_terms is None
                        else self.baseline_terms)
        for j in baseline_idx:
            cols.append(dataset.baseline[rows, j])
        if self.include_time:
            cols.append(dataset.time[rows])
        return np.column_stack(cols)


@dataclass(frozen=True)
class CoxAnalysis:
    """Analyze completed datasets with a Cox model on the baseline
    covariates."""

    tol: float = 1e-8
    max_iter: int = 50
    family: str = "cox"

    def fit(self, dataset):
        f = cox_fit(dataset, tol=self.tol, max_iter=self.max_iter)
        return f.beta, f.covariance


@dataclass(frozen=True)
class PoissonAnalysis:
    """Analyze completed datasets with a Poisson model: intercept plus
    baseline covariates, offset log(follow_time), response the failure
    indicator."""

    tol: float = 1e-8
    max_iter: int = 100
    family: str = "poisson"

    def fit(self, dataset):
        design = np.column_stack([np.ones(len(dataset)), dataset.baseline])
        response = (dataset.status == datamodel.EVENT).astype(float)
        f = poisson_fit(design, response, offset=np.log(dataset.time),
                        tol=self.tol, max_iter=self.max_iter)
        return f.coef, f.covariance


def fit_imputation_model(dataset, spec):
    """Fit the case-probability model on examined, positively-screened
    subjects."""
    train = dataset.screen & (dataset.status != datamodel.MISSING)
    y = (dataset.status[np.flatnonzero(train)] == datamodel.EVENT).astype(float)
    if len(y) == 0 or y.min() == y.max():
        raise DegenerateTrainingSet(
            "examined positively-screened subjects must include both outcomes")
    design = spec.design(dataset, np.flatnonzero(train))
    return logistic_fit(design, y, prior=spec.prior)


def impute_from_fit(dataset, fit, spec, rng):
    """One completed dataset: draw coefficients, then Bernoulli-fill the
    missing indicators.  Observed subjects are untouched."""
    missing = np.flatnonzero(dataset.missing_mask)
    if len(missing) == 0:
        return dataset
    draw = posterior_draw(fit, rng)
    probs = predict_prob(draw, spec.design(dataset, missing))
    filled = dataset.status.copy()
    filled[missing] = np.where(rng.random(len(missing)) < probs,
                               datamodel.EVENT, datamodel.CENSORED)
    return dataset.with_status(filled)


def impute_once(dataset, spec, rng):
    """Single imputation pass (no-op on a dataset without missing
    indicators)."""
    if dataset.n_missing == 0:
        return dataset
    fit = fit_imputation_model(dataset, spec)
    return impute_from_fit(dataset, fit, spec, rng)


@dataclass(frozen=True)
class PooledEstimate:
    beta_bar: np.ndarray
    within_var: np.ndarray
    between_var: np.ndarray
    total_var: np.ndarray
    df: np.ndarray  # per coefficient; +inf where between-variance is zero
    m: int


def rubin_combine(estimates, covariances, df_rule=DF_RULE_PAPER):
    """Pool m per-imputation estimates: mean, within/between variance,
    total variance, and per-coefficient degrees of freedom.

    `df_rule` selects between the factor (m-1)(1 + mU/((m+1)B)) as used
    here by default and the variant with that parenthesized factor
    squared; both are exposed because the two conventions disagree.
    """
    estimates = [np.atleast_1d(np.asarray(e, dtype=float)) for e in estimates]
    covariances = [np.atleast_2d(np.asarray(c, dtype=float)) for c in covariances]
    m = len(estimates)
    if m < 2:
        raise MTooSmall("pooling requires at least 2 imputations")
    if len(covariances) != m:
        raise DimensionMismatch("estimate and covariance counts differ")
    k = len(estimates[0])
    for e, c in zip(estimates, covariances):
        if len(e) != k or c.shape != (k, k):
            raise DimensionMismatch("inconsistent coefficient dimensions")
    if df_rule not in (DF_RULE_PAPER, DF_RULE_SQUARED):
        raise ValueError(f"unknown df_rule {df_rule!r}")

    est = np.stack(estimates)
    beta_bar = est.mean(axis=0)
    within = np.mean(np.stack(covariances), axis=0)
    dev = est - beta_bar
    between = dev.T @ dev / (m - 1)
    total = within + (1 + 1 / m) * between

    df = np.empty(k)
    for j in range(k):
        bjj = between[j, j]
        if bjj == 0:
            df[j] = math.inf
        else:
            factor = 1 + m * within[j, j] / ((m + 1) * bjj)
            df[j] = (m - 1) * (factor if df_rule == DF_RULE_PAPER else factor ** 2)
    return PooledEstimate(beta_bar=beta_bar, within_var=within,
                          between_var=between, total_var=total, df=df, m=m)


def _t_quantile(df, prob):
    return stats.norm.ppf(prob) if math.isinf(df) else stats.t.ppf(prob, df)


def _t_sf(df, x):
    return stats.norm.sf(x) if math.isinf(df) else stats.t.sf(x, df)


@dataclass(frozen=True)
class MiResult:
    pooled: PooledEstimate
    intervals: np.ndarray  # (k, 2)
    p_values: np.ndarray
    family: str
    level: float


def mi_analyze(dataset, spec, m, analysis, level=0.95, rng=None,
               df_rule=DF_RULE_PAPER):
    """Run m imputations, fit the requested model on each completed
    dataset, and pool with t-based intervals and two-sided p-values."""
    if m < 2:
        raise MTooSmall("multiple imputation requires m >= 2")
    if rng is None:
        rng = np.random.default_rng(0)
    imp_fit = None
    if dataset.n_missing > 0:
        imp_fit = fit_imputation_model(dataset, spec)
    estimates, covariances = [], []
    for child in rng.spawn(m):
        completed = (dataset if imp_fit is None
                     else impute_from_fit(dataset, imp_fit, spec, child))
        coef, cov = analysis.fit(completed)
        estimates.append(coef)
        covariances.append(cov)
    pooled = rubin_combine(estimates, covariances, df_rule=df_rule)

    k = len(pooled.beta_bar)
    se = np.sqrt(np.diag(pooled.total_var))
    intervals = np.empty((k, 2))
    p_values = np.empty(k)
    for j in range(k):
        tq = _t_quantile(pooled.df[j], (1 + level) / 2)
        intervals[j] = (pooled.beta_bar[j] - tq * se[j],
                        pooled.beta_bar[j] + tq * se[j])
        if se[j] == 0:
            p_values[j] = 0.0 if pooled.beta_bar[j] != 0 else 1.0
        else:
            p_values[j] = 2 * _t_sf(pooled.df[j], abs(pooled.beta_bar[j]) / se[j])
    return MiResult(pooled=pooled, intervals=intervals, p_values=p_values,
                    family=analysis.family, level=level)


def pooled_incidence(pooled, x_star, level=0.95):
    """Incidence rate exp(beta_bar' x*) with a t-based interval on the
    linear predictor scale.

    Degrees of freedom for the derived quantity: the conservative
    minimum over coefficients that x* actually loads on.
    """
    x_star = np.asarray(x_star, dtype=float)
    lp = float(pooled.beta_bar @ x_star)
    var = float(x_star @ pooled.total_var @ x_star)
    active = np.flatnonzero(x_star != 0)
    df = float(np.min(pooled.df[active])) if len(active) else math.inf
    se = math.sqrt(max(var, 0.0))
    tq = _t_quantile(df, (1 + level) / 2) if se > 0 else 0.0
    rate = math.exp(lp)
    return rate, (math.exp(lp - tq * se), math.exp(lp + tq * se))
