"""Probability-weighted Cox comparator with bootstrap percentile
intervals.

Each subject with a missing failure indicator is replaced by two records
sharing time and covariates: an event record with weight p-hat and a
censored record with weight 1 - p-hat, where p-hat comes from the MAP of
the case-probability logistic model (no posterior draw).  The weighted
estimator has no convenient closed-form variance, so intervals come from
resampling subjects with replacement.
"""

import math
from dataclasses import replace

import numpy as np

from . import datamodel
from .cox import cox_fit
from .errors import (CoverageMismatch, DegenerateTrainingSet, HasMissingStatus,
                     ProbOutOfRange, ResampleDegenerate)
from .mi import fit_imputation_model
from .glm import predict_prob


def split_weighted(dataset, probs):
    """Replace each missing-indicator subject with an event/censored
    record pair weighted (p, 1-p); weight-0 records are dropped.

    `probs` maps subject index to event probability and must cover
    exactly the missing subjects.  Observed subjects come first in
    original order, then the split pairs in original order.
    """
    missing = set(np.flatnonzero(dataset.missing_mask).tolist())
    if set(probs) != missing:
        raise CoverageMismatch(
            "probs keys must be exactly the missing-subject indices")
    for i, p in probs.items():
        if not 0 <= p <= 1:
            raise ProbOutOfRange(f"probability {p} for subject {i} outside [0, 1]")

    observed = np.flatnonzero(~dataset.missing_mask)
    rows, statuses, weights = [], [], []
    for i in observed:
        rows.append(i)
        statuses.append(dataset.status[i])
        weights.append(dataset.weight[i])
    for i in sorted(missing):
        p = probs[i]
        if p > 0:
            rows.append(i)
            statuses.append(datamodel.EVENT)
            weights.append(dataset.weight[i] * p)
        if p < 1:
            rows.append(i)
            statuses.append(datamodel.CENSORED)
            weights.append(dataset.weight[i] * (1 - p))
    out = dataset.take(np.array(rows, dtype=int))
    return replace(out, status=np.array(statuses, dtype=int),
                   weight=np.array(weights, dtype=float))


def ck_estimate(dataset, spec):
    """Point estimate: MAP case probabilities, split records, weighted
    Cox fit."""
    if dataset.n_missing == 0:
        return cox_fit(dataset).beta
    fit = fit_imputation_model(dataset, spec)
    missing = np.flatnonzero(dataset.missing_mask)
    p = predict_prob(fit.coef, spec.design(dataset, missing))
    split = split_weighted(dataset, dict(zip(missing.tolist(), p.tolist())))
    return cox_fit(split).beta


def percentile_index(q, n):
    """Sorted-order statistic index (1-based) for quantile q: the
    ceil(q(n+1)) rule, clamped to [1, n]."""
    return min(max(int(math.ceil(q * (n + 1))), 1), n)


def ck_bootstrap_ci(dataset, spec, B, level=0.95, rng=None):
    """Bootstrap the weighted-Cox estimator: B subject resamples, each
    with the logistic model refit, percentile intervals, and the mean of
    the replicates as the point estimate.

    Degenerate resamples (no events, or a one-outcome training set) are
    redrawn with a counter, up to 10*B total attempts.
    """
    if B < 100:
        raise ValueError("B must be >= 100")
    if rng is None:
        rng = np.random.default_rng(0)
    n = len(dataset)
    replicates = np.empty((B, dataset.n_baseline))
    redraws = 0
    attempts = 0
    b = 0
    while b < B:
        if attempts >= 10 * B:
            raise ResampleDegenerate(
                f"exceeded {10 * B} resample attempts ({redraws} degenerate)")
        attempts += 1
        sub = dataset.take(rng.integers(0, n, size=n))
        try:
            replicates[b] = ck_estimate(sub, spec)
        except (DegenerateTrainingSet, HasMissingStatus):
            redraws += 1
            continue
        b += 1

    point = replicates.mean(axis=0)
    alpha = (1 - level) / 2
    lo_idx = percentile_index(alpha, B) - 1
    hi_idx = percentile_index(1 - alpha, B) - 1
    intervals = np.empty((dataset.n_baseline, 2))
    for j in range(dataset.n_baseline):
        srt = np.sort(replicates[:, j])
        intervals[j] = (srt[lo_idx], srt[hi_idx])
    return point, intervals, redraws
