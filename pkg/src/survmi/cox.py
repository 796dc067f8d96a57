"""Cox proportional-hazards fitting by Newton iteration on the
(optionally weighted) partial likelihood with Breslow tie handling.

Only the regression coefficients are estimated; the baseline hazard is
left unspecified throughout.
"""

from dataclasses import dataclass

import numpy as np

from . import datamodel
from .errors import HasMissingStatus, SingularHessian

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50
DIVERGENCE_GUARD = 50.0  # sup-norm bound on beta; beyond it we flag monotone likelihood
MAX_HALVINGS = 10


@dataclass(frozen=True)
class CoxFit:
    beta: np.ndarray
    covariance: np.ndarray  # inverse negative Hessian at beta
    loglik: float
    iterations: int
    converged: bool


def _extract(dataset):
    if np.any(dataset.status == datamodel.MISSING):
        raise HasMissingStatus(
            "dataset contains missing failure indicators; impute or drop first")
    event = dataset.status == datamodel.EVENT
    if not np.any(event):
        raise HasMissingStatus("no observed events in dataset")
    if np.any(dataset.weight <= 0):
        raise ValueError("subject weights must be positive")
    return dataset.time, event, dataset.baseline, dataset.weight


def _partial_loglik_parts(time, event, z, w, beta, order=None):
    """Log partial likelihood, score, and Hessian in one pass.

    Risk sums over R(t) = {j : t_j >= t} come from reverse cumulative
    sums of the sorted-by-time rows; Breslow ties share the full
    risk-set denominator.
    """
    n, p = z.shape
    eta = z @ beta
    shift = eta.max()  # keeps exp() finite for large |beta| during line search
    if order is None:
        order = np.argsort(time, kind="stable")
    ts = time[order]
    r = (w * np.exp(eta - shift))[order]
    zs = z[order]

    s0 = np.cumsum(r[::-1])[::-1]
    s1 = np.cumsum((r[:, None] * zs)[::-1], axis=0)[::-1]
    s2 = np.cumsum((r[:, None, None] * zs[:, :, None] * zs[:, None, :])[::-1],
                   axis=0)[::-1]

    pos = np.searchsorted(ts, time[event], side="left")
    we = w[event]
    d0 = s0[pos]
    zbar = s1[pos] / d0[:, None]
    loglik = float(np.sum(we * (eta[event] - shift - np.log(d0))))
    grad = we @ (z[event] - zbar)
    v = s2[pos] / d0[:, None, None] - zbar[:, :, None] * zbar[:, None, :]
    hess = -np.einsum("i,ijk->jk", we, v)
    return loglik, grad, hess


def cox_loglik(dataset, beta, tie_policy="breslow"):
    """Weighted log partial likelihood at `beta` (Breslow ties)."""
    _check_ties(tie_policy)
    time, event, z, w = _extract(dataset)
    ll, _, _ = _partial_loglik_parts(time, event, z, w, np.asarray(beta, dtype=float))
    return ll


def cox_score_hessian(dataset, beta, tie_policy="breslow"):
    """Analytic gradient and Hessian of the log partial likelihood."""
    _check_ties(tie_policy)
    time, event, z, w = _extract(dataset)
    _, g, h = _partial_loglik_parts(time, event, z, w, np.asarray(beta, dtype=float))
    return g, h


def _check_ties(tie_policy):
    if tie_policy != "breslow":
        raise ValueError(f"unsupported tie policy {tie_policy!r}")


def _neg_definite_solve(neg_hess, rhs):
    """Solve (-H) x = rhs, raising SingularHessian when -H is not PD."""
    p = neg_hess.shape[0]
    eigs = np.linalg.eigvalsh(neg_hess)
    if eigs[0] <= 1e-12 * max(1.0, eigs[-1]):
        raise SingularHessian(
            "information matrix is singular (constant or collinear covariates)")
    return np.linalg.solve(neg_hess, rhs)


def cox_fit(dataset, initial_beta=None, tie_policy="breslow",
            max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL):
    """Maximize the partial likelihood; returns coefficients and the
    inverse observed-information covariance.

    Newton steps with up to 10 halvings when the likelihood would
    decrease.  Divergence (sup-norm of beta beyond 50) is flagged as
    non-convergence rather than an error: it signals a monotone
    likelihood / separation-like degeneracy.
    """
    _check_ties(tie_policy)
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    time, event, z, w = _extract(dataset)
    p = z.shape[1]
    beta = np.zeros(p) if initial_beta is None else np.array(initial_beta, dtype=float)
    order = np.argsort(time, kind="stable")

    ll, g, h = _partial_loglik_parts(time, event, z, w, beta, order)
    converged = np.max(np.abs(g)) < tol
    iterations = 0
    while not converged and iterations < max_iter:
        iterations += 1
        step = _neg_definite_solve(-h, g)
        new_beta = beta + step
        new_ll, new_g, new_h = _partial_loglik_parts(time, event, z, w, new_beta, order)
        halvings = 0
        while new_ll < ll and halvings < MAX_HALVINGS:
            step *= 0.5
            new_beta = beta + step
            new_ll, new_g, new_h = _partial_loglik_parts(time, event, z, w,
                                                         new_beta, order)
            halvings += 1
        if new_ll < ll:
            break  # no ascent direction left
        beta, g, h, ll = new_beta, new_g, new_h, new_ll
        if np.max(np.abs(beta)) > DIVERGENCE_GUARD:
            converged = False
            break
        if np.max(np.abs(g)) < tol:
            converged = True

    covariance = _invert_neg_hessian(-h)
    return CoxFit(beta=beta, covariance=covariance, loglik=ll,
                  iterations=iterations, converged=converged)


def _invert_neg_hessian(neg_hess):
    eigs = np.linalg.eigvalsh(neg_hess)
    if eigs[0] <= 1e-12 * max(1.0, eigs[-1]):
        raise SingularHessian(
            "information matrix is singular (constant or collinear covariates)")
    cov = np.linalg.inv(neg_hess)
    return (cov + cov.T) / 2
