"""Logistic regression (maximum likelihood or MAP under independent
Cauchy(0, 2.5) coefficient priors) and Poisson regression with a fixed
offset, both via damped Newton iteration.

The posterior over logistic coefficients is approximated by a normal
centered at the MAP with covariance equal to the inverse negative
penalized Hessian (Laplace approximation); `posterior_draw` samples from
it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from .errors import NotConverged, SingularInformation

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100
DIVERGENCE_GUARD = 100.0
MAX_HALVINGS = 30

LOGISTIC = "logistic"
POISSON_LOG = "poisson_log"


@dataclass(frozen=True)
class PriorSpec:
    kind: str = "none"  # "none" or "cauchy"
    center: float = 0.0
    scale: float = 2.5

    def __post_init__(self):
        if self.kind not in ("none", "cauchy"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind == "cauchy" and self.scale <= 0:
            raise ValueError("Cauchy scale must be positive")

    @classmethod
    def cauchy(cls, scale=2.5):
        return cls(kind="cauchy", scale=scale)

    @classmethod
    def none(cls):
        return cls(kind="none")


@dataclass(frozen=True)
class GlmFit:
    coef: np.ndarray
    covariance: np.ndarray
    family: str
    loglik: float  # penalized when a prior is in force
    iterations: int
    converged: bool


def _prior_parts(prior, coef):
    """(log-density, gradient, Hessian-diagonal) of the prior at coef."""
    if prior is None or prior.kind == "none":
        k = len(coef)
        return 0.0, np.zeros(k), np.zeros(k)
    b = coef - prior.center
    s2 = prior.scale ** 2
    denom = s2 + b ** 2
    logp = float(np.sum(-np.log(np.pi * prior.scale) - np.log1p(b ** 2 / s2)))
    grad = -2 * b / denom
    # non-concave for |b| > scale; Newton falls back to damping there
    hdiag = -2 * (s2 - b ** 2) / denom ** 2
    return logp, grad, hdiag


def _logistic_parts(design, response, coef):
    eta = design @ coef
    p = expit(eta)
    # log p = -log(1+e^-eta), log(1-p) = -log(1+e^eta), both overflow-safe
    ll = float(np.sum(response * -np.logaddexp(0.0, -eta)
                      + (1 - response) * -np.logaddexp(0.0, eta)))
    grad = design.T @ (response - p)
    wvec = p * (1 - p)
    hess = -(design.T * wvec) @ design
    return ll, grad, hess


def _poisson_parts(design, response, offset, coef):
    eta = offset + design @ coef
    mu = np.exp(np.clip(eta, -700, 700))
    ll = float(np.sum(response * eta - mu - gammaln(response + 1)))
    grad = design.T @ (response - mu)
    hess = -(design.T * mu) @ design
    return ll, grad, hess


def _newton(parts, k, tol, max_iter):
    """Maximize an objective given its (value, grad, hess) callable."""
    coef = np.zeros(k)
    ll, g, h = parts(coef)
    converged = np.max(np.abs(g)) < tol if k else True
    iterations = 0
    while not converged and iterations < max_iter:
        iterations += 1
        step = _ascent_step(-h, g)
        new = coef + step
        new_ll, new_g, new_h = parts(new)
        halvings = 0
        while (not np.isfinite(new_ll) or new_ll < ll) and halvings < MAX_HALVINGS:
            step *= 0.5
            new = coef + step
            new_ll, new_g, new_h = parts(new)
            halvings += 1
        if not np.isfinite(new_ll) or new_ll < ll:
            break
        coef, ll, g, h = new, new_ll, new_g, new_h
        if np.max(np.abs(coef)) > DIVERGENCE_GUARD:
            break
        if np.max(np.abs(g)) < tol:
            converged = True
    return coef, ll, g, h, iterations, converged


def _ascent_step(neg_hess, grad):
    """Newton direction; ridge-damped when -H is not positive definite
    (possible in the Cauchy-penalty tails)."""
    k = neg_hess.shape[0]
    ridge = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(neg_hess)))))
    for _ in range(40):
        try:
            chol = np.linalg.cholesky(neg_hess + ridge * np.eye(k))
        except np.linalg.LinAlgError:
            ridge = max(ridge * 10, 1e-10 * scale)
            continue
        y = np.linalg.solve(chol, grad)
        return np.linalg.solve(chol.T, y)
    raise SingularInformation("could not form an ascent direction")


def _covariance(neg_hess, regularized):
    eigs = np.linalg.eigvalsh(neg_hess)
    if eigs[0] <= 1e-12 * max(1.0, eigs[-1]):
        if not regularized:
            raise SingularInformation(
                "information matrix is singular; add a prior or drop covariates")
        neg_hess = neg_hess + (1e-10 - min(0.0, eigs[0])) * np.eye(neg_hess.shape[0])
    cov = np.linalg.inv(neg_hess)
    return (cov + cov.T) / 2


def logistic_fit(design, response, prior=None, tol=DEFAULT_TOL,
                 max_iter=DEFAULT_MAX_ITER):
    """Fit logistic regression; with a Cauchy prior the objective is the
    penalized log-likelihood and separation still yields finite
    coefficients."""
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if design.ndim != 2 or design.shape[0] != len(response):
        raise ValueError("design must be n x k with n matching response")

    def parts(coef):
        ll, g, h = _logistic_parts(design, response, coef)
        lp, gp, hp = _prior_parts(prior, coef)
        return ll + lp, g + gp, h + np.diag(hp)

    coef, ll, g, h, iterations, converged = _newton(
        parts, design.shape[1], tol, max_iter)
    regularized = prior is not None and prior.kind == "cauchy"
    cov = _covariance(-h, regularized)
    return GlmFit(coef=coef, covariance=cov, family=LOGISTIC, loglik=ll,
                  iterations=iterations, converged=converged)


def poisson_fit(design, response, offset=None, tol=DEFAULT_TOL,
                max_iter=DEFAULT_MAX_ITER):
    """Fit Poisson regression with log link and a fixed offset."""
    design = np.asarray(design, dtype=float)
    response = np.asarray(response, dtype=float)
    if offset is None:
        offset = np.zeros(len(response))
    offset = np.asarray(offset, dtype=float)
    if not np.all(np.isfinite(offset)):
        raise ValueError("offsets must be finite")

    def parts(coef):
        return _poisson_parts(design, response, offset, coef)

    coef, ll, g, h, iterations, converged = _newton(
        parts, design.shape[1], tol, max_iter)
    cov = _covariance(-h, regularized=False)
    return GlmFit(coef=coef, covariance=cov, family=POISSON_LOG, loglik=ll,
                  iterations=iterations, converged=converged)


def posterior_draw(fit, rng):
    """One draw from the normal approximation to the coefficient
    posterior.  Deterministic given the generator state."""
    if not fit.converged:
        raise NotConverged("cannot draw from an unconverged fit")
    k = len(fit.coef)
    try:
        chol = np.linalg.cholesky(fit.covariance)
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(fit.covariance + 1e-12 * np.eye(k))
    return fit.coef + chol @ rng.standard_normal(k)


def predict_prob(coef, x):
    """Logistic success probability exp(c'x)/(1+exp(c'x)), overflow-safe."""
    coef = np.asarray(coef, dtype=float)
    x = np.asarray(x, dtype=float)
    if coef.shape[-1] != x.shape[-1]:
        raise ValueError("coef and x dimensions differ")
    return expit(x @ coef)


def incidence_rate(coef, x_star):
    """Events per unit person-time at covariate point x_star, from a
    log-link Poisson coefficient vector."""
    coef = np.asarray(coef, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    return float(np.exp(x_star @ coef))
