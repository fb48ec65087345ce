"""
Base measure of the nested mixture and the parametric fit that centres it.

The outcome block is Normal / scaled-inverse-chi-squared on the log-time
regression coefficients; the exposure and covariate blocks are Beta for binary
kernels and Normal / scaled-inverse-chi-squared for continuous kernels.
"""

import logging
from dataclasses import dataclass, fields
from functools import cached_property
from typing import Any, Dict, Tuple

import numpy as np
from scipy import linalg, special

from survival_data import Dataset

logger = logging.getLogger(__name__)

AFT_MAX_ITERATIONS = 200

SCALAR_FIELDS = (
    "c_beta", "a_sigma", "b_sigma", "a_pi", "b_pi", "a_mu", "b_mu", "a_tau", "b_tau",
    "a_theta", "b_theta", "a_omega", "b_omega",
)


class AFTFitError(RuntimeError):
    """Raised when the parametric AFT fit used to centre the prior fails."""


def design_matrix(exposure: np.ndarray, covariates: np.ndarray) -> np.ndarray:
    """Rows (1, z, x) for every subject."""
    exposure = np.asarray(exposure, dtype=float).reshape(-1, 1)
    covariates = np.asarray(covariates, dtype=float).reshape(exposure.shape[0], -1)
    return np.hstack([np.ones_like(exposure), exposure, covariates])


@dataclass(frozen=True, eq=False)
class BaseMeasure:
    """Hyperparameters of G0 and of the concentration priors."""

    a_beta: np.ndarray
    B_beta: np.ndarray
    c_beta: float
    a_sigma: float = 3.0
    b_sigma: float = 0.1
    a_pi: float = 1.0
    b_pi: float = 1.0
    a_mu: float = 0.0
    b_mu: float = 0.5
    a_tau: float = 2.0
    b_tau: float = 1.0
    a_theta: float = 1.0
    b_theta: float = 1.0
    a_omega: float = 1.0
    b_omega: float = 1.0

    def __post_init__(self):
        a_beta = np.array(self.a_beta, dtype=float).ravel()
        B_beta = np.array(self.B_beta, dtype=float).reshape(a_beta.size, a_beta.size)
        if a_beta.size < 2:
            raise ValueError("a_beta must cover at least the intercept and exposure coefficients")
        if not np.allclose(B_beta, B_beta.T, rtol=1e-10, atol=1e-12):
            raise ValueError("B_beta must be symmetric")
        try:
            np.linalg.cholesky(B_beta)
        except np.linalg.LinAlgError:
            raise ValueError("B_beta must be positive definite")
        a_beta.setflags(write=False)
        B_beta.setflags(write=False)
        object.__setattr__(self, "a_beta", a_beta)
        object.__setattr__(self, "B_beta", B_beta)
        for name in SCALAR_FIELDS:
            value = float(getattr(self, name))
            if name != "a_mu" and not value > 0:
                raise ValueError(f"Hyperparameter {name} must be positive, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_dataset(cls, data: Dataset, a_beta=None, B_beta=None, **overrides) -> "BaseMeasure":
        """Centre G0 on a censored log-normal AFT fit and set c_beta = N/5 unless overridden."""
        if a_beta is None or B_beta is None:
            fitted_a, fitted_B = fit_aft_mle(data)
            a_beta = fitted_a if a_beta is None else a_beta
            B_beta = fitted_B if B_beta is None else B_beta
        overrides = {k: v for k, v in overrides.items() if v is not None}
        overrides.setdefault("c_beta", data.n / 5.0)
        return cls(a_beta=a_beta, B_beta=B_beta, **overrides)

    @property
    def p_design(self) -> int:
        return self.a_beta.size

    @cached_property
    def prior_covariance(self) -> np.ndarray:
        """c_beta * B_beta, the coefficient covariance per unit residual variance."""
        return self.c_beta * self.B_beta

    @cached_property
    def prior_precision(self) -> np.ndarray:
        return linalg.inv(self.prior_covariance)

    @cached_property
    def prior_cholesky(self) -> np.ndarray:
        return linalg.cholesky(self.prior_covariance, lower=True)

    def sample_outcome_params(self, count: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """``count`` independent (beta, sigma2) draws from G0, as (count, p) and (count,) arrays.

        Hyperparameters are validated once, in ``__post_init__``.
        """
        sigma2 = self.a_sigma * self.b_sigma / rng.chisquare(self.a_sigma, size=count)
        noise = rng.standard_normal((count, self.p_design)) @ self.prior_cholesky.T
        return self.a_beta + np.sqrt(sigma2)[:, None] * noise, sigma2

    def sample_local_params(self, count: int, n_binary: int, n_continuous: int, rng: np.random.Generator):
        """``count`` independent (omega_z, pi, mu, tau2) draws from the exposure/covariate block of G0."""
        omega_z = rng.beta(self.a_pi, self.b_pi, size=count)
        pi = rng.beta(self.a_pi, self.b_pi, size=(count, n_binary))
        tau2 = self.a_tau * self.b_tau / rng.chisquare(self.a_tau, size=(count, n_continuous))
        mu = self.a_mu + np.sqrt(tau2 / self.b_mu) * rng.standard_normal((count, n_continuous))
        return omega_z, pi, mu, tau2

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"a_beta": self.a_beta.tolist(), "B_beta": self.B_beta.tolist()}
        for name in SCALAR_FIELDS:
            out[name] = getattr(self, name)
        return out

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "BaseMeasure":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in payload.items() if k in known})


def _aft_loglik_parts(params: np.ndarray, X: np.ndarray, y: np.ndarray, d: np.ndarray):
    """Log-likelihood, gradient and Hessian of the censored log-normal AFT in (beta, log sigma)."""
    p = X.shape[1]
    beta, log_sigma = params[:p], params[p]
    sigma = np.exp(log_sigma)
    r = (y - X @ beta) / sigma
    event = d == 1
    cens = ~event

    loglik = np.sum(-log_sigma - 0.5 * np.log(2.0 * np.pi) - 0.5 * r[event] ** 2)
    loglik += np.sum(special.log_ndtr(-r[cens]))

    # Inverse Mills ratio for the censored rows and its derivative
    h = np.exp(-0.5 * r[cens] ** 2 - 0.5 * np.log(2.0 * np.pi) - special.log_ndtr(-r[cens]))
    h_prime = h * (h - r[cens])

    grad_beta_w = np.zeros_like(y)
    grad_beta_w[event] = r[event]
    grad_beta_w[cens] = h
    grad = np.empty(p + 1)
    grad[:p] = X.T @ grad_beta_w / sigma
    grad[p] = np.sum(-1.0 + r[event] ** 2) + np.sum(h * r[cens])

    w_bb = np.zeros_like(y)
    w_bb[event] = 1.0
    w_bb[cens] = h_prime
    w_bs = np.zeros_like(y)
    w_bs[event] = 2.0 * r[event]
    w_bs[cens] = h_prime * r[cens] + h
    hess = np.empty((p + 1, p + 1))
    hess[:p, :p] = -(X.T * w_bb) @ X / sigma ** 2
    hess[:p, p] = -(X.T @ w_bs) / sigma
    hess[p, :p] = hess[:p, p]
    hess[p, p] = np.sum(-2.0 * r[event] ** 2) - np.sum(r[cens] * (h_prime * r[cens] + h))
    return loglik, grad, hess


def fit_aft_mle(data: Dataset, max_iterations: int = AFT_MAX_ITERATIONS) -> Tuple[np.ndarray, np.ndarray]:
    """Censored log-normal AFT maximum likelihood on complete cases.

    Returns the coefficient estimate and the beta block of the inverse
    observed information, for use as a_beta and B_beta.
    """
    mask = ~data.missing_mask().any(axis=1)
    X = design_matrix(data.exposure()[mask], data.covariate_matrix()[mask])
    y = np.log(data.times()[mask])
    d = data.events()[mask]
    p = X.shape[1]
    hint = "supply prior.a_beta and prior.B_beta manually"

    if X.shape[0] <= p or np.linalg.matrix_rank(X) < p:
        raise AFTFitError(f"AFT design matrix is rank deficient on {X.shape[0]} complete cases; {hint}")
    if d.sum() == 0:
        raise AFTFitError(f"AFT fit needs at least one observed event; {hint}")

    beta0, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta0
    params = np.concatenate([beta0, [np.log(max(np.std(resid), 1e-3))]])
    loglik, grad, hess = _aft_loglik_parts(params, X, y, d)

    converged = False
    for iteration in range(1, max_iterations + 1):
        try:
            step = linalg.solve(-hess, grad, assume_a="sym")
        except (linalg.LinAlgError, ValueError):
            step = grad * 1e-3
        if not np.all(np.isfinite(step)):
            break
        scale = 1.0
        for _ in range(40):
            candidate = params + scale * step
            cand_loglik, cand_grad, cand_hess = _aft_loglik_parts(candidate, X, y, d)
            if np.isfinite(cand_loglik) and cand_loglik >= loglik - 1e-12:
                break
            scale *= 0.5
        params, loglik, grad, hess = candidate, cand_loglik, cand_grad, cand_hess
        if np.max(np.abs(scale * step)) < 1e-10 or np.max(np.abs(grad)) < 1e-9:
            converged = True
            break

    if not converged:
        raise AFTFitError(f"AFT Newton iterations did not converge within {max_iterations} steps; {hint}")

    try:
        covariance = linalg.inv(-hess)
    except linalg.LinAlgError:
        raise AFTFitError(f"AFT observed information is singular; {hint}")
    B_beta = covariance[:p, :p]
    B_beta = 0.5 * (B_beta + B_beta.T)
    if not np.all(np.isfinite(B_beta)) or np.any(np.linalg.eigvalsh(B_beta) <= 0):
        raise AFTFitError(f"AFT inverse information is not positive definite; {hint}")

    logger.debug("AFT fit converged after %d Newton steps, log sigma %.4f", iteration, params[p])
    return params[:p].copy(), B_beta
