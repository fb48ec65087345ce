"""
Gibbs sampler for the enriched Dirichlet process mixture over
(log event time, exposure, covariates).

Outcome clusters carry log-normal AFT parameters (beta, sigma2); nested
subclusters carry exposure and covariate kernels. Each sweep augments
censored log times, imputes missing covariates, reassigns subjects with the
auxiliary-component scheme, refreshes cluster parameters from their
conjugate full conditionals and updates both concentration parameters.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg, special

from base_measure import BaseMeasure, design_matrix
from distributions import (choose_index, make_rng, normal_logpdf, sample_beta, sample_gamma,
                           sample_scaled_inv_chi2, sample_truncated_normal_array)
from posterior_draws import ClusterSnapshot, PosteriorDraw, SubclusterSnapshot
from survival_data import Dataset

logger = logging.getLogger(__name__)

CENSORED_START_OFFSET = 0.1
PROB_FLOOR = 1e-12


class SamplerError(RuntimeError):
    """Raised when the chain reaches a non-finite or inconsistent state."""


class PosteriorUpdateError(SamplerError):
    """Raised when a conjugate posterior precision matrix is not positive definite."""


@dataclass
class MCMCConfig:
    """Chain length, thinning and auxiliary-component settings."""

    seed: int
    burn_in: int = 20000
    iterations: int = 20000
    thin: int = 20
    k_new: int = 1
    informative_censoring: Optional[Tuple[float, float]] = (0.0, 1.0)
    sample_partition: bool = True
    sample_concentrations: bool = True
    alpha_omega_step: float = 0.5

    def __post_init__(self):
        if self.informative_censoring is None:
            self.informative_censoring = (0.0, 1.0)
        phi, eta = self.informative_censoring
        self.informative_censoring = (float(phi), float(eta))
        if self.seed is None:
            raise ValueError("MCMC seed is required")
        if self.burn_in < 0 or self.iterations < 1 or self.thin < 1:
            raise ValueError("burn_in must be >= 0, iterations and thin >= 1")
        if self.iterations % self.thin != 0:
            raise ValueError(f"thin ({self.thin}) must divide iterations ({self.iterations})")
        if self.k_new < 1:
            raise ValueError(f"k_new must be at least 1, got {self.k_new}")
        if not eta > 0:
            raise ValueError(f"Informative-censoring scale eta must be positive, got {eta}")

    @property
    def phi(self) -> float:
        return self.informative_censoring[0]

    @property
    def eta(self) -> float:
        return self.informative_censoring[1]

    @property
    def n_draws(self) -> int:
        return self.iterations // self.thin


@dataclass(eq=False)
class SamplerState:
    """Mutable chain state.

    Outcome clusters are rows of ``beta``/``sigma2``/``n_k``; subclusters are
    rows of the local-parameter arrays, each owned by one outcome cluster
    (``sub_owner``). ``s_y`` indexes clusters and ``s_x`` indexes subclusters.
    """

    y_log: np.ndarray
    x_complete: np.ndarray
    z: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    n_k: np.ndarray
    sub_owner: np.ndarray
    omega_z: np.ndarray
    pi: np.ndarray
    mu: np.ndarray
    tau2: np.ndarray
    n_sub: np.ndarray
    s_y: np.ndarray
    s_x: np.ndarray
    alpha_theta: float
    alpha_omega: float
    n_binary: int
    nested: bool = True

    @property
    def n(self) -> int:
        return self.y_log.size

    @property
    def n_clusters(self) -> int:
        return self.n_k.size

    @property
    def n_subclusters(self) -> int:
        return self.n_sub.size

    def design(self) -> np.ndarray:
        return design_matrix(self.z, self.x_complete)

    def subclusters_per_cluster(self) -> np.ndarray:
        return np.bincount(self.sub_owner, minlength=self.n_clusters)

    def check_consistency(self) -> None:
        """Raise SamplerError unless counts, labels and parameters agree."""
        if self.n_k.sum() != self.n or np.any(self.n_k <= 0) or np.any(self.n_sub <= 0):
            raise SamplerError("Cluster counts do not partition the subjects")
        if not np.array_equal(np.bincount(self.s_y, minlength=self.n_clusters), self.n_k):
            raise SamplerError("Outcome-cluster counts disagree with assignments")
        if not np.array_equal(np.bincount(self.s_x, minlength=self.n_subclusters), self.n_sub):
            raise SamplerError("Subcluster counts disagree with assignments")
        if not np.array_equal(self.sub_owner[self.s_x], self.s_y):
            raise SamplerError("Subcluster assignments are not nested in outcome clusters")
        if not np.array_equal(np.bincount(self.sub_owner, weights=self.n_sub, minlength=self.n_clusters),
                              self.n_k):
            raise SamplerError("Subcluster counts do not sum to their cluster counts")

    def local_params(self, s: int):
        return self.omega_z[s], self.pi[s].copy(), self.mu[s].copy(), self.tau2[s].copy()

    def add_cluster(self, beta: np.ndarray, sigma2: float) -> int:
        self.beta = np.vstack([self.beta, beta[None, :]])
        self.sigma2 = np.append(self.sigma2, sigma2)
        self.n_k = np.append(self.n_k, 0)
        return self.n_k.size - 1

    def add_subcluster(self, owner: int, omega_z: float, pi: np.ndarray, mu: np.ndarray, tau2: np.ndarray) -> int:
        self.sub_owner = np.append(self.sub_owner, owner)
        self.omega_z = np.append(self.omega_z, omega_z)
        self.pi = np.vstack([self.pi, np.reshape(pi, (1, -1))])
        self.mu = np.vstack([self.mu, np.reshape(mu, (1, -1))])
        self.tau2 = np.vstack([self.tau2, np.reshape(tau2, (1, -1))])
        self.n_sub = np.append(self.n_sub, 0)
        return self.n_sub.size - 1

    def drop_subcluster(self, s: int) -> None:
        self.sub_owner = np.delete(self.sub_owner, s)
        self.omega_z = np.delete(self.omega_z, s)
        self.pi = np.delete(self.pi, s, axis=0)
        self.mu = np.delete(self.mu, s, axis=0)
        self.tau2 = np.delete(self.tau2, s, axis=0)
        self.n_sub = np.delete(self.n_sub, s)
        self.s_x[self.s_x > s] -= 1

    def drop_cluster(self, k: int) -> None:
        self.beta = np.delete(self.beta, k, axis=0)
        self.sigma2 = np.delete(self.sigma2, k)
        self.n_k = np.delete(self.n_k, k)
        self.s_y[self.s_y > k] -= 1
        self.sub_owner[self.sub_owner > k] -= 1

    def snapshot(self, model: str, base: BaseMeasure) -> PosteriorDraw:
        """Freeze the occupied clusters into an immutable PosteriorDraw."""
        clusters = []
        for k in range(self.n_clusters):
            subs = tuple(
                SubclusterSnapshot(
                    n=int(self.n_sub[s]),
                    omega_z=float(self.omega_z[s]),
                    pi=tuple(float(v) for v in self.pi[s]),
                    mu=tuple(float(v) for v in self.mu[s]),
                    tau2=tuple(float(v) for v in self.tau2[s]),
                )
                for s in np.flatnonzero(self.sub_owner == k)
            )
            clusters.append(ClusterSnapshot(int(self.n_k[k]), tuple(float(v) for v in self.beta[k]),
                                            float(self.sigma2[k]), subs))
        return PosteriorDraw(model, tuple(clusters), float(self.alpha_theta), float(self.alpha_omega),
                             base, self.n)


def outcome_loglik(y: float, design_row: np.ndarray, beta: np.ndarray, sigma2: np.ndarray) -> np.ndarray:
    """Normal log density of one log time under each row of ``beta``."""
    return normal_logpdf(y, beta @ design_row, sigma2)


def covariate_loglik(z, x, omega_z, pi, mu, tau2, n_binary: int) -> np.ndarray:
    """Log kernel f(z, x; omega) for every subcluster.

    ``z`` has shape (...,) and ``x`` shape (..., p); the result has shape (..., S).
    """
    z = np.asarray(z, dtype=float)[..., None]
    x = np.asarray(x, dtype=float)
    ll = special.xlogy(z, omega_z) + special.xlogy(1.0 - z, 1.0 - omega_z)
    if n_binary:
        xb = x[..., None, :n_binary]
        ll = ll + np.sum(special.xlogy(xb, pi) + special.xlogy(1.0 - xb, 1.0 - pi), axis=-1)
    if x.shape[-1] > n_binary:
        xc = x[..., None, n_binary:]
        ll = ll + np.sum(normal_logpdf(xc, mu, tau2), axis=-1)
    return ll


def _clip_probability(values: np.ndarray) -> np.ndarray:
    return np.clip(values, PROB_FLOOR, 1.0 - PROB_FLOOR)


def init_state(data: Dataset, base: BaseMeasure, cfg: MCMCConfig, rng: np.random.Generator,
               nested: bool = True) -> SamplerState:
    """Single outcome cluster with a single subcluster, then full-conditional parameter draws."""
    schema = data.schema
    y_log = np.log(data.times()).copy()
    y_log[data.events() == 0] += CENSORED_START_OFFSET

    x_complete = data.covariate_matrix().copy()
    mask = data.missing_mask()
    for q in range(schema.size):
        if not mask[:, q].any():
            continue
        observed = x_complete[~mask[:, q], q]
        if q < schema.binary_count:
            fill = 1.0 if observed.size and observed.mean() >= 0.5 else 0.0
        else:
            fill = float(observed.mean()) if observed.size else base.a_mu
        x_complete[mask[:, q], q] = fill

    n = data.n
    state = SamplerState(
        y_log=y_log,
        x_complete=x_complete,
        z=data.exposure().astype(float),
        beta=base.a_beta[None, :].copy(),
        sigma2=np.ones(1),
        n_k=np.array([n]),
        sub_owner=np.zeros(1, dtype=int),
        omega_z=np.full(1, 0.5),
        pi=np.full((1, schema.binary_count), 0.5),
        mu=np.zeros((1, schema.continuous_count)),
        tau2=np.ones((1, schema.continuous_count)),
        n_sub=np.array([n]),
        s_y=np.zeros(n, dtype=int),
        s_x=np.zeros(n, dtype=int),
        alpha_theta=1.0,
        alpha_omega=1.0 if nested else 0.0,
        n_binary=schema.binary_count,
        nested=nested,
    )
    update_outcome_params(state, base, rng)
    update_subcluster_params(state, base, rng)
    return state


def augment_censored_outcomes(state: SamplerState, data: Dataset, cfg: MCMCConfig,
                              rng: np.random.Generator) -> np.ndarray:
    """Redraw censored log times from the (phi, eta)-shifted truncated normal."""
    censored = np.flatnonzero(data.events() == 0)
    if censored.size:
        design = design_matrix(state.z[censored], state.x_complete[censored])
        labels = state.s_y[censored]
        means = np.einsum("ij,ij->i", design, state.beta[labels]) + cfg.phi
        variances = cfg.eta * state.sigma2[labels]
        lowers = np.log(data.times()[censored])
        state.y_log[censored] = sample_truncated_normal_array(means, variances, lowers, rng)
    return state.y_log


def impute_missing_covariates(state: SamplerState, data: Dataset, rng: np.random.Generator) -> np.ndarray:
    """Redraw masked covariate entries from their full conditionals; observed entries are untouched."""
    mask = data.missing_mask()
    if not mask.any():
        return state.x_complete
    n_binary = state.n_binary
    for q in np.flatnonzero(mask.any(axis=0)):
        rows = np.flatnonzero(mask[:, q])
        labels = state.s_y[rows]
        subs = state.s_x[rows]
        beta = state.beta[labels]
        sigma2 = state.sigma2[labels]
        design = design_matrix(state.z[rows], state.x_complete[rows])
        beta_q = beta[:, 2 + q]
        # outcome mean with the q-th covariate term removed
        partial_mean = np.einsum("ij,ij->i", design, beta) - beta_q * state.x_complete[rows, q]
        residual = state.y_log[rows] - partial_mean
        if q < n_binary:
            prior = state.pi[subs, q]
            log_lik_ratio = (residual * residual - (residual - beta_q) ** 2) / (2.0 * sigma2)
            logit = np.log(prior) - np.log1p(-prior) + log_lik_ratio
            success = special.expit(logit)
            state.x_complete[rows, q] = (rng.random(rows.size) < success).astype(float)
        else:
            c = q - n_binary
            mu = state.mu[subs, c]
            tau2 = state.tau2[subs, c]
            precision = 1.0 / tau2 + beta_q ** 2 / sigma2
            variance = 1.0 / precision
            mean = variance * (mu / tau2 + beta_q * residual / sigma2)
            state.x_complete[rows, q] = mean + np.sqrt(variance) * rng.standard_normal(rows.size)
    return state.x_complete


def continuous_imputation_moments(mu: float, tau2: float, beta_q: float, sigma2: float,
                                  residual: float) -> Tuple[float, float]:
    """Mean and variance of a missing continuous covariate given its partial residual."""
    variance = 1.0 / (1.0 / tau2 + beta_q ** 2 / sigma2)
    return variance * (mu / tau2 + beta_q * residual / sigma2), variance


def allocation_log_weights(n_k_minus, n_sub_minus, alpha_theta: float, alpha_omega: float,
                           k_new: int) -> Tuple[np.ndarray, np.ndarray, float]:
    """Log allocation weights with the current subject removed.

    ``n_k_minus`` and ``n_sub_minus`` are paired counts for existing subclusters.
    Returns (existing subcluster, new subcluster inside each listed cluster,
    new outcome cluster).
    """
    n_k_minus = np.asarray(n_k_minus, dtype=float)
    n_sub_minus = np.asarray(n_sub_minus, dtype=float)
    with np.errstate(divide="ignore"):
        existing = np.log(n_k_minus) + np.log(n_sub_minus) - np.log(n_k_minus + alpha_omega)
        new_sub = np.log(n_k_minus) + np.log(alpha_omega / k_new) - np.log(n_k_minus + alpha_omega)
        new_cluster = float(np.log(alpha_theta / k_new))
    return existing, new_sub, new_cluster


def update_assignments(state: SamplerState, data: Dataset, base: BaseMeasure, cfg: MCMCConfig,
                       rng: np.random.Generator) -> SamplerState:
    """One pass of auxiliary-component reassignment over every subject."""
    k_new = cfg.k_new
    n_binary = state.n_binary
    n_continuous = state.x_complete.shape[1] - n_binary
    design = state.design()

    for i in range(state.n):
        k = state.s_y[i]
        s = state.s_x[i]
        state.n_k[k] -= 1
        state.n_sub[s] -= 1

        vacated_theta = None
        vacated_omega = None
        vacated_owner = -1
        if state.n_sub[s] == 0:
            vacated_omega = state.local_params(s)
            state.drop_subcluster(s)
            if state.n_k[k] == 0:
                vacated_theta = (state.beta[k].copy(), state.sigma2[k])
                state.drop_cluster(k)
            else:
                vacated_owner = k

        K = state.n_clusters
        y = state.y_log[i]
        row = design[i]
        z_i = state.z[i]
        x_i = state.x_complete[i]

        # local draws: k_new for the auxiliary clusters, then k_new per existing cluster
        aux_beta, aux_sigma2 = base.sample_outcome_params(k_new, rng)
        n_local = k_new * (K + 1) if state.nested else k_new
        local = base.sample_local_params(n_local, n_binary, n_continuous, rng)
        aux_omega = tuple(arr[:k_new] for arr in local)
        if vacated_theta is not None:
            aux_beta[0], aux_sigma2[0] = vacated_theta
            for arr, value in zip(aux_omega, vacated_omega):
                arr[0] = value

        ll_y = outcome_loglik(y, row, state.beta, state.sigma2) if K else np.empty(0)
        ll_x = covariate_loglik(z_i, x_i, state.omega_z, state.pi, state.mu, state.tau2, n_binary)
        owner = state.sub_owner
        n_k = state.n_k.astype(float)

        if state.nested:
            zeta_existing, zeta_new_sub, zeta_new_cluster = allocation_log_weights(
                n_k[owner], state.n_sub, state.alpha_theta, state.alpha_omega, k_new)
            log_existing = zeta_existing + ll_y[owner] + ll_x
            sub_aux = tuple(arr[k_new:] for arr in local)
            if vacated_owner >= 0:
                first = vacated_owner * k_new
                for arr, value in zip(sub_aux, vacated_omega):
                    arr[first] = value
            sub_aux_owner = np.repeat(np.arange(K), k_new)
            ll_sub_aux = covariate_loglik(z_i, x_i, *sub_aux, n_binary)
            log_new_sub = zeta_new_sub[sub_aux_owner] + ll_y[sub_aux_owner] + ll_sub_aux
        else:
            log_existing = np.log(state.n_sub) + ll_y[owner] + ll_x
            log_new_sub = np.empty(0)
            zeta_new_cluster = float(np.log(state.alpha_theta / k_new))

        ll_aux = (normal_logpdf(y, aux_beta @ row, aux_sigma2)
                  + covariate_loglik(z_i, x_i, *aux_omega, n_binary))
        log_new_cluster = zeta_new_cluster + ll_aux

        log_weights = np.concatenate([log_existing, log_new_sub, log_new_cluster])
        choice = choose_index(log_weights, rng)

        n_existing = log_existing.size
        n_new_sub = log_new_sub.size
        if choice < n_existing:
            s_new = choice
            k_chosen = state.sub_owner[s_new]
        elif choice < n_existing + n_new_sub:
            j = choice - n_existing
            k_chosen = sub_aux_owner[j]
            s_new = state.add_subcluster(k_chosen, sub_aux[0][j], sub_aux[1][j], sub_aux[2][j], sub_aux[3][j])
        else:
            j = choice - n_existing - n_new_sub
            k_chosen = state.add_cluster(aux_beta[j], aux_sigma2[j])
            s_new = state.add_subcluster(k_chosen, aux_omega[0][j], aux_omega[1][j], aux_omega[2][j], aux_omega[3][j])

        state.s_y[i] = k_chosen
        state.s_x[i] = s_new
        state.n_k[k_chosen] += 1
        state.n_sub[s_new] += 1

    return state


@dataclass(frozen=True)
class OutcomePosterior:
    """Normal / scaled-inverse-chi-squared posterior of one outcome cluster."""

    mean: np.ndarray
    precision_cholesky: np.ndarray
    df: float
    scale: float

    @property
    def covariance_unit(self) -> np.ndarray:
        """Posterior covariance of beta per unit sigma2."""
        return linalg.cho_solve((self.precision_cholesky, True), np.eye(self.mean.size))


def outcome_posterior(X: np.ndarray, y: np.ndarray, base: BaseMeasure) -> OutcomePosterior:
    """Conjugate update of (beta, sigma2) from the rows of one cluster."""
    V0_inv = base.prior_precision
    a = base.a_beta
    precision = V0_inv + X.T @ X
    try:
        chol = linalg.cholesky(precision, lower=True)
    except linalg.LinAlgError:
        raise PosteriorUpdateError("Posterior precision of outcome coefficients is not positive definite")
    rhs = V0_inv @ a + X.T @ y
    mean = linalg.cho_solve((chol, True), rhs)
    df = base.a_sigma + y.size
    weighted = base.a_sigma * base.b_sigma + a @ V0_inv @ a + y @ y - mean @ precision @ mean
    if not weighted > 0 or not np.isfinite(weighted):
        raise PosteriorUpdateError(f"Non-positive posterior residual scale ({weighted})")
    return OutcomePosterior(mean, chol, df, weighted / df)


def update_outcome_params(state: SamplerState, base: BaseMeasure, rng: np.random.Generator) -> SamplerState:
    """Draw sigma2_k then beta_k | sigma2_k for every occupied outcome cluster."""
    design = state.design()
    order = np.argsort(state.s_y, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(np.bincount(state.s_y, minlength=state.n_clusters))])
    for k in range(state.n_clusters):
        members = order[bounds[k]:bounds[k + 1]]
        post = outcome_posterior(design[members], state.y_log[members], base)
        sigma2 = float(sample_scaled_inv_chi2(post.df, post.scale, rng))
        noise = linalg.solve_triangular(post.precision_cholesky.T, rng.standard_normal(post.mean.size), lower=False)
        state.beta[k] = post.mean + np.sqrt(sigma2) * noise
        state.sigma2[k] = sigma2
    return state


def update_subcluster_params(state: SamplerState, base: BaseMeasure, rng: np.random.Generator) -> SamplerState:
    """Beta updates for exposure and binary kernels, Normal / scaled-inverse-chi-squared for continuous ones."""
    S = state.n_subclusters
    labels = state.s_x
    counts = np.bincount(labels, minlength=S).astype(float)

    successes = np.bincount(labels, weights=state.z, minlength=S)
    state.omega_z = _clip_probability(sample_beta(base.a_pi + successes, base.b_pi + counts - successes, rng))

    n_binary = state.n_binary
    x = state.x_complete
    if n_binary:
        succ = np.stack([np.bincount(labels, weights=x[:, q], minlength=S) for q in range(n_binary)], axis=1)
        state.pi = _clip_probability(
            sample_beta(base.a_pi + succ, base.b_pi + counts[:, None] - succ, rng)
        ).reshape(S, n_binary)

    n_continuous = x.shape[1] - n_binary
    if n_continuous:
        xc = x[:, n_binary:]
        sums = np.stack([np.bincount(labels, weights=xc[:, c], minlength=S) for c in range(n_continuous)], axis=1)
        n = counts[:, None]
        means = np.divide(sums, n, out=np.full_like(sums, base.a_mu), where=n > 0)
        deviations = xc - means[labels]
        ss = np.stack([np.bincount(labels, weights=deviations[:, c] ** 2, minlength=S)
                       for c in range(n_continuous)], axis=1)
        df = base.a_tau + n
        scale = (base.a_tau * base.b_tau + ss + base.b_mu * n / (base.b_mu + n) * (means - base.a_mu) ** 2) / df
        tau2 = sample_scaled_inv_chi2(np.broadcast_to(df, scale.shape), scale, rng)
        location = (base.b_mu * base.a_mu + n * means) / (base.b_mu + n)
        state.tau2 = np.asarray(tau2, dtype=float).reshape(S, n_continuous)
        state.mu = location + np.sqrt(state.tau2 / (base.b_mu + n)) * rng.standard_normal((S, n_continuous))
    return state


def escobar_west_weight(shape: float, n_clusters: int, n: int, rate: float) -> float:
    """Mixing weight of the Gamma(shape + K, rate) component."""
    numerator = shape + n_clusters - 1.0
    return numerator / (numerator + n * rate)


def update_alpha_theta(state: SamplerState, base: BaseMeasure, rng: np.random.Generator,
                       shape: Optional[float] = None, rate: Optional[float] = None) -> float:
    """Auxiliary-variable update of the outcome-level concentration."""
    shape = base.a_theta if shape is None else shape
    rate = base.b_theta if rate is None else rate
    K = state.n_clusters
    xi = rng.beta(state.alpha_theta + 1.0, state.n)
    posterior_rate = rate - np.log(xi)
    weight = escobar_west_weight(shape, K, state.n, posterior_rate)
    draw_shape = shape + K if rng.random() < weight else shape + K - 1.0
    state.alpha_theta = float(sample_gamma(draw_shape, posterior_rate, rng))
    return state.alpha_theta


def alpha_omega_log_target(alpha: float, cluster_sizes: np.ndarray, subclusters_per_cluster: np.ndarray,
                           base: BaseMeasure) -> float:
    """Unnormalized log posterior of the subcluster concentration given the nested partition."""
    if not alpha > 0:
        return -np.inf
    cluster_sizes = np.asarray(cluster_sizes, dtype=float)
    subclusters_per_cluster = np.asarray(subclusters_per_cluster, dtype=float)
    log_alpha = np.log(alpha)
    value = (base.a_omega - 1.0) * log_alpha - base.b_omega * alpha
    value += np.sum(subclusters_per_cluster - 1.0) * log_alpha
    value += np.sum(np.log(alpha + cluster_sizes) + special.betaln(alpha + 1.0, cluster_sizes))
    return float(value)


def alpha_omega_log_acceptance(current: float, proposal: float, cluster_sizes: np.ndarray,
                               subclusters_per_cluster: np.ndarray, base: BaseMeasure) -> float:
    """Log MH ratio for a random walk on log alpha, Jacobian included."""
    return (alpha_omega_log_target(proposal, cluster_sizes, subclusters_per_cluster, base)
            - alpha_omega_log_target(current, cluster_sizes, subclusters_per_cluster, base)
            + np.log(proposal) - np.log(current))


def update_alpha_omega(state: SamplerState, base: BaseMeasure, rng: np.random.Generator,
                       step: float = 0.5) -> float:
    """One Metropolis-Hastings step on the subcluster concentration."""
    current = state.alpha_omega
    proposal = current * np.exp(step * rng.standard_normal())
    log_ratio = alpha_omega_log_acceptance(current, proposal, state.n_k, state.subclusters_per_cluster(), base)
    if np.log(rng.random()) < log_ratio:
        state.alpha_omega = float(proposal)
    return state.alpha_omega


def _check_finite(state: SamplerState, sweep_index: int) -> None:
    for name in ("y_log", "x_complete", "beta", "sigma2", "omega_z", "pi", "mu", "tau2"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise SamplerError(f"Non-finite {name} after sweep {sweep_index}")
    if not (np.isfinite(state.alpha_theta) and state.alpha_theta > 0):
        raise SamplerError(f"Invalid alpha_theta {state.alpha_theta} after sweep {sweep_index}")
    if state.nested and not (np.isfinite(state.alpha_omega) and state.alpha_omega > 0):
        raise SamplerError(f"Invalid alpha_omega {state.alpha_omega} after sweep {sweep_index}")


def sweep(state: SamplerState, data: Dataset, base: BaseMeasure, cfg: MCMCConfig,
          rng: np.random.Generator) -> SamplerState:
    """augment -> impute -> assignments -> outcome params -> subcluster params -> concentrations."""
    augment_censored_outcomes(state, data, cfg, rng)
    impute_missing_covariates(state, data, rng)
    if cfg.sample_partition:
        update_assignments(state, data, base, cfg, rng)
    update_outcome_params(state, base, rng)
    update_subcluster_params(state, base, rng)
    if cfg.sample_concentrations:
        update_alpha_theta(state, base, rng)
        if state.nested:
            update_alpha_omega(state, base, rng, step=cfg.alpha_omega_step)
    return state


def run_sampler(data: Dataset, base: BaseMeasure, cfg: MCMCConfig, rng: np.random.Generator,
                nested: bool, model: str) -> List[PosteriorDraw]:
    """Burn in, then keep every ``thin``-th state as a PosteriorDraw."""
    state = init_state(data, base, cfg, rng, nested=nested)
    total = cfg.burn_in + cfg.iterations
    report_every = max(1, total // 10)
    draws: List[PosteriorDraw] = []
    logger.info("%s chain: N=%d, %d burn-in + %d iterations, thin %d", model, data.n,
                cfg.burn_in, cfg.iterations, cfg.thin)
    for t in range(1, total + 1):
        sweep(state, data, base, cfg, rng)
        _check_finite(state, t)
        if t > cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            draws.append(state.snapshot(model, base))
            logger.debug("Kept draw %d: K=%d, alpha_theta=%.3f", len(draws), state.n_clusters, state.alpha_theta)
        if t % report_every == 0:
            logger.info("Sweep %d/%d: K=%d, subclusters=%d, alpha_theta=%.3f, alpha_omega=%.3f",
                        t, total, state.n_clusters, state.n_subclusters, state.alpha_theta, state.alpha_omega)
    return draws


def run_chain(data: Dataset, base: BaseMeasure, cfg: MCMCConfig) -> List[PosteriorDraw]:
    """Fit the enriched mixture and return ``cfg.iterations / cfg.thin`` posterior draws."""
    rng = make_rng(cfg.seed, "chain")
    return run_sampler(data, base, cfg, rng, nested=True, model="EDPMM")
