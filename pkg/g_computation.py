"""
Posterior g-computation of residual-life quantile contrasts.

Every retained draw induces a conditional survival function of log time given
(z, x). Marginal survival under each exposure arm is the average of that
function over a synthetic cohort drawn from the same posterior sample; the
residual-life quantile at landmark nu is the root of

    S_bar(y + nu) / S_bar(nu) = 1 - rho.

Times are on the original scale throughout; survival is evaluated at
log-transformed arguments, optionally shifted by a per-arm psi.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import special

from base_measure import BaseMeasure, design_matrix
from distributions import make_rng, normal_logpdf
from edpmm_sampler import covariate_loglik
from posterior_draws import PosteriorDraw

logger = logging.getLogger(__name__)

INTEGRANDS = ("mixture", "assigned")
POSITIVITY_FLOOR = 1e-12
BRACKET_CAP = 2.0 ** 60
RELATIVE_WIDTH = 1e-10
CERTIFICATE_TOLERANCE = 1e-8
MAX_BISECTIONS = 400


class PositivityError(RuntimeError):
    """Raised when marginal survival at the landmark is numerically zero."""


class QuantileRangeError(RuntimeError):
    """Raised when the quantile bracket cannot be closed below the cap."""


class SubgroupSupportError(ValueError):
    """Raised when no cluster gives the conditioned covariates positive density."""


class EstimandError(RuntimeError):
    """Wraps a per-draw failure with the index of the offending draw."""

    def __init__(self, message: str, draw_index: int):
        super().__init__(message)
        self.draw_index = draw_index


@dataclass(frozen=True)
class EstimandRequest:
    """One (nu, rho, subgroup, psi) cell of the residual-life contrast."""

    nu: float
    rho: float
    subgroup: Tuple[Tuple[int, float], ...] = ()
    psi: Tuple[float, float] = (0.0, 0.0)
    cohort_size: int = 1000
    cri_level: float = 0.95
    integrand: str = "mixture"

    def __post_init__(self):
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "subgroup", tuple(sorted((int(j), float(v)) for j, v in self.subgroup)))
        object.__setattr__(self, "psi", (float(self.psi[0]), float(self.psi[1])))
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.nu >= 0.0:
            raise ValueError(f"nu must be non-negative, got {self.nu}")
        if self.cohort_size < 1:
            raise ValueError(f"cohort size must be at least 1, got {self.cohort_size}")
        if not 0.0 < self.cri_level < 1.0:
            raise ValueError(f"credible level must lie in (0, 1), got {self.cri_level}")
        if self.integrand not in INTEGRANDS:
            raise ValueError(f"integrand must be one of {INTEGRANDS}, got '{self.integrand}'")
        if len({j for j, _ in self.subgroup}) != len(self.subgroup):
            raise ValueError("A subgroup may fix each covariate only once")

    @property
    def cohort_key(self) -> Tuple:
        return (self.subgroup, self.cohort_size)


@dataclass(frozen=True)
class QuantileSolution:
    value: float
    iterations: int
    expansions: int
    residual: float


@dataclass(frozen=True, eq=False)
class SyntheticCohort:
    """M synthetic covariate vectors with their cluster allocations and outcome parameters.

    ``s_y`` equals the draw's cluster count for rows in a newly opened cluster;
    ``s_x`` is -1 for rows in a newly opened subcluster.
    """

    x: np.ndarray
    s_y: np.ndarray
    s_x: np.ndarray
    row_beta: np.ndarray
    row_sigma2: np.ndarray

    @property
    def size(self) -> int:
        return self.x.shape[0]


@dataclass(eq=False)
class OSQCResult:
    """Per-draw arm quantiles and their contrast, with posterior summaries."""

    request: EstimandRequest
    y1: np.ndarray
    y0: np.ndarray
    delta: np.ndarray
    mean: float
    lower: float
    upper: float
    iterations: np.ndarray
    expansions: np.ndarray
    residuals: np.ndarray
    model: str = "EDPMM"

    @property
    def n_draws(self) -> int:
        return self.delta.size

    def arm_summary(self, z: int) -> Tuple[float, float, float]:
        return summarize_posterior(self.y1 if z == 1 else self.y0, self.request.cri_level)

    def to_record(self) -> Dict[str, object]:
        mean1, lower1, upper1 = self.arm_summary(1)
        mean0, lower0, upper0 = self.arm_summary(0)
        return {
            "model": self.model,
            "nu": self.request.nu,
            "rho": self.request.rho,
            "subgroup": format_subgroup(self.request.subgroup),
            "psi0": self.request.psi[0],
            "psi1": self.request.psi[1],
            "integrand": self.request.integrand,
            "y1_mean": mean1, "y1_lower": lower1, "y1_upper": upper1,
            "y0_mean": mean0, "y0_lower": lower0, "y0_upper": upper0,
            "delta_mean": self.mean, "delta_lower": self.lower, "delta_upper": self.upper,
            "cri_level": self.request.cri_level,
            "draws": self.n_draws,
            "max_residual": float(np.max(self.residuals)),
            "max_expansions": int(np.max(self.expansions)),
        }


def format_subgroup(subgroup: Sequence[Tuple[int, float]]) -> str:
    if not subgroup:
        return "all"
    return ";".join(f"x{j}={v:g}" for j, v in subgroup)


@dataclass(frozen=True, eq=False)
class PriorPredictive:
    """Kernels integrated against G0: f0 for exposure and covariates, S0 for log time."""

    base: BaseMeasure
    n_binary: int
    n_continuous: int
    binary_success: float = field(init=False)
    continuous_scale: float = field(init=False)

    def __post_init__(self):
        base = self.base
        object.__setattr__(self, "binary_success", base.a_pi / (base.a_pi + base.b_pi))
        object.__setattr__(self, "continuous_scale", float(np.sqrt(base.b_tau * (1.0 + 1.0 / base.b_mu))))

    def binary_density(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        return np.where(value == 1.0, self.binary_success, 1.0 - self.binary_success)

    def exposure_density(self, z) -> np.ndarray:
        return self.binary_density(z)

    def continuous_logpdf(self, value) -> np.ndarray:
        standardized = (np.asarray(value, dtype=float) - self.base.a_mu) / self.continuous_scale
        df = self.base.a_tau
        return (special.gammaln(0.5 * (df + 1.0)) - special.gammaln(0.5 * df)
                - 0.5 * np.log(df * np.pi) - np.log(self.continuous_scale)
                - 0.5 * (df + 1.0) * np.log1p(standardized * standardized / df))

    def continuous_density(self, value) -> np.ndarray:
        return np.exp(self.continuous_logpdf(value))

    def covariate_logpdf(self, x, columns: Sequence[int]) -> np.ndarray:
        """log f0 of the listed covariate columns; ``x`` has shape (..., len(columns))."""
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for position, j in enumerate(columns):
            if j < self.n_binary:
                total = total + np.log(self.binary_density(x[..., position]))
            else:
                total = total + self.continuous_logpdf(x[..., position])
        return total

    def log_density(self, z, x) -> np.ndarray:
        """log f0(z, x) over full covariate vectors."""
        x = np.asarray(x, dtype=float)
        columns = range(self.n_binary + self.n_continuous)
        return np.log(self.exposure_density(z)) + self.covariate_logpdf(x, columns)

    def outcome_location_scale(self, design: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        base = self.base
        design = np.atleast_2d(design)
        location = design @ base.a_beta
        quad = np.einsum("ij,jk,ik->i", design, base.B_beta, design)
        return location, np.sqrt(base.b_sigma * (1.0 + base.c_beta * quad))

    def outcome_survival(self, y_log, design: np.ndarray) -> np.ndarray:
        """S0(y | z, x): t survival with df a_sigma."""
        location, scale = self.outcome_location_scale(design)
        return special.stdtr(self.base.a_sigma, -(np.asarray(y_log, dtype=float) - location) / scale)


def prior_predictive(base: BaseMeasure, n_binary: int) -> PriorPredictive:
    n_continuous = base.p_design - 2 - n_binary
    if n_continuous < 0:
        raise ValueError(f"Base measure covers {base.p_design - 2} covariates, fewer than {n_binary} binary ones")
    return PriorPredictive(base, n_binary, n_continuous)


def _n_binary(draw: PosteriorDraw) -> int:
    return len(draw.clusters[0].subclusters[0].pi)


def _draw_prior(draw: PosteriorDraw) -> PriorPredictive:
    return prior_predictive(draw.base, _n_binary(draw))


def mixture_weights(draw: PosteriorDraw, z, x, prior: Optional[PriorPredictive] = None) -> np.ndarray:
    """Normalized conditional mixture weights, shape (M, K + 1), last column the new-cluster term."""
    prior = prior or _draw_prior(draw)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.broadcast_to(np.asarray(z, dtype=float), x.shape[:1])
    n_k = draw.cluster_counts
    K = n_k.size
    owner = draw.subcluster_owner
    a_theta, a_omega = draw.alpha_theta, draw.alpha_omega

    log_f0 = prior.log_density(z, x)
    omega_z, pi, mu, tau2 = draw.subcluster_arrays
    with np.errstate(divide="ignore"):
        log_sub = (np.log(draw.subcluster_counts) - np.log(a_omega + n_k[owner])
                   + covariate_loglik(z, x, omega_z, pi, mu, tau2, prior.n_binary))
        log_new_sub = np.log(a_omega) - np.log(a_omega + n_k)
        log_weights = np.empty((x.shape[0], K + 1))
        for k in range(K):
            terms = np.column_stack([log_sub[:, owner == k], log_f0 + log_new_sub[k]])
            log_weights[:, k] = np.log(n_k[k]) + special.logsumexp(terms, axis=1)
        log_weights[:, K] = np.log(a_theta) + log_f0
    log_weights -= special.logsumexp(log_weights, axis=1, keepdims=True)
    return np.exp(log_weights)


def conditional_survival(draw: PosteriorDraw, y, z: int, x) -> np.ndarray:
    """Posterior-sample conditional survival S(y | z, x) of log time ``y``."""
    prior = _draw_prior(draw)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    weights = mixture_weights(draw, z, x, prior)[0]
    design = design_matrix([z], x)[0]
    y = np.asarray(y, dtype=float)
    y_flat = y.reshape(-1, 1)
    means = draw.betas @ design
    cluster_surv = special.ndtr((means - y_flat) / np.sqrt(draw.sigma2s))
    prior_surv = prior.outcome_survival(y_flat[:, 0], design[None, :])
    result = cluster_surv @ weights[:-1] + weights[-1] * prior_surv
    return result.reshape(y.shape)


def _sample_rows_x(pi: np.ndarray, mu: np.ndarray, tau2: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    binary = (rng.random(pi.shape) < pi).astype(float)
    continuous = mu + np.sqrt(tau2) * rng.standard_normal(mu.shape)
    return np.hstack([binary, continuous])


def _assemble_cohort(draw: PosteriorDraw, s_y: np.ndarray, s_x: np.ndarray, rng: np.random.Generator,
                     subgroup: Sequence[Tuple[int, float]] = ()) -> SyntheticCohort:
    """Fill in local and outcome parameters (fresh G0 draws where needed) and sample covariates."""
    base = draw.base
    K = draw.n_clusters
    n_binary = _n_binary(draw)
    omega_z, pi, mu, tau2 = draw.subcluster_arrays
    n_continuous = mu.shape[1]
    M = s_y.size

    fresh_local = s_x < 0
    rows_pi = np.empty((M, n_binary))
    rows_mu = np.empty((M, n_continuous))
    rows_tau2 = np.empty((M, n_continuous))
    existing = ~fresh_local
    rows_pi[existing] = pi[s_x[existing]]
    rows_mu[existing] = mu[s_x[existing]]
    rows_tau2[existing] = tau2[s_x[existing]]
    n_fresh = int(fresh_local.sum())
    if n_fresh:
        _, new_pi, new_mu, new_tau2 = base.sample_local_params(n_fresh, n_binary, n_continuous, rng)
        rows_pi[fresh_local] = new_pi
        rows_mu[fresh_local] = new_mu
        rows_tau2[fresh_local] = new_tau2

    fresh_outcome = s_y == K
    row_beta = np.empty((M, base.p_design))
    row_sigma2 = np.empty(M)
    row_beta[~fresh_outcome] = draw.betas[s_y[~fresh_outcome]]
    row_sigma2[~fresh_outcome] = draw.sigma2s[s_y[~fresh_outcome]]
    n_new = int(fresh_outcome.sum())
    if n_new:
        new_beta, new_sigma2 = base.sample_outcome_params(n_new, rng)
        row_beta[fresh_outcome] = new_beta
        row_sigma2[fresh_outcome] = new_sigma2

    x = _sample_rows_x(rows_pi, rows_mu, rows_tau2, rng)
    for j, value in subgroup:
        x[:, j] = value
    return SyntheticCohort(x, s_y, s_x, row_beta, row_sigma2)


def draw_synthetic_cohort(draw: PosteriorDraw, M: int, rng: np.random.Generator) -> SyntheticCohort:
    """Urn-scheme synthetic cohort: cluster by {n_k, alpha_theta}, then subcluster by {n_r|k, alpha_omega}."""
    K = draw.n_clusters
    n_k = draw.cluster_counts
    cluster_probs = np.append(n_k, draw.alpha_theta)
    s_y = rng.choice(K + 1, size=M, p=cluster_probs / cluster_probs.sum())

    s_x = np.full(M, -1, dtype=int)
    owner = draw.subcluster_owner
    counts = draw.subcluster_counts
    for k in range(K):
        rows = np.flatnonzero(s_y == k)
        if not rows.size:
            continue
        subs = np.flatnonzero(owner == k)
        probs = np.append(counts[subs], draw.alpha_omega)
        picks = rng.choice(subs.size + 1, size=rows.size, p=probs / probs.sum())
        s_x[rows] = np.where(picks < subs.size, subs[np.minimum(picks, subs.size - 1)], -1)
    return _assemble_cohort(draw, s_y, s_x, rng)


def _validate_subgroup(draw: PosteriorDraw, subgroup: Sequence[Tuple[int, float]]) -> None:
    n_binary = _n_binary(draw)
    p = draw.base.p_design - 2
    for j, value in subgroup:
        if not 0 <= j < p:
            raise SubgroupSupportError(f"Subgroup covariate index {j} outside 0..{p - 1}")
        if j < n_binary and value not in (0.0, 1.0):
            raise SubgroupSupportError(f"Binary covariate {j} cannot be conditioned on value {value}")
        if not np.isfinite(value):
            raise SubgroupSupportError(f"Subgroup value for covariate {j} must be finite")


def draw_synthetic_cohort_conditional(draw: PosteriorDraw, M: int, subgroup: Sequence[Tuple[int, float]],
                                      rng: np.random.Generator) -> SyntheticCohort:
    """Synthetic cohort with the covariates in ``subgroup`` fixed at the given values.

    Allocation weights are proportional to the urn mass of each subcluster
    times its covariate density at the conditioned values; the prior mass is
    split into a new outcome cluster and a new subcluster inside each cluster.
    """
    subgroup = tuple(sorted((int(j), float(v)) for j, v in subgroup))
    _validate_subgroup(draw, subgroup)
    prior = _draw_prior(draw)
    n_binary = prior.n_binary
    columns = [j for j, _ in subgroup]
    values = np.array([v for _, v in subgroup], dtype=float)

    K = draw.n_clusters
    n_k = draw.cluster_counts
    owner = draw.subcluster_owner
    a_theta, a_omega = draw.alpha_theta, draw.alpha_omega
    _, pi, mu, tau2 = draw.subcluster_arrays

    log_f_sub = np.zeros(owner.size)
    for j, value in subgroup:
        if j < n_binary:
            log_f_sub += special.xlogy(value, pi[:, j]) + special.xlogy(1.0 - value, 1.0 - pi[:, j])
        else:
            c = j - n_binary
            log_f_sub += normal_logpdf(value, mu[:, c], tau2[:, c])
    log_f0 = float(prior.covariate_logpdf(values, columns)) if subgroup else 0.0

    with np.errstate(divide="ignore"):
        log_existing = (np.log(n_k[owner]) + np.log(draw.subcluster_counts)
                        - np.log(a_omega + n_k[owner]) + log_f_sub)
        log_new_sub = np.log(n_k) + np.log(a_omega) - np.log(a_omega + n_k) + log_f0
        log_new_cluster = np.log(a_theta) + log_f0
    log_weights = np.concatenate([log_existing, log_new_sub, [log_new_cluster]])
    top = np.max(log_weights)
    if not np.isfinite(top):
        raise SubgroupSupportError(f"No cluster supports subgroup {format_subgroup(subgroup)}")
    probs = np.exp(log_weights - top)
    picks = rng.choice(probs.size, size=M, p=probs / probs.sum())

    S = owner.size
    s_y = np.empty(M, dtype=int)
    s_x = np.full(M, -1, dtype=int)
    is_existing = picks < S
    s_x[is_existing] = picks[is_existing]
    s_y[is_existing] = owner[picks[is_existing]]
    is_new_sub = (picks >= S) & (picks < S + K)
    s_y[is_new_sub] = picks[is_new_sub] - S
    s_y[picks == S + K] = K
    return _assemble_cohort(draw, s_y, s_x, rng, subgroup)


class ArmSurvival:
    """Marginal survival of one arm, averaged over a fixed synthetic cohort."""

    def __init__(self, draw: PosteriorDraw, cohort: SyntheticCohort, z: int, integrand: str = "mixture"):
        if integrand not in INTEGRANDS:
            raise ValueError(f"integrand must be one of {INTEGRANDS}, got '{integrand}'")
        self.integrand = integrand
        design = design_matrix(np.full(cohort.size, float(z)), cohort.x)
        if integrand == "assigned":
            self.row_means = np.einsum("ij,ij->i", design, cohort.row_beta)
            self.row_sds = np.sqrt(cohort.row_sigma2)
        else:
            prior = _draw_prior(draw)
            weights = mixture_weights(draw, z, cohort.x, prior)
            self.cluster_weights = weights[:, :-1]
            self.prior_weights = weights[:, -1]
            self.cluster_means = design @ draw.betas.T
            self.cluster_sds = np.sqrt(draw.sigma2s)
            self.prior_df = draw.base.a_sigma
            self.prior_location, self.prior_scale = prior.outcome_location_scale(design)

    def at_log_time(self, y_log: float) -> float:
        if self.integrand == "assigned":
            return float(np.mean(special.ndtr((self.row_means - y_log) / self.row_sds)))
        cluster = special.ndtr((self.cluster_means - y_log) / self.cluster_sds)
        prior = special.stdtr(self.prior_df, -(y_log - self.prior_location) / self.prior_scale)
        per_row = np.sum(self.cluster_weights * cluster, axis=1) + self.prior_weights * prior
        return float(np.mean(per_row))

    def at_time(self, t: float, psi: float = 0.0) -> float:
        """Mean survival at original time ``t`` with the arm's log-time shift."""
        if t <= 0.0:
            return 1.0
        return self.at_log_time(np.log(t) - psi)


def _landmark_survival(arm: ArmSurvival, nu: float, psi: float) -> float:
    if nu == 0.0:
        return 1.0
    denominator = arm.at_time(nu, psi)
    if denominator < POSITIVITY_FLOOR:
        raise PositivityError(f"landmark beyond effective support (mean survival {denominator:.3e} at nu={nu})")
    return denominator


def marginal_residual_survival(draw: PosteriorDraw, cohort: SyntheticCohort, y: float, nu: float, z: int,
                               psi_z: float = 0.0, integrand: str = "mixture") -> float:
    """Marginal survival of residual life beyond ``nu`` evaluated at residual time ``y``."""
    if y < 0 or nu < 0:
        raise ValueError("Residual time and landmark must be non-negative")
    arm = ArmSurvival(draw, cohort, z, integrand)
    denominator = _landmark_survival(arm, nu, psi_z)
    if y == 0.0:
        return 1.0
    return arm.at_time(y + nu, psi_z) / denominator


def solve_residual_quantile(arm: ArmSurvival, nu: float, rho: float, psi: float = 0.0) -> QuantileSolution:
    """Bracket by doubling from 1, then bisect to relative width 1e-10."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    target = 1.0 - rho
    denominator = _landmark_survival(arm, nu, psi)

    def ratio(y: float) -> float:
        return arm.at_time(y + nu, psi) / denominator

    lo, hi = 0.0, 1.0
    expansions = 0
    while ratio(hi) >= target:
        lo = hi
        hi *= 2.0
        expansions += 1
        if hi > BRACKET_CAP:
            raise QuantileRangeError(f"quantile beyond numeric range (rho={rho}, nu={nu})")

    iterations = 0
    while hi - lo > RELATIVE_WIDTH * hi and iterations < MAX_BISECTIONS:
        mid = 0.5 * (lo + hi)
        if ratio(mid) >= target:
            lo = mid
        else:
            hi = mid
        iterations += 1
    value = 0.5 * (lo + hi)
    residual = abs(ratio(value) - target)
    while residual > CERTIFICATE_TOLERANCE and iterations < MAX_BISECTIONS and lo < value < hi:
        if ratio(value) >= target:
            lo = value
        else:
            hi = value
        value = 0.5 * (lo + hi)
        residual = abs(ratio(value) - target)
        iterations += 1
    if residual > CERTIFICATE_TOLERANCE:
        logger.warning("Quantile certificate %.2e exceeds %.0e at rho=%s, nu=%s",
                       residual, CERTIFICATE_TOLERANCE, rho, nu)
    return QuantileSolution(value, iterations, expansions, residual)


def qrl_root_solve(draw: PosteriorDraw, cohort: SyntheticCohort, nu: float, rho: float, z: int,
                   psi_z: float = 0.0, integrand: str = "mixture") -> QuantileSolution:
    """Residual-life rho-quantile beyond ``nu`` for arm ``z``, on the original time scale."""
    return solve_residual_quantile(ArmSurvival(draw, cohort, z, integrand), nu, rho, psi_z)


def cohort_for(draw: PosteriorDraw, draw_index: int, subgroup, cohort_size: int, seed: int) -> SyntheticCohort:
    """Synthetic cohort for one draw; the stream depends only on seed, draw index and cohort key."""
    rng = make_rng(seed, "gcomp", draw_index, format_subgroup(subgroup), cohort_size)
    if subgroup:
        return draw_synthetic_cohort_conditional(draw, cohort_size, subgroup, rng)
    return draw_synthetic_cohort(draw, cohort_size, rng)


def _evaluate_draw(task) -> List[Tuple[QuantileSolution, QuantileSolution]]:
    draw_index, draw, requests, seed = task
    cohorts: Dict[Tuple, SyntheticCohort] = {}
    arms: Dict[Tuple, ArmSurvival] = {}
    solutions = []
    try:
        for request in requests:
            key = request.cohort_key
            if key not in cohorts:
                cohorts[key] = cohort_for(draw, draw_index, request.subgroup, request.cohort_size, seed)
            pair = []
            for z in (1, 0):
                arm_key = (key, z, request.integrand)
                if arm_key not in arms:
                    arms[arm_key] = ArmSurvival(draw, cohorts[key], z, request.integrand)
                pair.append(solve_residual_quantile(arms[arm_key], request.nu, request.rho, request.psi[z]))
            solutions.append(tuple(pair))
    except (PositivityError, QuantileRangeError, SubgroupSupportError) as exc:
        raise EstimandError(f"Draw {draw_index}: {exc}", draw_index) from exc
    return solutions


def _map_draws(function, tasks, workers: Optional[int]):
    if workers and workers > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(function, tasks, chunksize=chunk))
    return [function(task) for task in tasks]


def osqc_grid(draws: Sequence[PosteriorDraw], requests: Sequence[EstimandRequest], seed: int,
              workers: Optional[int] = 1) -> List[OSQCResult]:
    """Evaluate many estimand cells; each draw's cohort is shared across cells with the same subgroup."""
    if not draws:
        raise ValueError("osqc needs at least one posterior draw")
    requests = list(requests)
    tasks = [(d, draw, requests, seed) for d, draw in enumerate(draws)]
    per_draw = _map_draws(_evaluate_draw, tasks, workers)

    results = []
    for r, request in enumerate(requests):
        solved = [per_draw[d][r] for d in range(len(draws))]
        y1 = np.array([s[0].value for s in solved])
        y0 = np.array([s[1].value for s in solved])
        delta = y1 - y0
        mean, lower, upper = summarize_posterior(delta, request.cri_level)
        results.append(OSQCResult(
            request=request, y1=y1, y0=y0, delta=delta, mean=mean, lower=lower, upper=upper,
            iterations=np.array([[s[0].iterations, s[1].iterations] for s in solved]),
            expansions=np.array([[s[0].expansions, s[1].expansions] for s in solved]),
            residuals=np.array([[s[0].residual, s[1].residual] for s in solved]),
            model=draws[0].model,
        ))
    return results


def osqc(draws: Sequence[PosteriorDraw], request: EstimandRequest, seed: int, workers: Optional[int] = 1) -> OSQCResult:
    """Posterior of the contrast Y1 - Y0 of residual-life quantiles for one cell."""
    return osqc_grid(draws, [request], seed, workers)[0]


def summarize_posterior(values, level: float) -> Tuple[float, float, float]:
    """Mean and equal-tailed interval with linear interpolation between order statistics."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("Cannot summarize an empty sample")
    tail = (1.0 - level) / 2.0
    lower, upper = np.quantile(values, [tail, 1.0 - tail], method="linear")
    mean = float(np.mean(values))
    if not lower <= mean <= upper:
        logger.warning("Posterior mean %.4g lies outside its %.0f%% interval (%.4g, %.4g)",
                       mean, 100 * level, lower, upper)
    return mean, float(lower), float(upper)


def _curve_task(task) -> np.ndarray:
    draw_index, draw, times, subgroup, cohort_size, integrand, psi, seed = task
    cohort = cohort_for(draw, draw_index, subgroup, cohort_size, seed)
    curves = np.empty((2, len(times)))
    for z in (0, 1):
        arm = ArmSurvival(draw, cohort, z, integrand)
        curves[z] = [arm.at_time(t, psi[z]) for t in times]
    return curves


def marginal_survival_curve(draws: Sequence[PosteriorDraw], times: Sequence[float], seed: int,
                            subgroup=(), cohort_size: int = 1000, cri_level: float = 0.95,
                            integrand: str = "mixture", psi: Tuple[float, float] = (0.0, 0.0),
                            workers: Optional[int] = 1) -> pd.DataFrame:
    """Per-arm marginal survival at the given original times, with posterior mean and CrI."""
    times = [float(t) for t in times]
    subgroup = tuple(sorted((int(j), float(v)) for j, v in subgroup))
    tasks = [(d, draw, times, subgroup, cohort_size, integrand, psi, seed) for d, draw in enumerate(draws)]
    stacked = np.stack(_map_draws(_curve_task, tasks, workers))
    rows = []
    for z in (0, 1):
        for j, t in enumerate(times):
            mean, lower, upper = summarize_posterior(stacked[:, z, j], cri_level)
            rows.append({"arm": z, "time": t, "subgroup": format_subgroup(subgroup),
                         "mean": mean, "lower": lower, "upper": upper})
    return pd.DataFrame(rows)
