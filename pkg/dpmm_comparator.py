"""
Single-layer Dirichlet process mixture over the joint (theta, omega).

The comparator runs the enriched sampler with the nested layer switched off:
every outcome cluster carries exactly one exposure/covariate kernel, the
subcluster concentration is pinned at zero and only alpha is updated. Kernels,
base measure, augmentation and imputation are shared with the enriched model.
"""

import logging
from typing import List

import numpy as np
from scipy import special

from base_measure import BaseMeasure, design_matrix
from distributions import make_rng
from edpmm_sampler import MCMCConfig, SamplerState, covariate_loglik, init_state, run_sampler
from g_computation import prior_predictive
from posterior_draws import PosteriorDraw
from survival_data import Dataset

logger = logging.getLogger(__name__)

DPMM = "DPMM"

# A DPMM state is a SamplerState with ``nested=False`` and one subcluster per cluster.
DpmmState = SamplerState


def init_dpmm_state(data: Dataset, base: BaseMeasure, cfg: MCMCConfig, rng: np.random.Generator) -> DpmmState:
    return init_state(data, base, cfg, rng, nested=False)


def run_chain_dpmm(data: Dataset, base: BaseMeasure, cfg: MCMCConfig) -> List[PosteriorDraw]:
    """Fit the single-layer mixture; draws are tagged DPMM and use their own random stream."""
    rng = make_rng(cfg.seed, "chain", "dpmm")
    return run_sampler(data, base, cfg, rng, nested=False, model=DPMM)


def dpmm_weights(draw: PosteriorDraw, z: int, x) -> np.ndarray:
    """Normalized weights (K + 1,): n_k f(z, x; omega_k) and alpha f0(z, x) for a new cluster."""
    n_binary = len(draw.clusters[0].subclusters[0].pi)
    prior = prior_predictive(draw.base, n_binary)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    omega_z, pi, mu, tau2 = draw.subcluster_arrays
    with np.errstate(divide="ignore"):
        log_weights = np.empty(draw.n_clusters + 1)
        log_weights[:-1] = np.log(draw.cluster_counts) + covariate_loglik(z, x, omega_z, pi, mu, tau2, n_binary)[0]
        log_weights[-1] = np.log(draw.alpha_theta) + prior.log_density(z, x)[0]
    return np.exp(log_weights - special.logsumexp(log_weights))


def dpmm_conditional_survival(draw: PosteriorDraw, y, z: int, x) -> np.ndarray:
    """Conditional survival of log time ``y`` under a DPMM draw."""
    if draw.model != DPMM:
        raise ValueError(f"Expected a DPMM draw, got {draw.model}")
    n_binary = len(draw.clusters[0].subclusters[0].pi)
    prior = prior_predictive(draw.base, n_binary)
    weights = dpmm_weights(draw, z, x)
    design = design_matrix([z], np.asarray(x, dtype=float).reshape(1, -1))
    y = np.asarray(y, dtype=float)
    y_flat = y.reshape(-1, 1)
    cluster_surv = special.ndtr((draw.betas @ design[0] - y_flat) / np.sqrt(draw.sigma2s))
    prior_surv = prior.outcome_survival(y_flat[:, 0], design)
    return (cluster_surv @ weights[:-1] + weights[-1] * prior_surv).reshape(y.shape)
