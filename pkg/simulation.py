"""
Simulation harness: data-generating process, Monte Carlo truth oracle,
replicate runner and bias / RMSE / coverage tables.

Five baseline covariates (two binary, three continuous) drive a probit
exposure, a two-component log-time mixture and a log-normal censoring time
whose intercept c* sets the censoring level.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import special

from base_measure import BaseMeasure, design_matrix
from distributions import make_rng
from dpmm_comparator import run_chain_dpmm
from edpmm_sampler import MCMCConfig, run_chain
from g_computation import EstimandRequest, osqc_grid
from posterior_draws import MODELS
from survival_data import CovariateSchema, Dataset, ObservedRecord

logger = logging.getLogger(__name__)

SIMULATION_SCHEMA = CovariateSchema.from_lists(["X1", "X2"], ["X3", "X4", "X5"])

COMPONENT_WEIGHT = 0.4
BETA_COMPONENT_1 = np.array([0.3, 0.2, -0.3, -0.5, 0.6, -0.5, -0.3])
BETA_COMPONENT_2 = np.array([2.1, 0.6, -0.5, -0.3, 0.2, -0.3, -0.5])
COMPONENT_1_DF = 10.0
COMPONENT_1_SCALE = 0.3
COMPONENT_2_SCALE = 0.4
BETA_CENSORING = np.array([0.0, 0.2, -0.1, 0.1, -0.2, 0.1, -0.2])
CENSORING_SD = 2.0

DEFAULT_NU_GRID = (0.0, 1.0, 2.0, 3.0)
LIGHT_RHO_GRID = (0.3, 0.6)
HEAVY_RHO_GRID = (0.1, 0.2)

SCENARIOS = {
    1: {"c_star": 3.20, "censoring": 0.2, "rho_grid": LIGHT_RHO_GRID},
    2: {"c_star": 1.79, "censoring": 0.4, "rho_grid": LIGHT_RHO_GRID},
    3: {"c_star": 0.53, "censoring": 0.6, "rho_grid": HEAVY_RHO_GRID},
    4: {"c_star": -0.95, "censoring": 0.8, "rho_grid": HEAVY_RHO_GRID},
}

MIN_ORACLE_DRAWS = 10 ** 6
MIN_ORACLE_SURVIVORS = 10 ** 4
ORACLE_BOOTSTRAP = 100
MAX_FAILURE_RATE = 0.05

Cell = Tuple[float, float]
Estimate = Tuple[float, float, float]
Estimator = Callable[[Dataset, Sequence[Cell], np.random.Generator], Dict[Cell, Estimate]]


class OracleError(RuntimeError):
    """Raised when too few simulated subjects survive past a landmark."""


class SimulationAbortedError(RuntimeError):
    """Raised when more than the tolerated share of replicates fail."""


@dataclass
class ScenarioConfig:
    c_star: float
    n: int = 500
    replicates: int = 100
    nu_grid: Tuple[float, ...] = DEFAULT_NU_GRID
    rho_grid: Tuple[float, ...] = LIGHT_RHO_GRID
    model: str = "EDPMM"
    cri_level: float = 0.95
    seed: int = 0
    truth_draws: int = MIN_ORACLE_DRAWS
    scenario: Optional[int] = None

    def __post_init__(self):
        self.nu_grid = tuple(float(v) for v in self.nu_grid)
        self.rho_grid = tuple(float(v) for v in self.rho_grid)
        self.model = str(self.model).upper()
        if self.n < 2:
            raise ValueError(f"Sample size must be at least 2, got {self.n}")
        if self.replicates < 1:
            raise ValueError(f"Replicate count must be at least 1, got {self.replicates}")
        if not self.nu_grid or not self.rho_grid:
            raise ValueError("Landmark and quantile grids must be nonempty")
        if any(nu < 0 for nu in self.nu_grid) or any(not 0 < rho < 1 for rho in self.rho_grid):
            raise ValueError("Landmarks must be >= 0 and quantile levels in (0, 1)")
        if self.model not in MODELS:
            raise ValueError(f"Unknown model '{self.model}', expected one of {MODELS}")
        if self.seed is None or self.seed < 0:
            raise ValueError("Scenario seed is required and must be non-negative")

    @classmethod
    def from_preset(cls, scenario: int, **overrides) -> "ScenarioConfig":
        if scenario not in SCENARIOS:
            raise ValueError(f"Unknown scenario {scenario}, expected one of {sorted(SCENARIOS)}")
        preset = SCENARIOS[scenario]
        settings = {"c_star": preset["c_star"], "rho_grid": preset["rho_grid"], "scenario": scenario}
        settings.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**settings)

    @property
    def cells(self) -> List[Cell]:
        return [(nu, rho) for nu in self.nu_grid for rho in self.rho_grid]


@dataclass(frozen=True, eq=False)
class HiddenTruth:
    """Potential log outcomes and log censoring times kept back from the observed data."""

    log_y0: np.ndarray
    log_y1: np.ndarray
    log_c: np.ndarray
    exposure: np.ndarray

    def observed_log_outcome(self) -> np.ndarray:
        return np.where(self.exposure == 1, self.log_y1, self.log_y0)


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    dataset: Dataset
    truth: HiddenTruth


def simulate_covariates(n: int, rng: np.random.Generator) -> np.ndarray:
    """(X1, X2) binary and (X3, X4, X5) continuous, generated sequentially."""
    x1 = (rng.random(n) < 0.5).astype(float)
    x2 = (rng.random(n) < 0.4 + 0.2 * x1).astype(float)
    x3 = rng.standard_normal(n)
    x4 = -0.1 + 0.2 * x1 - 0.15 * x3 + rng.standard_normal(n)
    x5 = 0.1 - 0.2 * x2 + 0.15 * x4 + 0.5 * rng.standard_normal(n)
    return np.column_stack([x1, x2, x3, x4, x5])


def exposure_probability(x: np.ndarray) -> np.ndarray:
    return special.ndtr(0.2 + 0.1 * x[:, 0] + 0.2 * x[:, 2] - 0.1 * x[:, 4])


def _mixture_log_outcomes(x: np.ndarray, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Log potential outcomes under z = 0 and z = 1 with shared component and noise."""
    n = x.shape[0]
    first = rng.random(n) < COMPONENT_WEIGHT
    t_noise = COMPONENT_1_SCALE * rng.standard_t(COMPONENT_1_DF, n)
    normal_noise = COMPONENT_2_SCALE * rng.standard_normal(n)
    outcomes = []
    for z in (0, 1):
        design = design_matrix(np.full(n, float(z)), x)
        outcomes.append(np.where(first, design @ BETA_COMPONENT_1 + t_noise,
                                 design @ BETA_COMPONENT_2 + normal_noise))
    return outcomes[0], outcomes[1]


def simulate_potential_outcomes(n: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Covariates plus uncensored log potential outcomes (log Y(0), log Y(1))."""
    x = simulate_covariates(n, rng)
    log_y0, log_y1 = _mixture_log_outcomes(x, rng)
    return x, log_y0, log_y1


def generate_dataset(scenario: ScenarioConfig, rng: np.random.Generator) -> SimulatedDataset:
    """Observed (T, D, Z, X) on the original time scale with the hidden potential outcomes."""
    n = scenario.n
    x = simulate_covariates(n, rng)
    z = (rng.random(n) < exposure_probability(x)).astype(int)
    log_y0, log_y1 = _mixture_log_outcomes(x, rng)
    design = design_matrix(z, x)
    log_c = scenario.c_star + design @ BETA_CENSORING + CENSORING_SD * rng.standard_normal(n)

    log_y = np.where(z == 1, log_y1, log_y0)
    events = (log_y <= log_c).astype(int)
    times = np.exp(np.minimum(log_y, log_c))
    records = [ObservedRecord(float(times[i]), int(events[i]), int(z[i]), tuple(float(v) for v in x[i]))
               for i in range(n)]
    dataset = Dataset(SIMULATION_SCHEMA, records)
    return SimulatedDataset(dataset, HiddenTruth(log_y0, log_y1, log_c, z))


def empirical_residual_quantile(times: np.ndarray, nu: float, rho: float) -> float:
    survivors = times[times > nu]
    if survivors.size < MIN_ORACLE_SURVIVORS:
        raise OracleError(f"Only {survivors.size} simulated subjects survive past nu={nu}; "
                          f"need {MIN_ORACLE_SURVIVORS}")
    return float(np.quantile(survivors - nu, rho))


def _contrast(y0: np.ndarray, y1: np.ndarray, nu: float, rho: float) -> float:
    return empirical_residual_quantile(y1, nu, rho) - empirical_residual_quantile(y0, nu, rho)


@dataclass(frozen=True)
class OracleEstimate:
    truth: float
    se: float
    n_mc: int


def _oracle_from_population(y0: np.ndarray, y1: np.ndarray, cells: Sequence[Cell], rng: np.random.Generator,
                            bootstrap: int) -> Dict[Cell, OracleEstimate]:
    truths = {cell: _contrast(y0, y1, *cell) for cell in cells}
    replicates = {cell: np.empty(bootstrap) for cell in cells}
    n = y0.size
    for b in range(bootstrap):
        index = rng.integers(0, n, size=n)
        b0, b1 = y0[index], y1[index]
        for cell in cells:
            replicates[cell][b] = _contrast(b0, b1, *cell)
    return {cell: OracleEstimate(truths[cell], float(np.std(replicates[cell], ddof=1)) if bootstrap > 1 else 0.0, n)
            for cell in cells}


def true_osqc_oracle(nu: float, rho: float, n_mc: int, rng: np.random.Generator,
                     bootstrap: int = ORACLE_BOOTSTRAP, min_draws: int = MIN_ORACLE_DRAWS) -> OracleEstimate:
    """Brute-force residual-life quantile contrast from the uncensored population, with bootstrap SE."""
    if n_mc < min_draws:
        raise ValueError(f"Oracle needs at least {min_draws} Monte Carlo subjects, got {n_mc}")
    _, log_y0, log_y1 = simulate_potential_outcomes(n_mc, rng)
    return _oracle_from_population(np.exp(log_y0), np.exp(log_y1), [(nu, rho)], rng, bootstrap)[(nu, rho)]


@dataclass
class TruthTable:
    values: Dict[Cell, float]
    se: Dict[Cell, float]
    n_mc: int

    def truth(self, nu: float, rho: float) -> float:
        return self.values[(float(nu), float(rho))]

    def to_frame(self) -> pd.DataFrame:
        rows = [{"nu": nu, "rho": rho, "true": value, "se": self.se[(nu, rho)], "n_mc": self.n_mc}
                for (nu, rho), value in sorted(self.values.items())]
        return pd.DataFrame(rows)


def build_truth_table(nu_grid: Sequence[float], rho_grid: Sequence[float], n_mc: int, rng: np.random.Generator,
                      bootstrap: int = ORACLE_BOOTSTRAP, min_draws: int = MIN_ORACLE_DRAWS) -> TruthTable:
    """Evaluate every (nu, rho) cell from one simulated population."""
    if n_mc < min_draws:
        raise ValueError(f"Oracle needs at least {min_draws} Monte Carlo subjects, got {n_mc}")
    cells = [(float(nu), float(rho)) for nu in nu_grid for rho in rho_grid]
    _, log_y0, log_y1 = simulate_potential_outcomes(n_mc, rng)
    estimates = _oracle_from_population(np.exp(log_y0), np.exp(log_y1), cells, rng, bootstrap)
    logger.info("Truth table from %d simulated subjects over %d cells", n_mc, len(cells))
    return TruthTable({c: e.truth for c, e in estimates.items()}, {c: e.se for c, e in estimates.items()}, n_mc)


@dataclass
class PosteriorOSQCEstimator:
    """Fit a chain to one dataset and summarize the OSQC posterior for each cell."""

    model: str
    mcmc: MCMCConfig
    cohort_size: int = 1000
    cri_level: float = 0.95
    integrand: str = "mixture"
    prior_overrides: Dict[str, float] = field(default_factory=dict)
    workers: int = 1

    def __call__(self, dataset: Dataset, cells: Sequence[Cell], rng: np.random.Generator) -> Dict[Cell, Estimate]:
        seed = int(rng.integers(0, 2 ** 32))
        base = BaseMeasure.from_dataset(dataset, **self.prior_overrides)
        cfg = replace(self.mcmc, seed=seed)
        fit = run_chain_dpmm if self.model.upper() == "DPMM" else run_chain
        draws = fit(dataset, base, cfg)
        requests = [EstimandRequest(nu, rho, cohort_size=self.cohort_size, cri_level=self.cri_level,
                                    integrand=self.integrand) for nu, rho in cells]
        results = osqc_grid(draws, requests, seed, workers=self.workers)
        return {cell: (r.mean, r.lower, r.upper) for cell, r in zip(cells, results)}


@dataclass(frozen=True)
class MetricsRow:
    model: str
    nu: float
    rho: float
    true: float
    bias: float
    rmse: float
    cp: float
    replicates: int


@dataclass
class MetricsTable:
    rows: List[MetricsRow]
    failures: int = 0

    @classmethod
    def from_estimates(cls, model: str, truth: TruthTable, cells: Sequence[Cell],
                       estimates: Sequence[Dict[Cell, Estimate]], failures: int = 0) -> "MetricsTable":
        rows = []
        for cell in cells:
            true_value = truth.truth(*cell)
            points = np.array([e[cell][0] for e in estimates])
            covered = np.array([e[cell][1] <= true_value <= e[cell][2] for e in estimates])
            errors = points - true_value
            rows.append(MetricsRow(
                model=model, nu=cell[0], rho=cell[1], true=true_value,
                bias=float(np.mean(errors)),
                rmse=float(np.sqrt(np.mean(errors ** 2))),
                cp=float(100.0 * np.mean(covered)),
                replicates=len(estimates),
            ))
        return cls(rows, failures)

    def row(self, nu: float, rho: float) -> MetricsRow:
        for row in self.rows:
            if row.nu == nu and row.rho == rho:
                return row
        raise KeyError((nu, rho))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.__dict__ for row in self.rows],
                            columns=["model", "nu", "rho", "true", "bias", "rmse", "cp", "replicates"])

    def write_csv(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.6f")


def _run_replicate(task):
    r, scenario, estimator, cells = task
    try:
        simulated = generate_dataset(scenario, make_rng(scenario.seed, "replicate", r))
        return r, estimator(simulated.dataset, cells, make_rng(scenario.seed, "replicate", r, "fit")), None
    except (RuntimeError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return r, None, f"{type(exc).__name__}: {exc}"


def run_replicates(scenario: ScenarioConfig, estimator: Optional[Estimator] = None,
                   mcmc: Optional[MCMCConfig] = None, truth: Optional[TruthTable] = None,
                   workers: Optional[int] = 1, max_failure_rate: float = MAX_FAILURE_RATE) -> MetricsTable:
    """Generate, fit and score ``scenario.replicates`` datasets; results are reduced in replicate order."""
    cells = scenario.cells
    if truth is None:
        truth = build_truth_table(scenario.nu_grid, scenario.rho_grid, scenario.truth_draws,
                                  make_rng(scenario.seed, "truth"))
    if estimator is None:
        estimator = PosteriorOSQCEstimator(scenario.model, mcmc or MCMCConfig(seed=scenario.seed),
                                           cri_level=scenario.cri_level)

    tasks = [(r, scenario, estimator, cells) for r in range(scenario.replicates)]
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_replicate, tasks))
    else:
        outcomes = [_run_replicate(task) for task in tasks]
    outcomes.sort(key=lambda item: item[0])

    estimates = []
    failures = 0
    for r, result, error in outcomes:
        if error is not None:
            failures += 1
            logger.warning("Replicate %d failed and is excluded: %s", r, error)
        else:
            estimates.append(result)
    if failures:
        logger.warning("%d of %d replicates failed", failures, scenario.replicates)
    if failures > max_failure_rate * scenario.replicates or not estimates:
        raise SimulationAbortedError(f"{failures} of {scenario.replicates} replicates failed "
                                     f"(limit {max_failure_rate:.0%})")
    return MetricsTable.from_estimates(scenario.model, truth, cells, estimates, failures)


def informative_censoring_run(scenario: ScenarioConfig, phi: float, eta: float, mcmc: Optional[MCMCConfig] = None,
                              truth: Optional[TruthTable] = None, workers: Optional[int] = 1,
                              **estimator_options) -> MetricsTable:
    """Rerun the replicate study with the censored-time imputation shifted by (phi, eta)."""
    cfg = replace(mcmc or MCMCConfig(seed=scenario.seed), informative_censoring=(phi, eta))
    estimator = PosteriorOSQCEstimator(scenario.model, cfg, cri_level=scenario.cri_level, **estimator_options)
    return run_replicates(scenario, estimator=estimator, truth=truth, workers=workers)


def informative_censoring_fit(dataset: Dataset, base: BaseMeasure, mcmc: MCMCConfig, phi: float, eta: float,
                              requests: Sequence[EstimandRequest], model: str = "EDPMM", workers: Optional[int] = 1):
    """Refit one dataset under (phi, eta) and evaluate the requested cells on the new draws."""
    cfg = replace(mcmc, informative_censoring=(phi, eta))
    fit = run_chain_dpmm if model.upper() == "DPMM" else run_chain
    draws = fit(dataset, base, cfg)
    return osqc_grid(draws, requests, cfg.seed, workers=workers)


def mask_covariates(dataset: Dataset, fraction: float, rng: np.random.Generator,
                    columns: Optional[Sequence[int]] = None) -> Dataset:
    """Missing-completely-at-random masking of a share of covariate entries."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"Masking fraction must lie in [0, 1), got {fraction}")
    covariates = dataset.covariate_matrix().copy()
    columns = list(range(dataset.schema.size)) if columns is None else list(columns)
    hide = rng.random((dataset.n, len(columns))) < fraction
    block = covariates[:, columns]
    block[hide] = np.nan
    covariates[:, columns] = block
    return Dataset.from_arrays(dataset.schema, dataset.times(), dataset.events(), dataset.exposure(), covariates)
