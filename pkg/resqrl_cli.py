#!/usr/bin/env python3
"""
Command-line interface for residual-life quantile analyses.

Subcommands:
    fit          run the enriched (or single-layer) mixture sampler and save draws
    estimate     posterior residual-life quantile contrasts from saved draws
    sensitivity  the same contrasts over a grid of log-time shifts (psi0, psi1)
    km           Kaplan-Meier curves of a dataset
    simulate     replicate study with bias, RMSE and coverage
"""

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy
import yaml

from base_measure import BaseMeasure
from config_manager import ConfigError, ConfigManager
from distributions import make_rng
from dpmm_comparator import run_chain_dpmm
from edpmm_sampler import MCMCConfig, run_chain
from g_computation import EstimandRequest, marginal_survival_curve, osqc_grid
from posterior_draws import DrawFileError, read_draws, write_draws
from run_logger import setup_logger
from simulation import (PosteriorOSQCEstimator, ScenarioConfig, build_truth_table, run_replicates,
                        ORACLE_BOOTSTRAP)
from survival_data import (CovariateSchema, DatasetParseError, DatasetValidationError, SchemaError,
                           kaplan_meier, kaplan_meier_by_exposure, load_dataset)

logger = logging.getLogger(__name__)

INPUT_ERRORS = (ConfigError, SchemaError, DatasetParseError, DatasetValidationError, DrawFileError,
                FileNotFoundError)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="YAML run configuration")
    common.add_argument("--seed", type=int, default=None, help="Overrides the config seed and RESQRL_SEED")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="Override one configuration key")
    common.add_argument("--output-dir", default=None, help="Directory for result files")
    common.add_argument("--workers", type=int, default=None, help="Worker processes")
    common.add_argument("--log-level", default="INFO", help="DEBUG, INFO, WARNING or ERROR")

    parser = argparse.ArgumentParser(description="Bayesian nonparametric residual-life quantile contrasts.")
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", parents=[common], help="Fit the mixture model and save posterior draws")
    fit.add_argument("--data", default=None, help="Dataset CSV (time,event,exposure,covariates)")
    fit.add_argument("--draws", default=None, help="Output draw file")
    fit.add_argument("--model", choices=["edpmm", "dpmm"], default="edpmm")

    for name, text in (("estimate", "Residual-life quantile contrasts from saved draws"),
                       ("sensitivity", "Contrasts over the psi shift grid")):
        sub = commands.add_parser(name, parents=[common], help=text)
        sub.add_argument("--draws", default=None, help="Draw file written by 'fit'")

    km = commands.add_parser("km", parents=[common], help="Kaplan-Meier curves")
    km.add_argument("--data", default=None, help="Dataset CSV")
    km.add_argument("--by-exposure", action="store_true", help="Also write one curve per exposure arm")

    simulate = commands.add_parser("simulate", parents=[common], help="Simulation study")
    simulate.add_argument("--model", choices=["edpmm", "dpmm"], default=None)

    return parser.parse_args(argv)


def apply_cli_overrides(manager: ConfigManager, args: argparse.Namespace) -> None:
    manager.apply_overrides(args.overrides)
    if args.output_dir is not None:
        manager.set_setting(args.output_dir, "output_directory")
    if args.workers is not None:
        manager.set_setting(args.workers, "workers")
    if getattr(args, "data", None):
        manager.set_setting(args.data, "dataset", "path")
    if getattr(args, "draws", None):
        manager.set_setting(args.draws, "draws", "path")
    if getattr(args, "model", None) and args.command == "simulate":
        manager.set_setting(args.model.upper(), "simulation", "model")


def package_versions() -> Dict[str, str]:
    return {"numpy": np.__version__, "pandas": pd.__version__, "pyyaml": yaml.__version__,
            "scipy": scipy.__version__, "python": sys.version.split()[0]}


def write_manifest(path: str, command: str, manager: ConfigManager, **details: Any) -> None:
    """Manifest with the effective config, seed and library versions; no timestamps."""
    manifest = {"command": command, "seed": manager.get_setting("seed"), "versions": package_versions(),
                "config": manager.config}
    manifest.update(details)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(manifest, f, default_flow_style=False, sort_keys=True)


def output_path(manager: ConfigManager, name: str) -> str:
    directory = manager.get_setting("output_directory") or "."
    os.makedirs(directory, exist_ok=True)
    return os.path.join(directory, name)


def schema_from_config(manager: ConfigManager) -> CovariateSchema:
    return CovariateSchema.from_lists(manager.get_setting("dataset", "schema", "binary") or [],
                                      manager.get_setting("dataset", "schema", "continuous") or [])


def dataset_from_config(manager: ConfigManager):
    path = manager.get_setting("dataset", "path")
    if not path:
        raise ConfigError("No dataset path: pass --data or set dataset.path")
    return load_dataset(path, schema_from_config(manager), manager.get_setting("dataset", "missing_marker") or "NA")


def mcmc_from_config(manager: ConfigManager, seed: int) -> MCMCConfig:
    section = manager.get_setting("mcmc") or {}
    censoring = section.get("informative_censoring") or {}
    try:
        return MCMCConfig(seed=seed, burn_in=int(section["burn_in"]), iterations=int(section["iterations"]),
                          thin=int(section["thin"]), k_new=int(section["k_new"]),
                          informative_censoring=(float(censoring.get("phi", 0.0)), float(censoring.get("eta", 1.0))))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid mcmc settings: {exc}")


def prior_overrides(manager: ConfigManager) -> Dict[str, Any]:
    section = manager.get_setting("prior") or {}
    return {k: v for k, v in section.items() if v is not None}


def subgroups_from_config(manager: ConfigManager, schema: CovariateSchema) -> List[Tuple[Tuple[int, float], ...]]:
    """The whole population first, then each configured subgroup as (index, value) pairs."""
    subgroups = [()]
    for entry in manager.get_setting("estimand", "subgroups") or []:
        if not isinstance(entry, dict) or not entry:
            raise ConfigError(f"Each subgroup must map covariate names to values, got {entry!r}")
        subgroups.append(tuple(sorted((schema.index_of(name), float(value)) for name, value in entry.items())))
    return subgroups


def estimand_requests(manager: ConfigManager, schema: CovariateSchema,
                      psi_grid: Sequence[Sequence[float]]) -> List[EstimandRequest]:
    section = manager.get_setting("estimand") or {}
    try:
        return [
            EstimandRequest(nu=float(nu), rho=float(rho), subgroup=subgroup, psi=(float(psi[0]), float(psi[1])),
                            cohort_size=int(section.get("cohort_size", 1000)),
                            cri_level=float(section.get("cri_level", 0.99)),
                            integrand=str(section.get("integrand", "mixture")))
            for subgroup in subgroups_from_config(manager, schema)
            for psi in psi_grid
            for nu in section.get("nu_grid") or []
            for rho in section.get("rho_grid") or []
        ]
    except (TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"Invalid estimand settings: {exc}")


def load_draws_checked(manager: ConfigManager):
    path = manager.get_setting("draws", "path")
    if not path:
        raise ConfigError("No draw file: pass --draws or set draws.path")
    header, draws = read_draws(path)
    configured = schema_from_config(manager)
    if configured.size and configured.schema_hash() != header.schema_hash:
        raise DrawFileError(f"Draw file {path} was fitted with schema {header.schema.to_dict()}, "
                            f"config declares {configured.to_dict()}")
    return header, draws


def cmd_fit(manager: ConfigManager, args: argparse.Namespace) -> int:
    seed = manager.get_setting("seed")
    data = dataset_from_config(manager)
    cfg = mcmc_from_config(manager, seed)
    model = args.model.upper()
    base = BaseMeasure.from_dataset(data, **prior_overrides(manager))
    print(f"Fitting {model}: N={data.n}, censored {data.censoring_fraction():.1%}, "
          f"{data.missing_count()} missing covariate entries")
    fit = run_chain_dpmm if model == "DPMM" else run_chain
    draws = fit(data, base, cfg)

    draw_path = manager.get_setting("draws", "path") or output_path(manager, "draws.jsonl")
    write_draws(draw_path, draws, data.schema)
    write_manifest(output_path(manager, "fit_manifest.yaml"), "fit", manager, model=model,
                   n_subjects=data.n, n_draws=len(draws), draw_file=draw_path,
                   schema_hash=data.schema.schema_hash(), imputed_entries=data.missing_count(),
                   censoring_fraction=float(data.censoring_fraction()))
    print(f"Wrote {len(draws)} draws to {draw_path}")
    return 0


def _results_frames(results) -> Tuple[pd.DataFrame, pd.DataFrame]:
    summary = pd.DataFrame([r.to_record() for r in results])
    per_draw = []
    for r in results:
        record = r.to_record()
        for d in range(r.n_draws):
            per_draw.append({"nu": record["nu"], "rho": record["rho"], "subgroup": record["subgroup"],
                             "psi0": record["psi0"], "psi1": record["psi1"], "draw": d,
                             "y1": r.y1[d], "y0": r.y0[d], "delta": r.delta[d]})
    return summary, pd.DataFrame(per_draw)


def cmd_estimate(manager: ConfigManager, args: argparse.Namespace) -> int:
    header, draws = load_draws_checked(manager)
    seed = manager.get_setting("seed")
    workers = manager.get_setting("workers")
    requests = estimand_requests(manager, header.schema, [(0.0, 0.0)])
    results = osqc_grid(draws, requests, seed, workers=workers)
    summary, per_draw = _results_frames(results)
    summary.to_csv(output_path(manager, "osqc.csv"), index=False)
    per_draw.to_csv(output_path(manager, "osqc_draws.csv"), index=False)

    files = ["osqc.csv", "osqc_draws.csv"]
    times = manager.get_setting("estimand", "curve_times") or []
    if times:
        section = manager.get_setting("estimand")
        curves = [marginal_survival_curve(draws, times, seed, subgroup=subgroup,
                                          cohort_size=int(section.get("cohort_size", 1000)),
                                          cri_level=float(section.get("cri_level", 0.99)),
                                          integrand=str(section.get("integrand", "mixture")), workers=workers)
                  for subgroup in subgroups_from_config(manager, header.schema)]
        pd.concat(curves, ignore_index=True).to_csv(output_path(manager, "survival_curves.csv"), index=False)
        files.append("survival_curves.csv")

    write_manifest(output_path(manager, "estimate_manifest.yaml"), "estimate", manager, model=header.model,
                   n_draws=len(draws), schema_hash=header.schema_hash, outputs=files)
    for record in summary.to_dict("records"):
        print(f"nu={record['nu']:g} rho={record['rho']:g} [{record['subgroup']}]: "
              f"{record['delta_mean']:.3f} ({record['delta_lower']:.3f}, {record['delta_upper']:.3f})")
    return 0


def cmd_sensitivity(manager: ConfigManager, args: argparse.Namespace) -> int:
    header, draws = load_draws_checked(manager)
    psi_grid = manager.get_setting("sensitivity", "psi_grid") or [(0.0, 0.0)]
    if any(not isinstance(psi, (list, tuple)) or len(psi) != 2 for psi in psi_grid):
        raise ConfigError("sensitivity.psi_grid must be a list of [psi0, psi1] pairs")
    requests = estimand_requests(manager, header.schema, psi_grid)
    results = osqc_grid(draws, requests, manager.get_setting("seed"), workers=manager.get_setting("workers"))
    summary, _ = _results_frames(results)
    summary.to_csv(output_path(manager, "sensitivity.csv"), index=False)
    write_manifest(output_path(manager, "sensitivity_manifest.yaml"), "sensitivity", manager,
                   model=header.model, n_draws=len(draws), schema_hash=header.schema_hash,
                   psi_cells=len(psi_grid), outputs=["sensitivity.csv"])
    print(f"Wrote {len(summary)} sensitivity rows over {len(psi_grid)} psi cells")
    return 0


def cmd_km(manager: ConfigManager, args: argparse.Namespace) -> int:
    data = dataset_from_config(manager)
    frames = []
    pooled = kaplan_meier([(r.t, r.d) for r in data.records]).to_frame()
    pooled.insert(0, "arm", "all")
    frames.append(pooled)
    if args.by_exposure:
        for arm, curve in kaplan_meier_by_exposure(data).items():
            frame = curve.to_frame()
            frame.insert(0, "arm", str(arm))
            frames.append(frame)
    pd.concat(frames, ignore_index=True).to_csv(output_path(manager, "km.csv"), index=False)
    write_manifest(output_path(manager, "km_manifest.yaml"), "km", manager, n_subjects=data.n,
                   schema_hash=data.schema.schema_hash(), by_exposure=bool(args.by_exposure), outputs=["km.csv"])
    print(f"Wrote Kaplan-Meier curve{'s' if args.by_exposure else ''} for {data.n} subjects")
    return 0


def scenario_from_config(manager: ConfigManager, seed: int) -> ScenarioConfig:
    section = manager.get_setting("simulation") or {}
    settings = {
        "n": section.get("n"),
        "replicates": section.get("replicates"),
        "model": section.get("model"),
        "cri_level": section.get("cri_level"),
        "truth_draws": section.get("truth_draws"),
        "nu_grid": section.get("nu_grid"),
        "rho_grid": section.get("rho_grid"),
        "seed": seed,
    }
    try:
        if section.get("c_star") is not None:
            settings["c_star"] = float(section["c_star"])
        if section.get("scenario") is not None:
            return ScenarioConfig.from_preset(int(section["scenario"]), **settings)
        if "c_star" not in settings:
            raise ConfigError("simulation needs a scenario preset or c_star")
        return ScenarioConfig(**{k: v for k, v in settings.items() if v is not None})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid simulation settings: {exc}")


def cmd_simulate(manager: ConfigManager, args: argparse.Namespace) -> int:
    seed = manager.get_setting("seed")
    scenario = scenario_from_config(manager, seed)
    cfg = mcmc_from_config(manager, seed)
    estimand = manager.get_setting("estimand") or {}
    estimator = PosteriorOSQCEstimator(scenario.model, cfg, cohort_size=int(estimand.get("cohort_size", 1000)),
                                       cri_level=scenario.cri_level,
                                       integrand=str(estimand.get("integrand", "mixture")),
                                       prior_overrides=prior_overrides(manager))
    bootstrap = int(manager.get_setting("simulation", "truth_bootstrap") or ORACLE_BOOTSTRAP)
    truth = build_truth_table(scenario.nu_grid, scenario.rho_grid, scenario.truth_draws,
                              make_rng(seed, "truth"), bootstrap=bootstrap)
    print(f"Simulating c*={scenario.c_star}: {scenario.replicates} replicates of N={scenario.n}, {scenario.model}")
    metrics = run_replicates(scenario, estimator=estimator, truth=truth, workers=manager.get_setting("workers"))

    metrics.write_csv(output_path(manager, "metrics.csv"))
    truth.to_frame().to_csv(output_path(manager, "truth.csv"), index=False, float_format="%.6f")
    write_manifest(output_path(manager, "simulate_manifest.yaml"), "simulate", manager,
                   scenario=scenario.scenario, c_star=scenario.c_star, failures=metrics.failures,
                   outputs=["metrics.csv", "truth.csv"])
    print(metrics.to_frame().to_string(index=False))
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "estimate": cmd_estimate,
    "sensitivity": cmd_sensitivity,
    "km": cmd_km,
    "simulate": cmd_simulate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    try:
        manager = ConfigManager(args.config)
        apply_cli_overrides(manager, args)
        setup_logger(args.log_level, manager.get_setting("log_file"))
        manager.resolve_workers()
        if args.command != "km":
            manager.resolve_seed(args.seed)
        return COMMANDS[args.command](manager, args)
    except INPUT_ERRORS as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        logger.debug("Command failed", exc_info=True)
        print(f"Error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
