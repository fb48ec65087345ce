import json
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from base_measure import BaseMeasure
from survival_data import CovariateSchema

DRAW_FORMAT = "resqrl-draws"
DRAW_FORMAT_VERSION = 1
MODELS = ("EDPMM", "DPMM")


class DrawFileError(ValueError):
    """Raised when a posterior draw file is missing, malformed or mismatched."""


@dataclass(frozen=True, eq=False)
class SubclusterSnapshot:
    n: int
    omega_z: float
    pi: Tuple[float, ...]
    mu: Tuple[float, ...]
    tau2: Tuple[float, ...]


@dataclass(frozen=True, eq=False)
class ClusterSnapshot:
    n: int
    beta: Tuple[float, ...]
    sigma2: float
    subclusters: Tuple[SubclusterSnapshot, ...]


@dataclass(frozen=True, eq=False)
class PosteriorDraw:
    """One retained sample: occupied clusters, concentrations and the base measure."""

    model: str
    clusters: Tuple[ClusterSnapshot, ...]
    alpha_theta: float
    alpha_omega: float
    base: BaseMeasure
    n_subjects: int

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"Unknown model '{self.model}', expected one of {MODELS}")
        if not self.clusters:
            raise ValueError("A posterior draw needs at least one occupied cluster")
        total = 0
        for cluster in self.clusters:
            if cluster.n <= 0 or sum(s.n for s in cluster.subclusters) != cluster.n:
                raise ValueError("Subcluster counts must sum to their cluster count")
            if cluster.sigma2 <= 0:
                raise ValueError("Cluster residual variance must be positive")
            if self.model == "DPMM" and len(cluster.subclusters) != 1:
                raise ValueError("DPMM clusters carry exactly one covariate kernel")
            total += cluster.n
        if total != self.n_subjects:
            raise ValueError(f"Cluster counts sum to {total}, expected {self.n_subjects}")
        if self.alpha_theta < 0 or self.alpha_omega < 0:
            raise ValueError("Concentration parameters must be non-negative")

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @cached_property
    def cluster_counts(self) -> np.ndarray:
        return np.array([c.n for c in self.clusters], dtype=float)

    @cached_property
    def betas(self) -> np.ndarray:
        return np.array([c.beta for c in self.clusters], dtype=float)

    @cached_property
    def sigma2s(self) -> np.ndarray:
        return np.array([c.sigma2 for c in self.clusters], dtype=float)

    @cached_property
    def subcluster_owner(self) -> np.ndarray:
        return np.array([k for k, c in enumerate(self.clusters) for _ in c.subclusters], dtype=int)

    @cached_property
    def subcluster_counts(self) -> np.ndarray:
        return np.array([s.n for c in self.clusters for s in c.subclusters], dtype=float)

    @cached_property
    def subcluster_arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Stacked (omega_z, pi, mu, tau2) over all subclusters in cluster order."""
        subs = [s for c in self.clusters for s in c.subclusters]
        n_binary = len(subs[0].pi)
        n_continuous = len(subs[0].mu)
        omega_z = np.array([s.omega_z for s in subs], dtype=float)
        pi = np.array([s.pi for s in subs], dtype=float).reshape(len(subs), n_binary)
        mu = np.array([s.mu for s in subs], dtype=float).reshape(len(subs), n_continuous)
        tau2 = np.array([s.tau2 for s in subs], dtype=float).reshape(len(subs), n_continuous)
        return omega_z, pi, mu, tau2

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha_theta": self.alpha_theta,
            "alpha_omega": self.alpha_omega,
            "clusters": [
                {
                    "n": c.n,
                    "beta": list(c.beta),
                    "sigma2": c.sigma2,
                    "subclusters": [
                        {"n": s.n, "omega_z": s.omega_z, "pi": list(s.pi), "mu": list(s.mu), "tau2": list(s.tau2)}
                        for s in c.subclusters
                    ],
                }
                for c in self.clusters
            ],
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any], model: str, base: BaseMeasure, n_subjects: int) -> "PosteriorDraw":
        clusters = tuple(
            ClusterSnapshot(
                n=int(c["n"]),
                beta=tuple(float(v) for v in c["beta"]),
                sigma2=float(c["sigma2"]),
                subclusters=tuple(
                    SubclusterSnapshot(
                        n=int(s["n"]),
                        omega_z=float(s["omega_z"]),
                        pi=tuple(float(v) for v in s["pi"]),
                        mu=tuple(float(v) for v in s["mu"]),
                        tau2=tuple(float(v) for v in s["tau2"]),
                    )
                    for s in c["subclusters"]
                ),
            )
            for c in payload["clusters"]
        )
        return cls(model, clusters, float(payload["alpha_theta"]), float(payload["alpha_omega"]), base, n_subjects)


@dataclass(frozen=True)
class DrawFileHeader:
    model: str
    schema: CovariateSchema
    schema_hash: str
    base: BaseMeasure
    n_subjects: int


def write_draws(path: str, draws: Sequence[PosteriorDraw], schema: CovariateSchema) -> None:
    """Write draws as line-delimited JSON: one header line, then one line per draw."""
    if not draws:
        raise DrawFileError("No posterior draws to write")
    first = draws[0]
    header = {
        "format": DRAW_FORMAT,
        "version": DRAW_FORMAT_VERSION,
        "model": first.model,
        "schema": schema.to_dict(),
        "schema_hash": schema.schema_hash(),
        "n_subjects": first.n_subjects,
        "base": first.base.to_dict(),
    }
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for draw in draws:
            f.write(json.dumps(draw.to_dict(), sort_keys=True) + "\n")


def read_draws(path: str) -> Tuple[DrawFileHeader, List[PosteriorDraw]]:
    if not os.path.exists(path):
        raise DrawFileError(f"Draw file {path} not found")
    with open(path, "r", encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise DrawFileError(f"Draw file {path} is empty")

    try:
        raw = json.loads(lines[0])
        if raw.get("format") != DRAW_FORMAT or raw.get("version") != DRAW_FORMAT_VERSION:
            raise DrawFileError(f"{path} is not a version {DRAW_FORMAT_VERSION} draw file")
        schema = CovariateSchema.from_lists(raw["schema"]["binary"], raw["schema"]["continuous"])
        if schema.schema_hash() != raw["schema_hash"]:
            raise DrawFileError(f"{path}: schema hash does not match the recorded schema")
        header = DrawFileHeader(raw["model"], schema, raw["schema_hash"],
                                BaseMeasure.from_dict(raw["base"]), int(raw["n_subjects"]))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DrawFileError(f"{path}: malformed header ({exc})")

    draws = []
    for number, line in enumerate(lines[1:], 1):
        try:
            draws.append(PosteriorDraw.from_dict(json.loads(line), header.model, header.base, header.n_subjects))
        except (KeyError, TypeError, ValueError) as exc:
            raise DrawFileError(f"{path}: malformed draw {number} ({exc})")
    if not draws:
        raise DrawFileError(f"{path} contains no draws")
    return header, draws
