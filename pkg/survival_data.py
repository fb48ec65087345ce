import hashlib
import json
import os
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

BINARY = "binary"
CONTINUOUS = "continuous"
RESERVED_COLUMNS = ("time", "event", "exposure")


class SchemaError(ValueError):
    """Raised when a covariate schema is malformed."""


class DatasetParseError(ValueError):
    """Raised when a data file row cannot be parsed."""

    def __init__(self, message: str, row: Optional[int] = None):
        super().__init__(message)
        self.row = row


class DatasetValidationError(ValueError):
    """Raised when a parsed value violates the data model."""

    def __init__(self, message: str, field: Optional[str] = None, row: Optional[int] = None):
        super().__init__(message)
        self.field = field
        self.row = row


@dataclass(frozen=True)
class CovariateSchema:
    """Ordered covariate names with their kinds, binary block first."""

    names: Tuple[str, ...]
    kinds: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if len(self.names) != len(self.kinds):
            raise SchemaError("Schema needs one kind per covariate name")
        if len(set(self.names)) != len(self.names):
            raise SchemaError(f"Covariate names must be unique: {list(self.names)}")
        for name in self.names:
            if name in RESERVED_COLUMNS or not name:
                raise SchemaError(f"Invalid covariate name '{name}'")
        for kind in self.kinds:
            if kind not in (BINARY, CONTINUOUS):
                raise SchemaError(f"Unknown covariate kind '{kind}'")
        if list(self.kinds) != sorted(self.kinds):
            raise SchemaError("Binary covariates must be listed before continuous covariates")

    @classmethod
    def from_lists(cls, binary: Sequence[str], continuous: Sequence[str]) -> "CovariateSchema":
        binary = list(binary or [])
        continuous = list(continuous or [])
        return cls(tuple(binary + continuous), tuple([BINARY] * len(binary) + [CONTINUOUS] * len(continuous)))

    @property
    def binary_count(self) -> int:
        return self.kinds.count(BINARY)

    @property
    def continuous_count(self) -> int:
        return self.kinds.count(CONTINUOUS)

    @property
    def size(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        if name not in self.names:
            raise SchemaError(f"Unknown covariate '{name}'")
        return self.names.index(name)

    def schema_hash(self) -> str:
        """Stable digest of names and kinds, used to tag draw files."""
        payload = json.dumps({"names": list(self.names), "kinds": list(self.kinds)}, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_dict(self) -> Dict[str, List[str]]:
        return {
            "binary": list(self.names[:self.binary_count]),
            "continuous": list(self.names[self.binary_count:]),
        }


@dataclass(frozen=True)
class ObservedRecord:
    """One subject: follow-up time, event flag, exposure and covariates (None = missing)."""

    t: float
    d: int
    z: int
    x: Tuple[Optional[float], ...]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))
        if self.t is None or not np.isfinite(self.t) or self.t <= 0:
            raise DatasetValidationError(f"time must be positive, got {self.t}", field="time")
        if self.d not in (0, 1):
            raise DatasetValidationError(f"event must be 0 or 1, got {self.d}", field="event")
        if self.z not in (0, 1):
            raise DatasetValidationError(f"exposure must be 0 or 1, got {self.z}", field="exposure")

    def missing_count(self) -> int:
        return sum(1 for value in self.x if value is None)


class Dataset:
    """A validated cohort of observed records sharing one covariate schema."""

    def __init__(self, schema: CovariateSchema, records: Sequence[ObservedRecord]):
        self.schema = schema
        self.records: List[ObservedRecord] = list(records)
        if len(self.records) < 2:
            raise DatasetValidationError(f"A dataset needs at least 2 records, got {len(self.records)}")
        for row, record in enumerate(self.records, 1):
            _check_conformance(record, schema, row)
        self._times = np.array([r.t for r in self.records], dtype=float)
        self._events = np.array([r.d for r in self.records], dtype=int)
        self._exposure = np.array([r.z for r in self.records], dtype=int)
        self._covariates = np.array(
            [[np.nan if v is None else float(v) for v in r.x] for r in self.records], dtype=float
        ).reshape(len(self.records), schema.size)
        for array in (self._times, self._events, self._exposure, self._covariates):
            array.setflags(write=False)

    @classmethod
    def from_arrays(cls, schema: CovariateSchema, times, events, exposure, covariates) -> "Dataset":
        """Build a dataset from column arrays; NaN covariate entries become missing."""
        covariates = np.asarray(covariates, dtype=float).reshape(len(times), schema.size)
        records = []
        for row in range(len(times)):
            x = tuple(None if np.isnan(v) else float(v) for v in covariates[row])
            try:
                records.append(ObservedRecord(float(times[row]), int(events[row]), int(exposure[row]), x))
            except DatasetValidationError as exc:
                raise DatasetValidationError(f"Row {row + 1}: {exc}", field=exc.field, row=row + 1)
        return cls(schema, records)

    @property
    def n(self) -> int:
        return len(self.records)

    def times(self) -> np.ndarray:
        return self._times

    def events(self) -> np.ndarray:
        return self._events

    def exposure(self) -> np.ndarray:
        return self._exposure

    def covariate_matrix(self) -> np.ndarray:
        """N x p covariate matrix with NaN marking missing entries."""
        return self._covariates

    def missing_mask(self) -> np.ndarray:
        return np.isnan(self._covariates)

    def missing_count(self) -> int:
        return int(self.missing_mask().sum())

    def censoring_fraction(self) -> float:
        return float(1.0 - self._events.mean())

    def complete_case(self) -> "Dataset":
        keep = [r for r, row_missing in zip(self.records, self.missing_mask().any(axis=1)) if not row_missing]
        return Dataset(self.schema, keep)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"time": self._times, "event": self._events, "exposure": self._exposure})
        for j, (name, kind) in enumerate(zip(self.schema.names, self.schema.kinds)):
            column = self._covariates[:, j]
            frame[name] = pd.array(column, dtype="Int64") if kind == BINARY else column
        return frame


def _check_conformance(record: ObservedRecord, schema: CovariateSchema, row: int) -> None:
    if len(record.x) != schema.size:
        raise DatasetValidationError(
            f"Row {row}: expected {schema.size} covariates, got {len(record.x)}", field="covariates", row=row
        )
    for name, kind, value in zip(schema.names, schema.kinds, record.x):
        if value is None:
            continue
        if not np.isfinite(value):
            raise DatasetValidationError(f"Row {row}: {name} is not finite", field=name, row=row)
        if kind == BINARY and value not in (0.0, 1.0):
            raise DatasetValidationError(f"Row {row}: binary covariate {name} must be 0 or 1, got {value}",
                                         field=name, row=row)


def _parse_number(token: str, field: str, row: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise DatasetParseError(f"Row {row}: cannot parse {field} value '{token}'", row=row)


def _parse_flag(token: str, field: str, row: int, missing: set) -> int:
    if token in missing:
        raise DatasetValidationError(f"Row {row}: {field} is missing", field=field, row=row)
    value = _parse_number(token, field, row)
    if value not in (0.0, 1.0):
        raise DatasetValidationError(f"Row {row}: {field} must be 0 or 1, got {token}", field=field, row=row)
    return int(value)


def load_dataset(path: str, schema: CovariateSchema, missing_marker: str = "NA") -> Dataset:
    """Load a comma-separated file with columns time,event,exposure,<covariates>."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Dataset file {path} not found")

    try:
        # the header line fixes the field count; longer rows fail to tokenize
        frame = pd.read_csv(path, header=None, dtype=str, keep_default_na=False, skip_blank_lines=True,
                            encoding="utf-8")
    except pd.errors.ParserError as exc:
        line = re.search(r"line (\d+)", str(exc))
        row = int(line.group(1)) - 1 if line else None
        raise DatasetParseError(f"Malformed data file {path} at row {row}: {exc}", row=row)
    except pd.errors.EmptyDataError:
        raise DatasetParseError(f"Data file {path} is empty")

    expected = list(RESERVED_COLUMNS) + list(schema.names)
    header = [str(c).strip() for c in frame.iloc[0]]
    frame = frame.iloc[1:]
    if header != expected:
        raise DatasetParseError(f"Header must be {','.join(expected)}, got {','.join(header)}", row=0)

    missing = {missing_marker, ""}
    records = []
    for row, values in enumerate(frame.itertuples(index=False, name=None), 1):
        if any(not isinstance(v, str) for v in values):
            raise DatasetParseError(f"Row {row}: expected {len(expected)} fields", row=row)
        tokens = [v.strip() for v in values]
        if tokens[0] in missing:
            raise DatasetValidationError(f"Row {row}: time is missing", field="time", row=row)
        t = _parse_number(tokens[0], "time", row)
        if not np.isfinite(t) or t <= 0:
            raise DatasetValidationError(f"Row {row}: time must be positive, got {tokens[0]}", field="time", row=row)
        d = _parse_flag(tokens[1], "event", row, missing)
        z = _parse_flag(tokens[2], "exposure", row, missing)
        x = tuple(None if tok in missing else _parse_number(tok, name, row)
                  for tok, name in zip(tokens[3:], schema.names))
        record = ObservedRecord(t, d, z, x)
        _check_conformance(record, schema, row)
        records.append(record)

    return Dataset(schema, records)


def save_dataset(dataset: Dataset, path: str, missing_marker: str = "NA") -> None:
    """Write a dataset in the same delimited format ``load_dataset`` reads."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    dataset.to_frame().to_csv(path, index=False, na_rep=missing_marker, encoding="utf-8")


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous step survival curve, equal to 1 before the first knot."""

    times: np.ndarray
    values: np.ndarray
    at_risk: np.ndarray

    def evaluate(self, t) -> np.ndarray:
        position = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        padded = np.concatenate([[1.0], self.values])
        return padded[position + 1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"time": self.times, "survival": self.values, "at_risk": self.at_risk})


def kaplan_meier(records: Sequence[Tuple[float, int]]) -> StepSurvival:
    """Product-limit estimate; at tied times events are counted before censorings."""
    if len(records) == 0:
        raise ValueError("Kaplan-Meier needs at least one record")
    t = np.array([r[0] for r in records], dtype=float)
    d = np.array([r[1] for r in records], dtype=int)
    if np.any(t <= 0):
        raise ValueError("Kaplan-Meier times must be positive")

    knots, inverse = np.unique(t, return_inverse=True)
    deaths = np.bincount(inverse, weights=d, minlength=knots.size)
    leaving = np.bincount(inverse, minlength=knots.size)
    at_risk = len(t) - np.concatenate([[0], np.cumsum(leaving)[:-1]])
    values = np.cumprod(1.0 - deaths / at_risk)
    return StepSurvival(knots, np.clip(values, 0.0, 1.0), at_risk.astype(int))


def kaplan_meier_by_exposure(dataset: Dataset) -> Dict[int, StepSurvival]:
    """Separate product-limit curves for each exposure arm present in the data."""
    curves = {}
    for arm in (0, 1):
        selected = [(r.t, r.d) for r in dataset.records if r.z == arm]
        if selected:
            curves[arm] = kaplan_meier(selected)
    return curves
