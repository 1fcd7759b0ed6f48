"""Dataset schema, CSV ingestion, standardization, folds and generators.

CSV files are RFC-4180 with a header row.  Interval endpoint columns
accept the sentinels ``-inf`` / ``+inf`` (case-insensitive); everything
else must be finite.  Bad cells reject the whole load with the offending
line number.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .likelihood import Discrete, Exact, Interval, Outcome, from_survival

_SQRT2 = math.sqrt(2.0)


class DataError(Exception):
    """Problem with user-supplied data."""


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class OutcomeSpec:
    kind: str                 # continuous | ordinal | survival | interval
    col: str = ""
    levels: int = 0
    time_col: str = ""
    status_col: str = ""
    lo_col: str = ""
    hi_col: str = ""

    def __post_init__(self):
        if self.kind == "continuous":
            need = self.col
        elif self.kind == "ordinal":
            need = self.col and self.levels >= 2
        elif self.kind == "survival":
            need = self.time_col and self.status_col
        elif self.kind == "interval":
            need = self.lo_col and self.hi_col
        else:
            raise ValueError(f"unknown outcome kind {self.kind!r}")
        if not need:
            raise ValueError(f"incomplete outcome spec for kind {self.kind!r}")

    def columns(self) -> list[str]:
        return {"continuous": [self.col], "ordinal": [self.col],
                "survival": [self.time_col, self.status_col],
                "interval": [self.lo_col, self.hi_col]}[self.kind]

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for k in ("col", "time_col", "status_col", "lo_col", "hi_col"):
            v = getattr(self, k)
            if v:
                d[k] = v
        if self.kind == "ordinal":
            d["levels"] = self.levels
        return d

    @staticmethod
    def from_dict(d: dict) -> "OutcomeSpec":
        return OutcomeSpec(d["kind"], d.get("col", ""), d.get("levels", 0),
                           d.get("time_col", ""), d.get("status_col", ""),
                           d.get("lo_col", ""), d.get("hi_col", ""))


@dataclass
class DatasetSchema:
    features: list[str]
    outcome: OutcomeSpec

    def to_dict(self) -> dict:
        return {"features": list(self.features),
                "outcome": self.outcome.to_dict()}

    @staticmethod
    def from_dict(d: dict) -> "DatasetSchema":
        return DatasetSchema(list(d["features"]),
                             OutcomeSpec.from_dict(d["outcome"]))


@dataclass
class Dataset:
    schema: DatasetSchema
    x: np.ndarray                  # (n, p) raw feature values
    outcomes: list[Outcome]

    @property
    def n(self) -> int:
        return len(self.outcomes)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.schema, self.x[idx],
                       [self.outcomes[i] for i in idx])


@dataclass
class Standardizer:
    """Per-feature z-scoring, frozen at training time and stored with the
    model so prediction uses the exact same affine map."""

    mean: np.ndarray
    std: np.ndarray
    y_domain: Optional[tuple[float, float]] = None

    @staticmethod
    def fit(x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=float)
        mean = x.mean(axis=0) if x.size else np.zeros(x.shape[1])
        std = x.std(axis=0) if x.size else np.ones(x.shape[1])
        std = np.where(std < 1e-12, 1.0, std)
        return Standardizer(mean, std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def inverse(self, x_std: np.ndarray) -> np.ndarray:
        return np.asarray(x_std, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std],
                "y_domain": None if self.y_domain is None
                            else list(self.y_domain)}

    @staticmethod
    def from_dict(d: dict) -> "Standardizer":
        s = Standardizer(np.asarray(d["mean"], dtype=float),
                         np.asarray(d["std"], dtype=float))
        if d.get("y_domain") is not None:
            s.y_domain = tuple(d["y_domain"])
        return s


def _parse_float(cell: str, line: int, col: str,
                 allow_inf: bool = False) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(line, f"cannot parse {cell!r} in column {col!r}") \
            from None
    if not allow_inf and not math.isfinite(v):
        raise ParseError(line, f"non-finite value {cell!r} in column {col!r}")
    if math.isnan(v):
        raise ParseError(line, f"NaN in column {col!r}")
    return v


def _parse_outcome(row: dict, spec: OutcomeSpec, line: int) -> Outcome:
    if spec.kind == "continuous":
        return Exact(_parse_float(row[spec.col], line, spec.col))
    if spec.kind == "ordinal":
        cell = row[spec.col].strip()
        try:
            k = int(cell)
        except ValueError:
            raise ParseError(line, f"ordinal level {cell!r} is not an "
                                   f"integer") from None
        if not 1 <= k <= spec.levels:
            raise ParseError(line, f"ordinal level {k} outside "
                                   f"1..{spec.levels}")
        return Discrete(k)
    if spec.kind == "survival":
        t = _parse_float(row[spec.time_col], line, spec.time_col)
        cell = row[spec.status_col].strip()
        if cell not in ("0", "1"):
            raise ParseError(line, f"survival status {cell!r} must be 0 or 1")
        return from_survival(t, int(cell))
    lo = _parse_float(row[spec.lo_col], line, spec.lo_col, allow_inf=True)
    hi = _parse_float(row[spec.hi_col], line, spec.hi_col, allow_inf=True)
    if not lo < hi:
        raise ParseError(line, f"empty interval [{lo}, {hi}]")
    return Interval(lo, hi)


def load_csv(path, schema: DatasetSchema) -> Dataset:
    """Read a typed dataset; any malformed cell aborts with its line."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MissingColumn("file has no header row")
        have = set(reader.fieldnames)
        needed = list(schema.features) + schema.outcome.columns()
        missing = [c for c in needed if c not in have]
        if missing:
            raise MissingColumn(f"missing column(s) {missing} in {path}")
        rows: list[list[float]] = []
        outcomes: list[Outcome] = []
        for i, row in enumerate(reader):
            line = i + 2  # header is line 1
            if any(row.get(c) is None for c in needed):
                raise ParseError(line, "short row")
            rows.append([_parse_float(row[c], line, c)
                         for c in schema.features])
            outcomes.append(_parse_outcome(row, schema.outcome, line))
    x = np.asarray(rows, dtype=float) if rows \
        else np.empty((0, len(schema.features)))
    return Dataset(schema, x, outcomes)


# -- column transforms used by the dataset presets ----------------------------

def apply_transforms(dataset: Dataset,
                     transforms: Iterable[tuple[str, str]]) -> Dataset:
    """Apply named column transforms ("log", "logp1", "sub_min") to feature
    or continuous-outcome columns, returning a new dataset."""
    x = dataset.x.copy()
    outcomes = list(dataset.outcomes)
    schema = dataset.schema
    for name, col in transforms:
        if name not in ("log", "logp1", "sub_min"):
            raise DataError(f"unknown transform {name!r}")
        if col in schema.features:
            j = schema.features.index(col)
            x[:, j] = _transform_values(name, x[:, j])
        elif schema.outcome.kind == "continuous" and col == schema.outcome.col:
            ys = np.array([o.y for o in outcomes])
            outcomes = [Exact(v) for v in _transform_values(name, ys)]
        else:
            raise DataError(f"transform column {col!r} not in schema")
    return Dataset(schema, x, outcomes)


def _transform_values(name: str, v: np.ndarray) -> np.ndarray:
    if name == "log":
        if np.any(v <= 0):
            raise DataError("log transform needs positive values")
        return np.log(v)
    if name == "logp1":
        if np.any(v <= -1):
            raise DataError("logp1 transform needs values > -1")
        return np.log1p(v)
    return v - v.min()


def kfold(dataset_or_n, k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic shuffled k-fold split: disjoint test folds covering
    all rows, sizes differing by at most one."""
    n = dataset_or_n if isinstance(dataset_or_n, int) else dataset_or_n.n
    if k < 1 or k > n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i in range(k):
        test = np.sort(folds[i])
        train = np.sort(np.concatenate([folds[j] for j in range(k) if j != i])) \
            if k > 1 else test.copy()
        out.append((train, test))
    return out


# -- synthetic generator with a closed-form density oracle --------------------
#
# Reference distribution at x=0: the equal-weight normal mixture
# 0.5 N(-2,1) + 0.5 N(2,1).  Location exp(1 - exp(-x)) - 1 and scale
# sqrt(exp(x)) act on a standard-logistic latent variable, so mu(0)=0 and
# sigma(0)=1.

def example2_mu(x: float) -> float:
    return math.exp(1.0 - math.exp(-x)) - 1.0


def example2_sigma(x: float) -> float:
    return math.sqrt(math.exp(x))


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / _SQRT2))


def _norm_log_pdf(z: float) -> float:
    return -0.5 * z * z - 0.5 * math.log(2.0 * math.pi)


def _mix_cdf(y: float) -> float:
    return 0.5 * _norm_cdf(y + 2.0) + 0.5 * _norm_cdf(y - 2.0)


def _mix_log_pdf(y: float) -> float:
    a = _norm_log_pdf(y + 2.0)
    b = _norm_log_pdf(y - 2.0)
    m = max(a, b)
    return m + math.log(0.5 * math.exp(a - m) + 0.5 * math.exp(b - m))


def _mix_quantile(u: float, tol: float = 1e-10) -> float:
    lo, hi = -20.0, 20.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _mix_cdf(mid) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _logistic_log_pdf(z: float) -> float:
    sp = z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))
    return z - 2.0 * sp


def _logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def example2_schema() -> DatasetSchema:
    return DatasetSchema(["x"], OutcomeSpec("continuous", col="y"))


def gen_example2(n: int, seed: int = 0, x_low: float = -1.0,
                 x_high: float = 1.0) -> Dataset:
    """Draw (x, y) pairs: x uniform, y through the location-scale map of
    the logistic latent variable into the mixture reference."""
    if n < 1:
        raise ValueError("need n >= 1")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(x_low, x_high, size=n)
    us = rng.uniform(0.0, 1.0, size=n)
    outcomes = []
    for x, u in zip(xs, us):
        eps = _logit(float(u))
        z = example2_sigma(float(x)) * eps + example2_mu(float(x))
        y = _mix_quantile(1.0 / (1.0 + math.exp(-z)))
        outcomes.append(Exact(y))
    return Dataset(example2_schema(), xs.reshape(-1, 1), outcomes)


def oracle_log_density(y: float, x: float) -> float:
    """Closed-form conditional log-density of the generator via the
    change of variables through the latent logistic scale."""
    u = _mix_cdf(y)
    u = min(max(u, 1e-300), 1.0 - 1e-16)
    z = _logit(u)
    mu, sigma = example2_mu(x), example2_sigma(x)
    return (_logistic_log_pdf((z - mu) / sigma) - math.log(sigma)
            + _mix_log_pdf(y) - _logistic_log_pdf(z))


def oracle_density(y: float, x: float) -> float:
    return math.exp(oracle_log_density(y, x))


def oracle_logscore(dataset: Dataset) -> float:
    """Mean log-density of the true generator on the given sample."""
    total = 0.0
    for row, o in zip(dataset.x, dataset.outcomes):
        total += oracle_log_density(o.y, float(row[0]))
    return total / dataset.n
