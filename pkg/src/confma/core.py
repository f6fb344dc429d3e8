"""Shared data model: samples, candidate model sets, weight schemes, reports."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np


class ConfmaError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(ConfmaError, ValueError):
    pass


class NonFiniteInput(ConfmaError, ValueError):
    pass


class TooFewRows(ConfmaError, ValueError):
    pass


class TooManyColumns(ConfmaError, ValueError):
    pass


class EmptyInput(ConfmaError, ValueError):
    pass


class Ordering(str, enum.Enum):
    EXCHANGEABLE = "exchangeable"
    TIME_SERIES = "timeseries"


@dataclass(frozen=True)
class Dataset:
    """Covariates ``X`` (n x p), outcome ``y`` (n,), and an ordering flag.

    For time series the covariates of row ``i`` are the lagged predictors
    used to forecast ``y[i]``.
    """

    X: np.ndarray
    y: np.ndarray
    ordering: Ordering = Ordering.EXCHANGEABLE
    column_names: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows], self.ordering, self.column_names)


def validate_dataset(X, y, ordering=Ordering.EXCHANGEABLE, column_names=None) -> Dataset:
    X = np.array(X, dtype=float)
    y = np.array(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows but y has length {y.shape[0]}")
    if X.shape[1] < 1:
        raise DimensionMismatch("X must have at least one column")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("X and y must contain only finite values")
    if X.shape[0] < 2:
        raise TooFewRows(f"need at least 2 rows, got {X.shape[0]}")
    if column_names is not None:
        column_names = tuple(column_names)
        if len(column_names) != X.shape[1]:
            raise DimensionMismatch("column_names length differs from column count")
    X.setflags(write=False)
    y.setflags(write=False)
    return Dataset(X, y, Ordering(ordering), column_names)


@dataclass(frozen=True)
class CandidateModel:
    columns: tuple[int, ...]

    def __post_init__(self):
        cols = tuple(sorted(int(c) for c in self.columns))
        if not cols:
            raise EmptyInput("a candidate model needs at least one column")
        if len(set(cols)) != len(cols):
            raise ValueError(f"duplicate columns in {self.columns}")
        if cols[0] < 0:
            raise ValueError("column indices must be non-negative")
        object.__setattr__(self, "columns", cols)

    @property
    def size(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class ModelSet:
    models: tuple[CandidateModel, ...]

    def __post_init__(self):
        models = tuple(m if isinstance(m, CandidateModel) else CandidateModel(tuple(m))
                       for m in self.models)
        if not models:
            raise EmptyInput("a model set needs at least one model")
        object.__setattr__(self, "models", models)

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def __getitem__(self, i) -> CandidateModel:
        return self.models[i]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([m.size for m in self.models], dtype=int)

    @property
    def max_column(self) -> int:
        return max(m.columns[-1] for m in self.models)

    def largest(self) -> int:
        """Index of the model with the most columns (first one on ties)."""
        return int(np.argmax(self.sizes))

    def check_columns(self, p: int) -> None:
        if self.max_column >= p:
            raise DimensionMismatch(
                f"model set references column {self.max_column} but X has {p} columns")


def all_subsets_model_set(p: int, intercept: bool = False) -> ModelSet:
    """All non-empty subsets of ``p`` columns, ordered by size then lexicographically.

    With ``intercept=True`` column 0 is treated as an intercept that every model
    contains, and the subsets range over columns ``1..p``.
    """
    if p < 1:
        raise ValueError("p must be at least 1")
    if p > 20:
        raise TooManyColumns(f"all-subsets enumeration capped at p=20, got {p}")
    offset = 1 if intercept else 0
    base = (0,) if intercept else ()
    models = []
    for k in range(1, p + 1):
        for combo in itertools.combinations(range(offset, p + offset), k):
            models.append(CandidateModel(base + combo))
    return ModelSet(tuple(models))


def nested_model_set(p_max: int, min_size: int = 2) -> ModelSet:
    """Nested models selecting the first ``k`` columns, ``k = min_size..p_max``.

    Column 0 is conventionally the intercept, so with the default
    ``min_size=2`` the smallest model is intercept plus one regressor.
    """
    if p_max < 2:
        raise ValueError("p_max must be at least 2")
    if not 1 <= min_size <= p_max:
        raise ValueError("min_size must lie in [1, p_max]")
    return ModelSet(tuple(CandidateModel(tuple(range(k))) for k in range(min_size, p_max + 1)))


def bivariate_model_set(p: int) -> ModelSet:
    """Intercept (column 0) plus one predictor at a time, for columns 1..p."""
    if p < 1:
        raise ValueError("p must be at least 1")
    return ModelSet(tuple(CandidateModel((0, j)) for j in range(1, p + 1)))


def hansen_model_count(n: int) -> int:
    """round(3 n^(1/3)), the number-of-models rule used in the simulation designs."""
    return int(round(3.0 * n ** (1.0 / 3.0)))


class SchemeKind(str, enum.Enum):
    EQUAL = "equal"
    REGRESSION = "regression"
    SAIC = "saic"
    SBIC = "sbic"
    MALLOWS = "mma"
    JACKKNIFE = "jma"
    FIXED = "fixed"


_SCHEME_ALIASES = {
    "equal": SchemeKind.EQUAL,
    "regression": SchemeKind.REGRESSION, "reg": SchemeKind.REGRESSION,
    "saic": SchemeKind.SAIC, "smoothed_aic": SchemeKind.SAIC,
    "sbic": SchemeKind.SBIC, "smoothed_bic": SchemeKind.SBIC,
    "mma": SchemeKind.MALLOWS, "mallows": SchemeKind.MALLOWS,
    "jma": SchemeKind.JACKKNIFE, "jackknife": SchemeKind.JACKKNIFE,
}


@dataclass(frozen=True)
class WeightScheme:
    """One of the model-averaging weight rules.

    ``weights`` is only used by ``FIXED``; fixed weights are applied as given,
    without normalisation.  ``sigma2_dof`` switches the Mallows variance
    estimate from RSS/n to RSS/(n - p).
    """

    kind: SchemeKind
    weights: tuple[float, ...] | None = None
    label: str | None = None
    sigma2_dof: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", SchemeKind(self.kind))
        if self.kind is SchemeKind.FIXED:
            if self.weights is None:
                raise ValueError("fixed scheme requires a weight vector")
            w = tuple(float(v) for v in self.weights)
            if not all(math.isfinite(v) for v in w):
                raise NonFiniteInput("fixed weights must be finite")
            object.__setattr__(self, "weights", w)

    @property
    def name(self) -> str:
        return self.label or self.kind.value

    @property
    def simplex(self) -> bool:
        return self.kind not in (SchemeKind.REGRESSION, SchemeKind.FIXED)

    @classmethod
    def parse(cls, text: str) -> "WeightScheme":
        key = text.strip().lower()
        if key in _SCHEME_ALIASES:
            return cls(_SCHEME_ALIASES[key])
        raise ValueError(f"unknown weight scheme {text!r}")

    @classmethod
    def fixed(cls, weights, label=None) -> "WeightScheme":
        return cls(SchemeKind.FIXED, tuple(weights), label=label)

    @classmethod
    def single_model(cls, M: int, index: int, label=None) -> "WeightScheme":
        w = [0.0] * M
        w[index] = 1.0
        return cls.fixed(w, label=label)


ALL_SCHEMES = tuple(WeightScheme(k) for k in (
    SchemeKind.EQUAL, SchemeKind.REGRESSION, SchemeKind.SAIC,
    SchemeKind.SBIC, SchemeKind.MALLOWS, SchemeKind.JACKKNIFE))


class Variant(str, enum.Enum):
    FULL = "full"
    SPLIT = "split"


@dataclass(frozen=True)
class ConformalConfig:
    alpha: float = 0.10
    grid_points: int = 200
    grid_expansion: float = 1.5
    adaptive: bool = False
    variant: Variant = Variant.FULL
    split_fraction: float = 0.5
    seed: int = 0
    variance_columns: tuple[int, ...] | None = None
    max_grid_expansions: int = 3

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.grid_points < 3:
            raise ValueError("grid_points must be at least 3")
        if not self.grid_expansion > 0:
            raise ValueError("grid_expansion must be positive")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError("split_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class FittedEnsemble:
    coefficients: tuple[np.ndarray, ...]
    weights: np.ndarray
    fitted_matrix: np.ndarray
    averaged_fit: np.ndarray
    residuals: np.ndarray


@dataclass(frozen=True)
class IntervalReport:
    lower: float
    upper: float
    point: float
    accepted_count: int
    contiguous: bool
    grid_lo: float
    grid_hi: float
    unbounded: bool = False
    grid_expansions: int = 0
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("lower", "upper", "point", "grid_lo", "grid_hi"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "accepted_count", int(self.accepted_count))
        object.__setattr__(self, "contiguous", bool(self.contiguous))
        if self.lower > self.upper:
            raise ValueError("interval lower endpoint exceeds upper")
        if self.grid_lo > self.lower or self.upper > self.grid_hi:
            raise ValueError("interval extends beyond its grid")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        if self.unbounded:
            return True
        return self.lower <= value <= self.upper

    def as_dict(self) -> dict:
        return {
            "lower": self.lower, "upper": self.upper, "point": self.point,
            "accepted_count": self.accepted_count, "contiguous": self.contiguous,
            "grid_lo": self.grid_lo, "grid_hi": self.grid_hi,
            "unbounded": self.unbounded, "grid_expansions": self.grid_expansions,
        }
