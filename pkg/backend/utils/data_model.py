"""
Survival data types and CSV ingestion.

A dataset is a set of triplets (x, y, delta): a feature row, an observed time and an
event indicator (True = event observed, False = right censored). Categorical features
are stored as level indices; `dummy_encode` expands them for kernels that need numbers.
"""

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.errors import DataValidationError, SchemaError

logger = logging.getLogger(__name__)

CONTINUOUS = 'continuous'
CATEGORICAL = 'categorical'


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str = CONTINUOUS
    levels: Tuple[str, ...] = ()
    observed_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise SchemaError(f"Feature '{self.name}' has unknown kind '{self.kind}'")
        object.__setattr__(self, 'levels', tuple(str(level) for level in self.levels))
        if self.kind == CATEGORICAL and not self.levels:
            raise SchemaError(f"Categorical feature '{self.name}' needs at least one level")
        if self.observed_range is not None:
            lo, hi = (float(v) for v in self.observed_range)
            if lo > hi:
                raise SchemaError(f"Feature '{self.name}' has min {lo} > max {hi}")
            object.__setattr__(self, 'observed_range', (lo, hi))

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'name': self.name, 'kind': self.kind}
        if self.is_categorical:
            data['levels'] = list(self.levels)
        if self.observed_range is not None:
            data['observed_range'] = list(self.observed_range)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FeatureSpec':
        rng = data.get('observed_range')
        return cls(
            name=str(data['name']),
            kind=str(data.get('kind', CONTINUOUS)),
            levels=tuple(data.get('levels', ())),
            observed_range=tuple(rng) if rng is not None else None,
        )


def _frozen(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    X: np.ndarray
    y: np.ndarray
    delta: np.ndarray
    specs: Tuple[FeatureSpec, ...] = field(default=())

    def __post_init__(self):
        X = np.array(self.X, dtype=float, ndmin=2)
        y = np.array(self.y, dtype=float).ravel()
        delta = np.array(self.delta).ravel()
        if X.shape[0] != y.shape[0] or y.shape[0] != delta.shape[0]:
            raise SchemaError(f"Length mismatch: X has {X.shape[0]} rows, y {y.shape[0]}, delta {delta.shape[0]}")

        specs = tuple(self.specs) or tuple(FeatureSpec(f'x{j + 1}') for j in range(X.shape[1]))
        if len(specs) != X.shape[1]:
            raise SchemaError(f"{len(specs)} feature specs for {X.shape[1]} columns")

        bad_time = np.flatnonzero(~(np.isfinite(y) & (y > 0)))
        if bad_time.size:
            raise DataValidationError('Observed times must be positive and finite', rows=(bad_time + 1).tolist())
        if delta.dtype != bool:
            bad_event = np.flatnonzero(~np.isin(delta, (0, 1)))
            if bad_event.size:
                raise DataValidationError('Event indicator must be 0 or 1', rows=(bad_event + 1).tolist())
            delta = delta.astype(bool)

        object.__setattr__(self, 'X', _frozen(X))
        object.__setattr__(self, 'y', _frozen(y))
        object.__setattr__(self, 'delta', _frozen(delta))
        object.__setattr__(self, 'specs', specs)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_events(self) -> int:
        return int(np.count_nonzero(self.delta))

    @property
    def feature_names(self) -> List[str]:
        return [spec.name for spec in self.specs]

    def subset(self, index: Sequence[int]) -> 'SurvivalDataset':
        index = np.asarray(index, dtype=int)
        return SurvivalDataset(self.X[index], self.y[index], self.delta[index], self.specs)

    def design_matrix(self) -> np.ndarray:
        return dummy_encode(self.X, self.specs)


@dataclass(frozen=True, eq=False)
class StandardizationStats:
    mean: np.ndarray
    scale: np.ndarray
    continuous: np.ndarray
    constant: np.ndarray

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mean': [float(v) for v in self.mean],
            'scale': [float(v) for v in self.scale],
            'continuous': [bool(v) for v in self.continuous],
            'constant': [bool(v) for v in self.constant],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StandardizationStats':
        return cls(
            mean=np.asarray(data['mean'], dtype=float),
            scale=np.asarray(data['scale'], dtype=float),
            continuous=np.asarray(data['continuous'], dtype=bool),
            constant=np.asarray(data['constant'], dtype=bool),
        )


def dummy_encode(X: np.ndarray, specs: Sequence[FeatureSpec]) -> np.ndarray:
    """Expand categorical level indices into one indicator column per level."""
    X = np.asarray(X, dtype=float)
    if not specs or not any(spec.is_categorical for spec in specs):
        return X
    columns = []
    for j, spec in enumerate(specs):
        if spec.is_categorical:
            codes = X[:, j]
            columns.extend((codes == k).astype(float) for k in range(len(spec.levels)))
        else:
            columns.append(X[:, j])
    return np.column_stack(columns)


def with_observed_ranges(specs: Sequence[FeatureSpec], X: np.ndarray) -> Tuple[FeatureSpec, ...]:
    """Fill observed_range of continuous specs from the rows of X."""
    X = np.asarray(X, dtype=float)
    filled = []
    for j, spec in enumerate(specs):
        if spec.is_categorical or X.shape[0] == 0:
            filled.append(spec)
        else:
            filled.append(replace(spec, observed_range=(float(X[:, j].min()), float(X[:, j].max()))))
    return tuple(filled)


def infer_schema(frame: pd.DataFrame, exclude: Sequence[str] = ()) -> List[FeatureSpec]:
    specs = []
    for name in frame.columns:
        if name in exclude:
            continue
        column = frame[name]
        if pd.api.types.is_numeric_dtype(column) and not pd.api.types.is_bool_dtype(column):
            specs.append(FeatureSpec(str(name)))
        else:
            levels = sorted(str(v) for v in column.dropna().unique())
            specs.append(FeatureSpec(str(name), CATEGORICAL, tuple(levels)))
    return specs


def _read_frame(path: Path, schema: Optional[Sequence[FeatureSpec]]) -> pd.DataFrame:
    if not path.exists():
        raise FileNotFoundError(f"Data file not found: {path}")
    categorical = [spec.name for spec in schema or () if spec.is_categorical]
    try:
        return pd.read_csv(path, encoding='utf-8', dtype={name: str for name in categorical})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise SchemaError(f"Could not parse {path}: {str(e)}")


def select_columns(frame: pd.DataFrame, required: List[str], source: str) -> pd.DataFrame:
    missing = [name for name in required if name not in frame.columns]
    if missing:
        raise SchemaError(f"Missing column(s) in {source}: {', '.join(missing)}")
    frame = frame[required]
    missing_rows = np.flatnonzero(frame.isna().any(axis=1).to_numpy())
    if missing_rows.size:
        raise DataValidationError('Missing values are not supported', rows=(missing_rows + 1).tolist())
    return frame


def _level_text(value) -> str:
    # JSON numbers arrive as floats: 2.0 names level '2'
    if isinstance(value, (float, np.floating)) and float(value).is_integer():
        return str(int(value))
    return str(value).strip()


def feature_matrix(frame: pd.DataFrame, schema: Sequence[FeatureSpec]) -> np.ndarray:
    """Encode the schema columns of a frame; categorical values become level indices."""
    X = np.empty((len(frame), len(schema)), dtype=float)
    for j, spec in enumerate(schema):
        column = frame[spec.name]
        if spec.is_categorical:
            lookup = {level: k for k, level in enumerate(spec.levels)}
            values = column.map(_level_text)
            codes = values.map(lookup)
            unknown = np.flatnonzero(codes.isna().to_numpy())
            if unknown.size:
                raise DataValidationError(
                    f"Unknown level '{values.iloc[unknown[0]]}' for categorical '{spec.name}'",
                    rows=(unknown + 1).tolist(),
                )
            X[:, j] = codes.to_numpy(dtype=float)
        else:
            numeric = pd.to_numeric(column, errors='coerce').to_numpy(dtype=float)
            bad = np.flatnonzero(~np.isfinite(numeric))
            if bad.size:
                raise DataValidationError(f"Column '{spec.name}' must be numeric", rows=(bad + 1).tolist())
            X[:, j] = numeric
    return X


def load_features(path, schema: Sequence[FeatureSpec]) -> np.ndarray:
    """Feature matrix only, for prediction inputs without time/event columns."""
    path = Path(path)
    frame = select_columns(_read_frame(path, schema), [spec.name for spec in schema], path.name)
    return feature_matrix(frame, schema)


def load_csv(
    path,
    schema: Optional[Sequence[FeatureSpec]] = None,
    time_column: str = 'time',
    event_column: str = 'event',
) -> SurvivalDataset:
    path = Path(path)
    frame = _read_frame(path, schema)
    if schema is None:
        schema = infer_schema(frame, exclude=(time_column, event_column))
    frame = select_columns(frame, [time_column, event_column] + [spec.name for spec in schema], path.name)

    time = pd.to_numeric(frame[time_column], errors='coerce').to_numpy(dtype=float)
    bad_time = np.flatnonzero(~(np.isfinite(time) & (time > 0)))
    if bad_time.size:
        raise DataValidationError(f"Column '{time_column}' must be positive", rows=(bad_time + 1).tolist())

    event = pd.to_numeric(frame[event_column], errors='coerce').to_numpy(dtype=float)
    bad_event = np.flatnonzero(~np.isin(event, (0.0, 1.0)))
    if bad_event.size:
        raise DataValidationError(f"Column '{event_column}' must be 0 or 1", rows=(bad_event + 1).tolist())

    X = feature_matrix(frame, schema)
    logger.info(f"Loaded {len(frame)} samples with {len(schema)} features from {path.name}")
    return SurvivalDataset(X, time, event.astype(bool), tuple(schema))


def to_frame(d: SurvivalDataset, time_column: str = 'time', event_column: str = 'event') -> pd.DataFrame:
    data: Dict[str, Any] = {}
    for j, spec in enumerate(d.specs):
        if spec.is_categorical:
            data[spec.name] = [spec.levels[int(k)] for k in d.X[:, j]]
        else:
            data[spec.name] = d.X[:, j]
    data[time_column] = d.y
    data[event_column] = d.delta.astype(int)
    return pd.DataFrame(data)


def write_csv(d: SurvivalDataset, path, time_column: str = 'time', event_column: str = 'event'):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    to_frame(d, time_column, event_column).to_csv(path, index=False, float_format='%.17g', lineterminator='\n')


def _is_constant(std: float, mean: float) -> bool:
    return not std > 1e-12 * max(1.0, abs(mean))


def standardize(d: SurvivalDataset) -> Tuple[SurvivalDataset, StandardizationStats]:
    """Zero mean, unit population variance for every continuous column."""
    continuous = np.array([not spec.is_categorical for spec in d.specs], dtype=bool)
    mean = np.zeros(d.n_features)
    scale = np.ones(d.n_features)
    constant = np.zeros(d.n_features, dtype=bool)
    for j in np.flatnonzero(continuous):
        column = d.X[:, j]
        mu = float(np.mean(column))
        std = float(np.std(column))
        if _is_constant(std, mu):
            constant[j] = True
            logger.debug(f"Feature '{d.specs[j].name}' is constant, left unscaled")
        else:
            mean[j], scale[j] = mu, std

    stats = StandardizationStats(mean=mean, scale=scale, continuous=continuous, constant=constant)
    X = apply_standardization(stats, d.X)
    return SurvivalDataset(X, d.y, d.delta, with_observed_ranges(d.specs, X)), stats


def apply_standardization(stats: StandardizationStats, X: np.ndarray) -> np.ndarray:
    X = np.array(X, dtype=float, ndmin=2)
    if X.shape[1] != stats.n_features:
        raise SchemaError(f"Expected {stats.n_features} feature columns, got {X.shape[1]}")
    columns = stats.continuous & ~stats.constant
    X[:, columns] = (X[:, columns] - stats.mean[columns]) / stats.scale[columns]
    return X


def describe_dataset(d: SurvivalDataset) -> Dict[str, Any]:
    from utils.pairs import count_comparable_pairs, pair_count_bounds

    q_e = d.n_events / d.n_samples if d.n_samples else 0.0
    lower, upper = pair_count_bounds(d.n_samples, q_e)
    return {
        'n_samples': d.n_samples,
        'n_features': d.n_features,
        'n_events': d.n_events,
        'censoring_fraction': 1.0 - q_e,
        'comparable_pairs': count_comparable_pairs(d.y, d.delta),
        'pairs_lower_bound': lower,
        'pairs_upper_bound': upper,
        'tied_times': int(d.n_samples - np.unique(d.y).size),
    }
