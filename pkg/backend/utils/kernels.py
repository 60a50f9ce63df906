import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from utils.data_model import FeatureSpec, dummy_encode, with_observed_ranges
from utils.errors import ModelFormatError, SchemaError

logger = logging.getLogger(__name__)

LINEAR = 'linear'
RBF = 'rbf'
CLINICAL = 'clinical'
KERNEL_KINDS = (LINEAR, RBF, CLINICAL)

DEFAULT_RIDGE = 1e-10
ROW_BLOCK = 256


@dataclass(frozen=True)
class KernelConfig:
    kind: str = RBF
    sigma: Optional[float] = None
    specs: Tuple[FeatureSpec, ...] = ()
    ridge: float = DEFAULT_RIDGE

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise SchemaError(f"Unknown kernel kind '{self.kind}' (expected one of {', '.join(KERNEL_KINDS)})")
        if self.sigma is not None and not self.sigma > 0:
            raise SchemaError(f"RBF sigma must be positive, got {self.sigma}")
        if not self.ridge >= 0:
            raise SchemaError(f"Ridge must be non-negative, got {self.ridge}")
        object.__setattr__(self, 'specs', tuple(self.specs))

    @property
    def is_resolved(self) -> bool:
        if self.kind == RBF:
            return self.sigma is not None
        if self.kind == CLINICAL:
            return bool(self.specs) and all(s.is_categorical or s.observed_range is not None for s in self.specs)
        return True

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'kind': self.kind, 'ridge': self.ridge}
        if self.sigma is not None:
            data['sigma'] = self.sigma
        data['specs'] = [spec.to_dict() for spec in self.specs]
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'KernelConfig':
        kind = data.get('kind')
        if kind not in KERNEL_KINDS:
            raise ModelFormatError(f"Unknown kernel kind '{kind}'")
        return cls(
            kind=kind,
            sigma=data.get('sigma'),
            specs=tuple(FeatureSpec.from_dict(spec) for spec in data.get('specs', [])),
            ridge=float(data.get('ridge', DEFAULT_RIDGE)),
        )


@dataclass(frozen=True, eq=False)
class GramMatrix:
    K: np.ndarray
    config: KernelConfig

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.K @ v


def median_heuristic(features: np.ndarray) -> float:
    """Median pairwise Euclidean distance, 1.0 when it is zero or undefined."""
    if features.shape[0] < 2:
        return 1.0
    sigma = float(np.median(pdist(features, 'euclidean')))
    return sigma if sigma > 0 else 1.0


def fit_kernel(config: KernelConfig, X: np.ndarray, specs: Sequence[FeatureSpec] = ()) -> KernelConfig:
    """Fill in what the kernel learns from training data: RBF bandwidth, clinical ranges."""
    X = np.asarray(X, dtype=float)
    specs = tuple(specs) or config.specs
    if config.kind == CLINICAL:
        if not specs:
            specs = tuple(FeatureSpec(f'x{j + 1}') for j in range(X.shape[1]))
        return replace(config, specs=with_observed_ranges(specs, X))
    config = replace(config, specs=specs)
    if config.kind == RBF and config.sigma is None:
        sigma = median_heuristic(_features(config, X))
        logger.debug(f"RBF bandwidth from median heuristic: {sigma:.6g}")
        config = replace(config, sigma=sigma)
    return config


def _features(config: KernelConfig, X: np.ndarray) -> np.ndarray:
    X = np.array(X, dtype=float, ndmin=2)
    if config.specs:
        if X.shape[1] != len(config.specs):
            raise SchemaError(f"Kernel expects {len(config.specs)} features, got {X.shape[1]}")
        if config.kind != CLINICAL:
            return dummy_encode(X, config.specs)
    return X


def _clinical_block(config: KernelConfig, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    total = np.zeros((A.shape[0], B.shape[0]))
    for j, spec in enumerate(config.specs):
        a = A[:, j][:, None]
        b = B[:, j][None, :]
        if spec.is_categorical:
            total += a == b
            continue
        if spec.observed_range is None:
            raise SchemaError(f"Clinical kernel needs the observed range of '{spec.name}'")
        lo, hi = spec.observed_range
        r = hi - lo
        if r > 0:
            gap = np.abs(np.clip(a, lo, hi) - np.clip(b, lo, hi))
            total += np.clip((r - gap) / r, 0.0, 1.0)
        else:
            # raw values, not clipped ones
            total += a == b
    return total / len(config.specs)


def _block(config: KernelConfig, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if config.kind == LINEAR:
        return A @ B.T
    if config.kind == RBF:
        if config.sigma is None:
            raise SchemaError('RBF kernel bandwidth is not set; fit the kernel on training data first')
        return np.exp(-cdist(A, B, 'sqeuclidean') / (2.0 * config.sigma**2))
    if not config.specs:
        raise SchemaError('Clinical kernel needs feature specs')
    return _clinical_block(config, A, B)


def kernel_eval(config: KernelConfig, a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise SchemaError(f"Feature vectors differ in length: {a.size} vs {b.size}")
    A = _features(config, a[None, :])
    B = _features(config, b[None, :])
    return float(_block(config, A, B)[0, 0])


def gram(config: KernelConfig, X: np.ndarray, n_threads: int = 1) -> GramMatrix:
    features = _features(config, X)
    n = features.shape[0]
    if n < 1:
        raise SchemaError('Gram matrix needs at least one sample')
    K = np.empty((n, n))

    def fill_rows(start: int):
        stop = min(start + ROW_BLOCK, n)
        upper = _block(config, features[start:stop], features[start:])
        for offset, i in enumerate(range(start, stop)):
            row = upper[offset, i - start :]
            K[i, i:] = row
            K[i:, i] = row

    starts = range(0, n, ROW_BLOCK)
    if n_threads > 1 and n > ROW_BLOCK:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            list(pool.map(fill_rows, starts))
    else:
        for start in starts:
            fill_rows(start)

    K[np.diag_indices(n)] += config.ridge
    return GramMatrix(K=K, config=config)


def cross_gram(config: KernelConfig, X_train: np.ndarray, X_new: np.ndarray) -> np.ndarray:
    """Kernel values between new rows and training rows, shape (m, n), no ridge."""
    train = _features(config, X_train)
    new = _features(config, X_new)
    if train.shape[1] != new.shape[1]:
        raise SchemaError(f"Training data has {train.shape[1]} features, new data {new.shape[1]}")
    return _block(config, new, train)
