"""
Kernel survival SVM estimator: fit, predict, grid search.

The optimizer learns f(z) = sum_i beta_i k(x_i, z) ordered like survival time (pairs are
penalized unless f_longer - f_shorter >= 1). `decision_function` returns f, `predict`
returns the risk score -f, so a higher prediction means a shorter expected survival.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from utils.data_model import StandardizationStats, SurvivalDataset, apply_standardization, standardize
from utils.errors import NumericalError, SchemaError, TrainingError
from utils.kernels import KernelConfig, cross_gram, fit_kernel, gram
from utils.metrics import harrell_c
from utils.newton_cg import OptimizerOptions, OptimizerReport, minimize
from utils.objective import ObjectiveContext, PairListProblem, SurvivalProblem
from utils.pairs import count_comparable_pairs, reduced_pairs

logger = logging.getLogger(__name__)

FULL = 'full'
REDUCED = 'reduced'
PAIR_MODES = (FULL, REDUCED)

DEFAULT_GRID: Tuple[float, ...] = tuple(2.0**e for e in range(-12, 13, 2))
MAX_SPLIT_ATTEMPTS = 100


@dataclass(frozen=True, eq=False)
class TrainedModel:
    beta: np.ndarray
    X_train: np.ndarray
    kernel: KernelConfig
    stats: StandardizationStats
    gamma: float
    report: OptimizerReport
    pair_mode: str = FULL

    def __post_init__(self):
        if self.beta.shape[0] != self.X_train.shape[0]:
            raise SchemaError(f"beta has {self.beta.shape[0]} entries for {self.X_train.shape[0]} training rows")

    @property
    def n_train(self) -> int:
        return self.X_train.shape[0]

    @property
    def feature_names(self) -> List[str]:
        return [spec.name for spec in self.kernel.specs]


def _check_trainable(d: SurvivalDataset):
    if d.n_samples < 2:
        raise TrainingError(f"Need at least 2 samples to train, got {d.n_samples}")
    if d.n_events == 0:
        raise TrainingError('Need at least one uncensored sample to train')
    if count_comparable_pairs(d.y, d.delta) == 0:
        raise TrainingError('No comparable pairs in the training data')


def fit(
    d: SurvivalDataset,
    kernel: KernelConfig,
    gamma: float,
    opts: OptimizerOptions = OptimizerOptions(),
    pair_mode: str = FULL,
    n_threads: int = 1,
) -> TrainedModel:
    if pair_mode not in PAIR_MODES:
        raise SchemaError(f"Unknown pair mode '{pair_mode}' (expected one of {', '.join(PAIR_MODES)})")
    if not gamma > 0:
        raise SchemaError(f"gamma must be positive, got {gamma}")
    _check_trainable(d)

    train, stats = standardize(d)
    kernel = fit_kernel(kernel, train.X, train.specs)
    K = gram(kernel, train.X, n_threads=n_threads)

    if pair_mode == FULL:
        problem = SurvivalProblem(ObjectiveContext(K, train.y, train.delta, gamma))
    else:
        problem = PairListProblem(K, reduced_pairs(train.y, train.delta), gamma)

    try:
        beta, report = minimize(problem, None, opts)
    except NumericalError as e:
        raise NumericalError(f"Training ({kernel.kind}, gamma={gamma:g}, {pair_mode} pairs) failed: {e}", e.iteration)

    logger.debug(
        f"Fitted {kernel.kind} kernel, gamma={gamma:g}, {pair_mode} pairs: "
        f"{report.n_newton} Newton iterations, {report.termination.value}"
    )
    return TrainedModel(
        beta=beta, X_train=train.X, kernel=kernel, stats=stats, gamma=gamma, report=report, pair_mode=pair_mode
    )


def decision_function(m: TrainedModel, X_new: np.ndarray) -> np.ndarray:
    """f(z) = sum_i beta_i k(x_i, z) on standardized features."""
    Z = apply_standardization(m.stats, X_new)
    return cross_gram(m.kernel, m.X_train, Z) @ m.beta


def predict(m: TrainedModel, X_new: np.ndarray) -> np.ndarray:
    """Risk scores: higher means shorter expected survival."""
    return -decision_function(m, X_new)


@dataclass(frozen=True, eq=False)
class GridSearchResult:
    best_gamma: float
    table: pd.DataFrame


def _random_splits(
    d: SurvivalDataset, n_splits: int, train_frac: float, seed: int
) -> List[Tuple[np.ndarray, np.ndarray]]:
    rng = np.random.Generator(np.random.PCG64(seed))
    n_train = int(round(train_frac * d.n_samples))
    if not 2 <= n_train < d.n_samples:
        raise TrainingError(f"train_frac={train_frac} leaves no room for a {d.n_samples}-sample split")

    splits = []
    for s in range(n_splits):
        for _ in range(MAX_SPLIT_ATTEMPTS):
            order = rng.permutation(d.n_samples)
            train, valid = np.sort(order[:n_train]), np.sort(order[n_train:])
            if (
                d.delta[train].any()
                and count_comparable_pairs(d.y[train], d.delta[train]) > 0
                and count_comparable_pairs(d.y[valid], d.delta[valid]) > 0
            ):
                splits.append((train, valid))
                break
        else:
            raise TrainingError(f"No valid split {s + 1} after {MAX_SPLIT_ATTEMPTS} attempts")
    return splits


def grid_search(
    d: SurvivalDataset,
    kernel: KernelConfig,
    grid: Sequence[float] = DEFAULT_GRID,
    n_splits: int = 10,
    train_frac: float = 0.8,
    seed: int = 0,
    opts: OptimizerOptions = OptimizerOptions(),
    pair_mode: str = FULL,
    n_threads: int = 1,
) -> GridSearchResult:
    """Pick gamma by mean validation c-index over random train/validation splits."""
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise SchemaError('Grid must contain at least one gamma')
    if any(not g > 0 for g in grid):
        raise SchemaError('Every gamma in the grid must be positive')
    if n_splits < 1:
        raise SchemaError(f"n_splits must be positive, got {n_splits}")

    splits = _random_splits(d, n_splits, train_frac, seed)
    cells = [(g, s) for g in grid for s in range(len(splits))]

    def score(cell: Tuple[float, int]) -> float:
        gamma, s = cell
        train_idx, valid_idx = splits[s]
        valid = d.subset(valid_idx)
        m = fit(d.subset(train_idx), kernel, gamma, opts, pair_mode)
        return harrell_c(valid.y, valid.delta, predict(m, valid.X)).cindex

    if n_threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results: Dict[Tuple[float, int], float] = dict(zip(cells, pool.map(score, cells)))
    else:
        results = {cell: score(cell) for cell in cells}

    rows = []
    for g in grid:
        values = np.array([results[(g, s)] for s in range(len(splits))])
        rows.append(
            {'gamma': g, 'mean_cindex': float(values.mean()), 'std_cindex': float(values.std()), 'splits': values.size}
        )
    table = pd.DataFrame(rows, columns=['gamma', 'mean_cindex', 'std_cindex', 'splits'])

    best = 0
    for k in range(1, len(rows)):
        if rows[k]['mean_cindex'] > rows[best]['mean_cindex']:
            best = k
    best_gamma = rows[best]['gamma']
    logger.info(f"✅ Grid search picked gamma={best_gamma:g} (mean c-index {rows[best]['mean_cindex']:.4f})")
    return GridSearchResult(best_gamma=best_gamma, table=table)


def evaluate(m: TrainedModel, d: SurvivalDataset):
    return harrell_c(d.y, d.delta, predict(m, d.X))
