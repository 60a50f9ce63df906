"""
Wall-clock scaling of the counting sweep against the per-row reference, and of the
Hessian-vector product against its kernel products.

Everything here runs sequentially so that timings are not disturbed by other work.
"""

import logging
import math
import time
from typing import Callable, Dict, Sequence

import numpy as np
import pandas as pd

from utils.data_model import standardize
from utils.errors import SchemaError
from utils.kernels import RBF, KernelConfig, fit_kernel, gram
from utils.objective import ObjectiveContext, SurvivalProblem
from utils.risk_counter import naive_survival_counts, survival_counts
from utils.synth import SynthConfig, generate

logger = logging.getLogger(__name__)

DEFAULT_SIZES = (500, 1000, 2000, 4000)
COLUMNS = ['n', 'fast_count_s', 'naive_count_s', 'hessvec_s', 'kv_s', 'kv_share']


def median_time(fn: Callable[[], object], repeats: int) -> float:
    timings = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        timings.append(time.perf_counter() - start)
    return float(np.median(timings))


def benchmark_size(n: int, seed: int = 0, repeats: int = 5, naive: bool = True) -> Dict[str, float]:
    """Time one problem size on synthetic data with an RBF Gram matrix.

    kv_share is the fraction of hessvec time spent in its two products with K.
    """
    train, _ = generate(SynthConfig(n_train=n, n_test=1, seed=seed))
    train, _ = standardize(train)
    design = train.design_matrix()
    kernel = fit_kernel(KernelConfig(RBF, sigma=math.sqrt(design.shape[1])), train.X, train.specs)
    K = gram(kernel, train.X)

    rng = np.random.Generator(np.random.PCG64(seed))
    f = rng.standard_normal(n)
    v = rng.standard_normal(n)
    beta = rng.standard_normal(n) / n

    survival_counts(train.y, train.delta, f, v)
    fast = median_time(lambda: survival_counts(train.y, train.delta, f, v), repeats)
    slow = median_time(lambda: naive_survival_counts(train.y, train.delta, f, v), repeats) if naive else math.nan

    problem = SurvivalProblem(ObjectiveContext(K, train.y, train.delta, 1.0))
    problem.hessvec(beta, v)
    hv = median_time(lambda: problem.hessvec(beta, v), repeats)
    kv = median_time(lambda: K.matvec(v), repeats)

    row = {
        'n': n,
        'fast_count_s': fast,
        'naive_count_s': slow,
        'hessvec_s': hv,
        'kv_s': kv,
        'kv_share': min(1.0, 2.0 * kv / hv) if hv > 0 else math.nan,
    }
    logger.info(f"n={n}: counting {fast:.4f}s, naive {slow:.4f}s, hessvec {hv:.4f}s (K·v share {row['kv_share']:.2f})")
    return row


def run_benchmark(sizes: Sequence[int] = DEFAULT_SIZES, seed: int = 0, repeats: int = 5, naive: bool = True):
    if not sizes or any(n < 2 for n in sizes):
        raise SchemaError('Benchmark sizes must be integers >= 2')
    if repeats < 1:
        raise SchemaError(f"repeats must be positive, got {repeats}")
    rows = [benchmark_size(int(n), seed, repeats, naive) for n in sizes]
    return pd.DataFrame(rows, columns=COLUMNS)


def growth_ratios(table: pd.DataFrame, column: str) -> np.ndarray:
    """Time ratio between consecutive sizes of the table."""
    values = table[column].to_numpy(dtype=float)
    return values[1:] / values[:-1]
