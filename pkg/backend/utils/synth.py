"""
Synthetic right-censored survival data with a known non-linear risk function.

Each sample has age ~ U[18, 89], sex in {1, 2} (Bernoulli(0.5) + 1), a three-level group
and ten normal features N1..N10 with unit variance and means NORMAL_MEANS. Event times
follow a Weibull proportional-hazards model driven by scale * f(x); training times are
censored by U[0, tau] with tau calibrated to a target censoring fraction, test times are
left uncensored.

Random draws consume one PCG64 stream in this order: the coefficient scale (when random),
the training block, the test block, then the training censoring times. A block draws, for
all of its rows, age, sex, group, the n x 10 normal matrix and the Weibull uniforms;
rows with a non-finite risk or time are redrawn block-wise in the same field order.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from utils.data_model import CATEGORICAL, FeatureSpec, SurvivalDataset
from utils.errors import DataValidationError, RegenerationSignal, SchemaError

logger = logging.getLogger(__name__)

NORMAL_MEANS = np.array([0.0, 0.0, 0.3, 0.15, 0.8, 0.67, 0.2, 0.0, 0.12, 0.3])
AGE_RANGE = (18.0, 89.0)
SEX_LEVELS = ('1', '2')
GROUP_LEVELS = ('C1', 'C2', 'C3')

SYNTH_SPECS: Tuple[FeatureSpec, ...] = (
    FeatureSpec('age'),
    FeatureSpec('sex', CATEGORICAL, SEX_LEVELS),
    FeatureSpec('group', CATEGORICAL, GROUP_LEVELS),
) + tuple(FeatureSpec(f'N{k}') for k in range(1, 11))

# order of the vector taken by nonlinear_risk
RISK_LAYOUT = ('age', 'sex', 'C1', 'C2', 'C3') + tuple(f'N{k}' for k in range(1, 11))

MAX_REDRAW_ROUNDS = 1000


@dataclass(frozen=True)
class SynthConfig:
    n_train: int = 1500
    n_test: int = 1500
    seed: int = 0
    coeff_scale: Union[float, str] = 'random'
    target_censoring: float = 0.2
    weibull_k: float = 1.0
    weibull_lambda: float = 0.9

    def __post_init__(self):
        if self.n_train < 1 or self.n_test < 1:
            raise SchemaError('n_train and n_test must be positive')
        if not 0 <= self.target_censoring < 1:
            raise SchemaError(f"target_censoring must lie in [0, 1), got {self.target_censoring}")
        if self.coeff_scale != 'random' and not -1 <= float(self.coeff_scale) <= 1:
            raise SchemaError(f"coeff_scale must lie in [-1, 1] or be 'random', got {self.coeff_scale}")
        if not (self.weibull_k > 0 and self.weibull_lambda > 0):
            raise SchemaError('Weibull k and lambda must be positive')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SyntheticReplicate:
    train: SurvivalDataset
    test: SurvivalDataset
    scale: float
    tau: float
    censoring_fraction: float
    redrawn: int
    train_risk: np.ndarray
    test_risk: np.ndarray


def _risk_rows(R: np.ndarray) -> np.ndarray:
    age, sex, c1, c2, c3 = (R[:, k] for k in range(5))
    N = R[:, 5:15]
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        return (
            0.05 * age
            + 0.8 * sex
            + 0.03 * N[:, 0] ** 2
            + 0.3 * N[:, 1] ** -2.0
            - 0.1 * N[:, 6]
            + 0.6 * N[:, 3] / N[:, 1]
            + N[:, 0] / N[:, 7]
            - 0.9 * np.tanh(N[:, 5]) / N[:, 8]
            + 0.09 * c1 / sex
            + 0.03 * c2 / sex
            + 0.3 * c3 / sex
        )


def nonlinear_risk(x: Sequence[float]) -> float:
    """Risk f(x) for one vector laid out as RISK_LAYOUT."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != len(RISK_LAYOUT):
        raise SchemaError(f"Risk vector needs {len(RISK_LAYOUT)} entries ({', '.join(RISK_LAYOUT)}), got {x.size}")
    value = float(_risk_rows(x[None, :])[0])
    if not math.isfinite(value):
        raise RegenerationSignal('Non-finite risk, sample must be redrawn')
    return value


def risk_vectors(X: np.ndarray) -> np.ndarray:
    """Map dataset rows (SYNTH_SPECS layout) to RISK_LAYOUT vectors."""
    X = np.asarray(X, dtype=float)
    sex = np.asarray(SEX_LEVELS, dtype=float)[X[:, 1].astype(int)]
    group = X[:, 2].astype(int)
    dummies = np.column_stack([(group == k).astype(float) for k in range(len(GROUP_LEVELS))])
    return np.column_stack((X[:, 0], sex, dummies, X[:, 3:13]))


def weibull_time(u, risk, k: float, lam: float):
    """t = [(-log u) / (lam * exp(risk))]^(1/k)."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(~((u_arr > 0) & (u_arr < 1))):
        raise DataValidationError('u must lie strictly between 0 and 1')
    if not (k > 0 and lam > 0):
        raise SchemaError('Weibull k and lambda must be positive')
    with np.errstate(over='ignore', invalid='ignore'):
        t = np.exp((np.log(-np.log(u_arr)) - math.log(lam) - np.asarray(risk, dtype=float)) / k)
    return float(t) if np.ndim(t) == 0 else t


def expected_censoring(event_times: np.ndarray, tau: float) -> float:
    """Expected censored fraction when c ~ U[0, tau]."""
    return float(np.mean(np.minimum(event_times, tau) / tau))


CALIBRATION_XTOL = 1e-12
MAX_LOG_TAU = math.log(np.finfo(float).max) - 1.0


def calibrate_tau(event_times: Sequence[float], target: float) -> float:
    """
    Upper bound tau of U[0, tau] censoring giving the target expected censored fraction.

    The expected fraction is 1 for tau <= min t and falls monotonically afterwards, so the root
    is bracketed on log tau between log(min t) and log(10 * max t). The upper end is capped
    below the float range.
    """
    times = np.asarray(event_times, dtype=float)
    if times.size == 0:
        raise DataValidationError('Cannot calibrate censoring on an empty sample')
    if not 0 < target < 1:
        raise DataValidationError(f"Target censoring must lie in (0, 1), got {target}")
    if not np.all(np.isfinite(times) & (times > 0)):
        raise DataValidationError('Event times must be positive and finite')

    def excess(log_tau: float) -> float:
        return expected_censoring(times, math.exp(log_tau)) - target

    lo = math.log(float(times.min()))
    hi = min(math.log(float(times.max())) + math.log(10.0), MAX_LOG_TAU)
    floor = excess(hi) + target
    if target <= floor:
        raise DataValidationError(f"Target censoring {target} is below the reachable floor {floor:.4g}")
    log_tau = brentq(excess, lo, hi, xtol=CALIBRATION_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(log_tau)


def _draw_block(rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
    age = rng.uniform(*AGE_RANGE, size=n)
    sex = rng.binomial(1, 0.5, size=n).astype(float)
    group = rng.integers(0, len(GROUP_LEVELS), size=n).astype(float)
    normals = NORMAL_MEANS[None, :] + rng.standard_normal((n, 10))
    u = rng.random(size=n)
    return np.column_stack((age, sex, group, normals)), u


def _sample(rng: np.random.Generator, n: int, scale: float, config: SynthConfig):
    X = np.empty((n, len(SYNTH_SPECS)))
    t = np.empty(n)
    risk = np.empty(n)
    pending = np.arange(n)
    redrawn = 0
    for _ in range(MAX_REDRAW_ROUNDS):
        block, u = _draw_block(rng, pending.size)
        valid_u = u > 0
        with np.errstate(all='ignore'):
            block_risk = scale * _risk_rows(risk_vectors(block))
            times = weibull_time(np.where(valid_u, u, 0.5), block_risk, config.weibull_k, config.weibull_lambda)
        ok = valid_u & np.isfinite(block_risk) & np.isfinite(times) & (times > 0)
        X[pending[ok]] = block[ok]
        t[pending[ok]] = times[ok]
        risk[pending[ok]] = block_risk[ok]
        pending = pending[~ok]
        if pending.size == 0:
            return X, t, risk, redrawn
        redrawn += pending.size
    raise RegenerationSignal(f"{pending.size} samples still invalid after {MAX_REDRAW_ROUNDS} redraw rounds")


def generate_replicate(config: SynthConfig) -> SyntheticReplicate:
    rng = np.random.Generator(np.random.PCG64(config.seed))
    scale = float(rng.uniform(-1.0, 1.0)) if config.coeff_scale == 'random' else float(config.coeff_scale)

    X_train, t_train, risk_train, redrawn_train = _sample(rng, config.n_train, scale, config)
    X_test, t_test, risk_test, redrawn_test = _sample(rng, config.n_test, scale, config)

    if config.target_censoring > 0:
        tau = calibrate_tau(t_train, config.target_censoring)
        censor = rng.uniform(0.0, tau, size=config.n_train)
        y_train = np.minimum(t_train, censor)
        delta_train = t_train <= censor
    else:
        tau = math.inf
        y_train, delta_train = t_train, np.ones(config.n_train, dtype=bool)

    train = SurvivalDataset(X_train, y_train, delta_train, SYNTH_SPECS)
    test = SurvivalDataset(X_test, t_test, np.ones(config.n_test, dtype=bool), SYNTH_SPECS)
    censoring = 1.0 - train.n_events / train.n_samples
    redrawn = redrawn_train + redrawn_test
    if redrawn:
        logger.debug(f"Redrew {redrawn} samples with non-finite risk or time")
    logger.debug(f"Replicate seed={config.seed}: scale={scale:.4f} tau={tau:.4g} censored={censoring:.3f}")
    return SyntheticReplicate(train, test, scale, tau, censoring, redrawn, risk_train, risk_test)


def generate(config: SynthConfig) -> Tuple[SurvivalDataset, SurvivalDataset]:
    replicate = generate_replicate(config)
    return replicate.train, replicate.test


def generate_many(configs: Sequence[SynthConfig], n_threads: int = 1) -> List[SyntheticReplicate]:
    """Independent replicates, one RNG stream each; results keep the order of configs."""
    if n_threads > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            return list(pool.map(generate_replicate, configs))
    return [generate_replicate(config) for config in configs]
