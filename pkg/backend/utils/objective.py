"""
Squared-hinge ranking objective over the representer coefficients beta.

    R(beta) = 1/2 beta' K beta + gamma/2 * sum over support pairs (1 - (f_i - f_j))^2,   f = K beta

where (i, j) runs over comparable pairs (y_i > y_j, delta_j) with f_i < f_j + 1. The fast
functions get every pair sum from one survival_counts sweep; the naive_* functions sum
over an explicit PairList and double as the reduced-pair baseline objective.
"""

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from utils.errors import SchemaError, TrainingError
from utils.kernels import GramMatrix
from utils.pairs import PairList, count_comparable_pairs
from utils.risk_counter import SurvivalCounts, survival_counts

logger = logging.getLogger(__name__)

KernelLike = Union[GramMatrix, np.ndarray]


def _as_matrix(K: KernelLike) -> np.ndarray:
    return K.K if isinstance(K, GramMatrix) else np.asarray(K, dtype=float)


def _as_vector(values, n: int, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float).ravel()
    if values.size != n:
        raise SchemaError(f"{name} has {values.size} entries, expected {n}")
    return values


@dataclass(frozen=True, eq=False)
class ObjectiveContext:
    K: KernelLike
    y: np.ndarray
    delta: np.ndarray
    gamma: float

    def __post_init__(self):
        K = _as_matrix(self.K)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise SchemaError(f"Kernel matrix must be square, got shape {K.shape}")
        n = K.shape[0]
        object.__setattr__(self, 'y', _as_vector(self.y, n, 'y'))
        object.__setattr__(self, 'delta', np.asarray(self.delta, dtype=bool).ravel())
        if self.delta.size != n:
            raise SchemaError(f"delta has {self.delta.size} entries, expected {n}")
        if not self.gamma > 0:
            raise SchemaError(f"gamma must be positive, got {self.gamma}")

    @property
    def matrix(self) -> np.ndarray:
        return _as_matrix(self.K)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _penalty_sum(f: np.ndarray, counts: SurvivalCounts) -> float:
    """Sum of (1 - (f_i - f_j))^2 over support pairs, from counts taken at v = f."""
    total = (
        counts.m_beta
        + float(f @ (counts.l_total * f - counts.sigma_total))
        - 2.0 * float(f @ (counts.l_minus - counts.l_plus))
    )
    return max(total, 0.0)


def _gradient_weights(f: np.ndarray, counts: SurvivalCounts) -> np.ndarray:
    return counts.l_total * f - counts.sigma_total - (counts.l_minus - counts.l_plus)


def objective_terms(ctx: ObjectiveContext, beta) -> Tuple[float, float]:
    """Regularizer and penalty parts of the objective."""
    beta = _as_vector(beta, ctx.n, 'beta')
    f = ctx.matrix @ beta
    counts = survival_counts(ctx.y, ctx.delta, f, f)
    return 0.5 * float(beta @ f), 0.5 * ctx.gamma * _penalty_sum(f, counts)


def objective(ctx: ObjectiveContext, beta) -> float:
    reg, penalty = objective_terms(ctx, beta)
    return reg + penalty


def gradient(ctx: ObjectiveContext, beta) -> np.ndarray:
    beta = _as_vector(beta, ctx.n, 'beta')
    f = ctx.matrix @ beta
    counts = survival_counts(ctx.y, ctx.delta, f, f)
    return ctx.matrix @ (beta + ctx.gamma * _gradient_weights(f, counts))


def hessvec(ctx: ObjectiveContext, beta, v) -> np.ndarray:
    """Generalized Hessian at beta applied to v."""
    beta = _as_vector(beta, ctx.n, 'beta')
    v = _as_vector(v, ctx.n, 'v')
    return _hessvec_at(ctx, ctx.matrix @ beta, v)


def _hessvec_at(ctx: ObjectiveContext, f: np.ndarray, v: np.ndarray) -> np.ndarray:
    return _hessvec_factored_at(ctx, f, v)[0]


def _hessvec_factored_at(ctx: ObjectiveContext, f: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(H v, a) with H v = K a."""
    Kv = ctx.matrix @ v
    counts = survival_counts(ctx.y, ctx.delta, f, Kv)
    a = v + ctx.gamma * (counts.l_total * Kv - counts.sigma_total)
    return ctx.matrix @ a, a


def _active_pairs(K: np.ndarray, pairs: PairList, beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    f = K @ beta
    high, low = pairs.high, pairs.low
    active = f[high] < f[low] + 1.0
    return f, high[active], low[active]


def naive_objective(K: KernelLike, pairs: PairList, beta, gamma: float) -> float:
    K = _as_matrix(K)
    beta = _as_vector(beta, K.shape[0], 'beta')
    f, high, low = _active_pairs(K, pairs, beta)
    residual = 1.0 - (f[high] - f[low])
    return 0.5 * float(beta @ f) + 0.5 * gamma * float(residual @ residual)


def _pair_gradient_weights(K: np.ndarray, pairs: PairList, beta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    f, high, low = _active_pairs(K, pairs, beta)
    residual = 1.0 - (f[high] - f[low])
    w = np.zeros_like(beta)
    np.add.at(w, high, -residual)
    np.add.at(w, low, residual)
    return f, w


def naive_gradient(K: KernelLike, pairs: PairList, beta, gamma: float) -> np.ndarray:
    K = _as_matrix(K)
    beta = _as_vector(beta, K.shape[0], 'beta')
    f, w = _pair_gradient_weights(K, pairs, beta)
    return f + gamma * (K @ w)


def _pair_hessian_weights(
    K: np.ndarray, pairs: PairList, beta: np.ndarray, v: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    _, high, low = _active_pairs(K, pairs, beta)
    Kv = K @ v
    diff = Kv[high] - Kv[low]
    z = np.zeros_like(v)
    np.add.at(z, high, diff)
    np.add.at(z, low, -diff)
    return Kv, z


def naive_hessvec(K: KernelLike, pairs: PairList, beta, gamma: float, v) -> np.ndarray:
    K = _as_matrix(K)
    beta = _as_vector(beta, K.shape[0], 'beta')
    v = _as_vector(v, K.shape[0], 'v')
    Kv, z = _pair_hessian_weights(K, pairs, beta, v)
    return Kv + gamma * (K @ z)


class SurvivalProblem:
    """Objective over all comparable pairs, evaluated through the counting sweep."""

    def __init__(self, ctx: ObjectiveContext):
        self.ctx = ctx
        self.n = ctx.n
        self._beta = None
        self._f = None

    def _scores(self, beta: np.ndarray) -> np.ndarray:
        if self._beta is None or not np.array_equal(beta, self._beta):
            self._beta = np.array(beta, dtype=float)
            self._f = self.ctx.matrix @ self._beta
        return self._f

    def n_pairs(self) -> int:
        return count_comparable_pairs(self.ctx.y, self.ctx.delta)

    def check_trainable(self):
        if self.n_pairs() == 0:
            raise TrainingError('No comparable pairs: need an event with a shorter time than some other sample')

    def value_and_grad(self, beta: np.ndarray) -> Tuple[float, np.ndarray]:
        ctx = self.ctx
        f = self._scores(beta)
        counts = survival_counts(ctx.y, ctx.delta, f, f)
        value = 0.5 * float(beta @ f) + 0.5 * ctx.gamma * _penalty_sum(f, counts)
        grad = ctx.matrix @ (beta + ctx.gamma * _gradient_weights(f, counts))
        return value, grad

    def objective(self, beta: np.ndarray) -> float:
        ctx = self.ctx
        f = self._scores(beta)
        counts = survival_counts(ctx.y, ctx.delta, f, f)
        return 0.5 * float(beta @ f) + 0.5 * ctx.gamma * _penalty_sum(f, counts)

    def hessvec(self, beta: np.ndarray, v: np.ndarray) -> np.ndarray:
        return _hessvec_at(self.ctx, self._scores(beta), v)

    def grad_coefficients(self, beta: np.ndarray) -> np.ndarray:
        """c with gradient = K c."""
        ctx = self.ctx
        f = self._scores(beta)
        counts = survival_counts(ctx.y, ctx.delta, f, f)
        return beta + ctx.gamma * _gradient_weights(f, counts)

    def hessvec_factored(self, beta: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return _hessvec_factored_at(self.ctx, self._scores(beta), v)


class PairListProblem:
    """Objective summed over an explicit pair list (reference path and reduced-pair baseline)."""

    def __init__(self, K: KernelLike, pairs: PairList, gamma: float):
        self.K = _as_matrix(K)
        self.pairs = pairs
        self.gamma = gamma
        self.n = self.K.shape[0]
        if not gamma > 0:
            raise SchemaError(f"gamma must be positive, got {gamma}")

    def n_pairs(self) -> int:
        return len(self.pairs)

    def check_trainable(self):
        if len(self.pairs) == 0:
            raise TrainingError('Pair list is empty, nothing to train on')

    def value_and_grad(self, beta: np.ndarray) -> Tuple[float, np.ndarray]:
        return naive_objective(self.K, self.pairs, beta, self.gamma), naive_gradient(
            self.K, self.pairs, beta, self.gamma
        )

    def objective(self, beta: np.ndarray) -> float:
        return naive_objective(self.K, self.pairs, beta, self.gamma)

    def hessvec(self, beta: np.ndarray, v: np.ndarray) -> np.ndarray:
        return naive_hessvec(self.K, self.pairs, beta, self.gamma, v)

    def grad_coefficients(self, beta: np.ndarray) -> np.ndarray:
        _, w = _pair_gradient_weights(self.K, self.pairs, np.asarray(beta, dtype=float))
        return beta + self.gamma * w

    def hessvec_factored(self, beta: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        _, z = _pair_hessian_weights(self.K, self.pairs, np.asarray(beta, dtype=float), v)
        a = v + self.gamma * z
        return self.K @ a, a
