"""
Support-pair counting in O(n log n).

For predicted scores f and a value vector v, every sample i gets

    l_plus[i]  / sigma_plus[i]   count / v-sum of s with y_s > y_i, f_s < f_i + 1   (only if delta_i)
    l_minus[i] / sigma_minus[i]  count / v-sum of s with y_s < y_i, f_i < f_s + 1, delta_s

Both sets use the same floating-point test, "f_high < f_low + 1", so every support pair is
seen exactly once from each end. Equal times never pair.

The fast path sweeps samples in time order and keeps the already-visited ones in a binary
indexed tree keyed by rank-compressed scores. Tree updates, queries and both sweeps are
compiled with numba; RankAggregator wraps the same tree functions for one-off use.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numba import njit

from utils.errors import SchemaError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SurvivalCounts:
    l_plus: np.ndarray
    l_minus: np.ndarray
    sigma_plus: np.ndarray
    sigma_minus: np.ndarray

    @property
    def m_beta(self) -> int:
        """Number of support pairs."""
        return int(self.l_plus.sum())

    @property
    def l_total(self) -> np.ndarray:
        return self.l_plus + self.l_minus

    @property
    def sigma_total(self) -> np.ndarray:
        return self.sigma_plus + self.sigma_minus


@njit(cache=True)
def _neumaier(total, comp, value):
    t = total + value
    if abs(total) >= abs(value):
        comp += (total - t) + value
    else:
        comp += (value - t) + total
    return t, comp


@njit(cache=True)
def _tree_insert(count, sums, comp, rank, value):
    size = count.size - 1
    i = rank + 1
    while i <= size:
        count[i] += 1
        s, e = _neumaier(sums[i], comp[i], value)
        sums[i] = s
        comp[i] = e
        i += i & -i


@njit(cache=True)
def _tree_prefix(count, sums, comp, stop):
    """Count and compensated value sum over ranks < stop."""
    c = 0
    total = 0.0
    err = 0.0
    i = min(stop, count.size - 1)
    while i > 0:
        c += count[i]
        total, err = _neumaier(total, err, sums[i])
        err += comp[i]
        i &= i - 1
    return c, total + err


@njit(cache=True)
def _sweep_longer(order, bounds, event, rank, stop, values, size, l_plus, sigma_plus):
    # descending time: the tree holds every sample with a longer time
    count = np.zeros(size + 1, dtype=np.int64)
    sums = np.zeros(size + 1)
    comp = np.zeros(size + 1)
    for g in range(bounds.size - 2, -1, -1):
        for k in range(bounds[g], bounds[g + 1]):
            i = order[k]
            if event[i]:
                c, s = _tree_prefix(count, sums, comp, stop[i])
                l_plus[i] = c
                sigma_plus[i] = s
        for k in range(bounds[g], bounds[g + 1]):
            i = order[k]
            _tree_insert(count, sums, comp, rank[i], values[i])


@njit(cache=True)
def _sweep_shorter(order, bounds, event, rank, start, values, size, l_minus, sigma_minus):
    # ascending time: the tree holds uncensored samples with a shorter time, keyed by f + 1
    count = np.zeros(size + 1, dtype=np.int64)
    sums = np.zeros(size + 1)
    comp = np.zeros(size + 1)
    inserted = 0
    total = 0.0
    total_comp = 0.0
    for g in range(bounds.size - 1):
        for k in range(bounds[g], bounds[g + 1]):
            i = order[k]
            c, s = _tree_prefix(count, sums, comp, start[i])
            l_minus[i] = inserted - c
            sigma_minus[i] = (total - s) + total_comp
        for k in range(bounds[g], bounds[g + 1]):
            i = order[k]
            if event[i]:
                _tree_insert(count, sums, comp, rank[i], values[i])
                inserted += 1
                total, total_comp = _neumaier(total, total_comp, values[i])


class RankAggregator:
    """Binary indexed tree over ranks 0..size-1 holding a count and a compensated value sum.

    >>> agg = RankAggregator(4)
    >>> agg.insert(2, 1.5)
    >>> agg.insert(0, 0.5)
    >>> agg.prefix(2)
    (1, 0.5)
    >>> agg.suffix(1)
    (1, 1.5)
    """

    def __init__(self, size: int):
        self.size = size
        self._count = np.zeros(size + 1, dtype=np.int64)
        self._sum = np.zeros(size + 1)
        self._comp = np.zeros(size + 1)
        self.total_count = 0
        self._total = 0.0
        self._total_comp = 0.0

    def insert(self, rank: int, value: float):
        _tree_insert(self._count, self._sum, self._comp, rank, float(value))
        self.total_count += 1
        self._total, self._total_comp = _neumaier(self._total, self._total_comp, float(value))

    def prefix(self, stop: int) -> Tuple[int, float]:
        """Count and value sum over ranks < stop."""
        c, s = _tree_prefix(self._count, self._sum, self._comp, stop)
        return int(c), float(s)

    def suffix(self, start: int) -> Tuple[int, float]:
        """Count and value sum over ranks >= start."""
        c, s = self.prefix(start)
        return self.total_count - c, (self._total - s) + self._total_comp

    def totals(self) -> Tuple[int, float]:
        return self.total_count, self._total + self._total_comp


def _validate(y, delta, f, v) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    delta = np.asarray(delta, dtype=bool).ravel()
    f = np.asarray(f, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if not (y.size == delta.size == f.size == v.size):
        raise SchemaError(f"Length mismatch: y={y.size}, delta={delta.size}, f={f.size}, v={v.size}")
    return y, delta, f, v


def _time_groups(y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sample order by time and the boundaries of its equal-time runs."""
    order = np.argsort(y, kind='stable')
    breaks = np.flatnonzero(np.diff(y[order])) + 1
    return order, np.concatenate(([0], breaks, [y.size])).astype(np.int64)


def survival_counts(y, delta, f, v) -> SurvivalCounts:
    y, delta, f, v = _validate(y, delta, f, v)
    n = y.size
    l_plus = np.zeros(n, dtype=np.int64)
    l_minus = np.zeros(n, dtype=np.int64)
    sigma_plus = np.zeros(n)
    sigma_minus = np.zeros(n)
    if n == 0:
        return SurvivalCounts(l_plus, l_minus, sigma_plus, sigma_minus)

    order, bounds = _time_groups(y)
    f_plus_one = f + 1.0

    keys = np.unique(f)
    rank = np.searchsorted(keys, f)
    stop = np.searchsorted(keys, f_plus_one, side='left')
    _sweep_longer(order, bounds, delta, rank, stop, v, keys.size, l_plus, sigma_plus)

    keys = np.unique(f_plus_one)
    rank = np.searchsorted(keys, f_plus_one)
    start = np.searchsorted(keys, f, side='right')
    _sweep_shorter(order, bounds, delta, rank, start, v, keys.size, l_minus, sigma_minus)

    return SurvivalCounts(l_plus, l_minus, sigma_plus, sigma_minus)


def naive_survival_counts(y, delta, f, v) -> SurvivalCounts:
    """Reference implementation, one pass over all partners per sample."""
    y, delta, f, v = _validate(y, delta, f, v)
    n = y.size
    l_plus = np.zeros(n, dtype=np.int64)
    l_minus = np.zeros(n, dtype=np.int64)
    sigma_plus = np.zeros(n)
    sigma_minus = np.zeros(n)
    f_plus_one = f + 1.0
    for i in range(n):
        if delta[i]:
            above = (y > y[i]) & (f < f_plus_one[i])
            l_plus[i] = np.count_nonzero(above)
            sigma_plus[i] = v[above].sum()
        below = (y < y[i]) & delta & (f[i] < f_plus_one)
        l_minus[i] = np.count_nonzero(below)
        sigma_minus[i] = v[below].sum()
    return SurvivalCounts(l_plus, l_minus, sigma_plus, sigma_minus)
