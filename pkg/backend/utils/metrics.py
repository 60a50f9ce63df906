from dataclasses import asdict, dataclass
from typing import Any, Dict

import numpy as np

from utils.errors import DataValidationError, SchemaError
from utils.risk_counter import RankAggregator


@dataclass(frozen=True)
class ConcordanceResult:
    cindex: float
    concordant: int
    discordant: int
    tied_score: int
    comparable: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def harrell_c(y, delta, scores) -> ConcordanceResult:
    """Harrell's concordance index for risk scores (higher score = shorter survival).

    A comparable pair (i, j) has y_i > y_j and delta_j; it is concordant when
    scores[j] > scores[i]. Tied scores count one half, tied times are not comparable.
    """
    y = np.asarray(y, dtype=float).ravel()
    delta = np.asarray(delta, dtype=bool).ravel()
    scores = np.asarray(scores, dtype=float).ravel()
    if not (y.size == delta.size == scores.size):
        raise SchemaError(f"Length mismatch: y={y.size}, delta={delta.size}, scores={scores.size}")
    if not np.all(np.isfinite(scores)):
        bad = (np.flatnonzero(~np.isfinite(scores)) + 1).tolist()
        raise DataValidationError('Risk scores must be finite', rows=bad)

    keys = np.unique(scores)
    below = np.searchsorted(keys, scores, side='left').tolist()
    upto = np.searchsorted(keys, scores, side='right').tolist()
    event = delta.tolist()

    order = np.argsort(y, kind='stable')
    groups = np.split(order, np.flatnonzero(np.diff(y[order])) + 1)

    concordant = discordant = tied = 0
    longer = RankAggregator(keys.size)
    for group in reversed(groups):
        group = group.tolist()
        for j in group:
            if not event[j]:
                continue
            n_below, _ = longer.prefix(below[j])
            n_upto, _ = longer.prefix(upto[j])
            concordant += n_below
            tied += n_upto - n_below
            discordant += longer.total_count - n_upto
        for j in group:
            longer.insert(below[j], 0.0)

    comparable = concordant + discordant + tied
    if comparable == 0:
        raise DataValidationError('No comparable pairs: the c-index is undefined')
    return ConcordanceResult(
        cindex=(concordant + 0.5 * tied) / comparable,
        concordant=concordant,
        discordant=discordant,
        tied_score=tied,
        comparable=comparable,
    )
