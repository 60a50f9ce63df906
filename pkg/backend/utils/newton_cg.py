"""
Truncated Newton minimization with conjugate-gradient inner solves and Armijo backtracking.

The optimizer works on any problem object exposing

    n                               number of coefficients
    value_and_grad(beta)            objective value and gradient
    hessvec(beta, v)                (generalized) Hessian at beta times v
    check_trainable()               raises when there is nothing to fit

and, optionally, the kernel-factored pieces used to precondition CG with K:

    grad_coefficients(beta)         c with gradient = K c
    hessvec_factored(beta, v)       (H v, a) with H v = K a

SurvivalProblem and PairListProblem in utils.objective are the two used for training.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from utils.errors import NumericalError, SchemaError

logger = logging.getLogger(__name__)

EISENSTAT_WALKER = 'eisenstat_walker'
EXACT = 'exact'
EXACT_RTOL = 1e-12


class TerminationReason(str, Enum):
    GRADIENT_TOL = 'gradient_tol'
    MAX_NEWTON = 'max_newton'
    LINE_SEARCH_FAILURE = 'line_search_failure'


@dataclass(frozen=True)
class OptimizerOptions:
    max_newton: int = 200
    grad_tol: float = 1e-5
    max_cg: Optional[int] = None
    cg_forcing: str = EISENSTAT_WALKER
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 30
    kernel_preconditioning: bool = True
    verbose: bool = False

    def __post_init__(self):
        if self.max_newton < 1 or self.max_backtracks < 1:
            raise SchemaError('max_newton and max_backtracks must be positive')
        if self.max_cg is not None and self.max_cg < 1:
            raise SchemaError(f"max_cg must be positive, got {self.max_cg}")
        if not (self.grad_tol > 0 and self.armijo_c > 0):
            raise SchemaError('grad_tol and armijo_c must be positive')
        if not 0 < self.backtrack_factor < 1:
            raise SchemaError(f"backtrack_factor must lie in (0, 1), got {self.backtrack_factor}")
        if self.cg_forcing not in (EISENSTAT_WALKER, EXACT):
            raise SchemaError(f"Unknown CG forcing rule '{self.cg_forcing}'")

    def forcing_term(self, grad_norm: float) -> float:
        if self.cg_forcing == EXACT:
            return EXACT_RTOL
        return min(0.5, math.sqrt(grad_norm))


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    grad_norm: float
    cg_iterations: int
    step_length: float


@dataclass
class OptimizerReport:
    records: List[IterationRecord] = field(default_factory=list)
    termination: TerminationReason = TerminationReason.MAX_NEWTON

    @property
    def converged(self) -> bool:
        return self.termination == TerminationReason.GRADIENT_TOL

    @property
    def n_newton(self) -> int:
        return max(len(self.records) - 1, 0)

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective if self.records else float('nan')

    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    def to_frame(self) -> pd.DataFrame:
        columns = ['iteration', 'objective', 'grad_norm', 'cg_iterations', 'step_length']
        return pd.DataFrame([asdict(r) for r in self.records], columns=columns)

    def to_dict(self) -> Dict[str, Any]:
        return {'termination': self.termination.value, 'records': [asdict(r) for r in self.records]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'OptimizerReport':
        return cls(
            records=[IterationRecord(**r) for r in data.get('records', [])],
            termination=TerminationReason(data.get('termination', TerminationReason.MAX_NEWTON.value)),
        )


@dataclass(frozen=True, eq=False)
class CGResult:
    step: np.ndarray
    iterations: int
    relative_residual: float


def cg_solve(
    apply_H: Callable[[np.ndarray], np.ndarray],
    g: np.ndarray,
    opts: OptimizerOptions = OptimizerOptions(),
    rtol: Optional[float] = None,
) -> CGResult:
    """Approximately solve H d = -g by conjugate gradients."""
    g = np.asarray(g, dtype=float)
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        return CGResult(np.zeros_like(g), 0, 0.0)
    if rtol is None:
        rtol = opts.forcing_term(float(np.max(np.abs(g))))
    max_cg = opts.max_cg or g.size

    d = np.zeros_like(g)
    r = -g
    p = r.copy()
    rs = float(r @ r)
    iterations = 0
    for k in range(max_cg):
        Hp = apply_H(p)
        curvature = float(p @ Hp)
        if curvature <= 1e-14 * float(p @ p):
            if k == 0:
                logger.debug('Non-positive curvature on first CG step, using steepest descent')
                return CGResult(-g, 1, 1.0)
            break
        alpha = rs / curvature
        d += alpha * p
        r -= alpha * Hp
        iterations = k + 1
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= rtol * g_norm:
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return CGResult(d, iterations, math.sqrt(rs) / g_norm)


def kernel_cg_solve(
    apply_H_factored: Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]],
    g: np.ndarray,
    g_coefficients: np.ndarray,
    opts: OptimizerOptions = OptimizerOptions(),
    rtol: Optional[float] = None,
) -> CGResult:
    """
    Conjugate gradients on H d = -g preconditioned by the kernel matrix K.

    Requires H = K A and g = K c: apply_H_factored(p) returns (H p, A p) and g_coefficients is c.
    Every residual then has the form r = K z with z known, so the preconditioned residual
    K^-1 r is updated alongside r and K is never factorized. The stopping test is on the
    unpreconditioned residual, as in cg_solve.
    """
    g = np.asarray(g, dtype=float)
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        return CGResult(np.zeros_like(g), 0, 0.0)
    if rtol is None:
        rtol = opts.forcing_term(float(np.max(np.abs(g))))
    max_cg = opts.max_cg or g.size

    d = np.zeros_like(g)
    r = -g
    z = -np.asarray(g_coefficients, dtype=float)
    p = z.copy()
    rz = float(r @ z)
    if not rz > 0:
        logger.debug('Kernel preconditioner is not positive on the gradient, using steepest descent')
        return CGResult(-g, 1, 1.0)
    iterations = 0
    for k in range(max_cg):
        Hp, Ap = apply_H_factored(p)
        curvature = float(p @ Hp)
        if not curvature > 0:
            if k == 0:
                logger.debug('Non-positive curvature on first CG step, using steepest descent')
                return CGResult(-g, 1, 1.0)
            break
        alpha = rz / curvature
        d += alpha * p
        r -= alpha * Hp
        z -= alpha * Ap
        iterations = k + 1
        if float(np.linalg.norm(r)) <= rtol * g_norm:
            break
        rz_new = float(r @ z)
        if not rz_new > 0:
            break
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(d, iterations, float(np.linalg.norm(r)) / g_norm)


def _newton_step(problem, beta: np.ndarray, grad: np.ndarray, opts: OptimizerOptions) -> CGResult:
    if opts.kernel_preconditioning and hasattr(problem, 'hessvec_factored'):
        coefficients = problem.grad_coefficients(beta)
        return kernel_cg_solve(lambda v: problem.hessvec_factored(beta, v), grad, coefficients, opts)
    return cg_solve(lambda v: problem.hessvec(beta, v), grad, opts)


def _check_finite(value: float, grad: np.ndarray, iteration: int):
    if not math.isfinite(value) or not np.all(np.isfinite(grad)):
        raise NumericalError('Objective or gradient is not finite', iteration=iteration)


def minimize(problem, beta0: Optional[np.ndarray] = None, opts: OptimizerOptions = OptimizerOptions()):
    """Truncated Newton from beta0 (zeros by default). Returns (beta_hat, OptimizerReport)."""
    problem.check_trainable()
    beta = np.zeros(problem.n) if beta0 is None else np.array(beta0, dtype=float)
    if beta.size != problem.n:
        raise SchemaError(f"beta0 has {beta.size} entries, expected {problem.n}")

    log = logger.info if opts.verbose else logger.debug
    value, grad = problem.value_and_grad(beta)
    _check_finite(value, grad, 0)
    grad_norm = float(np.max(np.abs(grad)))
    tolerance = opts.grad_tol * max(1.0, grad_norm)

    report = OptimizerReport(records=[IterationRecord(0, value, grad_norm, 0, 0.0)])
    log(f"iter 0: objective={value:.10g} |g|={grad_norm:.3e}")

    termination = TerminationReason.MAX_NEWTON
    for iteration in range(1, opts.max_newton + 1):
        if grad_norm <= tolerance:
            termination = TerminationReason.GRADIENT_TOL
            break

        cg = _newton_step(problem, beta, grad, opts)
        direction = cg.step
        slope = float(grad @ direction)
        if not slope < 0:
            direction = -grad
            slope = -float(grad @ grad)

        step = 1.0
        accepted: Optional[Tuple[np.ndarray, float, np.ndarray]] = None
        for _ in range(opts.max_backtracks):
            candidate = beta + step * direction
            cand_value, cand_grad = problem.value_and_grad(candidate)
            if math.isfinite(cand_value) and cand_value <= value + opts.armijo_c * step * slope:
                accepted = (candidate, cand_value, cand_grad)
                break
            step *= opts.backtrack_factor
        if accepted is None:
            termination = TerminationReason.LINE_SEARCH_FAILURE
            logger.warning(f"⚠️ Line search failed at Newton iteration {iteration}")
            break

        beta, value, grad = accepted
        _check_finite(value, grad, iteration)
        grad_norm = float(np.max(np.abs(grad)))
        report.records.append(IterationRecord(iteration, value, grad_norm, cg.iterations, step))
        log(f"iter {iteration}: objective={value:.10g} |g|={grad_norm:.3e} cg={cg.iterations} step={step:g}")
    else:
        if grad_norm <= tolerance:
            termination = TerminationReason.GRADIENT_TOL

    report.termination = termination
    return beta, report
