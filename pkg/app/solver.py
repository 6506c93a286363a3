"""Constrained minimization for the correction step.

Callables return ``(value, gradient)``. Equalities must be zero and
inequalities non-negative at a solution. The solve runs through SciPy's
SLSQP; convergence is judged afterwards from the constraint tolerances and
a first-order (KKT) stationarity residual, independent of the SciPy flag.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import lsq_linear, minimize

from app.exceptions import InvalidArgumentError, NumericalFailureError
from app.schemas import SolverConfig

logger = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass
class NlpProblem:
    dimension: int
    objective: Evaluator
    initial_point: np.ndarray
    equalities: List[Evaluator] = field(default_factory=list)
    inequalities: List[Evaluator] = field(default_factory=list)

    def __post_init__(self):
        self.initial_point = np.asarray(self.initial_point, dtype=np.float64).reshape(-1)
        if self.initial_point.shape != (self.dimension,):
            raise InvalidArgumentError(f"initial point has shape {self.initial_point.shape}, expected ({self.dimension},)")


@dataclass
class SolverResult:
    x: np.ndarray
    value: float
    iterations: int
    max_violation: float
    converged: bool
    eq_violation: float = 0.0
    ineq_violation: float = 0.0
    kkt_residual: float = 0.0
    message: str = ""


class _Cached:
    """Evaluates once per point and hands out value and gradient separately"""

    def __init__(self, fn: Evaluator, label: str):
        self.fn = fn
        self.label = label
        self._x: Optional[np.ndarray] = None
        self._out: Tuple[float, np.ndarray] = (0.0, np.zeros(0))

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        if self._x is None or not np.array_equal(x, self._x):
            value, grad = self.fn(x)
            value = float(value)
            grad = np.asarray(grad, dtype=np.float64).reshape(-1)
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise NumericalFailureError(f"non-finite {self.label} evaluation", point=np.array(x, copy=True))
            self._x = np.array(x, copy=True)
            self._out = (value, grad)
        return self._out

    def value(self, x: np.ndarray) -> float:
        return self(x)[0]

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self(x)[1]


def _stationarity_residual(
    grad_f: np.ndarray,
    eq_grads: List[np.ndarray],
    active_grads: List[np.ndarray],
) -> float:
    """Least-squares multiplier fit; residual relative to ``max(1, |∇f|∞)``"""
    scale = max(1.0, float(np.max(np.abs(grad_f))) if grad_f.size else 1.0)
    columns = eq_grads + active_grads
    if not columns:
        return float(np.max(np.abs(grad_f))) / scale if grad_f.size else 0.0
    a = np.column_stack(columns)
    lower = np.concatenate([np.full(len(eq_grads), -np.inf), np.zeros(len(active_grads))])
    upper = np.full(len(columns), np.inf)
    fit = lsq_linear(a, grad_f, bounds=(lower, upper), lsmr_tol="auto")
    return float(np.max(np.abs(a @ fit.x - grad_f))) / scale


def minimize_constrained(problem: NlpProblem, config: Optional[SolverConfig] = None) -> SolverResult:
    config = config or SolverConfig()
    objective = _Cached(problem.objective, "objective")
    equalities = [_Cached(fn, f"equality[{k}]") for k, fn in enumerate(problem.equalities)]
    inequalities = [_Cached(fn, f"inequality[{k}]") for k, fn in enumerate(problem.inequalities)]

    x0 = problem.initial_point.copy()
    objective(x0)
    for c in equalities + inequalities:
        c(x0)

    constraints = [{"type": "eq", "fun": c.value, "jac": c.grad} for c in equalities]
    constraints += [{"type": "ineq", "fun": c.value, "jac": c.grad} for c in inequalities]

    res = minimize(
        objective.value,
        x0,
        jac=objective.grad,
        method="SLSQP",
        constraints=constraints,
        options={"maxiter": config.max_iters, "ftol": 1e-12},
    )
    x = np.asarray(res.x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericalFailureError("solver returned a non-finite point", point=x)

    value, grad_f = objective(x)
    eq_values = np.array([c(x)[0] for c in equalities])
    ineq_values = np.array([c(x)[0] for c in inequalities])
    eq_violation = float(np.max(np.abs(eq_values))) if eq_values.size else 0.0
    ineq_violation = float(max(0.0, -ineq_values.min())) if ineq_values.size else 0.0

    active = [c(x)[1] for c, g in zip(inequalities, ineq_values) if g <= 10.0 * config.ineq_tol]
    kkt = _stationarity_residual(grad_f, [c(x)[1] for c in equalities], active)

    converged = eq_violation <= config.eq_tol and ineq_violation <= config.ineq_tol and kkt <= config.kkt_tol
    if not converged:
        logger.debug(
            "SLSQP stopped without meeting tolerances: eq=%.2e ineq=%.2e kkt=%.2e (%s)",
            eq_violation, ineq_violation, kkt, res.message,
        )
    return SolverResult(
        x=x,
        value=float(value),
        iterations=int(getattr(res, "nit", 0)),
        max_violation=max(eq_violation, ineq_violation),
        converged=bool(converged),
        eq_violation=eq_violation,
        ineq_violation=ineq_violation,
        kkt_residual=kkt,
        message=str(res.message),
    )


def check_gradient(problem: NlpProblem, point, h: float = 1e-6) -> float:
    """Worst relative mismatch between analytic and central-difference gradients"""
    if not h > 0:
        raise InvalidArgumentError(f"step must be positive, got {h}")
    x = np.asarray(point, dtype=np.float64).reshape(-1)
    worst = 0.0
    for fn in [problem.objective] + list(problem.equalities) + list(problem.inequalities):
        _, grad = fn(x)
        grad = np.asarray(grad, dtype=np.float64).reshape(-1)
        numeric = np.zeros_like(x)
        for k in range(len(x)):
            step = np.zeros_like(x)
            step[k] = h
            numeric[k] = (fn(x + step)[0] - fn(x - step)[0]) / (2.0 * h)
        err = float(np.max(np.abs(numeric - grad))) / max(1.0, float(np.max(np.abs(grad))))
        worst = max(worst, err)
    return worst
