"""General-purpose minimizers used by the compression and sampling layers.

``lbfgs_minimize`` wraps scipy's limited-memory BFGS behind a fixed result
contract. ``pattern_search_minimize`` is a derivative-free coordinate poll
method that repeatedly optimizes random coordinate subsets, for objectives
that are noise-free but expensive and gradient-less. Objectives are passed
through :class:`ObjectiveHandle`, which enforces an evaluation budget and
records every evaluation.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.optimize

__all__ = [
    "LbfgsResult",
    "ObjectiveHandle",
    "PatternSearchConfig",
    "PatternSearchResult",
    "format_trace",
    "lbfgs_minimize",
    "pattern_search_minimize",
]

LBFGS_MEMORY = 10
LBFGS_GRAD_TOL = 1e-8
LBFGS_F_TOL = 1e-12

MESH_FLOOR = 1e-6
MESH_CONTRACT = 0.5
MESH_EXPAND = 2.0


@dataclasses.dataclass(frozen=True)
class LbfgsResult:
    x: np.ndarray
    fun: float
    status: str  # "converged" | "max_iter" | "line_search_failure"
    iterations: int


def lbfgs_minimize(
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    max_iter: int = 100,
    grad_tol: float = LBFGS_GRAD_TOL,
    f_tol: float = LBFGS_F_TOL,
) -> LbfgsResult:
    """Minimize a smooth function with L-BFGS.

    Accepted iterates are monotone non-increasing and the returned point
    never exceeds the starting value: the best evaluated point is tracked
    independently of the optimizer's own bookkeeping.

    Args:
        fun: Objective.
        grad: Gradient of the objective.
        x0: Starting point.
        max_iter: Iteration cap.
        grad_tol: Convergence threshold on the gradient infinity norm.
        f_tol: Convergence threshold on the relative objective decrease.

    Returns:
        A :class:`LbfgsResult` with status ``converged``, ``max_iter`` or
        ``line_search_failure``.
    """
    x0 = np.asarray(x0, dtype=float)
    best = {"x": x0.copy(), "f": float(fun(x0))}

    def tracked(x: np.ndarray) -> float:
        value = float(fun(x))
        if value < best["f"]:
            best["f"] = value
            best["x"] = np.asarray(x, dtype=float).copy()
        return value

    result = scipy.optimize.minimize(
        tracked,
        x0,
        jac=lambda x: np.asarray(grad(x), dtype=float),
        method="L-BFGS-B",
        options={
            "maxiter": max_iter,
            "maxcor": LBFGS_MEMORY,
            "gtol": grad_tol,
            "ftol": f_tol,
            "maxls": 40,
        },
    )
    if result.fun <= best["f"]:
        best = {"x": np.asarray(result.x, dtype=float), "f": float(result.fun)}
    if result.status == 0:
        status = "converged"
    elif result.status == 1:
        status = "max_iter"
    else:
        status = "line_search_failure"
    return LbfgsResult(x=best["x"], fun=best["f"], status=status, iterations=int(result.nit))


class ObjectiveHandle:
    """Budgeted objective wrapper that records every evaluation.

    Calling the handle evaluates the wrapped callback, appends the ``(x, f)``
    pair to :attr:`trace` and increments :attr:`evaluations`. A call past the
    budget raises instead of evaluating, so the counter can never exceed the
    budget.

    Attributes:
        budget: Maximum number of evaluations allowed.
        evaluations: Evaluations consumed so far; always ``len(trace)``.
        trace: All ``(x, f)`` pairs, in evaluation order.
        grad: Optional gradient callback, passed through untracked.
    """

    def __init__(
        self,
        fun: Callable[[np.ndarray], float],
        budget: int,
        grad: Callable[[np.ndarray], np.ndarray] | None = None,
    ) -> None:
        if budget < 0:
            raise ValueError(f"budget must be nonnegative, got {budget}")
        self._fun = fun
        self.grad = grad
        self.budget = int(budget)
        self.evaluations = 0
        self.trace: list[tuple[np.ndarray, float]] = []

    @property
    def remaining(self) -> int:
        return self.budget - self.evaluations

    def __call__(self, x: np.ndarray) -> float:
        if self.evaluations >= self.budget:
            raise RuntimeError(
                f"objective budget of {self.budget} evaluations exhausted"
            )
        value = float(self._fun(x))
        self.trace.append((np.array(x, dtype=float), value))
        self.evaluations += 1
        return value


@dataclasses.dataclass(frozen=True)
class PatternSearchConfig:
    """Settings for :func:`pattern_search_minimize`.

    Attributes:
        total_budget: Total objective evaluations allowed for the run.
        subproblem_size: Coordinates per randomly drawn subset.
        subproblem_budget: Evaluations allotted to one subset before redrawing.
        initial_mesh: Starting per-coordinate step size.
        mesh_contract: Mesh shrink factor after a failed full poll pass.
        mesh_expand: Mesh growth factor after an accepted step.
        seed: Seed for the subset draws; fixes the run bit-for-bit.
    """

    total_budget: int = 500
    subproblem_size: int = 20
    subproblem_budget: int = 20
    initial_mesh: float = 0.1
    mesh_contract: float = MESH_CONTRACT
    mesh_expand: float = MESH_EXPAND
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total_budget < 0:
            raise ValueError(f"total_budget must be nonnegative, got {self.total_budget}")
        if self.subproblem_size < 1 or self.subproblem_budget < 1:
            raise ValueError("subproblem_size and subproblem_budget must be at least 1")
        if self.initial_mesh <= 0:
            raise ValueError(f"initial_mesh must be positive, got {self.initial_mesh}")
        if not 0 < self.mesh_contract < 1:
            raise ValueError(f"mesh_contract must lie in (0, 1), got {self.mesh_contract}")
        if self.mesh_expand <= 1:
            raise ValueError(f"mesh_expand must exceed 1, got {self.mesh_expand}")


class PatternSearchResult(NamedTuple):
    """Best point, best value, and the full ``(x, f)`` evaluation trace."""

    x: np.ndarray
    fun: float
    trace: tuple[tuple[np.ndarray, float], ...]


def pattern_search_minimize(
    fun: ObjectiveHandle | Callable[[np.ndarray], float],
    x0: np.ndarray,
    config: PatternSearchConfig | None = None,
) -> PatternSearchResult:
    """Derivative-free minimization by decomposed coordinate polling.

    The full coordinate space is attacked in randomly drawn subsets of
    ``subproblem_size`` coordinates. Within a subset, coordinates are polled
    at ``+/- mesh`` steps; the first strict improvement is accepted and
    expands the subset's mesh, while a full poll pass with no improvement
    contracts it (floored at 1e-6). The incumbent carries across subproblems.

    Args:
        fun: Objective, either bare or already wrapped in an
            :class:`ObjectiveHandle`. A handle's remaining budget caps the
            run in addition to ``config.total_budget``.
        x0: Starting point.
        config: Run settings; defaults to ``PatternSearchConfig()``.

    Returns:
        A :class:`PatternSearchResult`, unpacking as ``(x, fun, trace)``, where
        the trace holds this run's ``(x, f)`` pairs in evaluation order. With
        a zero budget the start point is returned unevaluated with objective
        ``nan`` and an empty trace.
    """
    config = PatternSearchConfig() if config is None else config
    handle = fun if isinstance(fun, ObjectiveHandle) else ObjectiveHandle(fun, config.total_budget)
    allowed = min(config.total_budget, handle.remaining)

    x = np.array(x0, dtype=float)
    dim = x.size
    if allowed <= 0:
        return PatternSearchResult(x=x, fun=math.nan, trace=())

    rng = np.random.default_rng(config.seed)
    start = len(handle.trace)

    def spent() -> int:
        return len(handle.trace) - start

    fx = handle(x)
    mesh = np.full(dim, float(config.initial_mesh))

    while spent() < allowed:
        size = min(config.subproblem_size, dim)
        subset = rng.choice(dim, size=size, replace=False)
        used = 0
        while used < config.subproblem_budget and spent() < allowed:
            improved = False
            for coord in subset:
                for direction in (1.0, -1.0):
                    candidate = x.copy()
                    candidate[coord] += direction * mesh[coord]
                    value = handle(candidate)
                    used += 1
                    if value < fx:
                        x, fx = candidate, value
                        improved = True
                    if improved or used >= config.subproblem_budget or spent() >= allowed:
                        break
                if improved or used >= config.subproblem_budget or spent() >= allowed:
                    break
            if improved:
                mesh[subset] = mesh[subset] * config.mesh_expand
            elif used < config.subproblem_budget and spent() < allowed:
                # Full poll pass over the subset failed.
                mesh[subset] = np.maximum(mesh[subset] * config.mesh_contract, MESH_FLOOR)

    return PatternSearchResult(x=x, fun=fx, trace=tuple(handle.trace[start:]))


def format_trace(trace: Sequence[tuple[np.ndarray, float]]) -> str:
    """Render a trace as ``iteration evaluations best`` lines.

    One line is emitted per strict improvement of the incumbent (the first
    evaluation always counts): the improvement ordinal, the number of
    evaluations consumed when it happened, and the new best value.
    """
    lines = []
    best = math.inf
    for count, (_, value) in enumerate(trace, start=1):
        if value < best:
            best = value
            lines.append(f"{len(lines)} {count} {best:.10e}")
    return "\n".join(lines)
