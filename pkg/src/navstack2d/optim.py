"""Small dense Levenberg-Marquardt solver for stacked residual problems.

Minimizes sum(r(x)**2) by damped Gauss-Newton steps. Only strictly improving
steps are accepted, so the reported cost sequence is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool
    cost_history: list[float] = field(default_factory=list)


def numeric_jacobian(residual_fn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a residual vector function."""
    x = np.asarray(x, dtype=float)
    r0 = np.asarray(residual_fn(x), dtype=float)
    J = np.empty((r0.size, x.size))
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        J[:, i] = (np.asarray(residual_fn(xp)) - np.asarray(residual_fn(xm))) / (2.0 * step)
    return J


def levenberg_marquardt(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    jac_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_iter: int = 25,
    step_tol: float = 1e-8,
    cost_tol: float = 1e-10,
    fd_step: float = 1e-6,
    lam0: float = 1e-4,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    max_retries: int = 8,
    max_step: Optional[float] = None,
) -> LMResult:
    """Damped least squares with multiplicative damping on diag(J^T J).

    `project` (when given) clamps a candidate point back into the feasible
    box before evaluation; accepted iterates therefore always satisfy it.
    `max_step` bounds the norm of a single step: directions the residuals
    barely observe must not drift arbitrarily far just because the cost
    still ticks down.
    """
    x = np.asarray(x0, dtype=float).copy()
    if project is not None:
        x = project(x)
    r = np.asarray(residual_fn(x), dtype=float)
    cost = float(r @ r)
    history = [cost]
    lam = lam0
    converged = False
    it = 0

    for it in range(1, max_iter + 1):
        J = jac_fn(x) if jac_fn is not None else numeric_jacobian(residual_fn, x, fd_step)
        JTJ = J.T @ J
        g = J.T @ r
        # Floor the damping diagonal relative to the strongest direction so
        # unobservable directions cannot take unbounded steps.
        raw = np.diag(JTJ)
        diag = np.maximum(raw, max(1e-6 * float(raw.max(initial=0.0)), 1e-12))

        accepted = False
        for _ in range(max_retries):
            try:
                dx = np.linalg.solve(JTJ + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if max_step is not None and float(np.linalg.norm(dx)) > max_step:
                lam *= 10.0
                continue
            x_new = x + dx
            if project is not None:
                x_new = project(x_new)
            r_new = np.asarray(residual_fn(x_new), dtype=float)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                decrease = cost - cost_new
                step_norm = float(np.linalg.norm(x_new - x))
                x, r, cost = x_new, r_new, cost_new
                history.append(cost)
                lam = max(lam * 0.3, 1e-12)
                accepted = True
                if step_norm < step_tol or decrease < cost_tol:
                    converged = True
                break
            lam *= 10.0
        if not accepted:
            converged = True  # no improving step exists at this damping range
            break
        if converged:
            break

    return LMResult(x, cost, it, converged, history)
