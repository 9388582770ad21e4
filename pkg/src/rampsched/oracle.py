"""Brute-force dispatch verifier on the time-discretized problem.

Independently of the shooting solver, the dispatch objective can be
discretized on the load grid into a finite-dimensional convex quadratic
in the miner draw vector pm:

    J(pm) = sum_i ( g*pg_i^2 + d*ramp_i^2 - cm_i*pm_i ) * dt,
    pg_i  = pl_i + pm_i,
    ramp_i = (pg_{i+1 mod N} - pg_i) / dt     (periodic forward difference)

with the box 0 <= pm_i <= Pbar enforced exactly by projection rather
than a penalty.  Projected gradient descent on this program provides
ground truth for the shooting solver on desk-scale instances.

The iteration works on the time-density J/dt (same minimizer), whose
gradient has the exact Lipschitz bound L = 2g + 8d/dt^2 used for the
default step; the objective reported is J itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .pmp import SOLUTION_CSV_HEADER, Scenario, _cm_nodes

DEFAULT_MAX_ITERS = 200_000
_STEP_SAFETY = 0.9
_TOL_GRAD_FRACTION = 1e-8


@dataclass(frozen=True)
class DiscreteSolution:
    """Result of one projected-gradient solve."""

    pm: np.ndarray
    objective: float
    iterations: int
    grad_norm: float


def lipschitz_bound(sc: Scenario) -> float:
    """Gradient Lipschitz constant of the density objective J/dt."""
    dt = sc.load.dt
    return 2.0 * sc.cost.g + 8.0 * sc.cost.d / (dt * dt)


def discretize_objective(sc: Scenario, pm: np.ndarray) -> float:
    """Discrete objective J(pm) in $ over one period."""
    pm = np.asarray(pm, dtype=float)
    pl = sc.load.values
    if pm.shape != pl.shape:
        raise DimensionError(
            f"pm has length {pm.size}, load grid has {pl.size}")
    dt = sc.load.dt
    pg = pl + pm
    ramp = (np.roll(pg, -1) - pg) / dt
    cm = _cm_nodes(sc)
    density = sc.cost.g * pg * pg + sc.cost.d * ramp * ramp - cm * pm
    return float(density.sum() * dt)


def _gradient_density(sc: Scenario, pm: np.ndarray) -> np.ndarray:
    """Gradient of J/dt with respect to pm (exact, from the quadratic form)."""
    dt = sc.load.dt
    pg = sc.load.values + pm
    curvature = 2.0 * pg - np.roll(pg, 1) - np.roll(pg, -1)
    return (2.0 * sc.cost.g * pg - _cm_nodes(sc)
            + (2.0 * sc.cost.d / (dt * dt)) * curvature)


def _projected_residual(pm: np.ndarray, grad: np.ndarray, pbar: float) -> float:
    """Sup-norm KKT residual: gradient components pointing into the box."""
    res = grad.copy()
    at_lo = pm <= 0.0
    at_hi = pm >= pbar
    res[at_lo] = np.minimum(grad[at_lo], 0.0)
    res[at_hi] = np.maximum(grad[at_hi], 0.0)
    return float(np.max(np.abs(res)))


def default_start(sc: Scenario) -> np.ndarray:
    """Closed-form start: the clipped pointwise revenue-optimal draw.

    clip(cm/2g - pl, 0, Pbar) is the exact optimum of the ramp-free
    problem, and for the circulant quadratic here its mean level is
    already the optimal one whenever the box stays inactive -- the one
    error component plain gradient steps would correct slowly (that
    direction's Hessian eigenvalue is only 2g).
    """
    base = _cm_nodes(sc) / (2.0 * sc.cost.g) - sc.load.values
    return np.clip(base, 0.0, sc.cost.pbar_kw)


def solve_projected_gradient(sc: Scenario, pm0: np.ndarray | None = None,
                             step: float | None = None,
                             max_iters: int = DEFAULT_MAX_ITERS,
                             tol_grad: float | None = None) -> DiscreteSolution:
    """Minimize the discrete objective over the box by projected gradient.

    Iterates pm <- clip(pm - step*grad, 0, Pbar) until the projected
    gradient sup-norm drops below tol_grad or max_iters is reached;
    non-convergence is reported through grad_norm, never raised.

    Args:
        pm0: start vector; defaults to `default_start`.
        step: positive step, at most 1/L with L = 2g + 8d/dt^2
            (default 0.9/L, guaranteed descent for this quadratic).
        max_iters: iteration cap.
        tol_grad: projected-gradient tolerance (default 1e-8 * Pbar).
    """
    pbar = sc.cost.pbar_kw
    lip = lipschitz_bound(sc)
    if step is None:
        step = _STEP_SAFETY / lip
    if not 0.0 < step <= 1.0 / lip:
        raise ValidationError(
            f"step must be in (0, {1.0 / lip:.3e}], got {step:.3e}")
    if tol_grad is None:
        tol_grad = _TOL_GRAD_FRACTION * pbar

    if pm0 is None:
        pm = default_start(sc)
    else:
        pm = np.asarray(pm0, dtype=float).copy()
        if pm.shape != sc.load.values.shape:
            raise DimensionError(
                f"pm0 has length {pm.size}, load grid has {sc.load.count}")
        pm = np.clip(pm, 0.0, pbar)

    grad = _gradient_density(sc, pm)
    grad_norm = _projected_residual(pm, grad, pbar)
    iters = 0
    while grad_norm > tol_grad and iters < max_iters:
        pm = np.clip(pm - step * grad, 0.0, pbar)
        grad = _gradient_density(sc, pm)
        grad_norm = _projected_residual(pm, grad, pbar)
        iters += 1

    return DiscreteSolution(
        pm=pm, objective=discretize_objective(sc, pm),
        iterations=iters, grad_norm=grad_norm)


def oracle_diagnostics(sol: DiscreteSolution, sc: Scenario) -> dict:
    """Diagnostics document mirroring the solver's JSON export."""
    tol = _TOL_GRAD_FRACTION * sc.cost.pbar_kw
    return {
        "converged": bool(sol.grad_norm <= tol),
        "iterations": sol.iterations,
        "grad_norm": sol.grad_norm,
        "objective_usd": sol.objective,
    }


def oracle_to_csv(sol: DiscreteSolution, sc: Scenario) -> str:
    """Render the discrete solution in the solver's CSV column shape.

    The ramp column is the periodic forward difference of pg and the
    costate column is the value implied by the optimal control law.
    """
    dt = sc.load.dt
    n = sc.load.count
    pl_ext = np.concatenate([sc.load.values, sc.load.values[:1]])
    pm_ext = np.concatenate([sol.pm, sol.pm[:1]])
    pg_ext = pl_ext + pm_ext
    fwd = (np.roll(pg_ext[:n], -1) - pg_ext[:n]) / dt
    u_ext = np.concatenate([fwd, fwd[:1]])
    lam_ext = -2.0 * sc.cost.d * u_ext
    lines = [SOLUTION_CSV_HEADER]
    for i in range(n + 1):
        lines.append(",".join(repr(float(v)) for v in (
            i * dt, pg_ext[i], lam_ext[i], u_ext[i],
            pm_ext[i], pm_ext[i], pl_ext[i])))
    return "\n".join(lines) + "\n"
