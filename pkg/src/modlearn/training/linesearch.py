"""
One-dimensional line searches along a descent direction.

Both searches take ``f(t)``, the objective at step ``t``, together with
``f0 = f(0)`` and the directional derivative ``slope0 < 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["LineSearchResult", "backtracking_armijo", "bracketing",
           "armijo_holds", "LINE_SEARCHES"]


@dataclass
class LineSearchResult:
    step: float
    value: float
    evaluations: int
    success: bool


def armijo_holds(f0, slope0, step, f_step, c1=1e-4) -> bool:
    """Sufficient decrease: ``f(step) <= f0 + c1 * step * slope0``."""
    return math.isfinite(f_step) and f_step <= f0 + c1 * step * slope0


def _check(slope0):
    if not slope0 < 0:
        raise ValueError(f"line search needs a descent direction "
                         f"(slope0 < 0), got slope0={slope0!r}")


def backtracking_armijo(f, f0, slope0, c1=1e-4, shrink=0.5, max_halvings=50,
                        initial_step=1.0) -> LineSearchResult:
    """Try ``initial_step`` and shrink it until the Armijo condition holds.

    After ``max_halvings`` failed reductions the result has ``success``
    false and step 0.
    """
    _check(slope0)
    step = float(initial_step)
    for i in range(max_halvings + 1):
        value = float(f(step))
        if armijo_holds(f0, slope0, step, value, c1):
            return LineSearchResult(step, value, i + 1, True)
        step *= shrink
    return LineSearchResult(0.0, f0, max_halvings + 1, False)


def bracketing(f, f0, slope0, c1=1e-4, shrink=0.5, max_halvings=50,
               initial_step=1.0, max_iter=20, tol=1e-10) -> LineSearchResult:
    """
    Approximate minimization along the line by repeated quadratic fits.

    Each fit passes through ``(0, f0)`` with slope ``slope0`` and through
    the latest trial point; its minimizer is the next trial. When the fit
    has no minimum the step is doubled. Exact for quadratics after one fit.
    The lowest trial that satisfies the Armijo condition is returned;
    if none does, falls back to backtracking.
    """
    _check(slope0)
    evaluations = 0
    best = None
    t = float(initial_step)
    for _ in range(max_iter):
        ft = float(f(t))
        evaluations += 1
        if armijo_holds(f0, slope0, t, ft, c1) and (best is None
                                                    or ft < best[1]):
            best = (t, ft)
        if not math.isfinite(ft):
            t *= shrink
            continue
        curvature = (ft - f0 - slope0 * t) / (t * t)
        if curvature <= 0:
            t_new = 2.0 * t
        else:
            t_new = -slope0 / (2.0 * curvature)
        if abs(t_new - t) <= tol * max(t, t_new):
            break
        t = t_new
    if best is not None:
        return LineSearchResult(best[0], best[1], evaluations, True)
    res = backtracking_armijo(f, f0, slope0, c1, shrink, max_halvings,
                              initial_step)
    res.evaluations += evaluations
    return res


LINE_SEARCHES = {"backtracking": backtracking_armijo, "bracketing": bracketing}
