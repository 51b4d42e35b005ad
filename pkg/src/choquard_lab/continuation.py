"""Parameter sweeps and Newton continuation in (alpha, p).

Continuation path-follows the root of

    G(u; alpha, p) = (-Delta_h + 1) u - (|.|^{-alpha} * u^p) u^{p-1}

along a straight line in (alpha, p), with a damped Newton iteration whose
Jacobian is the radial-sector linearized operator.  Damping (step halving
on residual increase) is mandatory here: the derivative of the map is
continuous only at the Newtonian exponent pair itself, so undamped steps
can overshoot even close to the target.

Sweeps solve a lattice of parameter points (fresh or continued), record
norms and distances to the stored Newtonian reference state, and attach
nearest-to-zero sector eigenvalues on request.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .grid import (ChoquardParams, GridError, RadialField, RadialGrid,
                   differentiate, integrate_radial)
from .riesz import riesz_apply_matrix
from .solver import (ConvergenceError, GroundState, SolverOptions,
                     _newton_refine, fit_decay, solve_choquard, state_norms)


class ContinuationError(RuntimeError):
    """Newton continuation failed; carries the last good parameter point."""

    def __init__(self, message, last_good: ChoquardParams | None = None):
        super().__init__(message)
        self.last_good = last_good


def distances(grid: RadialGrid, a: np.ndarray, b: np.ndarray) -> dict:
    """L2, H1 and Linf distances of two profiles on a common grid."""
    diff = a - b
    l2sq = integrate_radial(grid, diff ** 2)
    dgrad = differentiate(grid, diff)
    h1sq = l2sq + integrate_radial(grid, dgrad ** 2)
    return {"L2": math.sqrt(max(l2sq, 0.0)),
            "H1": math.sqrt(max(h1sq, 0.0)),
            "Linf": float(np.max(np.abs(diff)))}


@dataclass
class SweepRecord:
    params: ChoquardParams
    converged: bool
    norms: dict
    dist_to_newtonian: dict
    spectral_summary: dict | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {"params": self.params.to_dict(),
                "converged": self.converged,
                "norms": self.norms,
                "dist_to_newtonian": self.dist_to_newtonian,
                "spectral_summary": self.spectral_summary,
                "message": self.message}


def _finish_state(params: ChoquardParams, grid: RadialGrid, u: np.ndarray,
                  residual: float, iterations: int) -> GroundState:
    fld = RadialField(grid=grid, values=u)
    state = GroundState(params=params, field=fld, residual=residual,
                        iterations=iterations, decay=None,
                        norms=state_norms(grid, u))
    try:
        state.decay = fit_decay(state)
    except Exception:
        state.decay = None
    return state


def newton_continue(base: GroundState, target: ChoquardParams,
                    steps: int = 4, opts: SolverOptions | None = None,
                    max_bisections: int = 6) -> GroundState:
    """Continue the base state to the target parameters.

    The homotopy is linear in (alpha, p) over ``steps`` increments; a
    failed Newton solve bisects the increment (up to ``max_bisections``
    times) before reporting the last good parameter point.  Returns a
    state whose fixed-point residual meets opts.tol; iteration residual
    history of the last increment is kept in ``newton_history``.
    """
    opts = opts or SolverOptions()
    grid = base.grid
    start = base.params
    if not isinstance(start, ChoquardParams):
        raise ContinuationError("continuation needs a nonlocal-equation state")
    if target.d != start.d:
        raise ContinuationError("cannot continue across dimensions")
    if target.alpha == start.alpha and target.p == start.p:
        state = base
        state.newton_history = [base.residual]
        return state

    u = base.field.values.copy()
    s_now = 0.0
    ds = 1.0 / steps
    last_good = start
    history = [base.residual]
    bisections = 0
    while s_now < 1.0 - 1e-12:
        s_try = min(1.0, s_now + ds)
        pars = ChoquardParams(
            start.d,
            (1 - s_try) * start.alpha + s_try * target.alpha,
            (1 - s_try) * start.p + s_try * target.p)
        W = riesz_apply_matrix(grid, pars.alpha, 0)
        u_try, hist = _newton_refine(grid, u, pars.p, W, opts.tol)
        if hist[-1] <= opts.tol:
            u = u_try
            s_now = s_try
            ds = min(2 * ds, 1.0 - s_now) if s_now < 1.0 else ds
            last_good = pars
            history = hist
        else:
            ds *= 0.5
            bisections += 1
            if bisections > max_bisections:
                raise ContinuationError(
                    f"Newton diverged at s={s_try:.4f} "
                    f"(residual {hist[-1]:.2e})", last_good=last_good)
    state = _finish_state(target, grid, u, history[-1],
                          iterations=len(history))
    state.newton_history = history
    return state


def sweep(d: int, alphas, ps, grid: RadialGrid,
          opts: SolverOptions | None = None,
          reference: GroundState | None = None,
          continue_from_reference: bool = False,
          with_spectrum: bool = False,
          jobs: int = 1):
    """Solve every lattice point and record distances to the Newtonian state.

    Per-point failures are recorded (``converged=False``) and the sweep
    continues; records are returned in lattice order (alphas outer, ps
    inner) regardless of the worker pool.
    """
    opts = opts or SolverOptions()
    if grid.d != d:
        raise GridError(f"grid dimension {grid.d} != requested dimension {d}")
    alphas = list(alphas)
    ps = list(ps)
    if not alphas or not ps:
        raise ValueError("sweep lattice is empty")
    if reference is None:
        reference = solve_choquard(ChoquardParams(d, float(d - 2), 2.0),
                                   grid, opts)
    ref_values = reference.field.values

    points = [(a, p) for a in alphas for p in ps]

    def run_point(point):
        a, p = point
        try:
            pars = ChoquardParams(d, a, p)
            if continue_from_reference:
                st = newton_continue(reference, pars, opts=opts)
            else:
                st = solve_choquard(pars, grid, opts)
        except (ConvergenceError, ContinuationError, ValueError) as exc:
            return SweepRecord(
                params=ChoquardParams(d, a, max(p, 1.0)),
                converged=False, norms={}, dist_to_newtonian={},
                message=str(exc))
        summary = None
        if with_spectrum:
            from .spectrum import assemble_lplus, eig_smallest
            summary = {}
            for ell in (0, 1):
                pairs = eig_smallest(assemble_lplus(st, ell), 4)
                vals = [v for v, _ in pairs]
                summary[f"nearest_zero_ell{ell}"] = min(vals, key=abs)
        return SweepRecord(
            params=st.params, converged=True, norms=st.norms,
            dist_to_newtonian=distances(grid, st.field.values, ref_values),
            spectral_summary=summary)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(run_point, points))
    else:
        records = [run_point(pt) for pt in points]
    return records


def sweep_to_csv(records, path) -> None:
    cols = ["alpha", "p", "converged", "L2", "H1", "Linf",
            "dist_L2", "dist_H1", "dist_Linf",
            "nearest_zero_ell0", "nearest_zero_ell1"]
    lines = [",".join(cols)]
    for rec in records:
        row = [f"{rec.params.alpha:.17g}", f"{rec.params.p:.17g}",
               "1" if rec.converged else "0"]
        for key in ("L2", "H1", "Linf"):
            row.append(f"{rec.norms.get(key, float('nan')):.17g}")
        for key in ("L2", "H1", "Linf"):
            row.append(f"{rec.dist_to_newtonian.get(key, float('nan')):.17g}")
        ss = rec.spectral_summary or {}
        row.append(f"{ss.get('nearest_zero_ell0', float('nan')):.17g}")
        row.append(f"{ss.get('nearest_zero_ell1', float('nan')):.17g}")
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def sweep_manifest(records, grid: RadialGrid, d: int) -> str:
    return json.dumps({
        "d": d,
        "grid": grid.to_dict(),
        "points": [rec.to_dict() for rec in records],
    }, indent=2)
