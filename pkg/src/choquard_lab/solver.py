"""Ground-state solvers for the nonlocal equation and its local model.

The discrete problem for the nonlocal equation is

    (-Delta_h + 1) u = (W u^p) u^{p-1},   W = Riesz application operator,

solved by a normalized fixed-point iteration: each step applies the
inverse shifted Laplacian to the nonlinearity and rescales by a power of
the Rayleigh quotient S = <(-Delta+1)u, u> / <N(u), u> so that the
energy-balance identity holds at the fixed point.  A damped Newton
polish (same Jacobian as the continuation module) finishes to the
requested residual when the fixed-point tail stalls.

The local model -u'' + u - u^p = 0 in d = 1 is additionally offered on a
Numerov discretization (fourth order), accurate enough to compare
against the closed-form soliton family to 1e-6 on moderate grids.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from .grid import (ChoquardParams, GridError, ParameterError, RadialField,
                   RadialGrid, differentiate, integrate_radial,
                   kinetic_dense, kinetic_tridiag)
from .riesz import riesz_apply_matrix


class ConvergenceError(RuntimeError):
    """Solver failed to reach the requested residual."""

    def __init__(self, message, last_residual=None, iterations=None):
        super().__init__(message)
        self.last_residual = last_residual
        self.iterations = iterations


class FitError(ValueError):
    """Tail fit cannot be performed reliably."""


@dataclass(frozen=True)
class ModelParams:
    """Parameters (d, p) of the local model equation."""

    d: int
    p: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ParameterError(f"d must be a positive integer, got {self.d}")
        if self.p <= 1.0:
            raise ParameterError(f"p must be > 1, got {self.p}")
        if self.d >= 3 and self.p >= (self.d + 2) / (self.d - 2):
            raise ParameterError(
                f"p={self.p} supercritical for d={self.d} "
                f"(needs p < {(self.d + 2) / (self.d - 2)})")

    def to_dict(self) -> dict:
        return {"d": self.d, "p": self.p}


@dataclass
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 2000
    method: str = "petviashvili"   # or "flow"
    newton_polish: bool = True
    flow_step: float = 0.6
    verbose: bool = False


@dataclass
class DecayFit:
    gamma: float
    C: float
    beta: float
    window: tuple

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "C": self.C, "beta": self.beta,
                "window": list(self.window)}


@dataclass
class GroundState:
    params: ChoquardParams | ModelParams
    field: RadialField
    residual: float
    iterations: int
    decay: DecayFit | None
    norms: dict

    @property
    def grid(self) -> RadialGrid:
        return self.field.grid

    @property
    def equation(self) -> str:
        return "choquard" if isinstance(self.params, ChoquardParams) else "model"

    def to_json(self) -> str:
        return json.dumps({
            "equation": self.equation,
            "params": self.params.to_dict(),
            "grid": self.grid.to_dict(),
            "residual": self.residual,
            "iterations": self.iterations,
            "decay": self.decay.to_dict() if self.decay else None,
            "norms": self.norms,
        }, indent=2)

    def save(self, stem) -> None:
        """Write <stem>.json metadata and <stem>.csv profile."""
        stem = Path(stem)
        stem.with_suffix(".json").write_text(self.to_json())
        self.field.to_csv(stem.with_suffix(".csv"))

    @classmethod
    def load(cls, stem) -> "GroundState":
        stem = Path(stem)
        meta = json.loads(stem.with_suffix(".json").read_text())
        grid = RadialGrid.from_dict(meta["grid"])
        fld = RadialField.from_csv(stem.with_suffix(".csv"), grid=grid)
        if meta["equation"] == "choquard":
            params = ChoquardParams.from_dict(meta["params"])
        else:
            params = ModelParams(int(meta["params"]["d"]),
                                 float(meta["params"]["p"]))
        decay = None
        if meta.get("decay"):
            dd = meta["decay"]
            decay = DecayFit(dd["gamma"], dd["C"], dd["beta"],
                             tuple(dd["window"]))
        return cls(params=params, field=fld, residual=meta["residual"],
                   iterations=meta["iterations"], decay=decay,
                   norms=meta["norms"])


# ---------------------------------------------------------------------------
# shared discrete pieces


def _apply_banded(ab: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def nonlinear_term(u: np.ndarray, p: float, W: np.ndarray | None) -> np.ndarray:
    """N(u): (W u^p) u^{p-1} for the nonlocal equation, u^p for the model."""
    if W is None:
        return np.abs(u) ** (p - 1) * u
    return (W @ np.abs(u) ** p) * np.abs(u) ** (p - 2) * u


def equation_residual(grid: RadialGrid, u: np.ndarray, p: float,
                      W: np.ndarray | None, ab=None) -> np.ndarray:
    """Pointwise residual (-Delta_h + 1) u - N(u)."""
    if ab is None:
        ab = kinetic_tridiag(grid, 0, shift=1.0)
    return _apply_banded(ab, u) - nonlinear_term(u, p, W)


def state_norms(grid: RadialGrid, values: np.ndarray) -> dict:
    l2sq = integrate_radial(grid, values ** 2)
    du = differentiate(grid, values)
    gradsq = integrate_radial(grid, du ** 2)
    return {
        "L2": math.sqrt(max(l2sq, 0.0)),
        "grad_L2": math.sqrt(max(gradsq, 0.0)),
        "H1": math.sqrt(max(l2sq + gradsq, 0.0)),
        "Linf": float(np.max(np.abs(values))),
    }


def linearized_matrix(grid: RadialGrid, u: np.ndarray, p: float,
                      W: np.ndarray | None) -> np.ndarray:
    """Dense Jacobian of (-Delta_h + 1) u - N(u) about u (radial sector).

    For the nonlocal equation this is the radial-sector restriction of
    the linearized operator: -Delta + 1 - (p-1) V - p A with
    V = (W u^p) u^{p-2} and (A xi) = u^{p-1} W(u^{p-1} xi).
    """
    J = kinetic_dense(grid, 0, shift=1.0)
    n = grid.n
    idx = np.arange(n)
    if W is None:
        J[idx, idx] -= p * np.abs(u) ** (p - 1)
    else:
        up = np.abs(u) ** p
        V = (W @ up) * np.abs(u) ** (p - 2)
        J[idx, idx] -= (p - 1) * V
        upm1 = np.abs(u) ** (p - 1)
        J -= p * upm1[:, None] * W * upm1[None, :]
    return J


def _newton_refine(grid: RadialGrid, u: np.ndarray, p: float,
                   W: np.ndarray | None, tol: float, max_steps: int = 25,
                   ab=None):
    """Damped Newton to the discrete root; returns (u, residuals)."""
    if ab is None:
        ab = kinetic_tridiag(grid, 0, shift=1.0)
    res_hist = []
    G = equation_residual(grid, u, p, W, ab)
    res = float(np.max(np.abs(G)))
    res_hist.append(res)
    for _ in range(max_steps):
        if res <= tol:
            break
        J = linearized_matrix(grid, u, p, W)
        step = np.linalg.solve(J, G)
        theta = 1.0
        while theta > 1e-4:
            trial = u - theta * step
            Gt = equation_residual(grid, trial, p, W, ab)
            rt = float(np.max(np.abs(Gt)))
            if rt < res:
                u, G, res = trial, Gt, rt
                break
            theta *= 0.5
        else:
            break
        res_hist.append(res)
    return u, res_hist


# ---------------------------------------------------------------------------
# normalized fixed-point iteration


def _petviashvili(grid: RadialGrid, u0: np.ndarray, p: float,
                  W: np.ndarray | None, opts: SolverOptions):
    """Returns (u, residual, n_iter).  W = None selects the local model."""
    ab = kinetic_tridiag(grid, 0, shift=1.0)
    m = grid.measure
    # stabilizing exponent: homogeneity 2p of the nonlocal energy, p+1 local
    gamma = (2 * p) / (2 * p - 1) if W is not None else p / (p - 1.0)
    u = u0.copy()
    res_prev = np.inf
    stall = 0
    n_iter = 0
    for k in range(opts.max_iter):
        n_iter = k + 1
        Nu = nonlinear_term(u, p, W)
        num = float(np.sum(m * u * _apply_banded(ab, u)))
        den = float(np.sum(m * u * Nu))
        if den <= 0 or num <= 0:
            raise ConvergenceError("iteration lost positivity of the "
                                   "energy quotient", iterations=n_iter)
        S = num / den
        u_new = S ** gamma * solve_banded((1, 1), ab, Nu)
        if opts.method == "flow":
            u_new = (1 - opts.flow_step) * u + opts.flow_step * u_new
        res = float(np.max(np.abs(equation_residual(grid, u_new, p, W, ab))))
        u = u_new
        if res <= opts.tol:
            return u, res, n_iter
        if res > 0.97 * res_prev:
            stall += 1
        else:
            stall = 0
        res_prev = res
        # fixed-point tail converges slowly; hand over to Newton
        if opts.newton_polish and (res < 1e-6 or stall >= 12) and k >= 20:
            break
    if opts.newton_polish:
        u, hist = _newton_refine(grid, u, p, W, opts.tol, ab=ab)
        res = hist[-1]
        n_iter += len(hist) - 1
        if res <= opts.tol:
            return u, res, n_iter
    raise ConvergenceError(
        f"no convergence after {n_iter} iterations (residual {res:.3e})",
        last_residual=res, iterations=n_iter)


def _initial_gaussian(grid: RadialGrid, p: float, W: np.ndarray | None,
                      width: float = 1.0) -> np.ndarray:
    """Gaussian seed scaled so the energy-balance identity holds exactly."""
    g = np.exp(-grid.nodes ** 2 / (2.0 * width ** 2))
    ab = kinetic_tridiag(grid, 0, shift=1.0)
    m = grid.measure
    num = float(np.sum(m * g * _apply_banded(ab, g)))
    den = float(np.sum(m * g * nonlinear_term(g, p, W)))
    # <L(cg), cg> = <N(cg), cg>  =>  c^{2q-2} = num/den with q the
    # nonlinearity degree (2p-1 nonlocal, p local)
    q = 2 * p - 1 if W is not None else p
    c = (num / den) ** (1.0 / (2 * q - 2.0))
    return c * g


def _validate_profile(values: np.ndarray, what: str):
    scale = float(np.max(np.abs(values)))
    if np.min(values) <= 0:
        raise ConvergenceError(f"{what}: converged profile is not strictly "
                               f"positive (min {np.min(values):.3e})")
    if np.any(np.diff(values) > 1e-10 * scale):
        raise ConvergenceError(f"{what}: converged profile is not radially "
                               "nonincreasing")


def solve_choquard(params: ChoquardParams, grid: RadialGrid,
                   opts: SolverOptions | None = None) -> GroundState:
    """Radial positive ground state of the nonlocal equation.

    Requires parameters in the existence window 1/2 >= 1/p > (d-2)/(2d-a).
    Raises ConvergenceError when the iteration fails; the returned state
    satisfies the discrete equation to opts.tol in the sup norm and is
    strictly positive and radially decreasing.
    """
    opts = opts or SolverOptions()
    if grid.d != params.d:
        raise GridError(f"grid dimension {grid.d} != params dimension {params.d}")
    if not params.in_existence_window:
        raise ParameterError(
            f"(d,alpha,p)=({params.d},{params.alpha},{params.p}) is outside "
            "the existence window 1/2 >= 1/p > (d-2)/(2d-alpha)")
    W = riesz_apply_matrix(grid, params.alpha, 0)
    u0 = _initial_gaussian(grid, params.p, W)
    u, res, it = _petviashvili(grid, u0, params.p, W, opts)
    _validate_profile(u, "choquard solve")
    fld = RadialField(grid=grid, values=u)
    state = GroundState(params=params, field=fld, residual=res,
                        iterations=it, decay=None,
                        norms=state_norms(grid, u))
    try:
        state.decay = fit_decay(state)
    except FitError:
        state.decay = None
    return state


def _solve_model_numerov(d: int, p: float, grid: RadialGrid,
                         opts: SolverOptions) -> GroundState:
    """Fourth-order Numerov discretization of -u'' + u - u^p = 0 (d = 1).

    The origin is included as an auxiliary even-symmetry unknown; the
    Dirichlet fence sits one spacing beyond r_max.  Seeded by the
    second-order fixed-point solution, finished by Newton.
    """
    n = grid.n
    h = grid.nodes[0]
    x = np.concatenate([[0.0], grid.nodes])

    seed_opts = SolverOptions(tol=max(opts.tol, 1e-8), max_iter=opts.max_iter,
                              newton_polish=True)
    useed, _, it0 = _petviashvili(grid, _initial_gaussian(grid, p, None),
                                  p, None, seed_opts)
    U = np.concatenate([[useed[0] + (useed[0] - useed[1]) * 0.5], useed])

    c = h * h / 12.0

    def gfun(v):
        return v - np.abs(v) ** (p - 1) * v

    def gprime(v):
        return 1.0 - p * np.abs(v) ** (p - 1)

    def numerov_residual(U):
        g = gfun(U)
        R = np.empty(n + 1)
        R[0] = 2.0 * U[1] - 2.0 * U[0] - c * (10.0 * g[0] + 2.0 * g[1])
        R[1:-1] = (U[:-2] - 2.0 * U[1:-1] + U[2:]
                   - c * (g[:-2] + 10.0 * g[1:-1] + g[2:]))
        R[-1] = U[-2] - 2.0 * U[-1] - c * (g[-2] + 10.0 * g[-1])
        return R

    res_hist = []
    for _ in range(60):
        R = numerov_residual(U)
        res = float(np.max(np.abs(R)) / (h * h))
        res_hist.append(res)
        if res <= opts.tol:
            break
        gp = gprime(U)
        ab = np.zeros((3, n + 1))
        ab[1] = -2.0 - 10.0 * c * gp
        ab[0, 1:] = 1.0 - c * gp[1:]
        ab[0, 1] = 2.0 - 2.0 * c * gp[1]
        ab[2, :-1] = 1.0 - c * gp[:-1]
        dU = solve_banded((1, 1), ab, R)
        U = U - dU
    else:
        raise ConvergenceError("Numerov iteration did not converge",
                               last_residual=res_hist[-1],
                               iterations=len(res_hist))
    u = U[1:]
    _validate_profile(u, "model solve")
    fld = RadialField(grid=grid, values=u)
    state = GroundState(params=ModelParams(d, p), field=fld,
                        residual=res_hist[-1],
                        iterations=it0 + len(res_hist),
                        decay=None, norms=state_norms(grid, u))
    try:
        state.decay = fit_decay(state)
    except FitError:
        state.decay = None
    return state


def solve_model(d: int, p: float, grid: RadialGrid,
                opts: SolverOptions | None = None) -> GroundState:
    """Ground state of the local model -Delta u + u - |u|^{p-1} u = 0.

    p in (1, inf) for d <= 2 and p in (1, (d+2)/(d-2)) for d >= 3.  In
    d = 1 on uniform grids a Numerov scheme delivers fourth-order
    profiles; otherwise the generic second-order path is used.
    """
    params = ModelParams(d, p)  # validates the window
    opts = opts or SolverOptions()
    if grid.d != d:
        raise GridError(f"grid dimension {grid.d} != requested dimension {d}")
    if d == 1 and grid.stretch == 1.0:
        return _solve_model_numerov(d, p, grid, opts)
    u0 = _initial_gaussian(grid, p, None)
    u, res, it = _petviashvili(grid, u0, p, None, opts)
    _validate_profile(u, "model solve")
    fld = RadialField(grid=grid, values=u)
    state = GroundState(params=params, field=fld, residual=res, iterations=it,
                        decay=None, norms=state_norms(grid, u))
    try:
        state.decay = fit_decay(state)
    except FitError:
        state.decay = None
    return state


def decay_beta(d: int) -> float:
    """Power-law correction exponent of the comparison profile
    r^{-beta} e^{-r/2}: 0 for d <= 2 and (d-1)/2 for d >= 3."""
    return 0.0 if d <= 2 else (d - 1) / 2.0


def fit_decay(state: GroundState, window: tuple | None = None) -> DecayFit:
    """Least-squares fit log Q = log C - gamma r - beta log r on the tail.

    ``beta`` is pinned to the comparison exponent for the dimension; the
    window defaults to [0.55 rb, rb] with rb the last radius where the
    profile stays above 1e-13 (capped below the Dirichlet fence).
    """
    grid = state.grid
    q = state.field.values
    r = grid.nodes
    floor = 1e-13
    good = q > floor
    if not np.any(good):
        raise FitError("profile is below the noise floor everywhere")
    # stay clear of the Dirichlet fence, whose pull steepens the tail
    rb = min(r[good][-1], grid.r_max - 2.5)
    ra = 0.55 * rb
    if window is not None:
        ra, rb = window
    mask = (r >= ra) & (r <= rb) & good
    if np.count_nonzero(mask) < 8:
        raise FitError(f"tail window [{ra:.3g},{rb:.3g}] has too few usable "
                       "nodes; fit unreliable")
    beta = decay_beta(grid.d)
    y = np.log(q[mask]) + beta * np.log(r[mask])
    Amat = np.column_stack([np.ones(np.count_nonzero(mask)), -r[mask]])
    coef, *_ = np.linalg.lstsq(Amat, y, rcond=None)
    return DecayFit(gamma=float(coef[1]), C=float(math.exp(coef[0])),
                    beta=beta, window=(float(ra), float(rb)))


def model_soliton(p: float, r: np.ndarray) -> np.ndarray:
    """Closed-form d = 1 soliton ((p+1)/2)^{1/(p-1)} sech^{2/(p-1)}((p-1)r/2)."""
    amp = ((p + 1) / 2.0) ** (1.0 / (p - 1))
    return amp * np.cosh((p - 1) * r / 2.0) ** (-2.0 / (p - 1))


def state_from_field(params, fld: RadialField, residual: float = 0.0,
                     iterations: int = 0) -> GroundState:
    """Wrap an existing profile (used by diagnostics and tests)."""
    state = GroundState(params=params, field=fld, residual=residual,
                        iterations=iterations, decay=None,
                        norms=state_norms(fld.grid, fld.values))
    try:
        state.decay = fit_decay(state)
    except FitError:
        state.decay = None
    return state
