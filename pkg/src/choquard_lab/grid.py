"""Radial discretization: grids, quadrature with the surface weight, and
sector Laplacians.

Conventions used throughout the package:

- A radial function u on R^d is represented by its samples on a grid of
  nodes 0 < r_0 < ... < r_{n-1} = r_max.  The origin is excluded; values
  at r = 0 are recovered by parity (even profiles in the l = 0 sector,
  vanishing profiles for l >= 1).
- Volume integrals reduce to 1D integrals against the surface weight,
  int_{R^d} u dx = |S^{d-1}| int_0^inf u(r) r^{d-1} dr.  For d = 1 the
  even extension gives the factor 2.
- Beyond r_max every field is treated as zero (homogeneous Dirichlet a
  spacing beyond the last node), justified by the exponential decay of
  all solver fields.

Two discrete realisations of the sector Laplacian coexist on purpose:

- ``laplacian_sector`` applies pointwise-consistent finite-difference
  stencils (exact on quadratics), used for residuals and operator
  identities.
- ``sector_stiffness`` assembles the flux (finite-volume) form, which is
  exactly symmetric under the weight sqrt(w_i r_i^{d-1}) and is the one
  used for symmetric eigenproblems.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np


class GridError(ValueError):
    """Invalid grid construction or mismatched grid/field operations."""


class ParameterError(ValueError):
    """Parameter triple outside its admissible range."""


def sphere_area(d: int) -> float:
    """Surface measure |S^{d-1}| of the unit sphere in R^d (2 for d = 1)."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d: int) -> float:
    """Volume of the unit ball in R^d."""
    return sphere_area(d) / d


@dataclass(frozen=True)
class ChoquardParams:
    """Parameter triple (d, alpha, p) of the nonlocal equation.

    d is the space dimension, alpha the Riesz kernel exponent in (0, d),
    p the nonlinearity exponent (p >= 1).
    """

    d: int
    alpha: float
    p: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ParameterError(f"d must be a positive integer, got {self.d}")
        if not (0.0 < self.alpha < self.d):
            raise ParameterError(
                f"alpha outside (0,d): alpha={self.alpha}, d={self.d}")
        if not self.p >= 1.0:
            raise ParameterError(f"p must be >= 1, got {self.p}")

    @property
    def in_existence_window(self) -> bool:
        """True iff 1/2 >= 1/p > (d-2)/(2d-alpha).

        This is the window in which ground states exist, are positive and
        regular, and (for p >= 2) decay exponentially.
        """
        return self.p >= 2.0 and self.p * (self.d - 2) < (2 * self.d - self.alpha)

    def near_newtonian(self, delta: float) -> bool:
        """True iff |alpha-(d-2)| <= delta and 0 <= p-2 <= delta."""
        return (abs(self.alpha - (self.d - 2)) <= delta
                and 0.0 <= self.p - 2.0 <= delta)

    @property
    def newtonian(self) -> "ChoquardParams":
        """The point (d-2, 2) in the same dimension."""
        return ChoquardParams(self.d, float(self.d - 2), 2.0)

    def to_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "p": self.p}

    @classmethod
    def from_dict(cls, data: dict) -> "ChoquardParams":
        return cls(int(data["d"]), float(data["alpha"]), float(data["p"]))


@dataclass(frozen=True)
class RadialGrid:
    """Strictly increasing radial nodes with positive quadrature weights.

    ``quad_weights`` are trapezoid weights of the node set extended by the
    origin and by a Dirichlet fence one first-spacing beyond r_max; they
    integrate node samples over [0, r_max] and double as the measure that
    symmetrizes the sector stiffness matrices.
    """

    d: int
    nodes: np.ndarray
    quad_weights: np.ndarray
    r_max: float
    stretch: float

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def surface_weight(self) -> np.ndarray:
        """r_i^{d-1} at the nodes."""
        return self.nodes ** (self.d - 1)

    @property
    def measure(self) -> np.ndarray:
        """w_i r_i^{d-1}, the discrete radial measure (no sphere factor)."""
        return self.quad_weights * self.surface_weight

    def spacings(self) -> np.ndarray:
        """Cell widths [r_0, r_1-r_0, ..., r_max-r_{n-2}]."""
        return np.diff(self.nodes, prepend=0.0)

    def same_layout(self, other: "RadialGrid") -> bool:
        return (self.d == other.d and self.n == other.n
                and np.array_equal(self.nodes, other.nodes))

    def refined(self) -> "RadialGrid":
        """Grid with every spacing halved exactly (2n nodes, sqrt stretch)."""
        return make_grid(self.d, self.r_max, 2 * self.n, math.sqrt(self.stretch))

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "r_max": self.r_max,
                "stretch": self.stretch}

    @classmethod
    def from_dict(cls, data: dict) -> "RadialGrid":
        return make_grid(int(data["d"]), float(data["r_max"]),
                         int(data["n"]), float(data.get("stretch", 1.0)))


def make_grid(d: int, r_max: float, n: int, stretch: float = 1.0) -> RadialGrid:
    """Build a geometrically stretched radial grid on (0, r_max].

    Spacings grow by the factor ``stretch`` per cell (uniform when
    stretch = 1); the first node sits one spacing away from the excluded
    origin and the last node is exactly r_max.
    """
    if int(d) != d or d < 1:
        raise GridError(f"d must be a positive integer, got {d}")
    if not (r_max > 0.0 and math.isfinite(r_max)):
        raise GridError(f"r_max must be positive and finite, got {r_max}")
    if n < 16:
        raise GridError(f"need at least 16 nodes, got {n}")
    if not (math.isfinite(stretch) and stretch >= 1.0):
        raise GridError(f"stretch must be finite and >= 1, got {stretch}")

    if stretch == 1.0:
        nodes = r_max * np.arange(1, n + 1) / n
    else:
        # r_i = h0 (s^{i+1} - 1)/(s - 1) with r_{n-1} = r_max
        powers = np.power(stretch, np.arange(1, n + 1))
        nodes = r_max * (powers - 1.0) / (stretch ** n - 1.0)
        nodes[-1] = r_max
    h = np.diff(nodes, prepend=0.0)

    # Trapezoid weights on the extended node set {0} u nodes u {fence},
    # fence spacing equal to the first spacing so the weights sum to r_max.
    h_ext = np.append(h, h[0])
    weights = 0.5 * (h_ext[:-1] + h_ext[1:])
    if d == 1:
        # even reflection through the origin: the first cell is not cut in half
        weights = weights.copy()
        weights[0] = h[0] + 0.5 * h[1]
        weights[-1] = 0.5 * h[-1]
    return RadialGrid(d=int(d), nodes=nodes, quad_weights=weights,
                      r_max=float(r_max), stretch=float(stretch))


def solver_grid(d: int, r_max: float = 25.0, n: int = 600,
                total_stretch: float = 25.0) -> RadialGrid:
    """Grid whose last cell is ``total_stretch`` times the first.

    A mild geometric stretch resolves the core cheaply while keeping
    enough tail nodes for exponentially decaying profiles.
    """
    if total_stretch <= 1.0:
        return make_grid(d, r_max, n, 1.0)
    return make_grid(d, r_max, n, math.exp(math.log(total_stretch) / (n - 1)))


@dataclass
class RadialField:
    """Samples of a radial function on a grid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise GridError(
                f"field has {self.values.shape} values for a grid of size {self.grid.n}")

    def is_radially_decreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.values) <= tol))

    def to_csv(self, path) -> None:
        data = np.column_stack([self.grid.nodes, self.values])
        np.savetxt(path, data, delimiter=",", header="r,value", comments="",
                   fmt="%.17g")

    @classmethod
    def from_csv(cls, path, grid: RadialGrid | None = None) -> "RadialField":
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        r, v = data[:, 0], data[:, 1]
        if grid is None:
            n = r.size
            r_max = r[-1]
            # infer the stretch from the first two spacings
            h0, h1 = r[0], r[1] - r[0]
            stretch = h1 / h0
            if abs(stretch - 1.0) < 1e-9:
                stretch = 1.0
            grid = make_grid(1, r_max, n, stretch)  # placeholder d
            grid = RadialGrid(d=grid.d, nodes=r.copy(),
                              quad_weights=grid.quad_weights,
                              r_max=float(r_max), stretch=float(stretch))
        else:
            if not np.allclose(r, grid.nodes, rtol=1e-12, atol=1e-12):
                raise GridError("CSV nodes do not match the supplied grid")
        return cls(grid=grid, values=v)

    def to_json_envelope(self) -> str:
        return json.dumps({
            "grid": self.grid.to_dict(),
            "values": self.values.tolist(),
        })

    @classmethod
    def from_json_envelope(cls, text: str) -> "RadialField":
        data = json.loads(text)
        grid = RadialGrid.from_dict(data["grid"])
        return cls(grid=grid, values=np.asarray(data["values"]))


def field_from_callable(grid: RadialGrid, fn) -> RadialField:
    return RadialField(grid=grid, values=np.asarray(fn(grid.nodes), dtype=float))


def _check_field(grid: RadialGrid, f: RadialField) -> np.ndarray:
    if f.grid is not grid and not grid.same_layout(f.grid):
        raise GridError("field lives on a different grid")
    return f.values


def _extrapolate_origin(nodes: np.ndarray, values: np.ndarray) -> float:
    """Quadratic extrapolation of samples to r = 0 (exact for quadratics)."""
    x0, x1, x2 = nodes[:3]
    f0, f1, f2 = values[:3]
    l0 = (0 - x1) * (0 - x2) / ((x0 - x1) * (x0 - x2))
    l1 = (0 - x0) * (0 - x2) / ((x1 - x0) * (x1 - x2))
    l2 = (0 - x0) * (0 - x1) / ((x2 - x0) * (x2 - x1))
    return l0 * f0 + l1 * f1 + l2 * f2


def _composite_parabolic(x: np.ndarray, g: np.ndarray) -> float:
    """Integrate samples g(x) by parabolas over pairs of adjacent cells.

    Handles an odd cell count by integrating the last cell with the
    quadratic through the last three points.  Exact for quadratics on any
    node layout; fourth order on smoothly varying grids.
    """
    m = x.size - 1  # number of cells
    total = 0.0
    npairs = m // 2
    if npairs:
        x0 = x[0:2 * npairs:2]
        x1 = x[1:2 * npairs + 1:2]
        x2 = x[2:2 * npairs + 2:2]
        g0 = g[0:2 * npairs:2]
        g1 = g[1:2 * npairs + 1:2]
        g2 = g[2:2 * npairs + 2:2]
        hl = x1 - x0
        hr = x2 - x1
        span = x2 - x0
        # weights of the quadratic through (x0,x1,x2) integrated over [x0,x2]
        w0 = span * (2 * hl - hr) / (6 * hl)
        w1 = span ** 3 / (6 * hl * hr)
        w2 = span * (2 * hr - hl) / (6 * hr)
        total += float(np.sum(w0 * g0 + w1 * g1 + w2 * g2))
    if m % 2 == 1:
        xa, xb, xc = x[-3], x[-2], x[-1]
        ga, gb, gc = g[-3], g[-2], g[-1]
        # integrate the interpolating quadratic over the last cell [xb, xc]
        for xx, gg, (o1, o2) in ((xa, ga, (xb, xc)), (xb, gb, (xa, xc)),
                                 (xc, gc, (xa, xb))):
            denom = (xx - o1) * (xx - o2)
            # int_{xb}^{xc} (s-o1)(s-o2) ds
            def prim(s, o1=o1, o2=o2):
                return s ** 3 / 3 - (o1 + o2) * s ** 2 / 2 + o1 * o2 * s
            total += gg * (prim(xc) - prim(xb)) / denom
    return total


def integrate_radial(grid: RadialGrid, f: RadialField | np.ndarray) -> float:
    """Volume integral |S^{d-1}| int_0^{r_max} f(r) r^{d-1} dr.

    Uses a composite parabolic rule on the nodes extended by the origin
    (where the integrand is known for d >= 2 and extrapolated for d = 1),
    which keeps monomial integrals accurate to well below 1e-6 on the
    grid sizes used here.  For d = 1 this is 2 int_0^{r_max} f dr, the
    even extension.
    """
    values = _check_field(grid, f) if isinstance(f, RadialField) else np.asarray(f)
    x = np.concatenate([[0.0], grid.nodes])
    g = np.empty(grid.n + 1)
    g[1:] = values * grid.surface_weight
    if grid.d >= 2:
        g[0] = 0.0
    else:
        g[0] = _extrapolate_origin(grid.nodes, values)
    return sphere_area(grid.d) * _composite_parabolic(x, g)


def l2_norm(grid: RadialGrid, values: np.ndarray) -> float:
    return math.sqrt(max(integrate_radial(grid, np.asarray(values) ** 2), 0.0))


# ---------------------------------------------------------------------------
# finite-difference machinery


def _fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Fornberg weights for the m-th derivative at z from nodes x."""
    n = x.size
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def differentiate(grid: RadialGrid, values: np.ndarray, order: int = 1,
                  acc_points: int = 5) -> np.ndarray:
    """Derivative of node samples by sliding Fornberg stencils.

    ``acc_points`` nodes per stencil; 5 gives fourth-order first
    derivatives on smooth grids, which the diagnostics rely on.
    """
    values = np.asarray(values, dtype=float)
    n = grid.n
    k = min(acc_points, n)
    r = grid.nodes
    out = np.empty(n)
    for i in range(n):
        lo = min(max(i - k // 2, 0), n - k)
        out[i] = _fd_weights(r[i], r[lo:lo + k], order) @ values[lo:lo + k]
    return out


def _pointwise_rows(grid: RadialGrid, ell: int):
    """Stencil bands (sub, diag, sup) of the pointwise sector operator.

    Rows are exact on quadratics.  Row 0 uses the origin parity (even
    two-point form for l = 0, vanishing ghost for l >= 1); the last row
    is closed with a zero ghost at the Dirichlet fence r_max + r_0.
    """
    r = grid.nodes
    d = grid.d
    n = grid.n
    kappa = ell * (ell + d - 2)
    h = grid.spacings()

    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)

    hl = h[:-1].copy()
    hr = h[1:].copy()
    hl[0] = r[0]  # distance to the origin ghost
    denom = hl * hr * (hl + hr)
    ri = r[:-1]
    sub[:-1] = (-2.0 * hr + (d - 1) * hr ** 2 / ri) / denom
    sup[:-1] = (-2.0 * hl - (d - 1) * hl ** 2 / ri) / denom
    diag[:-1] = (2.0 * (hl + hr) - (d - 1) * (hr ** 2 - hl ** 2) / ri) / denom
    diag[:-1] += kappa / ri ** 2

    if ell == 0:
        # exact on even quadratics {1, r^2} through (r_0, r_1)
        b0 = -2.0 * d / (r[1] ** 2 - r[0] ** 2)
        sup[0] = b0
        diag[0] = -b0
        # kappa = 0 in this sector
    # for ell >= 1 the generic row already used the zero ghost at the origin

    # last row: zero ghost at the fence r_max + h[0]
    hf = h[0]
    hl_last = h[-1]
    denom_l = hl_last * hf * (hl_last + hf)
    rl = r[-1]
    sub[-1] = (-2.0 * hf + (d - 1) * hf ** 2 / rl) / denom_l
    diag[-1] = ((2.0 * (hl_last + hf) - (d - 1) * (hf ** 2 - hl_last ** 2) / rl)
                / denom_l + kappa / rl ** 2)
    return sub, diag, sup


def laplacian_sector(grid: RadialGrid, f: RadialField, ell: int) -> RadialField:
    """Apply -f'' - ((d-1)/r) f' + l(l+d-2) f / r^2 at the nodes.

    Pointwise-consistent second-order stencils; the last node is treated
    as a pure differential-operator evaluation with a one-sided stencil
    so non-decaying test functions are not polluted by the fence.
    """
    if ell < 0:
        raise GridError(f"sector index must be >= 0, got {ell}")
    values = _check_field(grid, f)
    sub, diag, sup = _pointwise_rows(grid, ell)
    out = diag * values
    out[:-1] += sup[:-1] * values[1:]
    out[1:] += sub[1:] * values[:-1]

    # replace the fence row by a one-sided evaluation of the operator
    r = grid.nodes
    d = grid.d
    kappa = ell * (ell + d - 2)
    x = r[-3:]
    w2 = _fd_weights(r[-1], x, 2)
    w1 = _fd_weights(r[-1], x, 1)
    out[-1] = (-(w2 @ values[-3:]) - (d - 1) / r[-1] * (w1 @ values[-3:])
               + kappa / r[-1] ** 2 * values[-1])
    return RadialField(grid=grid, values=out)


def kinetic_tridiag(grid: RadialGrid, ell: int, shift: float = 1.0):
    """Banded matrix of (-Delta_l + shift) with the pointwise stencils.

    Returned in ``scipy.linalg.solve_banded`` layout (3, n).  The fence
    row keeps the zero ghost, so the matrix is the one whose root the
    solver actually finds.
    """
    sub, diag, sup = _pointwise_rows(grid, ell)
    n = grid.n
    ab = np.zeros((3, n))
    ab[0, 1:] = sup[:-1]
    ab[1, :] = diag + shift
    ab[2, :-1] = sub[1:]
    return ab


def kinetic_dense(grid: RadialGrid, ell: int, shift: float = 0.0) -> np.ndarray:
    """Dense matrix of the pointwise sector operator plus shift."""
    sub, diag, sup = _pointwise_rows(grid, ell)
    n = grid.n
    mat = np.zeros((n, n))
    idx = np.arange(n)
    mat[idx, idx] = diag + shift
    mat[idx[:-1], idx[:-1] + 1] = sup[:-1]
    mat[idx[1:], idx[1:] - 1] = sub[1:]
    return mat


def sector_stiffness(grid: RadialGrid, ell: int) -> np.ndarray:
    """Symmetric flux form S of the sector Laplacian.

    The operator acting on node values is A = diag(1/m) S with
    m_i = w_i r_i^{d-1}; conjugating A by sqrt(m) returns the symmetric
    matrix sqrt(m)^{-1} S sqrt(m)^{-1} used in eigenproblems.  Boundary
    closure: zero flux at the origin for l = 0 (regularity), vanishing
    ghost value for l >= 1, Dirichlet fence beyond r_max.
    """
    if ell < 0:
        raise GridError(f"sector index must be >= 0, got {ell}")
    r = grid.nodes
    d = grid.d
    n = grid.n
    kappa = ell * (ell + d - 2)
    h = grid.spacings()
    mids = 0.5 * (r[1:] + r[:-1])
    rho_mid = mids ** (d - 1)

    S = np.zeros((n, n))
    idx = np.arange(n - 1)
    flux = rho_mid / h[1:]
    S[idx, idx] += flux
    S[idx + 1, idx + 1] += flux
    S[idx, idx + 1] -= flux
    S[idx + 1, idx] -= flux

    if ell >= 1:
        # Dirichlet ghost at the origin
        rho0 = (0.5 * r[0]) ** (d - 1)
        S[0, 0] += rho0 / h[0]
    # fence flux (ghost value zero at r_max + h[0])
    hf = h[0]
    rho_f = (r[-1] + 0.5 * hf) ** (d - 1)
    S[-1, -1] += rho_f / hf

    m = grid.measure
    S[np.arange(n), np.arange(n)] += kappa / r ** 2 * m
    return S


def sector_symmetric(grid: RadialGrid, ell: int, shift: float = 0.0) -> np.ndarray:
    """Weight-conjugated sector Laplacian, symmetric to machine precision."""
    S = sector_stiffness(grid, ell)
    inv_sqrt_m = 1.0 / np.sqrt(grid.measure)
    mat = S * inv_sqrt_m[:, None] * inv_sqrt_m[None, :]
    if shift:
        mat[np.arange(grid.n), np.arange(grid.n)] += shift
    return mat


def laplacian_matrix(grid: RadialGrid, ell: int) -> np.ndarray:
    """Sector Laplacian acting on node values (flux form, not symmetric;
    its conjugation by sqrt(w_i r_i^{d-1}) is)."""
    S = sector_stiffness(grid, ell)
    return S / grid.measure[:, None]
