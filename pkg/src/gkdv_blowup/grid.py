"""Uniform 1-D grids and sampled real functions.

Provides the substrate for everything else: high-order differentiation
(trigonometric on periodic grids, centered stencils of formal order >= 6
with one-sided closures on truncated grids), trapezoid/rectangle
quadrature, L2 inner products, exponentially weighted Sobolev seminorms,
local polynomial interpolation, and a high-order right-anchored
antiderivative used by the profile recursion.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse as sp

from .errors import DomainError, GridMismatchError, UnsupportedOrderError

PERIODIC = "periodic"
LINE = "line-truncated"

MAX_DERIVATIVE_ORDER = 6
MAX_NORM_ORDER = 5


@dataclass(frozen=True)
class Grid:
    """Uniform 1-D grid on [left_endpoint, right_endpoint].

    Periodic grids exclude the right endpoint (n_points cells); truncated
    line grids include both endpoints (n_points - 1 cells).
    """

    left_endpoint: float
    right_endpoint: float
    n_points: int
    topology: str = LINE

    def __post_init__(self):
        if self.topology not in (PERIODIC, LINE):
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.n_points < 16:
            raise ValueError("n_points must be >= 16")
        if not self.right_endpoint > self.left_endpoint:
            raise ValueError("right_endpoint must exceed left_endpoint")

    @property
    def spacing(self) -> float:
        cells = self.n_points if self.topology == PERIODIC else self.n_points - 1
        return (self.right_endpoint - self.left_endpoint) / cells

    @property
    def length(self) -> float:
        return self.right_endpoint - self.left_endpoint

    @functools.cached_property
    def nodes(self) -> np.ndarray:
        x = self.left_endpoint + self.spacing * np.arange(self.n_points)
        x.flags.writeable = False
        return x

    @functools.cached_property
    def quadrature_weights(self) -> np.ndarray:
        w = np.full(self.n_points, self.spacing)
        if self.topology == LINE:
            w[0] *= 0.5
            w[-1] *= 0.5
        w.flags.writeable = False
        return w

    def contains(self, a: float, b: float) -> bool:
        return self.left_endpoint <= a and b <= self.right_endpoint

    def sample(self, func) -> "GridFunction":
        return GridFunction(self, np.asarray(func(self.nodes), dtype=float))


def line_grid(left: float, right: float, spacing: float) -> Grid:
    """Truncated line grid with spacing adjusted to divide the span evenly."""
    cells = max(15, int(round((right - left) / spacing)))
    return Grid(left, left + cells * (right - left) / cells, cells + 1, LINE)


def periodic_grid(left: float, right: float, n_points: int) -> Grid:
    return Grid(left, right, n_points, PERIODIC)


@dataclass(frozen=True)
class GridFunction:
    """Real function sampled on a Grid. Values are frozen after construction."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.shape != (self.grid.n_points,):
            raise ValueError("sample count does not match grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("samples must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, np.asarray(values, dtype=float))

    def __add__(self, other):
        return self.with_values(self.values + _coerce(self, other))

    def __sub__(self, other):
        return self.with_values(self.values - _coerce(self, other))

    def __mul__(self, other):
        return self.with_values(self.values * _coerce(self, other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)


def _coerce(f: GridFunction, other):
    if isinstance(other, GridFunction):
        if other.grid != f.grid:
            raise GridMismatchError("operands live on different grids")
        return other.values
    return other


# ----------------------------------------------------------------------
# Finite-difference weights (Fornberg recursion) and stencil application
# ----------------------------------------------------------------------

def fornberg_weights(order: int, x0: float, nodes: np.ndarray) -> np.ndarray:
    """Weights of the order-th derivative at x0 from samples at nodes."""
    nodes = np.asarray(nodes, dtype=float)
    npts = len(nodes)
    c = np.zeros((npts, order + 1))
    c1, c4 = 1.0, nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, npts):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


@functools.lru_cache(maxsize=None)
def _centered_weights(order: int):
    width = order + 7
    if width % 2 == 0:
        width += 1
    half = width // 2
    w = fornberg_weights(order, 0.0, np.arange(-half, half + 1, dtype=float))
    w.flags.writeable = False
    return half, w


@functools.lru_cache(maxsize=None)
def _one_sided_weights(order: int, at: int, width: int, n: int):
    # at: global row index near a boundary; stencil is the first/last width points
    if at < width:
        nodes = np.arange(width, dtype=float)
        x0 = float(at)
    else:
        nodes = np.arange(n - width, n, dtype=float)
        x0 = float(at)
    w = fornberg_weights(order, x0, nodes)
    w.flags.writeable = False
    return w


def differentiate(f: GridFunction, order: int) -> GridFunction:
    """order-th derivative on the same grid.

    Periodic grids use exact trigonometric differentiation (Nyquist mode
    zeroed for odd orders); truncated grids use centered stencils with
    one-sided closures at the ends.
    """
    if not (1 <= order <= MAX_DERIVATIVE_ORDER):
        raise UnsupportedOrderError(f"derivative order {order} not supported")
    g = f.grid
    if g.topology == PERIODIC:
        k = 2.0 * np.pi * np.arange(g.n_points // 2 + 1) / g.length
        sym = (1j * k) ** order
        if order % 2 == 1 and g.n_points % 2 == 0:
            sym[-1] = 0.0
        return f.with_values(sfft.irfft(sym * sfft.rfft(f.values), g.n_points))

    h = g.spacing
    half, wc = _centered_weights(order)
    width = 2 * half + 1
    n = g.n_points
    if n < width:
        raise DomainError("grid too small for the differentiation stencil")
    out = np.convolve(f.values, wc[::-1], mode="same")
    for i in range(half):
        wl = _one_sided_weights(order, i, width, n)
        out[i] = wl @ f.values[:width]
        wr = _one_sided_weights(order, n - 1 - i, width, n)
        out[n - 1 - i] = wr @ f.values[n - width:]
    return f.with_values(out / h ** order)


def diff_matrix(grid: Grid, order: int) -> sp.csr_matrix:
    """Sparse matrix form of differentiate() for truncated line grids."""
    if grid.topology != LINE:
        raise GridMismatchError("diff_matrix is defined on truncated grids")
    if not (1 <= order <= MAX_DERIVATIVE_ORDER):
        raise UnsupportedOrderError(f"derivative order {order} not supported")
    n = grid.n_points
    h = grid.spacing
    half, wc = _centered_weights(order)
    width = 2 * half + 1
    offsets = range(-half, half + 1)
    bands = [np.full(n, wval) for wval in wc]
    mat = sp.diags(bands, offsets, shape=(n, n), format="lil")
    for i in range(half):
        wl = _one_sided_weights(order, i, width, n)
        mat[i, :] = 0.0
        mat[i, :width] = wl
        wr = _one_sided_weights(order, n - 1 - i, width, n)
        mat[n - 1 - i, :] = 0.0
        mat[n - 1 - i, n - width:] = wr
    return (mat / h ** order).tocsr()


# ----------------------------------------------------------------------
# Quadrature
# ----------------------------------------------------------------------

def integrate(f: GridFunction) -> float:
    """Trapezoid (line) / rectangle (periodic) quadrature over the domain."""
    return float(f.grid.quadrature_weights @ f.values)


def inner(f: GridFunction, g: GridFunction) -> float:
    """L2 scalar product of two functions on the same grid."""
    if f.grid != g.grid:
        raise GridMismatchError("inner product requires a common grid")
    return float(f.grid.quadrature_weights @ (f.values * g.values))


def norm_l2(f: GridFunction) -> float:
    return np.sqrt(max(inner(f, f), 0.0))


def weighted_norm(f: GridFunction, order: int = 0, weight_scale: float = np.inf) -> float:
    """sqrt of int (d^m f)^2 e^{y/B} dy; B = inf gives the plain seminorm."""
    if not (0 <= order <= MAX_NORM_ORDER):
        raise UnsupportedOrderError(f"norm order {order} not supported")
    if not weight_scale > 1.0:
        raise ValueError("weight scale must exceed 1")
    df = f if order == 0 else differentiate(f, order)
    if np.isinf(weight_scale):
        w = 1.0
    else:
        w = np.exp(f.grid.nodes / weight_scale)
    return float(np.sqrt(max(f.grid.quadrature_weights @ (df.values ** 2 * w), 0.0)))


def local_norm_sq(f: GridFunction, decay: float = 0.5) -> float:
    """int f^2 e^{-decay |y|} dy, the core-localized squared norm."""
    w = np.exp(-decay * np.abs(f.grid.nodes))
    return float(f.grid.quadrature_weights @ (f.values ** 2 * w))


# ----------------------------------------------------------------------
# High-order antiderivative anchored at the right endpoint
# ----------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _cell_quadrature_weights(offsets: tuple) -> np.ndarray:
    """Weights w with sum_j w_j f(o_j) = int_0^1 p(t) dt for the interpolant p."""
    off = np.asarray(offsets, dtype=float)
    p = len(off)
    vander = np.vander(off, p, increasing=True).T
    rhs = 1.0 / (1.0 + np.arange(p))
    w = np.linalg.solve(vander, rhs)
    w.flags.writeable = False
    return w


def antiderivative_from_right(f: GridFunction) -> GridFunction:
    """N with N' = f and N(right end) = 0, i.e. N(y) = -int_y^R f.

    Sixth-order per-cell quadrature of the local interpolant, so the
    polynomial left plateaus survive at stencil accuracy.
    """
    g = f.grid
    if g.topology != LINE:
        raise GridMismatchError("antiderivative is defined on truncated grids")
    n, h, v = g.n_points, g.spacing, f.values
    if n < 6:
        raise DomainError("grid too small for the antiderivative stencil")
    seg = np.empty(n - 1)
    w = _cell_quadrature_weights((-2, -1, 0, 1, 2, 3))
    core = (w[0] * v[0:n - 5] + w[1] * v[1:n - 4] + w[2] * v[2:n - 3]
            + w[3] * v[3:n - 2] + w[4] * v[4:n - 1] + w[5] * v[5:n])
    seg[2:n - 3] = h * core
    for i in (0, 1, n - 3, n - 2):
        if i < 2:
            off = tuple(np.arange(6) - i)
            seg[i] = h * (_cell_quadrature_weights(off) @ v[:6])
        else:
            off = tuple(np.arange(n - 6, n) - i)
            seg[i] = h * (_cell_quadrature_weights(off) @ v[n - 6:])
    out = np.zeros(n)
    out[:-1] = -np.cumsum(seg[::-1])[::-1]
    return f.with_values(out)


# ----------------------------------------------------------------------
# Local polynomial interpolation (degree 6)
# ----------------------------------------------------------------------

_INTERP_POINTS = 7


def sample_at(f: GridFunction, x: np.ndarray) -> np.ndarray:
    """Evaluate f at arbitrary points by degree-6 local interpolation.

    Periodic grids wrap; truncated grids return 0 outside the domain
    (every function handled here decays at the ends).
    """
    g = f.grid
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h = g.spacing
    p = _INTERP_POINTS
    if g.topology == PERIODIC:
        t = (x - g.left_endpoint) / h
        base = np.floor(t).astype(np.int64)
        frac = t - base
        first = base - (p - 1) // 2
        idx = (first[:, None] + np.arange(p)[None, :]) % g.n_points
        theta = frac + (p - 1) // 2
        vals = f.values[idx]
        return _lagrange_eval(vals, theta)

    inside = (x >= g.left_endpoint) & (x <= g.right_endpoint)
    out = np.zeros(x.shape)
    if np.any(inside):
        xi = x[inside]
        t = (xi - g.left_endpoint) / h
        base = np.floor(t).astype(np.int64)
        first = np.clip(base - (p - 1) // 2, 0, g.n_points - p)
        theta = t - first
        idx = first[:, None] + np.arange(p)[None, :]
        out[inside] = _lagrange_eval(f.values[idx], theta)
    return out


def _lagrange_eval(vals: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Evaluate the interpolant through vals at nodes 0..p-1 at points theta."""
    p = vals.shape[1]
    nodes = np.arange(p, dtype=float)
    denom = np.array([np.prod(nodes[j] - np.delete(nodes, j)) for j in range(p)])
    diffs = theta[:, None] - nodes[None, :]
    exact = np.isclose(diffs, 0.0, atol=1e-14)
    safe = np.where(exact, 1.0, diffs)
    full = np.prod(safe, axis=1)
    basis = np.where(
        exact.any(axis=1)[:, None],
        exact.astype(float),
        full[:, None] / (safe * denom[None, :]),
    )
    return np.einsum("ij,ij->i", basis, vals)


# ----------------------------------------------------------------------
# Serialization: two-column CSV, full double precision
# ----------------------------------------------------------------------

def write_csv(f: GridFunction, path) -> None:
    with open(path, "w") as fh:
        fh.write("# y,value\n")
        for yv, fv in zip(f.grid.nodes, f.values):
            fh.write(f"{yv:.17g},{fv:.17g}\n")


def read_csv(path, topology: str = LINE) -> GridFunction:
    data = np.loadtxt(path, delimiter=",", comments="#")
    y, v = data[:, 0], data[:, 1]
    h = y[1] - y[0]
    if topology == PERIODIC:
        g = Grid(float(y[0]), float(y[-1] + h), len(y), PERIODIC)
    else:
        g = Grid(float(y[0]), float(y[-1]), len(y), LINE)
    return GridFunction(g, v)
