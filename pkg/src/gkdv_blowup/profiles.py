"""Recursive construction of the refined blow-up profiles.

Level k of the recursion solves (L P_k)' = Omega_k' + Lam P_{k-1} - Theta_k,
where Omega_k collects the quintic cross terms of the expansion ansatz and
Theta_k the drift-law terms. The drift coefficient beta_k is fixed by
projecting the right-hand side on the soliton (solvability), the correction
coefficients d_{j,k} by cancelling the polynomial growth of the right-hand
side on the left, and the decaying remainder by the constrained inversion
of the linearized operator. The assembled profile is

    P_k = decaying part + right-anchored antiderivative - sum_j d_{j,k} P_j,

gauged so that (P_k, Q') = 0.

The profiles grow polynomially to the left; the localized ansatz tames the
growth with a smooth cut-off chi(|b|^gamma y) and is what the evolution and
modulation layers consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ConstructionError, DegeneracyError, DomainError
from .grid import (
    Grid,
    GridFunction,
    antiderivative_from_right,
    differentiate,
    inner,
    line_grid,
    norm_l2,
    sample_at,
)
from .ground_state import ground_state_values, scaling_generator
from .linearized import LinearizedOperator

MAX_ORDER = 6
GAMMA_DEFAULT = 0.9
GAMMA_MIN = 17.0 / 20.0


# ----------------------------------------------------------------------
# Smooth cut-off: 1 on [-1, inf), 0 on (-inf, -2], C-infinity in between
# ----------------------------------------------------------------------

def cutoff(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.ones_like(s)
    out[s <= -2.0] = 0.0
    mid = (s > -2.0) & (s < -1.0)
    if np.any(mid):
        sm = s[mid]
        # logistic of -(1/(s+2) + 1/(s+1)): the standard normalized bump
        w = -(1.0 / (sm + 2.0) + 1.0 / (sm + 1.0))
        out[mid] = expit(w)
    return out


def cutoff_derivative(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    mid = (s > -2.0) & (s < -1.0)
    if np.any(mid):
        sm = s[mid]
        w = -(1.0 / (sm + 2.0) + 1.0 / (sm + 1.0))
        sig = expit(w)
        wprime = 1.0 / (sm + 2.0) ** 2 + 1.0 / (sm + 1.0) ** 2
        out[mid] = sig * (1.0 - sig) * wprime
    return out


# ----------------------------------------------------------------------
# Profile set
# ----------------------------------------------------------------------

@dataclass
class ProfileSet:
    """Output of the recursion up to order K.

    profiles[k-1] holds P_k on `grid`; betas maps k -> beta_k (k >= 2);
    left_coeffs[k] are the degree-(k-1) polynomial coefficients of P_k on
    the far left (leading first); d_coeffs[k] maps j -> d_{j,k}.
    """

    K: int
    grid: Grid
    profiles: list
    betas: dict
    left_coeffs: dict
    d_coeffs: dict
    gamma_default: float = GAMMA_DEFAULT
    pq_pairing: float = 0.0
    solvability_residuals: dict = field(default_factory=dict)
    left_fit_residuals: dict = field(default_factory=dict)

    def profile(self, k: int) -> GridFunction:
        return self.profiles[k - 1]

    def drift_polynomial(self, b: float) -> float:
        """sum_k beta_k b^k; its negative is the leading drift of b."""
        if abs(b) > 0.2:
            raise DomainError("profile parameter outside the validity range")
        return float(sum(self.betas[k] * b ** k for k in range(2, self.K + 1)))

    def eval_profile(self, k: int, y) -> np.ndarray:
        """P_k at arbitrary points: interpolation inside the grid, the
        fitted left polynomial beyond the left edge, 0 beyond the right."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = sample_at(self.profile(k), y)
        left = y < self.grid.left_endpoint
        if np.any(left):
            out[left] = np.polyval(self.left_coeffs[k], y[left])
        return out

    def eval_expansion(self, b: float, y) -> np.ndarray:
        """sum_k b^k P_k(y) before localization."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        acc = np.zeros(y.shape)
        for k in range(1, self.K + 1):
            acc += b ** k * self.eval_profile(k, y)
        return acc

    def summary(self) -> dict:
        return {
            "K": self.K,
            "betas": {k: float(v) for k, v in self.betas.items()},
            "left_coeffs": {k: list(map(float, v)) for k, v in self.left_coeffs.items()},
            "d_coeffs": {k: {j: float(v) for j, v in d.items()} for k, d in self.d_coeffs.items()},
            "pq_pairing": self.pq_pairing,
            "gamma_default": self.gamma_default,
            "solvability_residuals": {k: float(v) for k, v in self.solvability_residuals.items()},
            "left_fit_residuals": {k: float(v) for k, v in self.left_fit_residuals.items()},
        }


def default_profile_grid(spacing: float = 1.0 / 64.0, left: float = -120.0,
                         right: float = 40.0) -> Grid:
    # Asymmetric: polynomial growth is one-sided, the right just needs
    # exponential-decay room.
    return line_grid(left, right, spacing)


def _quintic_coefficient(terms: list, k: int) -> np.ndarray:
    """Coefficient of b^k in (sum_j b^j terms[j])^5, terms[j] sampled arrays."""

    def conv(a, b):
        out = [np.zeros_like(terms[0]) for _ in range(k + 1)]
        for i, ai in enumerate(a):
            if ai is None or i > k:
                continue
            for j, bj in enumerate(b):
                if bj is None or i + j > k:
                    continue
                out[i + j] = out[i + j] + ai * bj
        return out

    base = [terms[j] if j < len(terms) else None for j in range(k + 1)]
    sq = conv(base, base)
    fourth = conv(sq, sq)
    fifth = conv(fourth, base)
    return fifth[k]


def build_profiles(K: int, grid: Grid = None, gamma_default: float = GAMMA_DEFAULT,
                   operator: LinearizedOperator = None) -> ProfileSet:
    """Run the recursion for k = 1..K and return the assembled ProfileSet."""
    if not (1 <= K <= MAX_ORDER):
        raise DomainError(f"expansion order must lie in [1, {MAX_ORDER}]")
    if grid is None:
        grid = default_profile_grid()
    if not grid.contains(-60.0, 35.0):
        raise DomainError("profile grid must span at least [-60, 35]")
    op = operator if operator is not None and operator.grid == grid else LinearizedOperator(grid)

    y = grid.nodes
    q = op.soliton
    qp = op.kernel_direction
    qp_norm_sq = inner(qp, qp)
    pot = op.potential.values

    # Fit windows: d-coefficients on the far-left stretch where only the
    # polynomial parts survive, left_coeffs on the leftmost quarter.
    span = grid.right_endpoint - grid.left_endpoint
    d_window = (y >= grid.left_endpoint + 10.0) & (y <= grid.left_endpoint + 0.55 * span)
    c_lo = grid.left_endpoint + 8.0 * grid.spacing
    c_window = (y >= c_lo) & (y <= grid.left_endpoint + 0.25 * span)

    profiles = []       # P_1..P_K
    images = []         # W_k = L P_k, assembled without differentiation
    betas = {}
    left_coeffs = {}
    d_coeffs = {}
    solv = {}
    cres = {}
    pq = 0.0

    for k in range(1, K + 1):
        prev = [q.values] + [p.values for p in profiles]
        omega = GridFunction(grid, _quintic_coefficient(prev, k))
        theta_known = np.zeros(grid.n_points)
        for i in range(2, k):
            theta_known += i * betas[k + 1 - i] * profiles[i - 1].values
        lam_prev = scaling_generator(profiles[k - 2] if k >= 2 else q)

        if k >= 2:
            rhs_proj = differentiate(omega, 1).values + lam_prev.values - theta_known
            betas[k] = inner(GridFunction(grid, rhs_proj), q) / pq
        theta = theta_known + (betas[k] * profiles[0].values if k >= 2 else 0.0)

        source = GridFunction(grid, lam_prev.values - theta)
        anti = antiderivative_from_right(source)
        base = (
            omega.values
            + differentiate(source, 1).values
            + pot * anti.values
        )

        ds = {}
        if k >= 3:
            cols = np.stack([images[j - 1].values[d_window] for j in range(1, k - 1)], axis=1)
            scale = np.linalg.norm(cols, axis=0)
            if np.any(scale < 1e-12):
                raise DegeneracyError("correction functions degenerate on the fit window")
            sol, _, rank, _ = np.linalg.lstsq(cols / scale, -base[d_window], rcond=None)
            if rank < k - 2:
                raise DegeneracyError("triangular cancellation system is singular")
            for j in range(1, k - 1):
                ds[j] = float(sol[j - 1] / scale[j - 1])

        rhs = base + sum(dj * images[j - 1].values for j, dj in ds.items())
        rhs_f = GridFunction(grid, rhs)
        rel = abs(inner(rhs_f, qp)) / (norm_l2(rhs_f) * math.sqrt(qp_norm_sq))
        solv[k] = rel
        if rel > 1e-6:
            raise ConstructionError(
                f"solvability projection failed at level {k} (relative {rel:.2e})"
            )
        rhs_f = rhs_f.with_values(rhs - inner(rhs_f, qp) / qp_norm_sq * qp.values)
        decaying = op.solve(rhs_f)

        pk = decaying.values + anti.values - sum(
            dj * profiles[j - 1].values for j, dj in ds.items()
        )
        pk = pk - (grid.quadrature_weights @ (pk * qp.values)) / qp_norm_sq * qp.values
        pkf = GridFunction(grid, pk)
        profiles.append(pkf)
        images.append(GridFunction(grid, omega.values + anti.values))
        d_coeffs[k] = ds

        vander = np.stack([y[c_window] ** (k - 1 - j) for j in range(k)], axis=1)
        coef, _, _, _ = np.linalg.lstsq(vander, pk[c_window], rcond=None)
        left_coeffs[k] = coef
        fit = vander @ coef
        denom = norm_l2(GridFunction(grid, np.where(c_window, pk, 0.0)))
        cres[k] = float(
            np.sqrt(grid.spacing * np.sum((pk[c_window] - fit) ** 2)) / max(denom, 1e-300)
        )

        if k == 1:
            pq = inner(pkf, q)

    return ProfileSet(
        K=K,
        grid=grid,
        profiles=profiles,
        betas=betas,
        left_coeffs=left_coeffs,
        d_coeffs=d_coeffs,
        gamma_default=gamma_default,
        pq_pairing=pq,
        solvability_residuals=solv,
        left_fit_residuals=cres,
    )


# ----------------------------------------------------------------------
# Localized profiles and their residual in the self-similar equation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class LocalizedProfile:
    """Cut-off profile Q_b and its parameter derivative on a grid."""

    b: float
    gamma: float
    values: GridFunction
    b_derivative: GridFunction


def localization_grid(b: float, gamma: float, spacing: float = 1.0 / 32.0,
                      right: float = 40.0) -> Grid:
    """A grid wide enough to contain the whole cut-off region of Q_b."""
    left = -2.0 * abs(b) ** (-gamma) - 10.0
    return line_grid(left, right, spacing)


def _check_parameters(b: float, gamma: float):
    if b == 0.0:
        raise DomainError("localized profile needs b != 0")
    if abs(b) > 0.2:
        raise DomainError("profile parameter outside the validity range")
    if not (GAMMA_MIN < gamma <= 1.0):
        raise DomainError(f"gamma must lie in ({GAMMA_MIN}, 1]")


def localized_expansion_values(ps: ProfileSet, b: float, gamma: float, y: np.ndarray):
    """(Q_b, dQ_b/db) sampled at arbitrary points, without domain checks.

    At b = 0 the cut-off is inactive and the parameter derivative reduces
    to the first profile.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    qv = ground_state_values(y)
    if b == 0.0:
        return qv, ps.eval_profile(1, y)
    s = abs(b) ** gamma * y
    chi = cutoff(s)
    chi_p = abs(b) ** gamma * cutoff_derivative(s)
    expansion = np.zeros(y.shape)
    d_expansion = np.zeros(y.shape)
    for k in range(1, ps.K + 1):
        pk = ps.eval_profile(k, y)
        expansion += b ** k * pk
        d_expansion += k * b ** (k - 1) * pk
    qb = qv + expansion * chi
    dqb = d_expansion * chi + (gamma * y / b) * chi_p * expansion
    return qb, dqb


def localized_profile(ps: ProfileSet, b: float, gamma: float = None,
                      grid: Grid = None) -> LocalizedProfile:
    """Q_b on the grid, with dQ_b/db assembled from the closed form.

    The cut-off region must be interior to the grid.
    """
    gamma = ps.gamma_default if gamma is None else gamma
    _check_parameters(b, gamma)
    grid = ps.grid if grid is None else grid
    if grid.left_endpoint > -2.0 * abs(b) ** (-gamma):
        raise DomainError(
            "grid narrower than the cut-off region; widen it or use "
            "localization_grid()"
        )
    qb, dqb = localized_expansion_values(ps, b, gamma, grid.nodes)
    return LocalizedProfile(
        b=b, gamma=gamma,
        values=GridFunction(grid, qb),
        b_derivative=GridFunction(grid, dqb),
    )


def profile_residual(ps: ProfileSet, b: float, gamma: float = None,
                     grid: Grid = None) -> GridFunction:
    """Residual of Q_b in the rescaled flow equation:

        -(Q_b'' - Q_b + Q_b^5)' - b Lam Q_b + theta(b) dQ_b/db.
    """
    gamma = ps.gamma_default if gamma is None else gamma
    lp = localized_profile(ps, b, gamma, grid)
    qb = lp.values
    flux = qb.with_values(
        differentiate(qb, 2).values - qb.values + qb.values ** 5
    )
    drift = ps.drift_polynomial(b)
    resid = (
        differentiate(flux, 1).values
        + b * scaling_generator(qb).values
        - drift * lp.b_derivative.values
    )
    return qb.with_values(-resid)


def core_residual_norm(ps: ProfileSet, b: float, gamma: float = None,
                       grid: Grid = None) -> float:
    """Exponentially weighted L2 norm of the residual over the core
    |y| <= |b|^{-gamma} / 2, the region the drift law is asked to match."""
    gamma = ps.gamma_default if gamma is None else gamma
    psi = profile_residual(ps, b, gamma, grid)
    g = psi.grid
    core = np.abs(g.nodes) <= 0.5 * abs(b) ** (-gamma)
    w = np.exp(-0.5 * np.abs(g.nodes)) * core
    return float(np.sqrt(g.quadrature_weights @ (psi.values ** 2 * w)))
