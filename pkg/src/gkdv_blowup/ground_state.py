"""The explicit soliton profile of the quintic focusing KdV and its functionals.

The soliton is Q(y) = (3 / cosh^2(2y))^{1/4}, the positive even solution of
Q'' + Q^5 = Q. Everything downstream is normalized against it: the mass
functional int u^2, the energy E(u) = 1/2 int u_x^2 - 1/6 int u^6, and the
sharp Gagliardo-Nirenberg ratio whose maximizer Q is.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DegenerateInputError, DomainError
from .grid import Grid, GridFunction, differentiate, inner, integrate, line_grid


def ground_state_values(y) -> np.ndarray:
    """Q(y), overflow-safe for large |y|."""
    y = np.asarray(y, dtype=float)
    e = np.exp(-2.0 * np.abs(y))
    sech = 2.0 * e / (1.0 + e * e)
    return 3.0 ** 0.25 * np.sqrt(sech)


def ground_state_derivative_values(y) -> np.ndarray:
    """Q'(y) = -Q(y) tanh(2y)."""
    y = np.asarray(y, dtype=float)
    return -ground_state_values(y) * np.tanh(2.0 * y)


def ground_state(grid: Grid) -> GridFunction:
    """Q sampled on the grid; the domain must contain [-15, 15]."""
    if not grid.contains(-15.0, 15.0):
        raise DomainError("ground state needs the domain to contain [-15, 15]")
    return GridFunction(grid, ground_state_values(grid.nodes))


def scaling_generator(f: GridFunction) -> GridFunction:
    """The L2-critical scaling generator: f/2 + y f'."""
    fp = differentiate(f, 1)
    return f.with_values(0.5 * f.values + f.grid.nodes * fp.values)


def mass(u: GridFunction) -> float:
    return inner(u, u)


def mean(u: GridFunction) -> float:
    return integrate(u)


def energy(u: GridFunction) -> float:
    """E(u) = 1/2 int u_x^2 - 1/6 int u^6."""
    ux = differentiate(u, 1)
    return 0.5 * inner(ux, ux) - integrate(u.with_values(u.values ** 6)) / 6.0


def gn_ratio(v: GridFunction) -> float:
    """int v^6 / [3 int v_x^2 (int v^2 / int Q^2)^2]; equals 1 at v = Q."""
    vx = differentiate(v, 1)
    m2 = inner(v, v)
    kin = inner(vx, vx)
    if m2 <= 0.0 or kin <= 0.0:
        raise DegenerateInputError("gn_ratio needs nonzero v and v_x")
    sixth = integrate(v.with_values(v.values ** 6))
    return float(sixth / (3.0 * kin * (m2 / MASS_L2_SQ) ** 2))


# Closed forms: ||Q||_L2^2 = sqrt(3) pi / 2 and
# ||Q||_L1 = (3^{1/4}/2) sqrt(pi) Gamma(1/4) / Gamma(3/4).
MASS_L2_SQ = float(np.sqrt(3.0) * np.pi / 2.0)
L1_NORM = float(3.0 ** 0.25 / 2.0 * np.sqrt(np.pi) * gamma_fn(0.25) / gamma_fn(0.75))


@dataclass(frozen=True)
class SolitonConstants:
    """Reference constants entering the asymptotic laws.

    pq_pairing defaults to the identity value ||Q||_L1^2 / 16; the profile
    builder reports its measured counterpart for cross-checking.
    """

    mass_L2_sq: float
    l1_norm: float
    pq_pairing: float
    tail_coefficient: float

    def as_dict(self):
        return asdict(self)


@functools.lru_cache(maxsize=1)
def soliton_constants() -> SolitonConstants:
    """Constants on the reference grid [-40, 40], spacing 1/256."""
    g = line_grid(-40.0, 40.0, 1.0 / 256.0)
    q = ground_state(g)
    m2 = inner(q, q)
    l1 = integrate(q.with_values(np.abs(q.values)))
    return SolitonConstants(
        mass_L2_sq=m2,
        l1_norm=l1,
        pq_pairing=l1 * l1 / 16.0,
        tail_coefficient=l1 / 2.0,
    )
