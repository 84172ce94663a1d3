"""Grids, state containers, parameters and spectral fractional norms.

All displacement-like vectors live on the interior nodes of the x-grid. The
clamped values u(+-1) = u_x(+-1) = 0 are never stored; they are encoded in
the plate operator stencil.

Fractional norms are defined through the discrete plate operator A_h:

    ||z||_(s) = ||A_h^(s/2) z||_h,      ||z||_h^2 = h * sum(z_i^2)

so order s corresponds to the Sobolev index 2s (s = 1 is the H^2 scale,
s = 1 + alpha the H^(2+2alpha) scale of the admissible set).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid on I = (-1, 1) with ``n_interior`` unknown nodes."""

    n_interior: int

    def __post_init__(self):
        if int(self.n_interior) != self.n_interior or self.n_interior < 5:
            raise ParameterError(f"n_interior must be an integer >= 5, got {self.n_interior}")

    @property
    def h(self) -> float:
        return 2.0 / (self.n_interior + 1)

    @property
    def x(self) -> np.ndarray:
        """Interior node coordinates."""
        return -1.0 + self.h * np.arange(1, self.n_interior + 1)

    @property
    def x_full(self) -> np.ndarray:
        """All node coordinates including x = -1 and x = +1."""
        return np.linspace(-1.0, 1.0, self.n_interior + 2)

    def pad(self, z: np.ndarray) -> np.ndarray:
        """Append the homogeneous boundary values to an interior vector."""
        z = self.check(z)
        return np.concatenate(([0.0], z, [0.0]))

    def check(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_interior,):
            raise DimensionError(
                f"expected a vector of length {self.n_interior}, got shape {z.shape}"
            )
        return z

    def sample(self, func) -> np.ndarray:
        return np.asarray(func(self.x), dtype=float)


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid on the fixed rectangle I x (0, 1)."""

    xgrid: Grid1D
    m_interior: int

    def __post_init__(self):
        if int(self.m_interior) != self.m_interior or self.m_interior < 2:
            raise ParameterError(f"m_interior must be an integer >= 2, got {self.m_interior}")

    @property
    def k(self) -> float:
        return 1.0 / (self.m_interior + 1)

    @property
    def eta_full(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m_interior + 2)

    @property
    def shape(self) -> tuple[int, int]:
        """Shape of full nodal arrays, indexed [i_x, j_eta]."""
        return self.xgrid.n_interior + 2, self.m_interior + 2

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xgrid.x_full, self.eta_full, indexing="ij")


@dataclass(frozen=True)
class PlateState:
    """Displacement ``u`` and velocity ``v`` on interior nodes at time ``t``."""

    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    @property
    def min_gap(self) -> float:
        return float(np.min(1.0 + self.u))

    @property
    def admissible(self) -> bool:
        return self.min_gap > 0.0


@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical parameters.

    ``lam`` is the voltage parameter lambda and ``alpha2`` the fractional
    index 2*alpha.
    """

    gamma: float = 0.2
    beta: float = 1.0
    tau: float = 0.0
    lam: float = 0.1
    eps: float = 0.3
    alpha2: float = 0.25
    kappa: float = 0.05
    kappa_stop: float = 0.01
    gamma1: float = 1.0
    dt: float = 1e-3
    t_end: float = 1.0
    tol_newton: float = 1e-10
    tol_linear: float = 1e-10
    n_x: int = 31
    n_eta: int = 15

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError(f"beta must be > 0, got {self.beta}")
        if self.gamma < 0 or self.tau < 0 or self.eps < 0:
            raise ParameterError("gamma, tau and eps must be nonnegative")
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if not 0 < self.alpha2 < 0.5:
            raise ParameterError(f"alpha2 must lie in (0, 1/2), got {self.alpha2}")
        if not 0 < self.kappa_stop < self.kappa < 1:
            raise ParameterError(
                f"need 0 < kappa_stop < kappa < 1, got kappa_stop={self.kappa_stop}, "
                f"kappa={self.kappa}"
            )
        if not self.gamma1 > 0:
            raise ParameterError("gamma1 must be > 0")
        if not self.dt > 0 or not self.t_end >= 0:
            raise ParameterError("dt must be > 0 and t_end >= 0")
        if not self.tol_newton > 0 or not self.tol_linear > 0:
            raise ParameterError("tolerances must be > 0")
        Grid1D(self.n_x)
        if self.n_eta < 2:
            raise ParameterError("n_eta must be >= 2")

    @property
    def alpha(self) -> float:
        return 0.5 * self.alpha2

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.n_x)

    @property
    def grid2d(self) -> Grid2D:
        return Grid2D(Grid1D(self.n_x), self.n_eta)

    def with_(self, **changes) -> ModelParams:
        return replace(self, **changes)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class FractionalNormContext:
    """Eigen-decomposition of A_h used to define every fractional norm.

    ``vectors`` has Euclidean-orthonormal columns; the L2_h-normalised
    eigenfunctions are ``vectors / sqrt(h)``.
    """

    grid: Grid1D
    eigenvalues: np.ndarray
    vectors: np.ndarray
    alpha: float = 0.125
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if np.any(self.eigenvalues <= 0):
            raise ParameterError("plate operator is not positive definite")

    @classmethod
    def from_operator(cls, op, alpha: float = 0.125) -> FractionalNormContext:
        mu, q = op.eigh()
        return cls(op.grid, mu, q, alpha)

    @property
    def mu1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def c1(self) -> float:
        """Norm-equivalence constant; equals 1 whenever mu1 >= 1."""
        return max(1.0, 1.0 / self.mu1)

    def coefficients(self, z) -> np.ndarray:
        """Coordinates of z in the L2_h-orthonormal eigenbasis (works on stacks)."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.grid.n_interior:
            raise DimensionError(
                f"expected trailing length {self.grid.n_interior}, got shape {z.shape}"
            )
        return math.sqrt(self.grid.h) * (z @ self.vectors)

    def eigenfunction(self, index: int = 0) -> np.ndarray:
        e = self.vectors[:, index] / math.sqrt(self.grid.h)
        return e if e.sum() >= 0 else -e

    def weights(self, s: float) -> np.ndarray:
        key = float(s)
        if key not in self._cache:
            self._cache[key] = self.eigenvalues**key
        return self._cache[key]

    def power(self, z, s: float) -> np.ndarray:
        """A_h^s z."""
        c = self.coefficients(z)
        return (c * self.weights(s)) @ self.vectors.T / math.sqrt(self.grid.h)

    def inner(self, y, z, s: float = 0.0) -> float:
        """<A_h^(s/2) y, A_h^(s/2) z>_h."""
        return float(np.sum(self.weights(s) * self.coefficients(y) * self.coefficients(z)))


def fractional_norm(z, s: float, ctx: FractionalNormContext) -> float:
    """``||A_h^(s/2) z||_h``; works row-wise on 2-D stacks."""
    if s < 0:
        raise ParameterError(f"norm order must be >= 0, got {s}")
    c = ctx.coefficients(z)
    # rescale so tiny or huge vectors neither underflow nor overflow when squared
    scale = np.max(np.abs(c), axis=-1, keepdims=True)
    safe = np.where(scale > 0, scale, 1.0)
    c = c / safe
    return safe[..., 0] * np.sqrt(np.sum(ctx.weights(s) * c * c, axis=-1))


def l2_norm(z, grid: Grid1D) -> float:
    """Trapezoidal L2 norm of an interior vector (boundary values are zero)."""
    z = grid.check(z)
    return math.sqrt(grid.h * float(z @ z))


@dataclass(frozen=True)
class SAlphaReport:
    member: bool
    norm: float
    norm_margin: float
    gap_margin: float


def check_S_alpha(u, kappa: float, ctx: FractionalNormContext) -> SAlphaReport:
    """Membership of ``u`` in S_alpha(kappa) with both margins.

    The norm margin is ``1/kappa - ||u||_(1+alpha)`` and the gap margin
    ``min(1 + u) - kappa``; membership requires both to be positive.
    """
    u = ctx.grid.check(u)
    norm = float(fractional_norm(u, 1.0 + ctx.alpha, ctx))
    norm_margin = 1.0 / kappa - norm
    gap_margin = float(np.min(1.0 + u)) - kappa
    return SAlphaReport(norm_margin > 0 and gap_margin > 0, norm, norm_margin, gap_margin)
