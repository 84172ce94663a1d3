"""Electrostatic potential on the fixed rectangle I x (0, 1).

The potential psi on the gap Omega(u) = {-1 < z < u(x)} is pulled back by
eta = (1 + z) / (1 + u(x)), phi(x, eta) = psi(x, (1 + u) eta - 1). Writing
w = 1 + u, the chain rule gives

    eta_x  = -eta u_x / w,        eta_z = 1 / w,
    eta_xx = eta (2 u_x^2 / w^2 - u_xx / w),

so eps^2 psi_xx + psi_zz = 0 becomes

    a phi_xx + b phi_x_eta + c phi_eta_eta + d phi_eta = 0

with a = eps^2, b = 2 eps^2 eta_x, c = eps^2 eta_x^2 + 1 / w^2 and
d = eps^2 eta_xx. The Dirichlet data psi = (1 + z) / w become phi = eta on
all four sides.

On the plate psi = 1, hence psi_x = -u_x psi_z there, and psi_z = phi_eta / w.
The squared field on the plate is therefore
g = (1 + eps^2 u_x^2) phi_eta(x, 1)^2 / w^2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .core import FractionalNormContext, Grid1D, Grid2D, ModelParams, check_S_alpha, fractional_norm
from .errors import AdmissibilityError, NumericalError, TouchdownError


def plate_derivatives(u, grid: Grid1D) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """u, u_x, u_xx on all x-nodes by centered differences with clamped closure.

    At the walls u = u_x = 0 and the ghost reflection gives u_xx = 2 u_1 / h^2.
    """
    h = grid.h
    uf = grid.pad(u)
    ext = np.concatenate(([uf[1]], uf, [uf[-2]]))
    ux = (ext[2:] - ext[:-2]) / (2 * h)
    uxx = (ext[2:] - 2 * ext[1:-1] + ext[:-2]) / h**2
    ux[0] = ux[-1] = 0.0
    return uf, ux, uxx


def _check_gap(u, kappa_stop: float, grid: Grid1D):
    gap = 1.0 + np.asarray(u)
    i = int(np.argmin(gap))
    if gap[i] < kappa_stop:
        raise TouchdownError(
            f"min gap {gap[i]:.4g} below touchdown threshold {kappa_stop}",
            min_gap=float(gap[i]),
            location=float(grid.x[i]),
        )


@dataclass(frozen=True)
class TransformedCoefficients:
    """Coefficient arrays on the full 2-D grid, indexed [i_x, j_eta]."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    u: np.ndarray
    ux: np.ndarray
    uxx: np.ndarray


def derive_transformed_pde(u, eps: float, grid2d: Grid2D, kappa_stop: float = 0.01) -> TransformedCoefficients:
    grid = grid2d.xgrid
    u = grid.check(u)
    _check_gap(u, kappa_stop, grid)
    uf, ux, uxx = plate_derivatives(u, grid)
    eta = grid2d.eta_full[None, :]
    w = (1.0 + uf)[:, None]
    uxc, uxxc = ux[:, None], uxx[:, None]
    e2 = eps * eps
    shape = grid2d.shape
    a = np.full(shape, e2)
    b = -2.0 * e2 * eta * uxc / w
    c = (1.0 + e2 * eta**2 * uxc**2) / w**2
    d = e2 * eta * (2.0 * uxc**2 / w**2 - uxxc / w)
    return TransformedCoefficients(a, b + 0 * a, c + 0 * a, d + 0 * a, uf, ux, uxx)


@dataclass(frozen=True)
class PotentialField:
    phi: np.ndarray  # full nodal array, boundary included
    u: np.ndarray
    eps: float
    grid2d: Grid2D


def boundary_values(grid2d: Grid2D) -> np.ndarray:
    """Array holding eta on every node; its boundary part is the Dirichlet data."""
    _, eta = grid2d.mesh()
    return eta.copy()


def assemble_operator(coef: TransformedCoefficients, grid2d: Grid2D) -> sp.csr_matrix:
    """Rows for interior nodes of -(a phi_xx + b phi_xeta + c phi_etaeta + d phi_eta).

    Columns run over all nodes of the full grid (row-major [i, j]).
    """
    nx, ny = grid2d.shape
    h, k = grid2d.xgrid.h, grid2d.k
    I, J = np.meshgrid(np.arange(1, nx - 1), np.arange(1, ny - 1), indexing="ij")
    I, J = I.ravel(), J.ravel()
    row = np.arange(I.size)
    a, b, c, d = (arr[I, J] for arr in (coef.a, coef.b, coef.c, coef.d))
    cross = b / (4 * h * k)
    stencil = [
        (0, 0, 2 * a / h**2 + 2 * c / k**2),
        (1, 0, -a / h**2),
        (-1, 0, -a / h**2),
        (0, 1, -c / k**2 - d / (2 * k)),
        (0, -1, -c / k**2 + d / (2 * k)),
        (1, 1, -cross),
        (-1, -1, -cross),
        (1, -1, cross),
        (-1, 1, cross),
    ]
    rows, cols, vals = [], [], []
    for di, dj, val in stencil:
        rows.append(row)
        cols.append((I + di) * ny + (J + dj))
        vals.append(val)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(I.size, nx * ny),
    )


def solve_transformed(coef: TransformedCoefficients, grid2d: Grid2D, forcing=None) -> np.ndarray:
    """Solve a phi_xx + b phi_xeta + c phi_etaeta + d phi_eta = forcing, phi = eta on the boundary."""
    nx, ny = grid2d.shape
    full = assemble_operator(coef, grid2d)
    interior = np.zeros((nx, ny), dtype=bool)
    interior[1:-1, 1:-1] = True
    mask = interior.ravel()
    phi = boundary_values(grid2d)
    rhs = -full[:, ~mask] @ phi.ravel()[~mask]
    if forcing is not None:
        rhs = rhs - np.asarray(forcing, dtype=float)[1:-1, 1:-1].ravel()
    try:
        lu = splu(full[:, mask].tocsc())
        sol = lu.solve(rhs)
    except RuntimeError as exc:
        raise NumericalError(f"sparse elliptic solve failed: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise NumericalError("sparse elliptic solve returned non-finite values")
    phi[1:-1, 1:-1] = sol.reshape(nx - 2, ny - 2)
    return phi


def solve_potential(u, params: ModelParams, forcing=None) -> PotentialField:
    """Transformed potential phi_u; ``forcing`` is for manufactured-solution checks."""
    grid2d = params.grid2d
    coef = derive_transformed_pde(u, params.eps, grid2d, params.kappa_stop)
    phi = solve_transformed(coef, grid2d, forcing)
    if forcing is None and (phi.min() < -1e-12 or phi.max() > 1 + 1e-12):
        warnings.warn(
            "discrete maximum principle violated; grid may be too coarse", RuntimeWarning, stacklevel=2
        )
    return PotentialField(phi, coef.u[1:-1].copy(), params.eps, grid2d)


def gradient_trace(field: PotentialField) -> np.ndarray:
    """g(u) on interior x-nodes."""
    k = field.grid2d.k
    phi = field.phi
    phi_eta = (3 * phi[1:-1, -1] - 4 * phi[1:-1, -2] + phi[1:-1, -3]) / (2 * k)
    _, ux, _ = plate_derivatives(field.u, field.grid2d.xgrid)
    w = 1.0 + field.u
    return (1.0 + field.eps**2 * ux[1:-1] ** 2) * phi_eta**2 / w**2


def closed_form_g(u) -> np.ndarray:
    """Small-aspect-ratio nonlinearity 1 / (1 + u)^2."""
    return 1.0 / (1.0 + np.asarray(u)) ** 2


def _energy_density(field: PotentialField) -> np.ndarray:
    grid2d = field.grid2d
    _, ux, _ = plate_derivatives(field.u, grid2d.xgrid)
    w = (1.0 + grid2d.xgrid.pad(field.u))[:, None]
    eta = grid2d.eta_full[None, :]
    phi_x, phi_eta = np.gradient(field.phi, grid2d.xgrid.h, grid2d.k, edge_order=2)
    psi_x = phi_x - eta * ux[:, None] * phi_eta / w
    return (field.eps**2 * psi_x**2 + phi_eta**2 / w**2) * w


def electrostatic_energy(field: PotentialField) -> float:
    """Dirichlet integral of psi over Omega(u), trapezoidal rule on the fixed rectangle."""
    q = _energy_density(field)
    grid2d = field.grid2d
    return float(np.trapezoid(np.trapezoid(q, dx=grid2d.k, axis=1), dx=grid2d.xgrid.h))


def electrostatic_energy_midpoint(field: PotentialField) -> float:
    """Same integral by the cell-midpoint rule with cell-centred difference quotients."""
    grid2d = field.grid2d
    h, k = grid2d.xgrid.h, grid2d.k
    phi = field.phi
    uf = grid2d.xgrid.pad(field.u)
    phi_x = 0.5 * (np.diff(phi, axis=0)[:, 1:] + np.diff(phi, axis=0)[:, :-1]) / h
    phi_eta = 0.5 * (np.diff(phi, axis=1)[1:, :] + np.diff(phi, axis=1)[:-1, :]) / k
    w = (0.5 * (uf[1:] + uf[:-1]) + 1.0)[:, None]
    ux = (np.diff(uf) / h)[:, None]
    eta = (0.5 * (grid2d.eta_full[1:] + grid2d.eta_full[:-1]))[None, :]
    psi_x = phi_x - eta * ux * phi_eta / w
    q = (field.eps**2 * psi_x**2 + phi_eta**2 / w**2) * w
    return float(q.sum() * h * k)


def closed_form_energy(u, grid: Grid1D) -> float:
    """Small-aspect-ratio electrostatic energy: trapezoidal integral of 1 / (1 + u)."""
    return float(np.trapezoid(1.0 / (1.0 + grid.pad(u)), dx=grid.h))


def h2_norm(f: np.ndarray, grid2d: Grid2D) -> float:
    """Discrete H^2 norm: L2 norms of all difference quotients up to order two."""
    h, k = grid2d.xgrid.h, grid2d.k
    parts = [
        f,
        np.diff(f, axis=0) / h,
        np.diff(f, axis=1) / k,
        np.diff(f, 2, axis=0) / h**2,
        np.diff(f, 2, axis=1) / k**2,
        np.diff(np.diff(f, axis=0), axis=1) / (h * k),
    ]
    return math.sqrt(h * k * sum(float(np.sum(p * p)) for p in parts))


class PotentialSolver:
    """Handle bundling the elliptic solve for one grid and aspect ratio.

    With ``closed_form=True`` the small-aspect-ratio formulas are used
    instead of a 2-D solve (only meaningful for eps = 0).
    """

    def __init__(self, params: ModelParams, closed_form: bool = False):
        self.params = params
        self.grid = params.grid
        self.closed_form = closed_form
        self.solves = 0

    def solve(self, u) -> PotentialField:
        self.solves += 1
        return solve_potential(u, self.params)

    def g(self, u) -> np.ndarray:
        if self.closed_form:
            u = self.grid.check(u)
            _check_gap(u, self.params.kappa_stop, self.grid)
            return closed_form_g(u)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return gradient_trace(self.solve(u))

    def energy(self, u) -> float:
        if self.closed_form:
            u = self.grid.check(u)
            _check_gap(u, self.params.kappa_stop, self.grid)
            return closed_form_energy(u, self.grid)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return electrostatic_energy(self.solve(u))


@dataclass(frozen=True)
class LipschitzReport:
    identical: bool
    phi_ratio: float
    g_ratio: float
    du_norm: float


def lipschitz_probe(u1, u2, params: ModelParams, ctx: FractionalNormContext) -> LipschitzReport:
    """Empirical difference quotients of u -> phi_u (discrete H^2) and u -> g(u) (order alpha)."""
    for label, u in (("u1", u1), ("u2", u2)):
        rep = check_S_alpha(u, params.kappa, ctx)
        if not rep.member:
            raise AdmissibilityError(f"{label} is not in S_alpha(kappa={params.kappa}): {rep}")
    du = float(fractional_norm(np.asarray(u1) - np.asarray(u2), 1.0 + ctx.alpha, ctx))
    if du == 0.0:
        return LipschitzReport(True, float("nan"), float("nan"), 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        f1, f2 = solve_potential(u1, params), solve_potential(u2, params)
    dphi = h2_norm(f1.phi - f2.phi, params.grid2d)
    dg = float(fractional_norm(gradient_trace(f1) - gradient_trace(f2), ctx.alpha, ctx))
    return LipschitzReport(False, dphi / du, dg / du, du)
