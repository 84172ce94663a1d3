"""Discrete clamped plate operator A_h ~ beta d^4/dx^4 - tau d^2/dx^2.

Interior rows use the 5-point biharmonic stencil beta*[1, -4, 6, -4, 1]/h^4
plus tau*[-1, 2, -1]/h^2. At each wall u_0 = 0 and the ghost value is the
reflection u_{-1} = u_1, which turns the corner diagonal entry 6 into 7 and
keeps the matrix symmetric.

With this closure <A_h u, u>_h equals beta times the trapezoidal L2 norm of
the second difference (including the wall nodes, where it is 2 u_1 / h^2)
plus tau times the squared L2 norm of the forward difference, so the
discrete mechanical energy is exactly (1/2) <A_h u, u>_h.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import linalg

from .core import Grid1D
from .errors import NumericalError, ParameterError


@dataclass(frozen=True)
class PlateOperator:
    grid: Grid1D
    beta: float
    tau: float
    band: np.ndarray  # LAPACK upper banded storage, shape (3, n)
    _factors: dict = field(default_factory=dict, compare=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, compare=False, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n_interior

    @property
    def matrix(self) -> sp.csr_matrix:
        n = self.n
        main, off1, off2 = self.band[2], self.band[1, 1:], self.band[0, 2:]
        return sp.diags([off2, off1, main, off1, off2], [-2, -1, 0, 1, 2], shape=(n, n), format="csr")

    def apply(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.matrix @ z

    def norm_inf(self) -> float:
        return float(abs(self.band[2]).max() + 2 * abs(self.band[1]).max() + 2 * abs(self.band[0]).max())

    def energy(self, u) -> float:
        """Discrete mechanical energy (beta/2)||u_xx||^2 + (tau/2)||u_x||^2."""
        u = self.grid.check(u)
        return 0.5 * self.grid.h * float(u @ self.apply(u))

    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """All eigenpairs (ascending), Euclidean-orthonormal eigenvectors."""
        try:
            mu, q = linalg.eig_banded(self.band, lower=False)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"banded eigensolver failed: {exc}") from exc
        return mu, q

    def factor(self, sigma: float, c: float = 1.0):
        """Cached Cholesky factor of sigma*I + c*A_h."""
        key = (float(sigma), float(c))
        with self._lock:
            fac = self._factors.get(key)
            if fac is None:
                ab = c * self.band
                ab[2] += sigma
                try:
                    fac = linalg.cholesky_banded(ab, lower=False)
                except linalg.LinAlgError as exc:
                    raise NumericalError(
                        f"sigma*I + c*A_h is not positive definite (sigma={sigma}, c={c})"
                    ) from exc
                self._factors[key] = fac
        return fac


def assemble_plate_operator(grid: Grid1D, beta: float, tau: float = 0.0) -> PlateOperator:
    if not beta > 0:
        raise ParameterError(f"beta must be > 0, got {beta}")
    if tau < 0:
        raise ParameterError(f"tau must be >= 0, got {tau}")
    n, h = grid.n_interior, grid.h
    b4, t2 = beta / h**4, tau / h**2
    band = np.zeros((3, n))
    band[2] = 6 * b4 + 2 * t2
    band[2, 0] += b4
    band[2, -1] += b4
    band[1, 1:] = -4 * b4 - t2
    band[0, 2:] = b4
    return PlateOperator(grid, float(beta), float(tau), band)


def principal_eigenpair(op: PlateOperator, tol: float = 1e-10) -> tuple[float, np.ndarray]:
    """Smallest eigenvalue and its eigenvector, unit L2_h norm, positive mean."""
    try:
        mu, q = linalg.eig_banded(op.band, lower=False, select="i", select_range=(0, 0))
    except linalg.LinAlgError as exc:
        raise NumericalError(f"banded eigensolver failed: {exc}") from exc
    mu1 = float(mu[0])
    e1 = q[:, 0] / math.sqrt(op.grid.h)
    if e1.sum() < 0:
        e1 = -e1
    res = np.max(np.abs(op.apply(e1) - mu1 * e1))
    if res > tol * op.norm_inf() * np.max(np.abs(e1)):
        raise NumericalError(f"eigenpair residual {res:.3e} exceeds tolerance")
    return mu1, e1


def solve_shifted(op: PlateOperator, sigma: float, rhs, c: float = 1.0) -> np.ndarray:
    """Solve (sigma*I + c*A_h) z = rhs with a cached banded Cholesky factor."""
    rhs = op.grid.check(rhs)
    if c == 0:
        if sigma == 0:
            raise NumericalError("singular system: sigma = c = 0")
        return rhs / sigma
    return linalg.cho_solve_banded((op.factor(sigma, c), False), rhs)
