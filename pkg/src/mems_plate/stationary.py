"""Steady states A_h U + lam g(U) = 0: Newton, continuation in lam, pull-in.

The Jacobian of g has no closed form, so it is assembled column by column
from forward differences (one elliptic solve per grid node).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.optimize import brentq

from .core import ModelParams
from .dynamics import COMPLETED, run_trajectory
from .errors import ConvergenceError, NumericalError, ParameterError, TouchdownError
from .plate import PlateOperator, assemble_plate_operator
from .potential import PotentialSolver

log = logging.getLogger(__name__)

STABLE, UNSTABLE, UNDETERMINED = "stable", "unstable", "undetermined"


@dataclass(frozen=True)
class BranchPoint:
    lam: float
    U: np.ndarray
    min_gap: float
    sup_norm: float
    s: float
    stability: str
    residual: float
    min_eig: float = math.nan
    iterations: int = 0


class SteadyProblem:
    """Residual and finite-difference Jacobian for one parameter set."""

    def __init__(self, params: ModelParams, op: PlateOperator | None = None,
                 potential: PotentialSolver | None = None, fd_step: float = 1e-6):
        self.params = params
        self.grid = params.grid
        self.h = self.grid.h
        self.op = op or assemble_plate_operator(self.grid, params.beta, params.tau)
        self.A = self.op.matrix.toarray()
        self.potential = potential or PotentialSolver(params)
        self.fd_step = fd_step

    def g(self, U):
        return self.potential.g(U)

    def residual(self, U, lam, g=None):
        if lam == 0:
            return self.A @ U
        if g is None:
            g = self.g(U)
        return self.A @ U + lam * g

    def norm(self, r) -> float:
        return math.sqrt(self.h * float(r @ r))

    def dg(self, U, g0=None) -> np.ndarray:
        """Forward-difference Jacobian of g, step fd_step * max(1, |U_j|)."""
        if g0 is None:
            g0 = self.g(U)
        n = U.size
        J = np.empty((n, n))
        for j in range(n):
            d = self.fd_step * max(1.0, abs(U[j]))
            Up = U.copy()
            Up[j] += d
            J[:, j] = (self.g(Up) - g0) / d
        return J

    def jacobian(self, U, lam, g0=None):
        if lam == 0:
            return self.A.copy()
        return self.A + lam * self.dg(U, g0)


def classify(J) -> tuple[str, float]:
    """Stability tag from the smallest real part of the Jacobian spectrum."""
    ev = linalg.eigvals(J)
    m = float(np.min(ev.real))
    scale = float(np.max(np.abs(ev)))
    if abs(m) <= 1e-8 * scale:
        return UNDETERMINED, m
    return (STABLE if m > 0 else UNSTABLE), m


def newton_steady(lam: float, U_guess, params: ModelParams, *, problem: SteadyProblem | None = None,
                  max_iters: int = 40, refresh: int = 3, classify_point: bool = True) -> BranchPoint:
    """Damped Newton with a frozen finite-difference Jacobian refreshed every ``refresh`` steps."""
    prob = problem or SteadyProblem(params)
    U = prob.grid.check(U_guess).copy()
    if np.min(1.0 + U) < params.kappa_stop:
        raise TouchdownError("initial guess below touchdown threshold")
    g = prob.g(U) if lam != 0 else np.zeros_like(U)
    r = prob.residual(U, lam, g)
    rn = prob.norm(r)
    lu, age = None, refresh
    it = 0
    while rn > params.tol_newton:
        if it >= max_iters:
            raise ConvergenceError(f"Newton did not converge in {max_iters} iterations (residual {rn:.3e})")
        it += 1
        if age >= refresh:
            lu, age = linalg.lu_factor(prob.jacobian(U, lam, g)), 0
        age += 1
        delta = -linalg.lu_solve(lu, r)
        step = 1.0
        while True:
            try:
                Un = U + step * delta
                gn = prob.g(Un) if lam != 0 else g
                rnew = prob.residual(Un, lam, gn)
                rnn = prob.norm(rnew)
                if rnn < rn:
                    break
            except TouchdownError:
                pass
            step *= 0.5
            if step < 1e-6:
                if age > 1:
                    age = refresh
                    break
                raise ConvergenceError(f"line search failed at residual {rn:.3e}")
        if step < 1e-6:
            continue
        U, g, r, rn = Un, gn, rnew, rnn
    stability, min_eig = UNDETERMINED, math.nan
    if classify_point:
        stability, min_eig = classify(prob.jacobian(U, lam, g))
    return _point(prob, lam, U, 0.0, stability, min_eig, it)


def _point(prob, lam, U, s, stability, min_eig, iters) -> BranchPoint:
    res = prob.norm(prob.residual(U, lam))
    return BranchPoint(float(lam), U.copy(), float(np.min(1.0 + U)), float(np.max(np.abs(U))),
                       float(s), stability, res, min_eig, iters)


@dataclass
class Branch:
    points: list = field(default_factory=list)
    termination: str = ""
    fold_lambda: float = math.nan
    fold_s: float = math.nan
    fold_min_gap: float = math.nan
    fold_detected: bool = False

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def min_gaps(self) -> np.ndarray:
        return np.array([p.min_gap for p in self.points])

    def rows(self):
        return [(p.s, p.lam, p.min_gap, p.sup_norm, p.stability, p.residual) for p in self.points]

    columns = ("s", "lambda", "min_gap", "sup_norm", "stability", "residual")


def _weighted(a, b, n):
    return float(a[:-1] @ b[:-1]) / n + float(a[-1] * b[-1])


def _fold_estimate(branch: Branch):
    lams = branch.lambdas
    if lams.size == 0:
        return
    i = int(np.argmax(lams))
    branch.fold_lambda = float(lams[i])
    branch.fold_s = branch.points[i].s
    branch.fold_min_gap = branch.points[i].min_gap
    if 0 < i < lams.size - 1:
        branch.fold_detected = True
        s = np.array([branch.points[j].s for j in (i - 1, i, i + 1)])
        c2, c1, c0 = np.polyfit(s - s[1], lams[i - 1:i + 2], 2)
        if c2 < 0:
            s_star = -c1 / (2 * c2)
            if abs(s_star) <= max(abs(s[0] - s[1]), abs(s[2] - s[1])):
                branch.fold_lambda = float(c0 - c1**2 / (4 * c2))
                branch.fold_s = float(s[1] + s_star)


def continue_branch(params: ModelParams, lam_start: float, lam_step: float, arclength: bool = True, *,
                    lam_max: float | None = None, max_points: int = 200, gap_stop: float = 0.1,
                    ds_max: float | None = None, problem: SteadyProblem | None = None,
                    closed_form: bool = False) -> Branch:
    """Trace the steady-state branch starting from (lam_start, U = 0 guess).

    Natural continuation in lam when ``arclength`` is off (step halving on
    failure, stops when the step underflows). With ``arclength`` on,
    pseudo-arclength steps in the (lam, U / sqrt(n)) metric go round the fold.
    """
    if problem is None:
        potential = PotentialSolver(params, closed_form=closed_form)
        problem = SteadyProblem(params, potential=potential)
    n = params.n_x
    branch = Branch()
    first = newton_steady(lam_start, np.zeros(n), params, problem=problem)
    branch.points.append(first)
    if arclength:
        _pseudo_arclength(branch, problem, params, lam_step, lam_max, max_points, gap_stop,
                          ds_max if ds_max is not None else 8 * abs(lam_step))
    else:
        _natural(branch, problem, params, lam_step, lam_max, max_points, gap_stop)
    _fold_estimate(branch)
    if arclength and branch.fold_detected:
        _refine_fold(branch, problem, params)
    return branch


def _refine_fold(branch, prob, params):
    """Locate the turning point as the zero of the tangent's lam-component.

    Starting from the point before the coarse maximum, the corrector is run
    at trial arclength offsets and brentq finds where d lam / ds vanishes.
    Leaves the coarse estimate in place if the bracket cannot be formed.
    """
    n = params.n_x
    i = int(np.argmax(branch.lambdas))
    p0, p2 = branch.points[i - 1], branch.points[i + 1]
    X0, X2 = np.append(p0.U, p0.lam), np.append(p2.U, p2.lam)
    g0 = prob.g(p0.U)
    J0 = prob.jacobian(p0.U, p0.lam, g0)
    t0 = _tangent(J0, g0, np.append(branch.points[i].U - p0.U, branch.points[i].lam - p0.lam), n)
    cache = {}

    def lam_slope(ds):
        Xn, _, Jn, gn = _correct(prob, params, X0 + ds * t0, t0, J0, n)
        cache[ds] = Xn
        return _tangent(Jn, gn, t0, n)[n]

    ds_hi = _weighted(t0, X2 - X0, n)
    try:
        if not (t0[n] > 0 and ds_hi > 0 and lam_slope(ds_hi) < 0):
            return
        ds = brentq(lam_slope, 0.0, ds_hi, xtol=1e-10)
        X = cache.get(ds)
        if X is None:
            lam_slope(ds)
            X = cache[ds]
    except (ConvergenceError, TouchdownError, NumericalError, linalg.LinAlgError, ValueError) as exc:
        log.debug("fold refinement skipped: %s", exc)
        return
    branch.fold_lambda = float(X[n])
    branch.fold_s = float(p0.s + ds)
    branch.fold_min_gap = float(np.min(1.0 + X[:n]))


def _natural(branch, prob, params, dlam, lam_max, max_points, gap_stop):
    prev = branch.points[-1]
    while len(branch.points) < max_points:
        if lam_max is not None and prev.lam >= lam_max - 1e-12:
            branch.termination = "lam_max reached"
            return
        lam = prev.lam + dlam
        if lam_max is not None:
            lam = min(lam, lam_max)
        try:
            pt = newton_steady(lam, prev.U, params, problem=prob)
        except (ConvergenceError, TouchdownError, NumericalError):
            dlam *= 0.5
            if abs(dlam) < 1e-10:
                branch.termination = "step underflow"
                return
            continue
        pt = replace(pt, s=prev.s + math.hypot(lam - prev.lam, np.linalg.norm(pt.U - prev.U) / math.sqrt(pt.U.size)))
        branch.points.append(pt)
        prev = pt
        if pt.min_gap < gap_stop:
            branch.termination = "gap_stop reached"
            return
    branch.termination = "max_points reached"


def _tangent(J, g, t_prev, n):
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = J
    M[:n, n] = g
    M[n, :n] = t_prev[:n] / n
    M[n, n] = t_prev[n]
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    t = linalg.solve(M, rhs)
    t /= math.sqrt(_weighted(t, t, n))
    if _weighted(t, t_prev, n) < 0:
        t = -t
    return t


def _pseudo_arclength(branch, prob, params, lam_step, lam_max, max_points, gap_stop, ds_max):
    n = params.n_x
    p0 = branch.points[-1]
    X = np.append(p0.U, p0.lam)
    g = prob.g(p0.U)
    J = prob.jacobian(p0.U, p0.lam, g)
    t = _tangent(J, g, np.append(np.zeros(n), 1.0 if lam_step > 0 else -1.0), n)
    ds, s = abs(lam_step), p0.s
    while len(branch.points) < max_points:
        Xp = X + ds * t
        try:
            Xn, iters, Jn, gn = _correct(prob, params, Xp, t, J, n)
        except (ConvergenceError, TouchdownError, NumericalError, linalg.LinAlgError) as exc:
            log.debug("corrector failed (ds=%g): %s", ds, exc)
            ds *= 0.5
            if ds < 1e-10:
                branch.termination = "step underflow"
                return
            continue
        U, lam = Xn[:n], Xn[n]
        s += math.sqrt(_weighted(Xn - X, Xn - X, n))
        stability, min_eig = classify(Jn)
        pt = _point(prob, lam, U, s, stability, min_eig, iters)
        branch.points.append(pt)
        t = _tangent(Jn, gn, t, n)
        X, J = Xn, Jn
        if iters <= 3:
            ds = min(1.5 * ds, ds_max)
        if pt.min_gap < gap_stop:
            branch.termination = "gap_stop reached"
            return
        if lam <= 0:
            branch.termination = "lambda returned to zero"
            return
        if lam_max is not None and lam >= lam_max:
            branch.termination = "lam_max reached"
            return
    branch.termination = "max_points reached"


def _correct(prob, params, Xp, t, J, n, max_iters=25, refresh=3):
    """Chord-Newton on the bordered system; returns the converged point and a fresh Jacobian."""
    X = Xp.copy()
    lu, age = None, 0
    for it in range(1, max_iters + 1):
        U, lam = X[:n], X[n]
        g = prob.g(U)
        F = prob.residual(U, lam, g)
        N = _weighted(t, X - Xp, n)
        if prob.norm(F) <= params.tol_newton and abs(N) <= 1e-12:
            Jn = prob.jacobian(U, lam, g)
            return X, it - 1, Jn, g
        if lu is None or age >= refresh:
            if lu is not None:
                J = prob.jacobian(U, lam, g)
            M = np.zeros((n + 1, n + 1))
            M[:n, :n] = J
            M[:n, n] = g
            M[n, :n] = t[:n] / n
            M[n, n] = t[n]
            lu, age = linalg.lu_factor(M), 0
        age += 1
        X = X - linalg.lu_solve(lu, np.append(F, N))
        if np.min(1.0 + X[:n]) < params.kappa_stop:
            raise TouchdownError("corrector iterate reached the touchdown threshold")
    raise ConvergenceError("pseudo-arclength corrector did not converge")


@dataclass
class PullInResult:
    lam_lo: float
    lam_hi: float
    widths: list
    lo_summary: dict
    hi_summary: dict


def _summary(rec):
    return {
        "status": rec.status,
        "t_end": rec.t[-1],
        "min_gap_final": rec.min_gap[-1],
        "min_gap_min": float(np.nanmin(rec.min_gap)),
    }


def pull_in_bisection(params: ModelParams, lam_lo: float, lam_hi: float, horizon: float, *,
                      tol: float = 1e-2, u0=None, u1=None) -> PullInResult:
    """Bisect lam on 'touchdown (or guard trip) before ``horizon``' with fixed data."""
    grid = params.grid
    u0 = np.zeros(grid.n_interior) if u0 is None else u0
    u1 = np.zeros(grid.n_interior) if u1 is None else u1
    base = params.with_(t_end=horizon)
    op = assemble_plate_operator(grid, params.beta, params.tau)
    potential = PotentialSolver(base)

    def run(lam):
        rec, _ = run_trajectory(u0, u1, base.with_(lam=lam), op=op, potential=potential, with_ledger=False)
        return rec

    lo_rec, hi_rec = run(lam_lo), run(lam_hi)
    if lo_rec.status != COMPLETED:
        raise ParameterError(f"lam_lo={lam_lo} does not complete ({lo_rec.status})")
    if hi_rec.status == COMPLETED:
        raise ParameterError(f"lam_hi={lam_hi} does not touch down before t={horizon}")
    widths = [lam_hi - lam_lo]
    while lam_hi - lam_lo > tol:
        mid = 0.5 * (lam_lo + lam_hi)
        rec = run(mid)
        if rec.status == COMPLETED:
            lam_lo, lo_rec = mid, rec
        else:
            lam_hi, hi_rec = mid, rec
        widths.append(lam_hi - lam_lo)
    return PullInResult(lam_lo, lam_hi, widths, _summary(lo_rec), _summary(hi_rec))
