"""Time integration of the plate equation with energy bookkeeping.

gamma > 0:  implicit midpoint for u' = v, gamma^2 v' = -v - A_h u - lam g(u),
            with g frozen at the predictor u^n + (dt/2) v^n.
gamma = 0:  semi-implicit Euler (I + dt A_h) u^{n+1} = u^n - dt lam g(u^n).

Eliminating u^{n+1/2} = u^n + (dt/2) w, the midpoint velocity w solves

    ((2 gamma^2/dt + 1) I + (dt/2) A_h) w = (2 gamma^2/dt) v^n - A_h u^n - lam g*

which stays well conditioned as gamma -> 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import FractionalNormContext, ModelParams, PlateState, check_S_alpha, fractional_norm
from .errors import AdmissibilityError, GuardError, TouchdownError
from .plate import PlateOperator, assemble_plate_operator, solve_shifted
from .potential import PotentialSolver

log = logging.getLogger(__name__)

COMPLETED = "completed"
TOUCHDOWN = "touchdown"
BLOWUP = "blowup_guard"


def _check_new_state(u, t, params: ModelParams, ctx: FractionalNormContext | None):
    gap = 1.0 + u
    i = int(np.argmin(gap))
    if gap[i] < params.kappa_stop:
        loc = float(ctx.grid.x[i]) if ctx is not None else None
        raise TouchdownError(f"touchdown guard tripped at t={t:.6g}", min_gap=float(gap[i]), location=loc)
    if ctx is not None:
        norm = float(fractional_norm(u, 1.0 + ctx.alpha, ctx))
        if norm > 2.0 / params.kappa:
            raise GuardError(f"||u||_(1+alpha) = {norm:.4g} exceeds 2/kappa at t={t:.6g}")


def _wave_step(state, params, op, potential, ctx):
    dt, g2 = params.dt, params.gamma**2
    if params.lam != 0:
        g = potential.g(state.u + 0.5 * dt * state.v)
    else:
        g = np.zeros_like(state.u)
    rhs = (2 * g2 / dt) * state.v - op.apply(state.u) - params.lam * g
    w = solve_shifted(op, 2 * g2 / dt + 1.0, rhs, c=0.5 * dt)
    u_new = state.u + dt * w
    v_new = 2 * w - state.v
    t_new = state.t + dt
    _check_new_state(u_new, t_new, params, ctx)
    return PlateState(u_new, v_new, t_new), g


def _parabolic_step(state, params, op, potential, ctx):
    dt = params.dt
    if params.lam != 0:
        g = potential.g(state.u)
    else:
        g = np.zeros_like(state.u)
    u_new = solve_shifted(op, 1.0, state.u - dt * params.lam * g, c=dt)
    t_new = state.t + dt
    _check_new_state(u_new, t_new, params, ctx)
    return PlateState(u_new, (u_new - state.u) / dt, t_new), g


def step_wave(state: PlateState, params: ModelParams, op: PlateOperator, potential: PotentialSolver,
              ctx: FractionalNormContext | None = None) -> PlateState:
    """One implicit-midpoint step (gamma > 0)."""
    if not params.gamma > 0:
        raise ValueError("step_wave requires gamma > 0")
    return _wave_step(state, params, op, potential, ctx)[0]


def step_parabolic(state: PlateState, params: ModelParams, op: PlateOperator, potential: PotentialSolver,
                   ctx: FractionalNormContext | None = None) -> PlateState:
    """One semi-implicit Euler step of the damping-dominated equation (gamma = 0)."""
    if params.gamma != 0:
        raise ValueError("step_parabolic requires gamma = 0")
    return _parabolic_step(state, params, op, potential, ctx)[0]


@dataclass
class EnergyLedger:
    """Energy balance sampled every ``stride`` steps.

    residual = [Em - lam Ee + kinetic + dissipation](t) - [Em - lam Ee + kinetic](0)
    """

    lam: float
    t: list = field(default_factory=list)
    Em: list = field(default_factory=list)
    Ee: list = field(default_factory=list)
    kinetic: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)
    residual: list = field(default_factory=list)

    columns = ("t", "Em", "Ee", "kinetic", "dissipation", "residual")

    def record(self, t, em, ee, kin, diss):
        total = em - self.lam * ee + kin + diss
        if not self.t:
            self._initial = em - self.lam * ee + kin
        self.t.append(t)
        self.Em.append(em)
        self.Ee.append(ee)
        self.kinetic.append(kin)
        self.dissipation.append(diss)
        self.residual.append(0.0 if len(self.t) == 1 else total - self._initial)

    def rows(self):
        return list(zip(*(getattr(self, c) for c in self.columns)))

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual else 0.0


@dataclass
class TrajectoryRecord:
    """Per-step scalar series, strided snapshots and the termination status."""

    kappa: float
    t: list = field(default_factory=list)
    min_gap: list = field(default_factory=list)
    sup_u: list = field(default_factory=list)
    norm_H2: list = field(default_factory=list)
    g_sup: list = field(default_factory=list)
    in_S_alpha: list = field(default_factory=list)
    snap_t: list = field(default_factory=list)
    snap_u: list = field(default_factory=list)
    snap_v: list = field(default_factory=list)
    status: str = COMPLETED
    message: str = ""
    final_u: np.ndarray | None = None
    touchdown_location: float | None = None
    dt_heuristic_violation: float | None = None

    columns = ("t", "min_gap", "sup_u", "norm_H2", "g_sup", "in_S_alpha")

    def rows(self, stride: int = 1):
        n = len(self.t)
        idx = [i for i in range(n) if i % stride == 0]
        if self.status != COMPLETED and idx[-1] != n - 1:
            idx.append(n - 1)
        return [tuple(getattr(self, c)[i] for c in self.columns) for i in idx]

    @property
    def snapshots_u(self) -> np.ndarray:
        return np.array(self.snap_u)

    @property
    def snapshots_v(self) -> np.ndarray:
        return np.array(self.snap_v)

    @property
    def times(self) -> np.ndarray:
        return np.array(self.snap_t)


def _record_scalars(rec, t, u, g, ctx):
    rep = check_S_alpha(u, rec.kappa / 2, ctx)
    rec.t.append(t)
    rec.min_gap.append(float(np.min(1.0 + u)))
    rec.sup_u.append(float(np.max(np.abs(u))))
    rec.norm_H2.append(float(fractional_norm(u, 1.0, ctx)))
    rec.g_sup.append(float(np.max(g)) if g is not None else float("nan"))
    rec.in_S_alpha.append(bool(rep.member))


def run_trajectory(u0, u1, params: ModelParams, *, op: PlateOperator | None = None,
                   ctx: FractionalNormContext | None = None, potential: PotentialSolver | None = None,
                   snapshot_stride: int = 1, ledger_stride: int = 10, with_ledger: bool = True):
    """Integrate from (u0, u1) to ``params.t_end`` or until a guard trips.

    Returns ``(TrajectoryRecord, EnergyLedger)``.
    """
    grid = params.grid
    u0 = grid.check(u0).copy()
    u1 = grid.check(u1).copy() if params.gamma > 0 else np.zeros_like(u0)
    op = op or assemble_plate_operator(grid, params.beta, params.tau)
    ctx = ctx or FractionalNormContext.from_operator(op, params.alpha)
    potential = potential or PotentialSolver(params)
    rep = check_S_alpha(u0, params.kappa, ctx)
    if not rep.member:
        raise AdmissibilityError(f"initial displacement not in S_alpha(kappa): {rep}")

    step = _wave_step if params.gamma > 0 else _parabolic_step
    h, g2, dt = grid.h, params.gamma**2, params.dt
    nsteps = int(round(params.t_end / dt))
    rec = TrajectoryRecord(params.kappa)
    ledger = EnergyLedger(params.lam)
    state = PlateState(u0, u1, 0.0)

    g0 = potential.g(u0) if params.lam != 0 else np.zeros_like(u0)
    _record_scalars(rec, 0.0, u0, g0, ctx)
    rec.snap_t.append(0.0)
    rec.snap_u.append(u0)
    rec.snap_v.append(u1)

    def ledger_row(st, diss):
        ee = potential.energy(st.u) if with_ledger else float("nan")
        ledger.record(st.t, op.energy(st.u), ee, 0.5 * g2 * h * float(st.v @ st.v), diss)

    diss = 0.0
    if with_ledger:
        ledger_row(state, diss)
    for n in range(1, nsteps + 1):
        try:
            new, g = step(state, params, op, potential, ctx)
        except TouchdownError as exc:
            rec.status = TOUCHDOWN
            rec.message = str(exc)
            bad_t = state.t + dt
            gap = exc.min_gap
            if gap is None:
                gap = float(np.min(1.0 + state.u))
            rec.t.append(bad_t)
            rec.min_gap.append(gap)
            rec.sup_u.append(float("nan"))
            rec.norm_H2.append(float("nan"))
            rec.g_sup.append(float("nan"))
            rec.in_S_alpha.append(False)
            rec.final_u = state.u
            rec.touchdown_location = exc.location
            break
        except GuardError as exc:
            rec.status = BLOWUP
            rec.message = str(exc)
            rec.final_u = state.u
            break
        if params.gamma > 0:
            diss += 0.5 * dt * h * (float(state.v @ state.v) + float(new.v @ new.v))
        else:
            diss += dt * h * float(new.v @ new.v)
        state = PlateState(new.u, new.v, n * dt)
        gap = float(np.min(1.0 + state.u))
        if (rec.dt_heuristic_violation is None and params.lam > 0
                and dt > 0.25 * gap**2 / params.lam):
            rec.dt_heuristic_violation = state.t
        _record_scalars(rec, state.t, state.u, g, ctx)
        if n % snapshot_stride == 0:
            rec.snap_t.append(state.t)
            rec.snap_u.append(state.u)
            rec.snap_v.append(state.v)
        if with_ledger and n % ledger_stride == 0:
            ledger_row(state, diss)
    if rec.final_u is None:
        rec.final_u = state.u
    log.debug("trajectory finished: %s %s", rec.status, rec.message)
    return rec, ledger


@dataclass(frozen=True)
class TouchdownEstimate:
    t_c: float
    location: float
    interval: float


def detect_touchdown(rec: TrajectoryRecord, grid=None) -> TouchdownEstimate | None:
    """Extrapolate the min-gap series linearly through its last two samples to zero."""
    if rec.status != TOUCHDOWN or len(rec.t) < 2:
        return None
    t0, t1 = rec.t[-2], rec.t[-1]
    g0, g1 = rec.min_gap[-2], rec.min_gap[-1]
    if g0 != g1:
        t_c = t1 + g1 * (t1 - t0) / (g0 - g1)
    else:
        t_c = t1
    loc = rec.touchdown_location
    if loc is None and grid is not None:
        loc = float(grid.x[int(np.argmin(rec.final_u))])
    return TouchdownEstimate(float(t_c), loc if loc is not None else math.nan, float(t1 - t0))
