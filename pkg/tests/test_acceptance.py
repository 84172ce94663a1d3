"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from mems_plate.core import FractionalNormContext, ModelParams
from mems_plate.dynamics import TOUCHDOWN, detect_touchdown, run_trajectory
from mems_plate.experiments import limit_study
from mems_plate.plate import assemble_plate_operator
from mems_plate.potential import closed_form_g, gradient_trace, solve_potential
from mems_plate.stationary import continue_branch, newton_steady
from mems_plate.verify import homogeneous_decay_run, manufactured_errors, orders, run_verify

FOLD_REGRESSION = 4.1955016614


def verdict(number, title, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}; {elapsed:.1f}s of {budget:.0f}s"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _setup(p):
    op = assemble_plate_operator(p.grid, p.beta, p.tau)
    return op, FractionalNormContext.from_operator(op, p.alpha)


def test_criterion_1_elliptic_exactness():
    t0 = time.perf_counter()
    p = ModelParams()
    _, E = p.grid2d.mesh()
    flat = max(np.max(np.abs(solve_potential(np.zeros(p.n_x), p.with_(eps=e)).phi - E)) for e in (0, 0.1, 0.5, 1))
    x = p.grid.x
    samples = [-0.5 * (1 - x**2) ** 2, 0.3 * np.cos(np.pi * x / 2) ** 2 - 0.1, -0.8 * (1 - x**2) ** 3]
    q = p.with_(eps=0.0)
    closed = max(np.max(np.abs(gradient_trace(solve_potential(u, q)) - closed_form_g(u))) for u in samples)
    verdict(1, "elliptic exactness", flat <= 1e-10 and closed <= 1e-10,
            f"flat-plate phi error {flat:.1e}, eps=0 g error {closed:.1e}", time.perf_counter() - t0, 5)


def test_criterion_2_manufactured_convergence():
    t0 = time.perf_counter()
    errs = manufactured_errors((33, 65, 129))
    o = orders(errs)
    verdict(2, "manufactured convergence", min(o) >= 1.9,
            f"errors {', '.join(f'{e:.2e}' for e in errs)}, orders {', '.join(f'{v:.3f}' for v in o)}",
            time.perf_counter() - t0, 60)


def test_criterion_3_energy_equality():
    t0 = time.perf_counter()
    p = ModelParams(lam=0.0, t_end=1.0)
    op, ctx = _setup(p)
    x = p.grid.x
    u0 = -0.1 * (1 - x**2) ** 2
    u1 = (0.3 * x + 0.2) * (1 - x**2) ** 2
    dts = (1e-3, 5e-4, 2.5e-4, 1.25e-4)
    worst_order, details = math.inf, []
    for gamma in (0.05, 0.2, 1.0):
        res = [run_trajectory(u0, u1, p.with_(gamma=gamma, dt=dt), op=op, ctx=ctx)[1].max_abs_residual
               for dt in dts]
        o = min(orders(res))
        worst_order = min(worst_order, o)
        details.append(f"gamma {gamma}: order {o:.3f}")
    q = p.with_(lam=0.3, eps=0.3, dt=dts[-1])
    _, led = run_trajectory(u0, u1, q, op=op, ctx=ctx)
    e0 = led.Em[0] - q.lam * led.Ee[0]
    bound = 1e-3 * (abs(e0) + 1)
    details.append(f"lambda 0.3 residual {led.max_abs_residual:.2e} <= {bound:.2e}")
    verdict(3, "energy equality", worst_order >= 1.8 and led.max_abs_residual <= bound, "; ".join(details),
            time.perf_counter() - t0, 300)


@pytest.fixture(scope="module")
def decay_runs():
    t0 = time.perf_counter()
    runs = {g: homogeneous_decay_run(g, gamma1=1.0) for g in (1.0, 0.25, 1.0 / 16)}
    return runs, time.perf_counter() - t0


def test_criterion_4_uniform_decay(decay_runs):
    runs, setup = decay_runs
    t0 = time.perf_counter()
    ok, details = True, []
    for gamma, (tr, rep, cfg) in runs.items():
        assert cfg.omega == 0.2 and cfg.c1 == 1.0
        good = rep.fitted_rate >= cfg.omega and rep.margin >= -1e-8 * tr.E[0]
        ok = ok and good
        details.append(f"gamma {gamma:g}: rate {rep.fitted_rate:.3f}, margin {rep.margin:.2e}")
    verdict(4, "uniform-in-gamma decay", ok, "; ".join(details), setup + time.perf_counter() - t0, 120)


def test_criterion_5_lyapunov_sandwiches(decay_runs):
    t0 = time.perf_counter()
    report = run_verify("full")
    traces = report.traces + [tr for tr, _, _ in decay_runs[0].values()]
    bad = [v for tr in traces for v in tr.violations]
    verdict(5, "Lyapunov sandwiches", report.passed and not bad and len(traces) >= 8,
            f"{len(traces)} traces, {sum(len(t.t) for t in traces)} samples, {len(bad)} violations, "
            f"verify suite {'passed' if report.passed else 'failed'}", time.perf_counter() - t0, 600)


def test_criterion_6_steady_states():
    t0 = time.perf_counter()
    p = ModelParams(lam=0.2, eps=0.3, beta=1.0, tau=0.0)
    z = np.zeros(p.n_x)
    pt = newton_steady(0.2, z, p)
    rec, _ = run_trajectory(z, z, p.with_(gamma=0.0, t_end=2.0), with_ledger=False)
    gap = float(np.max(np.abs(pt.U - rec.final_u)))
    br = continue_branch(p, 0.0, 0.5, True, max_points=150)
    ok = (pt.residual <= 1e-10 and np.all(pt.U < 0) and np.all(pt.U > -1) and gap <= 1e-6
          and br.fold_detected and br.fold_lambda > 0 and abs(br.fold_lambda - FOLD_REGRESSION) <= 1e-7)
    verdict(6, "steady states", ok,
            f"residual {pt.residual:.1e}, range [{pt.U.min():.4f}, {pt.U.max():.4f}], "
            f"parabolic limit gap {gap:.1e}, fold {br.fold_lambda:.10f}", time.perf_counter() - t0, 600)


def test_criterion_7_touchdown():
    t0 = time.perf_counter()
    p = ModelParams(lam=50.0, eps=0.3, gamma=0.2, dt=1e-4, t_end=0.2)
    z = np.zeros(p.n_x)
    rec, _ = run_trajectory(z, z, p, with_ledger=False)
    td = detect_touchdown(rec, p.grid)
    gaps = np.array(rec.min_gap)
    tail = gaps[int(0.8 * gaps.size):]
    ok = (rec.status == TOUCHDOWN and td is not None and 0 < td.t_c < p.t_end
          and np.all(np.diff(tail) < 0) and abs(td.location) <= p.grid.h)
    verdict(7, "touchdown", ok, f"status {rec.status}, T_c {td.t_c:.5f}, location {td.location:+.3f}",
            time.perf_counter() - t0, 120)


def test_criterion_8_damping_dominated_limit():
    t0 = time.perf_counter()
    p = ModelParams(lam=0.5, eps=0.3, t_end=1.0)
    gammas = [0.4, 0.2, 0.1, 0.05]
    u0 = -0.1 * (1 - p.grid.x**2) ** 2
    rep = limit_study(p, gammas, u0, 0 * u0)
    err = rep.err
    decreasing = all(b < a for a, b in zip(err, err[1:]))
    lipschitz = all(r <= 1.5 * rep.lipschitz_C0 for r in rep.lipschitz_ratio_max)
    z = np.zeros(p.n_x)
    vrep = limit_study(p, gammas, z, z)
    vel = vrep.velocity_err
    vel_decreasing = all(b < a for a, b in zip(vel, vel[1:]))
    ok = decreasing and err[-1] <= err[0] / 4 and lipschitz and vel_decreasing
    verdict(8, "damping-dominated limit", ok,
            f"err {', '.join(f'{e:.4f}' for e in err)}; max ratio {max(rep.lipschitz_ratio_max):.3f} vs "
            f"1.5*C0 {1.5 * rep.lipschitz_C0:.3f}; velocity err {', '.join(f'{v:.4f}' for v in vel)}",
            time.perf_counter() - t0, 600)


def test_criterion_9_small_aspect_ratio():
    t0 = time.perf_counter()
    lams = [0.5, 1.0, 1.5, 2.0, 2.5]
    full = continue_branch(ModelParams(eps=1e-3), 0.0, 0.5, False, lam_max=lams[-1])
    flat = continue_branch(ModelParams(eps=0.0), 0.0, 0.5, False, lam_max=lams[-1], closed_form=True)
    a = {round(pt.lam, 12): pt.min_gap for pt in full.points}
    b = {round(pt.lam, 12): pt.min_gap for pt in flat.points}
    diffs = [abs(a[lam] - b[lam]) for lam in lams]
    verdict(9, "small-aspect-ratio consistency", max(diffs) <= 1e-3,
            f"max min-gap difference {max(diffs):.2e} at lambda {lams}", time.perf_counter() - t0, 600)
