"""Self-check suite run by ``mems-plate verify``.

``quick`` runs the exact/trivial identities of every module; ``full`` adds
grid and time-step convergence sweeps and scalar-ODE oracles. Every decay
trace built along the way is kept on the report so callers can audit the
Lyapunov sandwich bounds.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import FractionalNormContext, ModelParams, check_S_alpha, fractional_norm
from .decay import (Surrogates, decay_constants, evaluate_decay_trace, fit_decay_rate, smallness_conditions,
                    verify_decay_inequality)
from .dynamics import COMPLETED, run_trajectory
from .plate import assemble_plate_operator, principal_eigenpair, solve_shifted
from .potential import (closed_form_g, derive_transformed_pde, electrostatic_energy, gradient_trace,
                        solve_potential)
from .stationary import newton_steady

LEVELS = ("quick", "full")


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float


@dataclass
class VerifyReport:
    level: str
    checks: list = field(default_factory=list)
    traces: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "passed": self.passed,
            "checks": [vars(c) for c in self.checks],
            "n_traces": len(self.traces),
            "sandwich_ok": all(t.sandwich_ok for t in self.traces),
        }


# oracles shared with the test-suite -----------------------------------------

def manufactured_forcing(X, E, eps: float = 0.5, amp: float = -0.2):
    """Forcing for phi_m = eta + sin(pi x) eta (1 - eta) with u = amp (1 - x^2)^2.

    Exact derivatives of u are used, so the oracle is independent of the
    solver's finite-difference plate derivatives.
    """
    u = amp * (1 - X**2) ** 2
    ux = -4 * amp * X * (1 - X**2)
    uxx = -4 * amp * (1 - 3 * X**2)
    w = 1 + u
    s, c_ = np.sin(np.pi * X), np.cos(np.pi * X)
    p_xx = -np.pi**2 * s * E * (1 - E)
    p_xe = np.pi * c_ * (1 - 2 * E)
    p_ee = -2 * s
    p_e = 1 + s * (1 - 2 * E)
    e2 = eps * eps
    a = e2
    b = -2 * e2 * E * ux / w
    cc = (1 + e2 * E**2 * ux**2) / w**2
    d = e2 * E * (2 * ux**2 / w**2 - uxx / w)
    return a * p_xx + b * p_xe + cc * p_ee + d * p_e


def manufactured_solution(X, E):
    return E + np.sin(np.pi * X) * E * (1 - E)


def manufactured_errors(sizes=(33, 65, 129), eps: float = 0.5, amp: float = -0.2) -> list:
    """Max nodal error of the forced solve on N x N node grids."""
    errs = []
    for n_nodes in sizes:
        q = ModelParams(eps=eps, n_x=n_nodes - 2, n_eta=n_nodes - 2)
        X, E = q.grid2d.mesh()
        fld = solve_potential(amp * (1 - q.grid.x**2) ** 2, q, forcing=manufactured_forcing(X, E, eps, amp))
        errs.append(float(np.max(np.abs(fld.phi - manufactured_solution(X, E)))))
    return errs


def damped_mode(t, gamma: float, mu: float, z0: float = 1.0, z1: float = 0.0):
    """Exact solution of gamma^2 z'' + z' + mu z = 0 (gamma > 0, distinct roots)."""
    disc = np.sqrt(complex(1 - 4 * gamma**2 * mu))
    r1, r2 = (-1 + disc) / (2 * gamma**2), (-1 - disc) / (2 * gamma**2)
    A = (z1 - r2 * z0) / (r1 - r2)
    B = z0 - A
    t = np.asarray(t, dtype=float)
    return np.real(A * np.exp(r1 * t) + B * np.exp(r2 * t))


def slowest_energy_rate(gamma: float, mu: float) -> float:
    """Decay rate of a single-mode energy: twice the smallest -Re r."""
    disc = np.sqrt(complex(1 - 4 * gamma**2 * mu))
    roots = ((-1 + disc) / (2 * gamma**2), (-1 - disc) / (2 * gamma**2))
    return 2.0 * min(-r.real for r in roots)


def orders(errs) -> list:
    return [math.log2(a / b) for a, b in zip(errs, errs[1:])]


# the suite --------------------------------------------------------------------

def _run(report: VerifyReport, name: str, fn):
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed check, not a crashed suite
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    report.checks.append(Check(name, bool(ok), detail, time.perf_counter() - t0))


def _quick(report: VerifyReport):
    p = ModelParams()
    grid = p.grid
    op = assemble_plate_operator(grid, p.beta, p.tau)
    ctx = FractionalNormContext.from_operator(op, p.alpha)
    rng = np.random.default_rng(0)

    def plate_identities():
        y, z = rng.standard_normal((2, grid.n_interior))
        sym = abs(y @ op.apply(z) - z @ op.apply(y)) / abs(y @ op.apply(z))
        ident = np.array_equal(solve_shifted(op, 1.0, y, c=0.0), y)
        zero = not np.any(solve_shifted(op, 1.0, np.zeros_like(y)))
        rec = solve_shifted(op, 2.0, 2.0 * z + 0.5 * op.apply(z), c=0.5)
        rec_err = np.linalg.norm(rec - z) / np.linalg.norm(z)
        ok = sym < 1e-12 and ident and zero and rec_err < 1e-10 and not np.any(op.apply(0 * y))
        return ok, f"symmetry {sym:.1e}, recovery {rec_err:.1e}"

    def principal_mode():
        mu, e = principal_eigenpair(op)
        mu_tau = principal_eigenpair(assemble_plate_operator(grid, p.beta, 1.0))[0]
        norm1 = float(fractional_norm(ctx.eigenfunction(0), 1.0, ctx))
        ok = mu > 0 and np.all(e > 0) and mu_tau > mu and abs(norm1 - math.sqrt(mu)) < 1e-10 * math.sqrt(mu)
        return ok, f"mu1 {mu:.6f}, with tau=1 {mu_tau:.6f}"

    def admissible_set():
        k = p.kappa
        e1 = ctx.eigenfunction(0)
        on_gap = e1 * (1 - k / 2) / e1.max() * -1
        n1 = float(fractional_norm(e1, 1 + ctx.alpha, ctx))
        ok = (check_S_alpha(0 * e1, k, ctx).member
              and not check_S_alpha(on_gap, k, ctx).member
              and not check_S_alpha((2 / k) / n1 * e1, k, ctx).member
              and float(fractional_norm(0 * e1, 0.7, ctx)) == 0.0)
        return ok, "zero in, gap boundary out, norm boundary out"

    def flat_potential():
        worst = 0.0
        for eps in (0.0, 0.1, 0.5, 1.0):
            fld = solve_potential(np.zeros(grid.n_interior), p.with_(eps=eps))
            _, E = p.grid2d.mesh()
            worst = max(worst, float(np.max(np.abs(fld.phi - E))),
                        float(np.max(np.abs(gradient_trace(fld) - 1))), abs(electrostatic_energy(fld) - 2))
        return worst < 1e-10, f"max deviation {worst:.1e}"

    def closed_form():
        worst = 0.0
        q = p.with_(eps=0.0)
        for amp in (-0.3, -0.6, 0.2):
            u = amp * (1 - grid.x**2) ** 2
            worst = max(worst, float(np.max(np.abs(gradient_trace(solve_potential(u, q)) - closed_form_g(u)))))
        coef = derive_transformed_pde(-0.3 * (1 - grid.x**2) ** 2, 0.0, p.grid2d)
        zero_abd = not (np.any(coef.a) or np.any(coef.b) or np.any(coef.d))
        return worst < 1e-10 and zero_abd, f"max |g - (1+u)^-2| {worst:.1e}"

    def zero_trajectory():
        q = p.with_(lam=0.0, t_end=0.05)
        z = np.zeros(grid.n_interior)
        rec, led = run_trajectory(z, z, q, op=op, ctx=ctx)
        ok = rec.status == COMPLETED and not np.any(rec.snapshots_u) and led.max_abs_residual == 0.0
        cfg = decay_constants(q.gamma1, ctx.c1)
        trace = evaluate_decay_trace(rec, z, cfg, q, ctx)
        report.traces.append(trace)
        ok = ok and not (np.any(trace.E) or np.any(trace.F) or np.any(trace.G))
        return ok, f"status {rec.status}, |R| {led.max_abs_residual}"

    def parabolic_recursion():
        q = p.with_(lam=0.0, gamma=0.0, t_end=0.02)
        e1 = 0.1 * ctx.eigenfunction(0)
        rec, _ = run_trajectory(e1, 0 * e1, q, op=op, ctx=ctx, with_ledger=False)
        n = np.arange(len(rec.times))
        exact = np.outer((1 + q.dt * ctx.mu1) ** -n, e1)
        err = float(np.max(np.abs(rec.snapshots_u - exact)))
        norms = [float(np.linalg.norm(u)) for u in rec.snapshots_u]
        mono = all(b <= a for a, b in zip(norms, norms[1:]))
        return err < 1e-12 and mono, f"max error {err:.1e}"

    def decay_formulas():
        c = decay_constants(1.0)
        c2 = decay_constants(2.0)
        c0 = decay_constants(1e-9)
        ok = (abs(c.b - 0.5) < 1e-15 and abs(c.omega - 0.2) < 1e-15 and abs(c2.b - 0.2) < 1e-15
              and abs(c2.omega - 1 / 12) < 1e-15 and abs(c0.b - 0.5) < 1e-12 and abs(c0.omega - 0.25) < 1e-9)
        return ok, f"b {c.b}, omega {c.omega}"

    def sandwich_short_traces():
        cfg = decay_constants(p.gamma1, ctx.c1)
        q = p.with_(lam=0.0, t_end=0.5)
        e1 = ctx.eigenfunction(0)
        e1 = e1 / float(fractional_norm(e1, ctx.alpha, ctx))
        u0 = -0.1 * (1 - grid.x**2) ** 2
        rec_a, _ = run_trajectory(u0, 0 * u0, q, op=op, ctx=ctx, with_ledger=False)
        tr_a = evaluate_decay_trace(rec_a, u0, cfg, q, ctx)
        rec_b, _ = run_trajectory(0 * e1, e1, q, op=op, ctx=ctx, with_ledger=False)
        tr_b = evaluate_decay_trace(rec_b, 0 * e1, cfg, q, ctx)
        report.traces.extend([tr_a, tr_b])
        init = abs(tr_b.E[0] - q.gamma**2) < 1e-12 and abs(tr_b.G[0] - q.gamma**2) < 1e-12
        env = verify_decay_inequality(tr_a, cfg).passed
        return tr_a.sandwich_ok and tr_b.sandwich_ok and init and env, f"E(0) {tr_b.E[0]:.6g}"

    def smallness_global():
        cfg = decay_constants(p.gamma1, ctx.c1)
        z = np.zeros(grid.n_interior)
        rep = smallness_conditions(z, z, p.with_(lam=1e-300), cfg, ctx, Surrogates(50.0, 1.0, 1.0))
        return math.isinf(rep.T_hat) and rep.global_condition, f"T_hat {rep.T_hat}"

    def trivial_steady():
        pt = newton_steady(0.0, np.zeros(grid.n_interior), p, classify_point=False)
        return not np.any(pt.U) and pt.iterations == 0, f"iterations {pt.iterations}"

    for name, fn in [("plate identities", plate_identities), ("principal mode", principal_mode),
                     ("admissible set", admissible_set), ("flat potential", flat_potential),
                     ("closed form eps=0", closed_form), ("zero trajectory", zero_trajectory),
                     ("parabolic recursion", parabolic_recursion), ("decay constants", decay_formulas),
                     ("sandwich on short traces", sandwich_short_traces),
                     ("global smallness branch", smallness_global), ("trivial steady state", trivial_steady)]:
        _run(report, name, fn)


def _full(report: VerifyReport):
    def manufactured():
        errs = manufactured_errors()
        o = orders(errs)
        return min(o) >= 1.9, f"errors {errs}, orders {o}"

    def single_mode_wave():
        p = ModelParams(lam=0.0, gamma=0.2, t_end=0.5)
        op = assemble_plate_operator(p.grid, p.beta, p.tau)
        ctx = FractionalNormContext.from_operator(op, p.alpha)
        e1 = 0.1 * ctx.eigenfunction(0)
        errs = []
        for dt in (2e-3, 1e-3, 5e-4):
            q = p.with_(dt=dt)
            rec, _ = run_trajectory(e1, 0 * e1, q, op=op, ctx=ctx, with_ledger=False)
            exact = damped_mode(rec.times, q.gamma, ctx.mu1, 0.1)
            coef = q.grid.h * rec.snapshots_u @ e1 / 0.1
            errs.append(float(np.max(np.abs(coef - exact))))
        o = orders(errs)
        return min(o) >= 1.8, f"errors {errs}, orders {o}"

    def single_mode_decay():
        p = ModelParams(lam=0.0, gamma=0.25, t_end=4.0, dt=5e-4)
        op = assemble_plate_operator(p.grid, p.beta, p.tau)
        ctx = FractionalNormContext.from_operator(op, p.alpha)
        e1 = ctx.eigenfunction(0)
        cfg = decay_constants(p.gamma1, ctx.c1)
        rec, _ = run_trajectory(0 * e1, e1, p, op=op, ctx=ctx, with_ledger=False, snapshot_stride=10)
        tr = evaluate_decay_trace(rec, 0 * e1, cfg, p, ctx)
        report.traces.append(tr)
        rate = fit_decay_rate(tr.t, tr.E, start_fraction=0.0)
        exact = slowest_energy_rate(p.gamma, ctx.mu1)
        ok = abs(rate - exact) <= 0.05 * exact and rate >= cfg.omega and tr.sandwich_ok
        return ok, f"fitted {rate:.4f}, exact {exact:.4f}"

    def homogeneous_decay():
        details, ok = [], True
        for gamma in (1.0, 0.25, 0.0625):
            tr, rep, cfg = homogeneous_decay_run(gamma)
            report.traces.append(tr)
            ok = ok and rep.passed and rep.fitted_rate >= cfg.omega and tr.sandwich_ok
            details.append(f"gamma {gamma}: rate {rep.fitted_rate:.3f}, margin {rep.margin:.2e}")
        return ok, "; ".join(details)

    def forced_envelope():
        p = ModelParams(lam=0.0, gamma=0.5, t_end=3.0)
        op = assemble_plate_operator(p.grid, p.beta, p.tau)
        ctx = FractionalNormContext.from_operator(op, p.alpha)
        u0 = -0.1 * (1 - p.grid.x**2) ** 2
        cfg = decay_constants(p.gamma1, ctx.c1)
        rec, _ = run_trajectory(u0, 0 * u0, p, op=op, ctx=ctx, with_ledger=False, snapshot_stride=5)
        tr = evaluate_decay_trace(rec, u0, cfg, p, ctx)
        report.traces.append(tr)
        rep = verify_decay_inequality(tr, cfg)
        return rep.passed and tr.sandwich_ok, f"margin {rep.margin:.3e}"

    for name, fn in [("manufactured potential convergence", manufactured),
                     ("single-mode wave oracle", single_mode_wave),
                     ("single-mode decay rate", single_mode_decay),
                     ("homogeneous decay sweep", homogeneous_decay),
                     ("forced Gronwall envelope", forced_envelope)]:
        _run(report, name, fn)


def homogeneous_decay_run(gamma: float, gamma1: float = 1.0, t_end: float | None = None, dt: float = 1e-3):
    """f = 0 run with u0 = 0 and a smooth bump velocity; returns (trace, report, config)."""
    t_end = t_end if t_end is not None else max(4.0, 8.0 * gamma)
    p = ModelParams(lam=0.0, gamma=gamma, gamma1=gamma1, t_end=t_end, dt=dt)
    op = assemble_plate_operator(p.grid, p.beta, p.tau)
    ctx = FractionalNormContext.from_operator(op, p.alpha)
    u1 = (1 - p.grid.x**2) ** 2
    cfg = decay_constants(gamma1, ctx.c1)
    rec, _ = run_trajectory(0 * u1, u1, p, op=op, ctx=ctx, with_ledger=False, snapshot_stride=5)
    tr = evaluate_decay_trace(rec, 0 * u1, cfg, p, ctx)
    return tr, verify_decay_inequality(tr, cfg), cfg


def run_verify(level: str = "quick") -> VerifyReport:
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    report = VerifyReport(level)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        _quick(report)
        if level == "full":
            _full(report)
    return report
