"""Experiment drivers behind the CLI subcommands.

Every ``cmd_*`` function takes a RunConfig and an output directory, writes
its files and returns a JSON-serialisable summary dict.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_profile, fmt
from .core import FractionalNormContext, ModelParams, check_S_alpha, fractional_norm
from .decay import (compute_surrogates, decay_constants, evaluate_decay_trace, random_admissible_samples,
                    smallness_conditions, verify_decay_inequality)
from .dynamics import COMPLETED, EnergyLedger, TrajectoryRecord, detect_touchdown, run_trajectory
from .errors import MemsError
from .plate import assemble_plate_operator
from .potential import PotentialSolver, h2_norm, lipschitz_probe, solve_potential
from .stationary import continue_branch, pull_in_bisection

log = logging.getLogger(__name__)

SCHEMA = {
    "trajectory.csv": list(TrajectoryRecord.columns),
    "ledger.csv": list(EnergyLedger.columns),
    "branch.csv": ["s", "lambda", "min_gap", "sup_norm", "stability", "residual"],
    "limit_study.csv": ["gamma", "err", "potential_err", "velocity_err", "lipschitz_ratio_max", "order"],
    "version": 1,
}


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path: Path) -> tuple[list, list]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _setup(params: ModelParams):
    op = assemble_plate_operator(params.grid, params.beta, params.tau)
    ctx = FractionalNormContext.from_operator(op, params.alpha)
    return op, ctx


def initial_data(cfg: RunConfig, ctx, base_dir=None):
    p = cfg.params
    return (build_profile(cfg.get("initial_condition"), p, ctx, base_dir),
            build_profile(cfg.get("initial_velocity"), p, ctx, base_dir))


# simulate -------------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out: Path, stride: int | None = None, base_dir=None) -> dict:
    p = cfg.params
    out.mkdir(parents=True, exist_ok=True)
    op, ctx = _setup(p)
    u0, u1 = initial_data(cfg, ctx, base_dir)
    stride = stride or cfg.get("stride")
    ledger_stride = cfg.get("ledger_stride") * stride
    rec, ledger = run_trajectory(u0, u1, p, op=op, ctx=ctx, snapshot_stride=stride,
                                 ledger_stride=ledger_stride)
    write_csv(out / "trajectory.csv", rec.columns, rec.rows(stride))
    write_csv(out / "ledger.csv", ledger.columns, ledger.rows())
    td = detect_touchdown(rec, p.grid)
    summary = {
        "command": "simulate",
        "status": rec.status,
        "message": rec.message,
        "t_final": rec.t[-1],
        "T_c": td.t_c if td else None,
        "touchdown_location": td.location if td else None,
        "max_abs_residual": ledger.max_abs_residual,
        "dt_heuristic_violation": rec.dt_heuristic_violation,
        "schema": {k: SCHEMA[k] for k in ("trajectory.csv", "ledger.csv", "version")},
        "version": __version__,
        "params": asdict(p),
    }
    write_json(out / "summary.json", summary)
    return summary


# limit study ----------------------------------------------------------------

def _limit_member(args):
    p, gamma, u0, u1, pot_stride = args
    op, ctx = _setup(p)
    rec, _ = run_trajectory(u0, u1, p.with_(gamma=gamma), op=op, ctx=ctx, with_ledger=False)
    phis = []
    if rec.status == COMPLETED:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            phis = [solve_potential(u, p).phi for u in rec.snapshots_u[::pot_stride]]
    return gamma, rec.status, rec.message, rec.times, rec.snapshots_u, rec.snapshots_v, np.array(phis)


def sample_lipschitz_constant(params: ModelParams, ctx, pairs: int = 20, seed: int = 0,
                              delta: float = 1e-4) -> float:
    """Empirical C0(kappa): max phi-quotient over sampled pairs in S_alpha(kappa).

    Half the base points are paired with another random sample (far pairs);
    every base point is also perturbed along each eigendirection (near
    pairs), since the quotient peaks for the most oscillatory modes.
    """
    rng = np.random.default_rng(seed)
    base = random_admissible_samples(ctx, params.kappa, pairs, rng)
    n_dirs = ctx.grid.n_interior
    c0 = 0.0
    for i, u1 in enumerate(base):
        candidates = [base[(i + 1) % len(base)]] if i % 2 == 0 else []
        if i < 3:
            candidates += [u1 + delta * ctx.eigenfunction(k) for k in range(n_dirs)]
        for u2 in candidates:
            if not check_S_alpha(u2, params.kappa, ctx).member:
                continue
            rep = lipschitz_probe(u1, u2, params, ctx)
            if not rep.identical:
                c0 = max(c0, rep.phi_ratio)
    return c0


@dataclass
class LimitStudyReport:
    gammas: list
    err: list
    potential_err: list
    velocity_err: list | None
    lipschitz_ratio_max: list
    lipschitz_C0: float
    orders: list
    xi: float
    horizon: float
    summaries: list = field(default_factory=list)

    def rows(self):
        out = []
        for i, g in enumerate(self.gammas):
            out.append((g, self.err[i], self.potential_err[i],
                        self.velocity_err[i] if self.velocity_err else math.nan,
                        self.lipschitz_ratio_max[i], self.orders[i]))
        return out


def limit_study(params: ModelParams, gamma_list, u0, u1, *, jobs: int = 1, potential_stride: int = 10,
                lipschitz_pairs: int = 20, seed: int = 0) -> LimitStudyReport:
    """Compare u_gamma with the gamma = 0 solution on a shared grid, step and data."""
    gamma_list = [float(g) for g in gamma_list]
    if any(g <= 0 for g in gamma_list) or any(a <= b for a, b in zip(gamma_list, gamma_list[1:])):
        raise MemsError("gamma_list must be positive and strictly descending")
    op, ctx = _setup(params)
    tasks = [(params, g, u0, u1, potential_stride) for g in [0.0] + gamma_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_limit_member, tasks))
    else:
        results = [_limit_member(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    for gamma, status, msg, *_ in results:
        if status != COMPLETED:
            raise MemsError(f"limit study aborted: gamma={gamma} terminated early ({status}: {msg})")
    ref = results[0]
    _, _, _, t_ref, U_ref, V_ref, phi_ref = ref
    members = {r[0]: r for r in results[1:]}
    xi = 0.5 * ctx.alpha
    zero_data = not np.any(u0) and not np.any(u1)
    dt_snap = np.diff(t_ref)
    c0 = sample_lipschitz_constant(params, ctx, lipschitz_pairs, seed)
    err, perr, verr, lip, summaries = [], [], [], [], []
    for g in gamma_list:
        _, status, _, t, U, V, phi = members[g]
        du = U - U_ref
        err.append(float(np.max(fractional_norm(du, 1.0, ctx))))
        dphi = np.array([h2_norm(a - b, params.grid2d) for a, b in zip(phi, phi_ref)])
        perr.append(float(dphi.max()))
        du_a = np.asarray(fractional_norm(du[::potential_stride], 1.0 + ctx.alpha, ctx))
        ok = du_a > 0
        lip.append(float(np.max(dphi[ok] / du_a[ok])) if ok.any() else 0.0)
        if zero_data:
            dv = np.asarray(fractional_norm(V[1:] - V_ref[1:], ctx.alpha, ctx))
            verr.append(float(math.sqrt(np.sum(dt_snap * dv**2))))
        summaries.append({"gamma": g, "status": status, "t_end": float(t[-1])})
    orders = [math.nan] + [
        math.log2(err[i - 1] / err[i]) if err[i] > 0 and err[i - 1] > 0 else math.nan
        for i in range(1, len(err))
    ]
    return LimitStudyReport(gamma_list, err, perr, verr if zero_data else None, lip, c0, orders, xi,
                            float(t_ref[-1]), summaries)


def cmd_limit_study(cfg: RunConfig, out: Path, jobs: int = 1, base_dir=None) -> dict:
    p = cfg.params
    gl = cfg.get("gamma_list")
    if not gl:
        raise MemsError("limit-study needs gamma_list")
    out.mkdir(parents=True, exist_ok=True)
    _, ctx = _setup(p)
    u0, u1 = initial_data(cfg, ctx, base_dir)
    rep = limit_study(p, gl, u0, u1, jobs=jobs, potential_stride=cfg.get("potential_stride"),
                      lipschitz_pairs=cfg.get("lipschitz_pairs"), seed=cfg.get("seed"))
    write_csv(out / "limit_study.csv", SCHEMA["limit_study.csv"], rep.rows())
    summary = {"command": "limit-study", **asdict(rep),
               "lipschitz_check": all(r <= 1.5 * rep.lipschitz_C0 for r in rep.lipschitz_ratio_max),
               "schema": {"limit_study.csv": SCHEMA["limit_study.csv"], "version": SCHEMA["version"]},
               "params": asdict(p)}
    write_json(out / "limit_study.json", summary)
    return summary


# continuation / pull-in -----------------------------------------------------

def cmd_continuation(cfg: RunConfig, out: Path, base_dir=None) -> dict:
    """Branch of steady states, fold estimate, optional eps = 0 branch and pull-in bisection."""
    p = cfg.params
    out.mkdir(parents=True, exist_ok=True)
    kw = dict(lam_max=cfg.get("lambda_max"), max_points=cfg.get("max_points"), gap_stop=cfg.get("gap_stop"))
    br = continue_branch(p, cfg.get("lambda_start"), cfg.get("lambda_step"), cfg.get("arclength"), **kw)
    write_csv(out / "branch.csv", br.columns, br.rows())
    summary = {
        "command": "continuation",
        "fold_lambda": br.fold_lambda,
        "fold_detected": br.fold_detected,
        "fold_s": br.fold_s,
        "fold_min_gap": br.fold_min_gap,
        "termination": br.termination,
        "points": len(br.points),
        "schema": {"branch.csv": SCHEMA["branch.csv"], "version": SCHEMA["version"]},
        "params": asdict(p),
    }
    if cfg.get("eps_compare"):
        br0 = continue_branch(p.with_(eps=0.0), cfg.get("lambda_start"), cfg.get("lambda_step"),
                              cfg.get("arclength"), closed_form=True, **kw)
        write_csv(out / "branch_eps0.csv", br0.columns, br0.rows())
        summary["eps0_fold_lambda"] = br0.fold_lambda
    if cfg.get("pull_in"):
        summary["pull_in"] = _pull_in(cfg, base_dir)
    write_json(out / "fold.json", summary)
    return summary


def _pull_in(cfg: RunConfig, base_dir=None) -> dict:
    p = cfg.params
    _, ctx = _setup(p)
    u0, u1 = initial_data(cfg, ctx, base_dir)
    lo, hi = cfg.get("lambda_lo", 0.0), cfg.get("lambda_hi")
    if hi is None:
        raise MemsError("pull-in needs lambda_hi")
    res = pull_in_bisection(p, lo, hi, cfg.get("horizon"), tol=cfg.get("bisection_tol"), u0=u0, u1=u1)
    return asdict(res)


def cmd_pull_in(cfg: RunConfig, out: Path, base_dir=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    summary = {"command": "pull-in", **_pull_in(cfg, base_dir), "params": asdict(cfg.params)}
    write_json(out / "pull_in.json", summary)
    return summary


# decay ----------------------------------------------------------------------

def cmd_decay(cfg: RunConfig, out: Path, base_dir=None) -> dict:
    p = cfg.params
    out.mkdir(parents=True, exist_ok=True)
    op, ctx = _setup(p)
    u0, u1 = initial_data(cfg, ctx, base_dir)
    config = decay_constants(p.gamma1, ctx.c1)
    potential = PotentialSolver(p)
    rec, _ = run_trajectory(u0, u1, p, op=op, ctx=ctx, potential=potential, with_ledger=False,
                            snapshot_stride=cfg.get("stride"))
    trace = evaluate_decay_trace(rec, u0, config, p, ctx, potential)
    rep = verify_decay_inequality(trace, config)
    summary = {
        "command": "decay",
        "gamma": p.gamma,
        "gamma1": p.gamma1,
        "b": config.b,
        "omega": config.omega,
        "c1": config.c1,
        "trajectory_status": rec.status,
        "passed": bool(rep.passed and trace.sandwich_ok and rec.status == COMPLETED),
        "gronwall_margin": rep.margin,
        "gronwall_tolerance": rep.tolerance,
        "fitted_rate": rep.fitted_rate,
        "sandwich_ok": trace.sandwich_ok,
        "sandwich_violations": trace.violations[:20],
        "params": asdict(p),
    }
    homogeneous = p.lam == 0 and not np.any(u0)
    if homogeneous:
        summary["rate_at_least_omega"] = bool(rep.fitted_rate >= config.omega)
        summary["passed"] = summary["passed"] and summary["rate_at_least_omega"]
    if p.lam > 0:
        sur = compute_surrogates(p, ctx, config, cfg.get("n_samples"), cfg.get("seed"), potential)
        small = smallness_conditions(u0, u1, p, config, ctx, sur)
        summary["smallness"] = asdict(small)
        summary["surrogates"] = {"M": sur.M, "c3": sur.c3, "c4": sur.c4, "provenance": sur.provenance,
                                 "note": "T_hat is a surrogate estimate built from these constants"}
    write_json(out / "decay.json", summary)
    return summary
