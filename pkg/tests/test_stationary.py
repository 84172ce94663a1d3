import math

import numpy as np
import pytest

from mems_plate.core import ModelParams
from mems_plate.dynamics import run_trajectory
from mems_plate.errors import ConvergenceError, ParameterError
from mems_plate.stationary import (STABLE, UNSTABLE, SteadyProblem, classify, continue_branch, newton_steady,
                                   pull_in_bisection)

# pinned from the first verified run (eps = 0.3, default 31 x 15 grid); independent of start and step
FOLD_REGRESSION = 4.1955016614


@pytest.fixture(scope="module")
def branch():
    return continue_branch(ModelParams(eps=0.3), 0.0, 0.5, True, max_points=150)


def test_zero_voltage_trivial(params):
    pt = newton_steady(0.0, np.zeros(params.grid.n_interior), params)
    assert pt.iterations == 0 and not np.any(pt.U)
    assert pt.stability == STABLE


def test_small_voltage_deflects_downwards(params):
    q = params.with_(eps=0.3)
    pt = newton_steady(0.5, np.zeros(q.grid.n_interior), q)
    assert pt.residual <= q.tol_newton
    assert np.all(pt.U < 0) and np.all(pt.U > -1)
    assert pt.stability == STABLE
    # symmetric start, symmetric answer
    assert np.max(np.abs(pt.U - pt.U[::-1])) <= 1e-9


def test_residual_reverified(params):
    q = params.with_(eps=0.3)
    prob = SteadyProblem(q)
    pt = newton_steady(1.0, np.zeros(q.grid.n_interior), q, problem=prob)
    assert prob.norm(prob.residual(pt.U, pt.lam)) <= q.tol_newton


def test_newton_iteration_cap(params):
    with pytest.raises(ConvergenceError):
        newton_steady(2.0, np.zeros(params.grid.n_interior), params.with_(eps=0.3), max_iters=1)


def test_classify_sign():
    assert classify(np.diag([1.0, 2.0]))[0] == STABLE
    assert classify(np.diag([-1.0, 2.0]))[0] == UNSTABLE


def test_branch_properties(branch, params):
    lams = branch.lambdas
    assert lams[0] == 0.0 and not np.any(branch.points[0].U)
    for p in branch.points:
        assert p.residual <= params.tol_newton
        assert p.min_gap > params.kappa_stop
    i = int(np.argmax(lams))
    assert 0 < i < len(lams) - 1, "continuation must turn around"
    # stable segment: gap shrinks as the load grows
    assert np.all(np.diff(branch.min_gaps[: i + 1]) < 0)
    assert branch.fold_detected and branch.fold_lambda > 0
    assert branch.fold_lambda == pytest.approx(FOLD_REGRESSION, abs=1e-7)
    assert branch.fold_lambda >= lams.max()
    s = np.array([p.s for p in branch.points])
    assert np.all(np.diff(s) > 0)


def test_stability_flips_across_fold(branch):
    i = int(np.argmax(branch.lambdas))
    before, after = branch.points[i - 2], branch.points[min(i + 3, len(branch.points) - 1)]
    assert before.stability == STABLE and before.min_eig > 0
    assert after.stability == UNSTABLE and after.min_eig < 0


def test_natural_continuation_stalls_at_fold():
    br = continue_branch(ModelParams(eps=0.3), 0.0, 1.0, False, max_points=200)
    assert br.termination == "step underflow"
    assert br.lambdas.max() <= FOLD_REGRESSION + 1e-3
    assert br.lambdas.max() > FOLD_REGRESSION - 1e-2


def test_newton_matches_parabolic_limit():
    q = ModelParams(lam=0.2, eps=0.3, gamma=0.0, t_end=2.0)
    z = np.zeros(q.grid.n_interior)
    rec, _ = run_trajectory(z, z, q, with_ledger=False)
    pt = newton_steady(0.2, z, q)
    assert np.max(np.abs(pt.U - rec.final_u)) <= 1e-6


def test_pull_in_bisection(params):
    q = params.with_(eps=0.3, dt=2e-3)
    res = pull_in_bisection(q, 0.0, 40.0, 0.5, tol=1.0)
    assert res.lo_summary["status"] == "completed"
    assert res.hi_summary["status"] != "completed"
    assert all(b == a / 2 for a, b in zip(res.widths, res.widths[1:]))
    assert res.lam_hi - res.lam_lo <= 1.0
    assert 0 < res.lam_lo < res.lam_hi < math.inf


def test_pull_in_names_failing_endpoint(params):
    q = params.with_(eps=0.3, dt=2e-3)
    with pytest.raises(ParameterError, match="lam_hi"):
        pull_in_bisection(q, 0.0, 0.5, 0.2)
    with pytest.raises(ParameterError, match="lam_lo"):
        pull_in_bisection(q, 40.0, 50.0, 0.5)


def test_eps_zero_branch_close_to_small_eps():
    lams = [0.5, 1.0, 1.5, 2.0, 2.5]
    full = continue_branch(ModelParams(eps=1e-3), 0.0, 0.5, False, lam_max=2.5)
    flat = continue_branch(ModelParams(eps=0.0), 0.0, 0.5, False, lam_max=2.5, closed_form=True)
    a = {round(p.lam, 12): p.min_gap for p in full.points}
    b = {round(p.lam, 12): p.min_gap for p in flat.points}
    for lam in lams:
        assert abs(a[lam] - b[lam]) <= 1e-3
