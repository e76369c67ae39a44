import numpy as np
import pytest
import scipy.sparse as sp

from energysched.problem import MIQPProblem
from energysched.solver.bnb import (
    ADMM,
    GAP_REACHED,
    INFEASIBLE,
    IPM,
    OPTIMAL,
    relative_gap,
    solve_miqp,
)
from energysched.solver.qp import solve_qp

from .generators import random_miqp
from .oracles import enumerate_miqp


def _knapsack():
    # z = (v, d1, d2): min (v - 2.5)^2  s.t.  v - 2 d1 - d2 <= 0
    return MIQPProblem(Q=sp.diags([2.0, 0.0, 0.0]), c=[-5.0, 0.0, 0.0],
                       A=sp.csr_matrix([[1.0, -2.0, -1.0]]), row_lower=[-np.inf], row_upper=[0.0],
                       var_lower=[0.0, 0, 0], var_upper=[10.0, 1, 1], binary=[1, 2], offset=6.25)


@pytest.mark.parametrize("engine", [IPM, ADMM])
@pytest.mark.parametrize("seed", range(100))
def test_random_miqp_matches_enumeration(seed, engine):
    prob, Q, c, G, h = random_miqp(seed)
    _, f_ref = enumerate_miqp(Q, c, G, h, prob.binary)
    sol = solve_miqp(prob, mip_gap=1e-9, time_limit=60, node_solver=engine)
    assert np.isfinite(f_ref)
    assert sol.status in (OPTIMAL, GAP_REACHED)
    assert sol.objective == pytest.approx(f_ref, rel=1e-5, abs=1e-7)
    zb = sol.values[prob.binary]
    assert np.all(np.abs(zb - np.round(zb)) <= 1e-6)
    assert prob.max_violation(sol.values) <= 1e-6


def test_knapsack_against_enumeration():
    prob = _knapsack()
    G = np.vstack([prob.A.toarray(), np.eye(3), -np.eye(3)])
    h = np.concatenate([prob.row_upper, prob.var_upper, -prob.var_lower])
    pattern, f_ref = enumerate_miqp(prob.Q.toarray(), prob.c, G, h, prob.binary)
    sol = solve_miqp(prob, mip_gap=1e-9)
    assert sol.objective == pytest.approx(f_ref + prob.offset, abs=1e-7)
    # the target v = 2.5 is reachable once both binaries are on
    assert sol.objective == pytest.approx(0.0, abs=1e-7)
    assert sol.values[0] == pytest.approx(2.5, abs=1e-6)
    assert sol.values[1] == 1.0


def test_all_binaries_fixed_reduces_to_one_qp():
    prob = _knapsack()
    prob.var_lower[1:] = [1.0, 0.0]
    prob.var_upper[1:] = [1.0, 0.0]
    sol = solve_miqp(prob)
    qp = solve_qp(sp.diags([2.0]), [-5.0], lb=[0.0], ub=[2.0])
    assert sol.objective == pytest.approx(qp.objective + 6.25, abs=1e-7)
    assert sol.nodes == 1


def test_infeasible_problem():
    prob = _knapsack()
    prob.var_lower[0] = 4.0
    assert solve_miqp(prob).status == INFEASIBLE


@pytest.mark.parametrize("seed", range(20))
def test_bound_monotonicity_and_gap_validity(seed):
    prob, *_ = random_miqp(seed)
    sol = solve_miqp(prob, mip_gap=1e-9)
    for rec in sol.node_log:
        if rec.parent_relaxation is not None and np.isfinite(rec.relaxation):
            assert rec.relaxation >= rec.parent_relaxation - 1e-8 * max(1.0, abs(rec.relaxation))
    true_gap = relative_gap(sol.objective, sol.best_bound)
    assert sol.rel_gap >= true_gap - 1e-12
    assert sol.rel_gap <= 1e-9 or sol.status != OPTIMAL


@pytest.mark.parametrize("seed", [1, 7, 42])
def test_determinism(seed):
    prob, *_ = random_miqp(seed)
    a = solve_miqp(prob, mip_gap=1e-6)
    b = solve_miqp(prob, mip_gap=1e-6)
    assert abs(a.objective - b.objective) <= 1e-9
    assert a.nodes == b.nodes
    np.testing.assert_array_equal(a.values, b.values)


def test_reference_step_incumbent_feasible(scenario, tariffs):
    from energysched.formulation import HorizonState, build_problem
    net = scenario.network
    prob = build_problem(net, tariffs["tou"], scenario.config,
                         HorizonState.cold_start(net), scenario.day)
    sol = solve_miqp(prob, mip_gap=1e-3)
    assert sol.status in (OPTIMAL, GAP_REACHED)
    assert sol.rel_gap <= 1e-3
    assert prob.max_violation(sol.values, integrality=True) <= 1e-6
    assert np.array_equal(sol.values[prob.binary], np.round(sol.values[prob.binary]))


def test_bad_arguments():
    with pytest.raises(ValueError):
        solve_miqp(_knapsack(), mip_gap=0)
    with pytest.raises(ValueError):
        solve_miqp(_knapsack(), node_solver="simplex")
