import numpy as np
import pytest
import scipy.sparse as sp

from energysched.errors import NonPsdObjective
from energysched.solver.ipm import IPMWorkspace
from energysched.solver.qp import (
    MAX_ITER,
    PRIMAL_INFEASIBLE,
    SOLVED,
    QPSettings,
    kkt_residuals,
    solve_qp,
)

from .generators import random_qp
from .oracles import active_set_enumeration


def test_clamped_scalar():
    # (v - 3)^2 = v^2 - 6v + 9
    r = solve_qp([[2.0]], [-6.0], lb=[0.0], ub=[2.0])
    assert r.status == SOLVED
    assert r.x[0] == pytest.approx(2.0, abs=1e-6)
    assert r.objective + 9.0 == pytest.approx(1.0, abs=1e-6)


def test_symmetric_equality():
    r = solve_qp(2 * np.eye(2), np.zeros(2), A=[[1.0, 1.0]], lower=[1.0], upper=[1.0])
    assert r.status == SOLVED
    np.testing.assert_allclose(r.x, [0.5, 0.5], atol=1e-6)


@pytest.mark.parametrize("seed", range(100))
def test_random_qp_matches_active_set_oracle(seed):
    Q, c, G, h = random_qp(seed)
    _, f_ref = active_set_enumeration(Q, c, G, h)
    r = solve_qp(Q, c, A=G, lower=np.full(len(h), -np.inf), upper=h)
    assert r.status == SOLVED
    assert r.objective == pytest.approx(f_ref, rel=1e-5, abs=1e-8)
    kkt = kkt_residuals(Q, c, G, np.full(len(h), -np.inf), h, r.x, r.y)
    assert max(kkt.values()) <= 1e-6


@pytest.mark.parametrize("seed", range(25))
def test_interior_point_matches_oracle(seed):
    Q, c, G, h = random_qp(seed)
    _, f_ref = active_set_enumeration(Q, c, G, h)
    ws = IPMWorkspace(Q, c, sp.csr_matrix(G), np.full(len(h), -np.inf), h)
    r = ws.solve()
    assert r.status == SOLVED
    assert r.objective == pytest.approx(f_ref, rel=1e-5, abs=1e-8)
    kkt = kkt_residuals(Q, c, G, np.full(len(h), -np.inf), h, r.x, r.y)
    assert max(kkt["stationarity"], kkt["primal"]) <= 1e-6


def test_non_psd_rejected():
    with pytest.raises(NonPsdObjective):
        solve_qp([[1.0, 0.0], [0.0, -1.0]], [0.0, 0.0])
    with pytest.raises(NonPsdObjective):
        solve_qp([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0])


def test_primal_infeasible_detected():
    A = [[1.0, 1.0], [1.0, 1.0]]
    r = solve_qp(np.eye(2), np.zeros(2), A=A, lower=[2.0, -np.inf], upper=[np.inf, 1.0])
    assert r.status == PRIMAL_INFEASIBLE
    ws = IPMWorkspace(np.eye(2), np.zeros(2), sp.csr_matrix(A), [2.0, -np.inf], [np.inf, 1.0])
    assert ws.solve().status == PRIMAL_INFEASIBLE


def test_iteration_limit_is_a_status():
    Q, c, G, h = random_qp(3)
    r = solve_qp(Q, c, A=G, lower=np.full(len(h), -np.inf), upper=h,
                 settings=QPSettings(max_iter=5, polish=False))
    assert r.status == MAX_ITER


def test_interior_point_presolve_fixes_forced_variables():
    # u <= 4 b with b fixed at 0 and u >= 0: u is forced to zero
    A = sp.csr_matrix([[1.0, -4.0], [1.0, 0.0], [0.0, 1.0]])
    ws = IPMWorkspace(np.diag([1.0, 0.0]), [-1.0, 0.0], A, [-np.inf, 0.0, 0.0], [0.0, 5.0, 0.0])
    r = ws.solve()
    assert r.status == SOLVED
    np.testing.assert_allclose(r.x, [0.0, 0.0], atol=1e-12)
    ws.set_bounds([-np.inf, 0.0, 1.0], [0.0, 5.0, 1.0])
    r = ws.solve()
    assert r.status == SOLVED
    assert r.x[0] == pytest.approx(1.0, abs=1e-7)


def test_warm_start_reduces_iterations():
    Q, c, G, h = random_qp(11)
    lo = np.full(len(h), -np.inf)
    cold = solve_qp(Q, c, A=G, lower=lo, upper=h, settings=QPSettings(polish=False))
    warm = solve_qp(Q, c, A=G, lower=lo, upper=h, settings=QPSettings(polish=False),
                    warm_start=(cold.x, cold.y))
    assert warm.iterations <= cold.iterations
    assert warm.objective == pytest.approx(cold.objective, rel=1e-5)
