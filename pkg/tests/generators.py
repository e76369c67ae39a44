"""Seeded random instances for solver tests."""
import numpy as np
import scipy.sparse as sp

from energysched.problem import MIQPProblem


def random_qp(seed, n=20, m=10):
    """Strictly convex QP ``min 0.5 x'Qx + c'x`` s.t. ``G x <= h`` with a known interior point."""
    rng = np.random.default_rng(seed)
    R = rng.normal(size=(n, n))
    Q = R @ R.T / n + 0.1 * np.eye(n)
    c = rng.normal(size=n) * 3
    G = rng.normal(size=(m, n))
    x_feas = rng.normal(size=n) * 0.5
    h = G @ x_feas + rng.uniform(0.1, 1.0, size=m)
    return Q, c, G, h


def random_miqp(seed):
    """Convex MIQP with 4-20 continuous and 1-8 binary variables.

    Every continuous variable is switched by one binary through big-M rows
    (``|v_i| <= 4 b``); a few random rows are kept feasible at a reference
    point with all binaries on. Returns the problem and its data in
    ``G z <= h`` form (bounds included) for the enumeration oracle.
    """
    rng = np.random.default_rng(seed)
    nc = int(rng.integers(4, 21))
    nb = int(rng.integers(1, 9))
    n = nc + nb
    R = rng.normal(size=(n, n))
    Q = R @ R.T / n
    c = rng.normal(size=n) * 2
    c[nc:] = rng.uniform(0, 3, size=nb)
    rows, hi = [], []
    big_m = 4.0
    for i in range(nc):
        b = nc + i % nb
        for sign in (1.0, -1.0):
            r = np.zeros(n)
            r[i] = sign
            r[b] = -big_m
            rows.append(r)
            hi.append(0.0)
    ref = np.concatenate([rng.uniform(-2, 2, nc), np.ones(nb)])
    for _ in range(int(rng.integers(1, 5))):
        r = rng.normal(size=n)
        rows.append(r)
        hi.append(r @ ref + rng.uniform(0, 1))
    A = np.array(rows)
    hi = np.array(hi)
    lb = np.concatenate([np.full(nc, -5.0), np.zeros(nb)])
    ub = np.concatenate([np.full(nc, 5.0), np.ones(nb)])
    problem = MIQPProblem(Q=sp.csc_matrix(Q), c=c, A=sp.csr_matrix(A),
                          row_lower=np.full(len(hi), -np.inf), row_upper=hi,
                          var_lower=lb, var_upper=ub, binary=np.arange(nc, n))
    G = np.vstack([A, np.eye(n), -np.eye(n)])
    h = np.concatenate([hi, ub, -lb])
    return problem, Q, c, G, h
