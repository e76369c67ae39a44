"""Independent reference computations used only by the test-suite.

None of these share code with the package's solver path.
"""
import itertools

import numpy as np


def active_set_enumeration(Q, c, G, h, Aeq=None, beq=None, tol=1e-9):
    """Exact minimum of ``0.5 x'Qx + c'x`` s.t. ``G x <= h`` (and ``Aeq x = beq``).

    Every subset of inequality rows is treated as active; the resulting
    equality-constrained KKT system is solved and the candidate kept if it is
    feasible for the remaining rows. For a convex QP the optimum is the best
    feasible candidate. Exponential in the number of rows; keep it small.
    """
    Q = np.asarray(Q, float)
    c = np.asarray(c, float)
    G = np.asarray(G, float).reshape(-1, len(c))
    h = np.asarray(h, float)
    n = len(c)
    Aeq = np.zeros((0, n)) if Aeq is None else np.asarray(Aeq, float)
    beq = np.zeros(0) if beq is None else np.asarray(beq, float)
    best_x, best_f = None, np.inf
    m = G.shape[0]
    for r in range(m + 1):
        for act in itertools.combinations(range(m), r):
            Ae = np.vstack([Aeq, G[list(act)]])
            be = np.concatenate([beq, h[list(act)]])
            k = Ae.shape[0]
            K = np.block([[Q, Ae.T], [Ae, np.zeros((k, k))]])
            rhs = np.concatenate([-c, be])
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            if np.linalg.norm(K @ sol - rhs) > 1e-7 * (1 + np.linalg.norm(rhs)):
                continue
            x = sol[:n]
            if np.any(G @ x > h + tol) or np.any(np.abs(Aeq @ x - beq) > tol):
                continue
            f = 0.5 * x @ Q @ x + c @ x
            if f < best_f:
                best_f, best_x = f, x
    return best_x, best_f


def dense_qp_oracle(Q, c, G, h):
    """Strictly convex QP via cvxopt's interior-point method (``G x <= h``)."""
    from cvxopt import matrix, solvers

    solvers.options["show_progress"] = False
    solvers.options["abstol"] = 1e-11
    solvers.options["reltol"] = 1e-11
    solvers.options["feastol"] = 1e-10
    n = len(c)
    try:
        sol = solvers.qp(matrix(np.asarray(Q, float)), matrix(np.asarray(c, float)),
                         matrix(np.asarray(G, float).reshape(-1, n)), matrix(np.asarray(h, float)))
    except (ValueError, ArithmeticError):
        return None, np.inf
    if sol["status"] != "optimal":
        return None, np.inf
    x = np.array(sol["x"]).ravel()
    if np.any(np.asarray(G) @ x > np.asarray(h) + 1e-6):
        return None, np.inf
    return x, float(0.5 * x @ Q @ x + c @ x)


def enumerate_miqp(Q, c, G, h, binary, qp=dense_qp_oracle):
    """Brute force over every 0/1 pattern of the binary variables.

    For each pattern the binaries are substituted out and the remaining
    continuous QP is solved by ``qp``. Returns ``(best_pattern, best_obj)``.
    """
    Q = np.asarray(Q, float)
    c = np.asarray(c, float)
    G = np.asarray(G, float)
    h = np.asarray(h, float)
    n = len(c)
    binary = list(binary)
    cont = [i for i in range(n) if i not in binary]
    best = (None, np.inf)
    for pattern in itertools.product((0.0, 1.0), repeat=len(binary)):
        zb = np.array(pattern)
        Qcc = Q[np.ix_(cont, cont)]
        cc = c[cont] + Q[np.ix_(cont, binary)] @ zb
        const = 0.5 * zb @ Q[np.ix_(binary, binary)] @ zb + c[binary] @ zb
        Gc = G[:, cont]
        hc = h - G[:, binary] @ zb
        keep = np.any(np.abs(Gc) > 0, axis=1)
        if np.any(hc[~keep] < -1e-9):
            continue
        _, f = qp(Qcc, cc, Gc[keep], hc[keep])
        if f + const < best[1]:
            best = (pattern, f + const)
    return best
