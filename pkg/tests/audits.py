"""Independent feasibility audit of a closed-loop trace."""
import numpy as np

from energysched.network import coupled_groups, step_dynamics


def audit_trace(trace, network, min_active_rate=1e-3, tol=1e-6):
    """Count violations of every per-hour model constraint; all zero for a sound trace."""
    v = dict(bounds=0, outflow=0, delivery=0, coupling=0, replay=0, energy=0)
    x = np.asarray(trace.initial_x, dtype=float)
    groups = coupled_groups(network)
    for h in range(trace.n_steps):
        u, d = trace.u[h], trace.d[h]
        x_next = step_dynamics(network, x, u, d)
        v["replay"] += int(not np.allclose(x_next, trace.x[h], rtol=0, atol=tol))
        v["bounds"] += int(np.sum(trace.x[h] < network.x_min - tol)
                           + np.sum(trace.x[h] > network.x_max + tol)
                           + np.sum(u < -tol) + np.sum(u > network.u_max + tol))
        v["outflow"] += int(np.sum(x + network.B_o @ u < -tol))
        v["delivery"] += int(np.sum(x + network.E @ d < -tol) + np.sum(d < -tol))
        for g in groups:
            on = u[list(g)] >= min_active_rate - tol
            off = np.abs(u[list(g)]) <= tol
            if not (np.all(on) or np.all(off)):
                v["coupling"] += 1
            machines = {network.processes[j].machine for j in g}
            v["coupling"] += int(len({trace.column("delta", m)[h] for m in machines}) > 1)
        v["energy"] += int(abs(trace.energy[h] - u @ network.energy_intensity) > 1e-12)
        x = trace.x[h]
    return v
