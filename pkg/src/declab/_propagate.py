"""Compiled per-trajectory propagation in a truncated eigenbasis.

One step of length dt for trajectory t:

    psi <- P_half psi
    psi <- Q diag(exp(i theta_t lam)) Q^T psi      (noise kick, skipped if kick == 0)
    psi <- P_half psi
    psi <- W psi                                  (basis change to the next step)

Rows are processed independently with explicit loops, so a trajectory's
result never depends on how many others share the batch.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def propagate(psi, half_phase, lam, q, w, z, kick, fixed, record):
    """Advance ``psi`` (n_traj, n) through ``z.shape[1]`` steps in place.

    ``half_phase, lam`` have shape (K, n) and ``q, w`` (K, n, n) with K equal
    to the number of steps, or K == 1 with ``fixed`` set for a time-independent
    basis (``w`` then ignored).
    ``z`` holds standard normals (n_traj, steps). When ``record`` is true the
    return value is the per-step ensemble mean of ``|psi_0|^2 - |psi_1|^2``;
    the running maximum of the mean top-level population is returned too.
    """
    n_traj, n = psi.shape
    steps = z.shape[1]
    out = np.zeros(steps)
    top = np.zeros(steps)
    y = np.empty(n, dtype=np.complex128)
    x = np.empty(n, dtype=np.complex128)
    for t in range(n_traj):
        for i in range(n):
            x[i] = psi[t, i]
        for k in range(steps):
            kk = 0 if fixed else k
            for i in range(n):
                x[i] *= half_phase[kk, i]
            if kick != 0.0:
                theta = kick * z[t, k]
                for j in range(n):
                    acc = 0j
                    for i in range(n):
                        acc += q[kk, i, j] * x[i]
                    y[j] = acc * np.exp(1j * theta * lam[kk, j])
                for i in range(n):
                    acc = 0j
                    for j in range(n):
                        acc += q[kk, i, j] * y[j]
                    x[i] = acc
            for i in range(n):
                x[i] *= half_phase[kk, i]
            if not fixed:
                for i in range(n):
                    acc = 0j
                    for j in range(n):
                        acc += w[kk, i, j] * x[j]
                    y[i] = acc
                for i in range(n):
                    x[i] = y[i]
            if record:
                out[k] += abs(x[0]) ** 2 - abs(x[1]) ** 2
            top[k] += abs(x[n - 1]) ** 2
        for i in range(n):
            psi[t, i] = x[i]
    return out / n_traj, top / n_traj
