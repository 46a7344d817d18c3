"""Compiled fixed-step RK4 kernel for the damped precession equation.

dP/dt = P x V(t) - D * (Px, Py, 0)

The field is supplied pre-tabulated on the half-step grid t = k*dt/2,
k = 0..2n, or as a single row when it is constant.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _rhs(px, py, pz, vx, vy, vz, d):
    return (
        py * vz - pz * vy - d * px,
        pz * vx - px * vz - d * py,
        px * vy - py * vx,
    )


@njit(cache=True)
def rk4_bloch(p0, field, d, dt, n):
    out = np.empty((n + 1, 3))
    px, py, pz = p0[0], p0[1], p0[2]
    out[0, 0], out[0, 1], out[0, 2] = px, py, pz
    const = field.shape[0] == 1
    h2 = 0.5 * dt
    for k in range(n):
        if const:
            i0 = i1 = i2 = 0
        else:
            i0, i1, i2 = 2 * k, 2 * k + 1, 2 * k + 2
        a1, b1, c1 = _rhs(px, py, pz, field[i0, 0], field[i0, 1], field[i0, 2], d)
        a2, b2, c2 = _rhs(
            px + h2 * a1, py + h2 * b1, pz + h2 * c1,
            field[i1, 0], field[i1, 1], field[i1, 2], d,
        )
        a3, b3, c3 = _rhs(
            px + h2 * a2, py + h2 * b2, pz + h2 * c2,
            field[i1, 0], field[i1, 1], field[i1, 2], d,
        )
        a4, b4, c4 = _rhs(
            px + dt * a3, py + dt * b3, pz + dt * c3,
            field[i2, 0], field[i2, 1], field[i2, 2], d,
        )
        px += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        py += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        pz += dt / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        out[k + 1, 0], out[k + 1, 1], out[k + 1, 2] = px, py, pz
    return out
