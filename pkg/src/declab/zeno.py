"""Overdamped (Zeno / watched-pot) regime of the damped precession equation.

With a constant field ``V`` perpendicular to z and strong damping ``D``,
the population difference decays as ``exp(-V^2 t / D)``: stronger damping
means *slower* relaxation. This module compares that law with the exact
slow eigenvalue of the linear system and with fits to simulated
trajectories.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .bloch import TimeSeries, evolve
from .errors import BranchError, DomainError

__all__ = [
    "DecayFit",
    "ZenoRow",
    "zeno_prediction",
    "exact_slow_rate",
    "fit_decay_rate",
    "tunneling_suppression",
    "simulate_decay",
    "zeno_scan",
]


class DecayFit(NamedTuple):
    rate: float
    residual: float  # RMS residual of ln p_z about the fitted line


class ZenoRow(NamedTuple):
    d: float
    v: float
    fitted_rate: float
    predicted_rate: float
    exact_rate: float
    residual: float
    rel_error: float
    flag: str


def zeno_prediction(v_mag: float, d: float) -> float:
    """Strong-damping rate ``V^2 / D``."""
    d = float(d)
    if d == 0:
        raise ZeroDivisionError("Zeno rate undefined for D = 0")
    return float(v_mag) ** 2 / d


def exact_slow_rate(v_mag: float, d: float) -> float:
    """Exact slowest decay rate ``[D - sqrt(D^2 - 4V^2)] / 2`` for V perpendicular to z.

    Only defined on the overdamped branch ``D > 2|V|`` (or ``V = 0``).
    """
    v = abs(float(v_mag))
    d = float(d)
    if v == 0.0:
        return 0.0
    disc = d * d - 4.0 * v * v
    if d <= 0 or disc <= 0:
        raise BranchError(f"D={d} <= 2|V|={2 * v}: underdamped, no real slow rate")
    # rationalised form avoids cancellation when D >> V
    return 2.0 * v * v / (d + math.sqrt(disc))


def fit_decay_rate(series: TimeSeries, t_min: float) -> DecayFit:
    """Least-squares slope of ``-ln p_z`` over ``t >= t_min``.

    ``series`` may be a scalar p_z series or a Bloch trajectory (the ``pz``
    column is used).
    """
    pz = series.samples if series.samples.ndim == 1 else series.column("pz")
    t = series.times
    mask = t >= t_min - 1e-12 * max(1.0, abs(t_min))
    if mask.sum() < 2:
        raise DomainError(f"fewer than two samples with t >= {t_min}")
    y, t = pz[mask], t[mask]
    if np.any(y <= 0):
        raise DomainError("p_z is not strictly positive on the fit window")
    slope, icpt = np.polyfit(t, np.log(y), 1)
    resid = np.log(y) - (slope * t + icpt)
    return DecayFit(float(-slope), float(np.sqrt(np.mean(resid**2))))


def tunneling_suppression(omega_tunnel: float, e_split: float) -> float:
    """Tunneling probability factor ``(omega_tunnel / E_split)^2``, capped at 1."""
    w, e = abs(float(omega_tunnel)), abs(float(e_split))
    if e <= w:
        return 1.0
    return (w / e) ** 2


def simulate_decay(
    v_mag: float,
    d: float,
    t_min: float | None = None,
    t_end: float | None = None,
    dt: float | None = None,
) -> tuple[TimeSeries, DecayFit]:
    """Evolve ``P = (0,0,1)`` under ``V = (v,0,0)`` and fit the p_z decay.

    Defaults: fit from ``10/D`` (fast mode gone), run one slow e-folding past
    that, step ``0.1 / max(V, D)``.
    """
    v_mag, d = float(v_mag), float(d)
    if t_min is None:
        t_min = 10.0 / d
    if dt is None:
        dt = 0.1 / max(v_mag, d)
    if t_end is None:
        t_end = t_min + 1.0 / zeno_prediction(v_mag, d)
    n = int(math.ceil(t_end / dt))
    series = evolve((0.0, 0.0, 1.0), (v_mag, 0.0, 0.0), d, n * dt, dt)
    return series, fit_decay_rate(series, t_min)


def zeno_scan(d_values: Sequence[float], v_mag: float) -> list[ZenoRow]:
    """Fitted vs predicted vs exact rates for each damping value.

    Underdamped entries (``D <= 2|V|``) are flagged ``"oscillatory"``
    and carry NaN rates instead of aborting the scan.
    """
    if len(d_values) == 0:
        raise ValueError("empty list of D values")
    rows = []
    for d in d_values:
        d = float(d)
        if d <= 2.0 * abs(v_mag):
            nan = float("nan")
            pred = zeno_prediction(v_mag, d) if d > 0 else nan
            rows.append(ZenoRow(d, v_mag, nan, pred, nan, nan, nan, "oscillatory"))
            continue
        _, fit = simulate_decay(v_mag, d)
        pred = zeno_prediction(v_mag, d)
        exact = exact_slow_rate(v_mag, d)
        rows.append(
            ZenoRow(d, v_mag, fit.rate, pred, exact, fit.residual, abs(fit.rate - pred) / pred, "")
        )
    return rows
