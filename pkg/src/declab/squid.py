r"""rf-SQUID double well: spectrum, noisy adiabatic flux sweeps, noise calibration.

The flux ``x`` through the ring (in units of the flux quantum) moves in

.. math:: u(x) = \frac{(x - x_e)^2}{2g} - \frac{\beta}{4\pi^2 g}\cos 2\pi x ,

in energy units of ``hbar / sqrt(LC)``, with kinetic term ``-(g/2) d^2/dx^2``
and ``g = (hbar / Phi0^2) sqrt(L / C)``. Times are in units of ``sqrt(LC)``.
For ``beta > 1`` and ``x_e`` near 1/2 the potential has two wells; states in
the left and right well carry opposite circulating currents.

Sweeps ramp ``x_e`` linearly through the degeneracy point. The state is
propagated in the instantaneous eigenbasis of the first ``n_levels`` levels
of the noise-free ramp Hamiltonian; flux noise enters as the operator
``-(xi(t)/g) (x - x_e)``, which is exactly the change of the Hamiltonian
under ``x_e -> x_e + xi``. The noise is white and held constant over each
integrator step.

Per-trajectory random streams are derived from the master seed with
``numpy.random.SeedSequence(seed).spawn(n_trajectories)``; trajectory ``j``
always uses child ``j``, so results do not depend on how trajectories are
grouped into blocks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.constants as const
from scipy.linalg import eigh
from scipy.sparse import diags
from scipy.sparse.linalg import eigsh
from scipy.optimize import brentq

from ._propagate import propagate
from .errors import CalibrationError, IntegratorError, ResolutionError

__all__ = [
    "SquidParams",
    "Grid",
    "SweepProtocol",
    "NoiseModel",
    "SpectrumSnapshot",
    "SweepResult",
    "potential",
    "stationary_points",
    "barrier_top",
    "eigensystem",
    "adiabatic_sweep",
    "dephasing_rate",
    "calibrate_noise",
    "estimate_d_from_temperature",
    "inversion_curve",
]

FLUX_QUANTUM = const.h / (2.0 * const.e)
NORM_TOL = 1e-8
ENERGY_TOL = 1e-6
TOP_LEVEL_WARN = 0.01


@dataclass(frozen=True)
class SquidParams:
    """Circuit parameters; ``g`` and the time unit are derived."""

    beta: float = 1.19
    inductance_L: float = 400e-12
    capacitance_C: float = 0.1e-12
    n_levels: int = 8

    def __post_init__(self) -> None:
        if not self.beta > 1:
            raise ValueError(f"beta must exceed 1 for a double well, got {self.beta}")
        if not (self.inductance_L > 0 and self.capacitance_C > 0):
            raise ValueError("L and C must be positive")
        if self.n_levels < 2:
            raise ValueError("n_levels must be >= 2")

    @property
    def g(self) -> float:
        """Quantumness ``(hbar / Phi0^2) sqrt(L/C)``."""
        return const.hbar / FLUX_QUANTUM**2 * math.sqrt(self.inductance_L / self.capacitance_C)

    @property
    def time_unit(self) -> float:
        """``sqrt(LC)`` in seconds."""
        return math.sqrt(self.inductance_L * self.capacitance_C)


@dataclass(frozen=True)
class Grid:
    x_min: float = 0.0
    x_max: float = 1.0
    n_points: int = 1024

    def __post_init__(self) -> None:
        if self.n_points < 512:
            raise ValueError("grid needs at least 512 points")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    def refined(self) -> "Grid":
        return replace(self, n_points=2 * self.n_points - 1)


@dataclass(frozen=True)
class SweepProtocol:
    """Linear ramp of the external flux from ``x_start`` to ``x_end`` in ``t_sweep``.

    The default endpoints straddle the degeneracy point by +-1.4e-4 (a bias
    of about six tunnel splittings for the default circuit) and stay well
    inside the bistable range, so that reversal requires tunneling.
    """

    t_sweep: float
    x_start: float = 0.49986
    x_end: float = 0.50014

    def __post_init__(self) -> None:
        if not self.t_sweep > 0:
            raise ValueError("t_sweep must be positive")

    def x_e(self, t):
        return self.x_start + (self.x_end - self.x_start) * np.asarray(t) / self.t_sweep


@dataclass(frozen=True)
class NoiseModel:
    """White Gaussian flux noise added to ``x_e``.

    ``amplitude`` is in flux quanta per sqrt(time unit); the noise is
    band-limited by holding it constant over steps of length ``dt``.
    """

    amplitude: float = 0.0
    seed: int = 0
    dt: float = 1.0
    kind: str = "white"

    def __post_init__(self) -> None:
        if not self.amplitude >= 0:
            raise ValueError("noise amplitude must be >= 0")
        if not self.dt > 0:
            raise ValueError("noise step must be positive")
        if self.kind != "white":
            raise ValueError(f"unsupported noise kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class SpectrumSnapshot:
    """Lowest levels at one external flux; wavefunctions are columns normalised on the grid."""

    x_e: float
    energies: np.ndarray
    x: np.ndarray
    wavefunctions: np.ndarray

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def probability_left_of(self, x_b: float, level: int = 0) -> float:
        psi = self.wavefunctions[:, level]
        return float(np.sum(psi[self.x < x_b] ** 2) * self.dx)


class SweepResult(NamedTuple):
    inversion_probability: float
    uncertainty: float
    n_trajectories: int
    seed: int
    per_trajectory: np.ndarray
    top_level_population: float


def potential(x, x_e: float, params: SquidParams):
    """Double-well energy ``u(x)`` in units of hbar/sqrt(LC)."""
    g = params.g
    x = np.asarray(x, dtype=float)
    return (x - x_e) ** 2 / (2 * g) - params.beta / (4 * math.pi**2 * g) * np.cos(2 * math.pi * x)


def _dpotential(x, x_e, params):
    return (x - x_e) / params.g + params.beta / (2 * math.pi * params.g) * np.sin(2 * math.pi * x)


def stationary_points(x_e: float, params: SquidParams, lo: float = 0.0, hi: float = 1.0):
    """Roots of ``u'(x)`` on ``(lo, hi)`` as ``(x, "min" | "max")`` pairs."""
    xs = np.linspace(lo, hi, 4001)
    du = _dpotential(xs, x_e, params)
    out = []
    for a, b, fa, fb in zip(xs[:-1], xs[1:], du[:-1], du[1:]):
        if fa == 0.0:
            root = a
        elif fa * fb < 0:
            root = brentq(_dpotential, a, b, args=(x_e, params), xtol=1e-14)
        else:
            continue
        curv = 1.0 / params.g + params.beta / params.g * math.cos(2 * math.pi * root)
        out.append((root, "min" if curv > 0 else "max"))
    return out


def barrier_top(x_e: float, params: SquidParams) -> float | None:
    """Position of the barrier maximum between the wells, or None outside the bistable range."""
    maxima = [x for x, kind in stationary_points(x_e, params, 0.25, 0.75) if kind == "max"]
    if not maxima:
        return None
    return min(maxima, key=lambda v: abs(v - 0.5))


def _solve(x_e: float, params: SquidParams, grid: Grid, n: int):
    x, dx, npts = grid.x, grid.dx, grid.n_points
    t = params.g / (2.0 * dx * dx)
    u = potential(x, x_e, params)
    # fourth-order central stencil for -d^2/dx^2, Dirichlet walls
    off1 = np.full(npts - 1, -t * 16.0 / 12.0)
    off2 = np.full(npts - 2, t / 12.0)
    h = diags([off2, off1, u + t * 30.0 / 12.0, off1, off2], [-2, -1, 0, 1, 2], format="csc")
    # shift-invert below the potential minimum returns the lowest levels;
    # the fixed start vector keeps the solve deterministic
    w, v = eigsh(h, k=n, sigma=float(u.min()) - 1.0, which="LM", v0=np.ones(npts), tol=0)
    order = np.argsort(w)
    w, v = w[order], v[:, order] / math.sqrt(dx)
    # sign convention: first lobe (leftmost significant value) positive
    for k in range(n):
        idx = np.argmax(np.abs(v[:, k]) > 1e-3 * np.max(np.abs(v[:, k])))
        if v[idx, k] < 0:
            v[:, k] = -v[:, k]
    return w, v


def eigensystem(
    x_e: float,
    params: SquidParams,
    grid: Grid | None = None,
    n: int | None = None,
    verify: bool = True,
) -> SpectrumSnapshot:
    """Lowest ``n`` (default ``params.n_levels``) eigenpairs by finite differences.

    With ``verify`` the grid is refined once and :class:`ResolutionError` is
    raised if any level moves by more than 1e-6 relative.
    """
    grid = grid or Grid()
    n = n or params.n_levels
    w, v = _solve(x_e, params, grid, n)
    if verify:
        w2, _ = _solve(x_e, params, grid.refined(), n)
        rel = np.max(np.abs(w2 - w) / np.maximum(np.abs(w2), 1.0))
        if rel > ENERGY_TOL:
            raise ResolutionError(f"levels change by {rel:.2g} (relative) under grid refinement")
    return SpectrumSnapshot(float(x_e), w, grid.x, v)


class _ReducedModel:
    """Galerkin model in a fixed reference eigenbasis at ``x_ref``.

    ``h(x_e) = diag(E_ref) - ((x_e - x_ref)/g) X + const`` exactly within the
    span of the reference states.
    """

    def __init__(self, params: SquidParams, grid: Grid, x_ref: float, n_basis: int):
        snap = eigensystem(x_ref, params, grid, n_basis, verify=False)
        self.params = params
        self.grid = grid
        self.x_ref = x_ref
        self.e_ref = snap.energies
        self.phi = snap.wavefunctions
        self.dx = grid.dx
        self.xmat = self.phi.T @ ((grid.x - x_ref)[:, None] * self.phi) * self.dx
        self.xmat = 0.5 * (self.xmat + self.xmat.T)

    def levels(self, x_e: float, n: int):
        h = np.diag(self.e_ref) - (x_e - self.x_ref) / self.params.g * self.xmat
        w, c = eigh(h, subset_by_index=(0, n - 1), driver="evr")
        return w, c

    def side_projector(self, x_b: float, right: bool) -> np.ndarray:
        mask = self.grid.x > x_b if right else self.grid.x < x_b
        p = self.phi[mask]
        return p.T @ p * self.dx


def _reference_model(params, grid, x_lo, x_hi, n_basis):
    """Reference basis at the sweep midpoint, enlarged until both endpoints are resolved."""
    x_ref = 0.5 * (x_lo + x_hi)
    n = params.n_levels
    m = n_basis or n + 16
    while True:
        model = _ReducedModel(params, grid, x_ref, m)
        ok = True
        for xe in (x_lo, x_hi):
            w, _ = model.levels(xe, n)
            ref = _solve(xe, params, grid, n)[0] - (xe - x_ref) ** 2 / (2 * params.g)
            if np.max(np.abs(w - ref)) > ENERGY_TOL:
                ok = False
        if ok:
            return model
        if m >= 400:
            raise ResolutionError("reference basis cannot resolve the sweep endpoints")
        m *= 2


def _align(c_new: np.ndarray, c_old: np.ndarray) -> np.ndarray:
    s = np.sign(np.einsum("ij,ij->j", c_new, c_old))
    s[s == 0] = 1.0
    return c_new * s


def _polar(o: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(o)
    return u @ vt


class _NoiseStreams:
    """Per-trajectory Gaussian streams, drawn in fixed chunks of ``CHUNK`` steps."""

    CHUNK = 2048

    def __init__(self, seed: int, n_traj: int):
        self.gens = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_traj)]

    def chunk(self) -> np.ndarray:
        return np.stack([g.standard_normal(self.CHUNK) for g in self.gens])


def _step_size(t_total: float, noise: NoiseModel, min_steps: int) -> tuple[int, float]:
    n = max(min_steps, int(math.ceil(t_total / noise.dt)))
    return n, t_total / n


def adiabatic_sweep(
    params: SquidParams,
    protocol: SweepProtocol,
    noise: NoiseModel | None = None,
    n_trajectories: int = 1,
    seed: int | None = None,
    grid: Grid | None = None,
    n_basis: int | None = None,
    min_steps: int = 100,
) -> SweepResult:
    """Probability of finding the flux reversed after a (noisy) linear sweep.

    Each trajectory starts in the instantaneous ground state at ``x_start``
    and ends with a readout of the probability beyond the barrier top of the
    final (noise-free) potential, on the side opposite the starting well.
    Returns the trajectory mean and its standard error.
    """
    if n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    noise = noise or NoiseModel()
    seed = noise.seed if seed is None else seed
    grid = grid or Grid()
    n = params.n_levels
    g = params.g
    model = _reference_model(params, grid, protocol.x_start, protocol.x_end, n_basis)

    n_steps, dt = _step_size(protocol.t_sweep, noise, min_steps)
    streams = _NoiseStreams(seed, n_trajectories) if noise.amplitude > 0 else None
    kick = noise.amplitude * math.sqrt(dt) / g

    e_k, c_k = model.levels(protocol.x_start, n)
    x_b0 = barrier_top(protocol.x_start, params)
    x_b0 = 0.5 if x_b0 is None else x_b0
    a0 = c_k[:, 0]
    left_mass = float(a0 @ model.side_projector(x_b0, right=False) @ a0)
    start_left = left_mass >= 0.5

    psi = np.zeros((n_trajectories, n), dtype=complex)
    psi[:, 0] = 1.0
    top_pop = 0.0
    chunk = _NoiseStreams.CHUNK
    half = np.empty((chunk, n), dtype=complex)
    lam = np.zeros((chunk, n))
    q = np.zeros((chunk, n, n))
    w = np.empty((chunk, n, n))
    z = np.zeros((n_trajectories, chunk))
    for start in range(0, n_steps, chunk):
        m = min(chunk, n_steps - start)
        for j in range(m):
            k = start + j
            half[j] = np.exp(-0.5j * dt * e_k)
            if streams is not None:
                xk = c_k.T @ model.xmat @ c_k
                lam[j], q[j] = np.linalg.eigh(0.5 * (xk + xk.T))
            e_next, c_next = model.levels(protocol.x_e((k + 1) * dt), n)
            c_next = _align(c_next, c_k)
            w[j] = _polar(c_next.T @ c_k)
            e_k, c_k = e_next, c_next
        if streams is not None:
            z = streams.chunk()
        _, top = propagate(psi, half[:m], lam[:m], q[:m], w[:m], z[:, :m], kick, False, False)
        top_pop = max(top_pop, float(np.max(top)))

    norms = np.sum(np.abs(psi) ** 2, axis=1)
    if np.max(np.abs(norms - 1.0)) > NORM_TOL:
        raise IntegratorError(f"norm drift {np.max(np.abs(norms - 1.0)):.3g} during sweep")
    if top_pop > TOP_LEVEL_WARN:
        warnings.warn(
            f"top retained level reached population {top_pop:.3g}; increase n_levels",
            RuntimeWarning,
            stacklevel=2,
        )

    x_b = barrier_top(protocol.x_end, params)
    x_b = 0.5 if x_b is None else x_b
    proj = c_k.T @ model.side_projector(x_b, right=start_left) @ c_k
    reversed_p = np.real(np.einsum("ti,ij,tj->t", psi.conj(), proj, psi))
    mean = float(np.mean(reversed_p))
    err = float(np.std(reversed_p, ddof=1) / math.sqrt(n_trajectories)) if n_trajectories > 1 else 0.0
    return SweepResult(mean, err, n_trajectories, int(seed), reversed_p, top_pop)


def _doublet_model(params: SquidParams, grid: Grid):
    snap = eigensystem(0.5, params, grid, params.n_levels, verify=False)
    x = snap.x
    xmat = snap.wavefunctions.T @ ((x - 0.5)[:, None] * snap.wavefunctions) * snap.dx
    return snap.energies, 0.5 * (xmat + xmat.T)


def dephasing_rate(
    params: SquidParams,
    amplitude: float,
    duration: float,
    n_trajectories: int = 1000,
    seed: int = 0,
    noise_dt: float = 1.0,
    grid: Grid | None = None,
) -> float:
    """Ensemble decay rate of the flux-basis coherence at the symmetric point.

    Starts from the equal superposition of the two flux states of the lowest
    doublet (the ground state at ``x_e = 1/2``), jitters ``x_e`` with white
    noise of the given amplitude and fits ``2 Re<rho_LR>(t) ~ exp(-rate t)``
    over ``[0, duration]``.
    """
    noise = NoiseModel(amplitude, seed, noise_dt)
    if amplitude == 0.0:
        return 0.0
    grid = grid or Grid()
    energies, xmat = _doublet_model(params, grid)
    n = params.n_levels
    n_steps, dt = _step_size(duration, noise, 20)
    lam, q = np.linalg.eigh(xmat)
    phase = np.exp(-0.5j * dt * energies)
    kick = amplitude * math.sqrt(dt) / params.g
    streams = _NoiseStreams(seed, n_trajectories)

    psi = np.zeros((n_trajectories, n), dtype=complex)
    psi[:, 0] = 1.0
    # in the doublet basis 2 Re<rho_LR> = |c0|^2 - |c1|^2
    px = np.empty(n_steps + 1)
    px[0] = 1.0
    for start in range(0, n_steps, _NoiseStreams.CHUNK):
        m = min(_NoiseStreams.CHUNK, n_steps - start)
        z = streams.chunk()
        rec, _ = propagate(
            psi, phase[None, :], lam[None, :], q[None], q[None], z[:, :m], kick, True, True
        )
        px[start + 1 : start + m + 1] = rec
    t = dt * np.arange(n_steps + 1)
    ok = px > 1e-3
    if ok.sum() < 3:
        raise CalibrationError("coherence vanished before the fit window")
    slope = np.polyfit(t[ok], np.log(px[ok]), 1)[0]
    return float(max(-slope, 0.0))


def calibrate_noise(
    params: SquidParams,
    target_inverse_d: float,
    seed: int = 0,
    n_trajectories: int = 1000,
    noise_dt: float = 1.0,
    rtol: float = 0.02,
    max_iter: int = 60,
    grid: Grid | None = None,
) -> NoiseModel:
    """Noise amplitude whose dephasing rate is ``1 / target_inverse_d``.

    Brackets the amplitude starting from the white-noise estimate
    ``rate = 2 (X01 A / g)^2`` and bisects in ``log A``; all candidates share
    the same random streams. Raises :class:`CalibrationError` if the response
    is not monotone or the target cannot be bracketed.
    """
    if not target_inverse_d > 0:
        raise ValueError("target 1/D must be positive")
    grid = grid or Grid()
    target = 1.0 / target_inverse_d
    _, xmat = _doublet_model(params, grid)
    x01 = abs(xmat[0, 1])
    guess = params.g * math.sqrt(target / 2.0) / x01

    def rate(a):
        return dephasing_rate(params, a, target_inverse_d, n_trajectories, seed, noise_dt, grid)

    lo, hi = guess, guess
    r_lo = r_hi = rate(guess)
    for _ in range(20):
        if r_lo <= target:
            break
        lo /= 2.0
        r_new = rate(lo)
        if r_new > r_lo:
            raise CalibrationError("dephasing rate is not monotone in the amplitude")
        r_lo = r_new
    for _ in range(20):
        if r_hi >= target:
            break
        hi *= 2.0
        r_new = rate(hi)
        if r_new < r_hi:
            raise CalibrationError("dephasing rate is not monotone in the amplitude")
        r_hi = r_new
    if not r_lo <= target <= r_hi:
        raise CalibrationError(f"could not bracket target rate {target:.4g}")
    for a, r in ((lo, r_lo), (hi, r_hi)):
        if abs(r / target - 1.0) <= rtol:
            return NoiseModel(a, seed, noise_dt)
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        r = rate(mid)
        if abs(r / target - 1.0) <= rtol:
            return NoiseModel(mid, seed, noise_dt)
        if r < target:
            lo, r_lo = mid, r
        else:
            hi, r_hi = mid, r
        if not r_lo <= r <= r_hi:
            raise CalibrationError("dephasing rate is not monotone in the amplitude")
    raise CalibrationError("bisection did not reach the requested tolerance")


def estimate_d_from_temperature(temperature: float, resistance: float) -> float:
    """Decoherence rate ``k_B T / (e^2 R)`` in 1/s."""
    if temperature < 0 or not resistance > 0:
        raise ValueError("need T >= 0 and R > 0")
    return const.k * temperature / (const.e**2 * resistance)


def inversion_curve(
    params: SquidParams,
    t_sweeps,
    noise: NoiseModel,
    n_trajectories: int,
    seed: int,
    x_start: float = SweepProtocol.x_start,
    x_end: float = SweepProtocol.x_end,
) -> list[SweepResult]:
    """:func:`adiabatic_sweep` for each sweep time, same seed for every point."""
    return [
        adiabatic_sweep(params, SweepProtocol(t, x_start, x_end), noise, n_trajectories, seed)
        for t in t_sweeps
    ]
