r"""Two-state density matrices, Bloch vectors and damped precession.

A two-state density matrix is written as

.. math:: \rho = \tfrac12 (I + \mathbf P \cdot \boldsymbol\sigma),

where ``P`` is the polarization (Bloch) vector. ``P_z`` measures how much
of state 1 versus state 2 is present and the transverse part
``P_T = (P_x, P_y)`` measures the coherence between them.

Coupled to an environment that destroys coherence at a constant rate ``D``,
the vector obeys

.. math:: \dot{\mathbf P} = \mathbf P \times \mathbf V - D\,\mathbf P_T ,

with ``V`` the internal pseudo-field (angular-frequency units). With this
convention ``P`` precesses about ``V`` at angular frequency ``|V|``. A
Hamiltonian written as ``H = h . sigma`` corresponds to ``V = 2 h``; use
:meth:`InternalField.from_hamiltonian` for that mapping.

Units are arbitrary but consistent: ``V`` and ``D`` in inverse time units,
entropies in nats.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

from ._rk4 import rk4_bloch
from .errors import (
    InvalidMatrixError,
    SingularityError,
    StepSizeError,
    UnphysicalStateError,
)

__all__ = [
    "PAULI",
    "BlochState",
    "DensityMatrix2",
    "InternalField",
    "DecoherenceRate",
    "TimeSeries",
    "to_density",
    "from_density",
    "evolve",
    "purity",
    "entropy",
    "entropy_rate",
    "stationarity_check",
    "with_diagnostics",
]

PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

NORM_TOL = 1e-9
MATRIX_TOL = 1e-12
STABILITY_RATIO = 0.1
SMALL_P = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BlochState:
    """Polarization vector of a two-state system.

    Lengths in ``(1, 1 + 1e-9]`` are treated as round-off and rescaled to
    one; anything longer raises :class:`UnphysicalStateError`.
    """

    p: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.p, dtype=float).reshape(-1)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise ValueError(f"Bloch vector must be 3 finite numbers, got {self.p!r}")
        n = float(np.linalg.norm(p))
        if n > 1.0 + NORM_TOL:
            raise UnphysicalStateError(f"|P| = {n:.12g} exceeds 1")
        if n > 1.0:
            p = p / n
        object.__setattr__(self, "p", _frozen(p))

    @property
    def x(self) -> float:
        return float(self.p[0])

    @property
    def y(self) -> float:
        return float(self.p[1])

    @property
    def z(self) -> float:
        return float(self.p[2])

    @property
    def transverse(self) -> np.ndarray:
        """The coherence part ``(P_x, P_y, 0)``."""
        return np.array([self.p[0], self.p[1], 0.0])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.p))

    def __repr__(self) -> str:
        return f"BlochState(p=({self.x:.6g}, {self.y:.6g}, {self.z:.6g}))"


@dataclass(frozen=True, eq=False)
class DensityMatrix2:
    """Validated 2x2 density matrix (Hermitian, unit trace, positive)."""

    m: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.m, dtype=complex)
        if m.shape != (2, 2):
            raise InvalidMatrixError(f"expected a 2x2 matrix, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > MATRIX_TOL:
            raise InvalidMatrixError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > MATRIX_TOL:
            raise InvalidMatrixError(f"trace {np.trace(m).real:.15g} != 1")
        if np.min(np.linalg.eigvalsh(m)) < -MATRIX_TOL:
            raise InvalidMatrixError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "m", _frozen(m))

    @classmethod
    def from_entries(cls, r11, r12, r21, r22) -> "DensityMatrix2":
        return cls(np.array([[r11, r12], [r21, r22]], dtype=complex))


@dataclass(frozen=True, eq=False)
class InternalField:
    """Pseudo-field ``V`` driving the precession, constant or time dependent.

    Pass either a constant 3-vector ``v`` or a callable ``func(t) -> 3-vector``.
    """

    v: np.ndarray | None = None
    func: Callable[[float], Sequence[float]] | None = None

    def __post_init__(self) -> None:
        if (self.v is None) == (self.func is None):
            raise ValueError("give exactly one of a constant vector or a function")
        if self.v is not None:
            v = np.array(self.v, dtype=float).reshape(-1)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError(f"field must be 3 finite numbers, got {self.v!r}")
            object.__setattr__(self, "v", _frozen(v))

    @classmethod
    def from_hamiltonian(cls, h: Sequence[float]) -> "InternalField":
        """Field for ``H = h . sigma``; the precession vector is ``2 h``."""
        return cls(v=2.0 * np.asarray(h, dtype=float))

    @property
    def is_constant(self) -> bool:
        return self.func is None

    def at(self, t: float) -> np.ndarray:
        if self.v is not None:
            return self.v
        v = np.asarray(self.func(t), dtype=float).reshape(-1)
        if v.shape != (3,) or not np.all(np.isfinite(v)):
            raise ValueError(f"field is not a finite 3-vector at t={t}: {v!r}")
        return v

    def tabulate(self, times: np.ndarray) -> np.ndarray:
        if self.v is not None:
            return self.v[None, :].copy()
        return np.array([self.at(t) for t in times])


@dataclass(frozen=True)
class DecoherenceRate:
    """Damping rate ``D`` of the transverse (coherence) components."""

    d: float

    def __post_init__(self) -> None:
        if not (self.d >= 0 and math.isfinite(self.d)):
            raise ValueError(f"decoherence rate must be finite and >= 0, got {self.d}")

    def __float__(self) -> float:
        return float(self.d)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled trajectory.

    ``samples`` has one row per time ``t0 + k*dt``; it is 1-D for scalar
    series and 2-D (one column per label) otherwise.
    """

    t0: float
    dt: float
    samples: np.ndarray
    labels: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        s = np.asarray(self.samples, dtype=float)
        if s.ndim not in (1, 2) or len(s) == 0:
            raise ValueError("samples must be a non-empty 1-D or 2-D array")
        width = 1 if s.ndim == 1 else s.shape[1]
        labels = tuple(self.labels) or (("value",) if s.ndim == 1 else tuple(f"c{i}" for i in range(width)))
        if len(labels) != width:
            raise ValueError(f"{len(labels)} labels for {width} columns")
        object.__setattr__(self, "samples", _frozen(s))
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    def column(self, label: str) -> np.ndarray:
        if self.samples.ndim == 1:
            if label != self.labels[0]:
                raise KeyError(label)
            return self.samples
        return self.samples[:, self.labels.index(label)]

    def state(self, k: int) -> BlochState:
        return BlochState(self.samples[k, :3])

    def write_csv(self, fh: TextIO, comments: Iterable[str] = ()) -> None:
        """Write ``t,<labels>`` rows with 15 significant digits.

        ``comments`` are emitted first as ``# ``-prefixed lines.
        """
        for line in comments:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t",) + self.labels)
        rows = self.samples[:, None] if self.samples.ndim == 1 else self.samples
        for t, row in zip(self.times, rows):
            w.writerow([f"{t:.15g}"] + [f"{v:.15g}" for v in row])


def _as_state(p) -> BlochState:
    return p if isinstance(p, BlochState) else BlochState(p)


def _as_rate(d) -> float:
    d = float(d)
    if not d >= 0:
        raise ValueError(f"decoherence rate must be >= 0, got {d}")
    return d


def _as_field(v) -> InternalField:
    if isinstance(v, InternalField):
        return v
    if callable(v):
        return InternalField(func=v)
    return InternalField(v=v)


def to_density(p: BlochState) -> DensityMatrix2:
    """``rho = (I + P.sigma) / 2``."""
    p = _as_state(p)
    return DensityMatrix2(0.5 * (np.eye(2) + np.einsum("i,ijk->jk", p.p, PAULI)))


def from_density(rho: DensityMatrix2) -> BlochState:
    """Inverse of :func:`to_density`: ``P_i = Tr[rho sigma_i]``."""
    if not isinstance(rho, DensityMatrix2):
        rho = DensityMatrix2(rho)
    return BlochState(np.real(np.einsum("jk,ikj->i", rho.m, PAULI)))


def purity(p: BlochState) -> float:
    """Length ``|P|``: 1 for pure states, 0 for the maximally mixed state."""
    return _as_state(p).norm


def _entropy_of_length(r):
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    a = (1.0 + r) * np.log1p(r)
    # (1 - r) ln(1 - r) -> 0 at r = 1
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(r < 1.0, (1.0 - r) * np.log1p(-r), 0.0)
    return math.log(2.0) - 0.5 * (a + b)


def entropy(p: BlochState) -> float:
    """Von Neumann entropy ``-Tr[rho ln rho]`` in nats."""
    return float(_entropy_of_length(_as_state(p).norm))


def _atanh_ratio(r):
    """``atanh(r) / r``, equal to ``(1/2r) ln[(1+r)/(1-r)]``, with limit 1 at r=0."""
    r = np.asarray(r, dtype=float)
    safe = np.where(r < SMALL_P, 0.5, r)
    return np.where(r < SMALL_P, 1.0, np.arctanh(safe) / safe)


def entropy_rate(p: BlochState, d: DecoherenceRate | float) -> float:
    """Entropy production ``D |P_T|^2 atanh(P) / P`` (nats per time unit).

    Singular for pure states, which raise :class:`SingularityError`.
    """
    p = _as_state(p)
    d = _as_rate(d)
    r = p.norm
    if r >= 1.0:
        raise SingularityError("entropy rate diverges for |P| = 1")
    pt2 = p.x**2 + p.y**2
    return float(d * pt2 * _atanh_ratio(r))


def evolve(
    p0: BlochState,
    v: InternalField,
    d: DecoherenceRate | float,
    t_end: float,
    dt: float,
) -> TimeSeries:
    """Integrate the damped precession equation with classical RK4.

    Returns a :class:`TimeSeries` with columns ``px, py, pz`` sampled every
    ``dt`` from 0 to ``t_end`` (which must be a whole number of steps).
    Raises :class:`StepSizeError` if ``dt * max(|V|, D) > 0.1``.
    """
    p0 = _as_state(p0)
    v = _as_field(v)
    d = _as_rate(d)
    if not dt > 0:
        raise StepSizeError("dt must be positive")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-6 * dt:
        raise StepSizeError(f"t_end={t_end} is not a whole number of steps dt={dt}")
    table = v.tabulate(0.5 * dt * np.arange(2 * n + 1))
    vmax = float(np.max(np.linalg.norm(table, axis=1)))
    if dt * max(vmax, d) > STABILITY_RATIO * (1.0 + 1e-12):
        raise StepSizeError(
            f"dt*max(|V|, D) = {dt * max(vmax, d):.3g} exceeds {STABILITY_RATIO}"
        )
    samples = rk4_bloch(p0.p.copy(), np.ascontiguousarray(table), d, float(dt), n)
    return TimeSeries(0.0, float(dt), samples, ("px", "py", "pz"), {"D": d})


def with_diagnostics(series: TimeSeries) -> TimeSeries:
    """Append ``entropy`` and ``purity`` columns to a ``px,py,pz`` series."""
    p = series.samples[:, :3]
    r = np.linalg.norm(p, axis=1)
    out = np.column_stack([p, _entropy_of_length(r), r])
    return TimeSeries(
        series.t0, series.dt, out, ("px", "py", "pz", "entropy", "purity"), dict(series.meta)
    )


def _unitary(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i t h.sigma)`` in closed form."""
    n = float(np.linalg.norm(h))
    if n == 0.0:
        return np.eye(2, dtype=complex)
    hs = np.einsum("i,ijk->jk", h / n, PAULI)
    return math.cos(n * t) * np.eye(2) - 1j * math.sin(n * t) * hs


def stationarity_check(
    rho: DensityMatrix2,
    h: InternalField,
    observable: np.ndarray,
    t_samples: Iterable[float],
) -> float:
    """Largest drift of ``Tr[rho(t) O]`` under unitary evolution with ``H = h . sigma``.

    ``h`` is read literally as the Hamiltonian vector here, not as the
    precession vector. The drift vanishes whenever ``[rho, H] = 0``.
    """
    if not isinstance(rho, DensityMatrix2):
        rho = DensityMatrix2(rho)
    h = _as_field(h)
    obs = np.asarray(observable, dtype=complex)
    if obs.shape != (2, 2):
        raise ValueError("observable must be 2x2")
    ref = np.trace(rho.m @ obs)
    dev = 0.0
    for t in t_samples:
        if h.is_constant:
            u = _unitary(h.v, t)
        else:
            # piecewise-constant product with 1000 slices; non-commuting fields
            # at different times are handled by ordered multiplication
            u = np.eye(2, dtype=complex)
            ts = np.linspace(0.0, t, 1001)
            for a, b in zip(ts[:-1], ts[1:]):
                u = _unitary(h.at(0.5 * (a + b)), b - a) @ u
        rt = u @ rho.m @ u.conj().T
        dev = max(dev, abs(np.trace(rt @ obs) - ref))
    return float(dev)
