r"""Decoherence rate from the unitarity deficit of two S-matrices.

If the two states of a subsystem scatter an incoming environment particle
``|i>`` with different S-matrices ``S1`` and ``S2``, the overlap of the two
environment branches shrinks at the rate

.. math:: D = \mathrm{flux}\; \mathrm{Re}\,\langle i | 1 - S_1^\dagger S_2 | i \rangle ,

while the imaginary part of the same matrix element gives an energy shift.
``flux`` is a single rate normalisation (incoming particles per unit time
whose scattering ``S`` describes); any geometric cross-section is folded in.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import InvariantError

__all__ = [
    "ScatteringPair",
    "PartialWaveChannel",
    "HalfRateCheck",
    "random_unitary",
    "decoherence_rate",
    "energy_shift",
    "scattering_rate",
    "verify_half_rate_limit",
    "averaged_decoherence_rate",
]

UNITARITY_TOL = 1e-10
STATE_TOL = 1e-12


def _check_unitary(s: np.ndarray, name: str) -> np.ndarray:
    s = np.atleast_2d(np.asarray(s, dtype=complex))
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvariantError(f"{name} must be square, got shape {s.shape}")
    err = np.max(np.abs(s.conj().T @ s - np.eye(len(s))))
    if err > UNITARITY_TOL:
        raise InvariantError(f"{name} is not unitary (max |S'S - I| = {err:.3g})")
    return s


def _check_state(v: np.ndarray, n: int) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=complex)).reshape(-1)
    if v.shape != (n,):
        raise InvariantError(f"incoming state has {v.size} components, S is {n}x{n}")
    if abs(np.linalg.norm(v) - 1.0) > STATE_TOL:
        raise InvariantError(f"incoming state is not normalised (|i| = {np.linalg.norm(v):.15g})")
    return v


def _check_flux(flux: float) -> float:
    flux = float(flux)
    if not flux >= 0:
        raise InvariantError(f"flux must be >= 0, got {flux}")
    return flux


@dataclass(frozen=True, eq=False)
class ScatteringPair:
    """Two unitary S-matrices, the incoming environment state and the flux."""

    s1: np.ndarray
    s2: np.ndarray
    incoming: np.ndarray
    flux: float = 1.0

    def __post_init__(self) -> None:
        s1 = _check_unitary(self.s1, "S1")
        s2 = _check_unitary(self.s2, "S2")
        if s1.shape != s2.shape:
            raise InvariantError(f"S1 {s1.shape} and S2 {s2.shape} differ in size")
        object.__setattr__(self, "s1", s1)
        object.__setattr__(self, "s2", s2)
        object.__setattr__(self, "incoming", _check_state(self.incoming, len(s1)))
        object.__setattr__(self, "flux", _check_flux(self.flux))

    def deficit(self) -> complex:
        """``<i|(1 - S1^dag S2)|i>``."""
        i = self.incoming
        return complex(1.0 - np.vdot(self.s1 @ i, self.s2 @ i))


@dataclass(frozen=True)
class PartialWaveChannel:
    """A single eikonal channel with ``S_k = exp(2 i delta_k)``."""

    delta1: float
    delta2: float
    flux: float = 1.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.delta1) and np.isfinite(self.delta2)):
            raise InvariantError("phase shifts must be finite")

    def pair(self) -> ScatteringPair:
        return ScatteringPair(
            [[np.exp(2j * self.delta1)]], [[np.exp(2j * self.delta2)]], [1.0], self.flux
        )


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary from the QR decomposition of a complex Gaussian matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    ph = np.diagonal(r) / np.abs(np.diagonal(r))
    return q * ph


def _pair(pair) -> ScatteringPair:
    return pair.pair() if isinstance(pair, PartialWaveChannel) else pair


def decoherence_rate(pair: ScatteringPair) -> float:
    """``flux * Re<i|(1 - S1^dag S2)|i>``; zero when both states scatter alike."""
    pair = _pair(pair)
    return pair.flux * pair.deficit().real


def energy_shift(pair: ScatteringPair) -> float:
    """``flux * Im<i|(1 - S1^dag S2)|i>``.

    Sign convention: for ``S1 = 1, S2 = exp(2i delta)`` this is
    ``-flux * sin(2 delta)``. Only the magnitude is convention independent.
    """
    pair = _pair(pair)
    return pair.flux * pair.deficit().imag


def scattering_rate(s: np.ndarray, incoming: np.ndarray, flux: float) -> float:
    """Total rate out of ``|i>``: ``flux * <i|(1-S)^dag (1-S)|i>``."""
    s = _check_unitary(s, "S")
    i = _check_state(incoming, len(s))
    out = i - s @ i
    return _check_flux(flux) * float(np.vdot(out, out).real)


class HalfRateCheck(NamedTuple):
    d: float
    half_rate: float
    difference: float


def verify_half_rate_limit(s2: np.ndarray, incoming: np.ndarray, flux: float) -> HalfRateCheck:
    """Compare ``D(S1 = 1, S2)`` with half the scattering rate on ``S2``."""
    s2 = _check_unitary(s2, "S2")
    d = decoherence_rate(ScatteringPair(np.eye(len(s2)), s2, incoming, flux))
    half = 0.5 * scattering_rate(s2, incoming, flux)
    return HalfRateCheck(d, half, abs(d - half))


def averaged_decoherence_rate(
    s1: np.ndarray,
    s2: np.ndarray,
    ensemble: Iterable[tuple[np.ndarray, float]],
    flux: float,
) -> float:
    """Weighted average of ``D`` over ``(incoming, weight)`` pairs.

    Weights are normalised to sum to one.
    """
    total = wsum = 0.0
    for state, weight in ensemble:
        total += weight * decoherence_rate(ScatteringPair(s1, s2, state, flux))
        wsum += weight
    if wsum <= 0:
        raise ValueError("ensemble weights must have a positive sum")
    return total / wsum
