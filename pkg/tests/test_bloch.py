import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from declab.bloch import (
    PAULI,
    BlochState,
    DecoherenceRate,
    DensityMatrix2,
    InternalField,
    TimeSeries,
    entropy,
    entropy_rate,
    evolve,
    from_density,
    purity,
    stationarity_check,
    to_density,
    with_diagnostics,
)
from declab.errors import InvalidMatrixError, SingularityError, StepSizeError, UnphysicalStateError

coord = st.floats(-1.0, 1.0, allow_nan=False)


@st.composite
def bloch_vectors(draw, max_norm=1.0):
    v = np.array([draw(coord), draw(coord), draw(coord)])
    n = np.linalg.norm(v)
    scale = draw(st.floats(0.0, max_norm))
    return v / n * scale if n > 1e-6 else np.zeros(3)


@st.composite
def fields(draw, vmax=3.0):
    return np.array([draw(st.floats(-vmax, vmax)) for _ in range(3)])


def vn_entropy(p):
    """Oracle: -Tr rho ln rho from the eigenvalues of the density matrix."""
    rho = 0.5 * (np.eye(2) + sum(c * s for c, s in zip(p, PAULI)))
    lam = np.linalg.eigvalsh(rho)
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log(lam)))


def rhs(p, v, d):
    return np.cross(p, v) - d * np.array([p[0], p[1], 0.0])


# ---------------------------------------------------------------- states


def test_to_density_examples():
    np.testing.assert_allclose(to_density((0, 0, 1)).m, np.diag([1, 0]), atol=1e-15)
    np.testing.assert_allclose(to_density((0, 0, 0)).m, np.diag([0.5, 0.5]), atol=1e-15)
    np.testing.assert_allclose(to_density((1, 0, 0)).m, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_from_density_examples():
    np.testing.assert_allclose(from_density(np.diag([1.0, 0.0])).p, [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(from_density(np.diag([0.5, 0.5])).p, [0, 0, 0], atol=1e-15)
    rho = DensityMatrix2.from_entries(0.5, -0.5j, 0.5j, 0.5)
    np.testing.assert_allclose(from_density(rho).p, [0, 1, 0], atol=1e-15)


@given(bloch_vectors())
def test_density_round_trip(p):
    rho = to_density(p)
    assert np.allclose(rho.m, rho.m.conj().T)
    assert abs(np.trace(rho.m) - 1) < 1e-12
    np.testing.assert_allclose(from_density(rho).p, p, atol=1e-12)


def test_state_length_tolerance():
    s = BlochState((0, 0, 1 + 5e-10))
    assert s.norm == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(UnphysicalStateError):
        BlochState((0, 0, 1 + 1e-8))
    with pytest.raises(UnphysicalStateError):
        to_density((1, 0, 0.5))


@pytest.mark.parametrize(
    "m",
    [
        [[0.5, 0.1], [0.2, 0.5]],  # not Hermitian
        [[0.6, 0], [0, 0.5]],  # trace 1.1
        [[1.2, 0], [0, -0.2]],  # negative eigenvalue
    ],
)
def test_invalid_density_matrices(m):
    with pytest.raises(InvalidMatrixError):
        DensityMatrix2(m)


def test_field_and_rate_types():
    np.testing.assert_allclose(InternalField.from_hamiltonian((0.5, 0, 0)).v, [1, 0, 0])
    with pytest.raises(ValueError):
        InternalField(v=(np.inf, 0, 0))
    with pytest.raises(ValueError):
        InternalField()
    with pytest.raises(ValueError):
        DecoherenceRate(-1.0)
    assert float(DecoherenceRate(2.5)) == 2.5


# ---------------------------------------------------------------- purity / entropy


@pytest.mark.parametrize("p, expected", [((0, 0, 1), 1.0), ((0, 0, 0), 0.0), ((0.6, 0, 0), 0.6)])
def test_purity_examples(p, expected):
    assert purity(p) == pytest.approx(expected, abs=1e-15)


def test_entropy_examples():
    assert entropy((0, 0, 0)) == pytest.approx(math.log(2), abs=1e-15)
    assert entropy((0, 0, 1)) == 0.0
    assert entropy((0.5, 0, 0)) == pytest.approx(-(0.75 * math.log(0.75) + 0.25 * math.log(0.25)), rel=1e-14)
    assert entropy((0.5, 0, 0)) == pytest.approx(0.562335, abs=1e-6)


@given(bloch_vectors())
def test_entropy_matches_eigenvalue_oracle(p):
    assert entropy(p) == pytest.approx(vn_entropy(p), abs=1e-12)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_entropy_bounded_and_decreasing(a, b):
    sa, sb = entropy((0, 0, a)), entropy((0, 0, b))
    assert -1e-15 <= sa <= math.log(2) + 1e-15
    if a < b:
        assert sa >= sb


def test_entropy_rate_examples():
    assert entropy_rate((0, 0, 0.7), 3.0) == 0.0
    assert entropy_rate((0.3, 0.2, 0.1), 0.0) == 0.0
    assert entropy_rate((0.6, 0, 0), 1.0) == pytest.approx(0.36 / 1.2 * math.log(4), rel=1e-14)
    # analytic limit near the maximally mixed state
    assert entropy_rate((1e-10, 0, 0), 1.0) == pytest.approx(1e-20, rel=1e-12)
    with pytest.raises(SingularityError):
        entropy_rate((1, 0, 0), 1.0)


def test_entropy_rate_matches_trajectory_derivative_at_start():
    dt = 1e-4
    s = evolve((0.6, 0, 0), (0, 0, 0), 1.0, 2 * dt, dt)
    # second-order one-sided difference at t = 0
    e = [entropy(s.state(k)) for k in range(3)]
    fd = (-3 * e[0] + 4 * e[1] - e[2]) / (2 * dt)
    assert fd == pytest.approx(0.415888, abs=1e-6)


@given(bloch_vectors(max_norm=0.999), st.floats(0.0, 5.0))
def test_entropy_rate_nonnegative(p, d):
    assert entropy_rate(p, d) >= 0.0


# ---------------------------------------------------------------- evolution


def test_parallel_field_leaves_state_fixed():
    s = evolve((0, 0, 1), (0, 0, 1), 0.0, 5.0, 0.01)
    assert np.max(np.abs(s.samples - [0, 0, 1])) == 0.0


def test_precession_half_turn():
    dt = math.pi / 10000
    s = evolve((0, 0, 1), (1, 0, 0), 0.0, math.pi, dt)
    np.testing.assert_allclose(s.samples[-1], [0, 0, -1], atol=1e-8)
    t = s.times
    np.testing.assert_allclose(s.column("pz"), np.cos(t), atol=1e-10)
    np.testing.assert_allclose(s.column("py"), np.sin(t), atol=1e-10)


def test_pure_dephasing_decay():
    s = evolve((0.8, 0, 0.5), (0, 0, 0), 1.0, 3.0, 1e-3)
    np.testing.assert_allclose(s.samples[-1], [0.8 * math.exp(-3), 0, 0.5], atol=1e-8)


def test_damped_precession_closed_form():
    # V along z: transverse part rotates at |V| and decays at D
    w, d = 2.0, 0.3
    s = evolve((0.9, 0, 0.1), (0, 0, w), d, 4.0, 1e-3)
    t = s.times
    np.testing.assert_allclose(s.column("px"), 0.9 * np.exp(-d * t) * np.cos(w * t), atol=1e-10)
    np.testing.assert_allclose(s.column("py"), -0.9 * np.exp(-d * t) * np.sin(w * t), atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(bloch_vectors(), fields(), st.floats(0.0, 3.0))
def test_evolve_matches_adaptive_oracle(p0, v, d):
    dt = 0.02 / max(np.linalg.norm(v), d, 1.0)
    n = int(2.0 / dt)
    s = evolve(p0, v, d, n * dt, dt)
    ref = solve_ivp(lambda t, p: rhs(p, v, d), (0, n * dt), p0, rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(s.samples[-1], ref.y[:, -1], atol=1e-8)


def test_time_dependent_field():
    # rotating drive: V = (cos t, sin t, 0); compare against an adaptive oracle
    f = lambda t: (math.cos(t), math.sin(t), 0.0)  # noqa: E731
    s = evolve((0, 0, 1), f, 0.2, 5.0, 0.01)
    ref = solve_ivp(lambda t, p: rhs(p, np.array(f(t)), 0.2), (0, 5), [0, 0, 1], rtol=1e-11, atol=1e-13)
    np.testing.assert_allclose(s.samples[-1], ref.y[:, -1], atol=1e-8)


def test_fourth_order_convergence():
    p0, v, d = (0.3, 0.4, 0.5), (0.7, -0.2, 1.1), 0.4
    ends = [evolve(p0, v, d, 2.0, dt).samples[-1] for dt in (0.04, 0.02, 0.01)]
    ratio = np.linalg.norm(ends[0] - ends[1]) / np.linalg.norm(ends[1] - ends[2])
    assert ratio == pytest.approx(16.0, rel=0.05)


def test_step_guard():
    with pytest.raises(StepSizeError):
        evolve((0, 0, 1), (2, 0, 0), 0.0, 1.0, 0.1)
    with pytest.raises(StepSizeError):
        evolve((0, 0, 1), (0, 0, 0), 5.0, 1.0, 0.05)
    with pytest.raises(StepSizeError):
        evolve((0, 0, 1), (0, 0, 0), 0.0, 1.0, 0.3)  # not a whole number of steps


@settings(max_examples=10, deadline=None)
@given(bloch_vectors(), fields())
def test_undamped_norm_conservation(p0, v):
    dt = 1e-3 / max(np.linalg.norm(v), 1.0)
    s = evolve(p0, v, 0.0, 50000 * dt, dt)
    r = np.linalg.norm(s.samples, axis=1)
    assert np.max(np.abs(r - r[0])) <= 1e-9


@settings(max_examples=20, deadline=None)
@given(bloch_vectors(), fields(), st.floats(0.01, 3.0))
def test_purity_monotone_under_damping(p0, v, d):
    dt = 0.05 / max(np.linalg.norm(v), d, 1.0)
    s = evolve(p0, v, d, 400 * dt, dt)
    r = np.linalg.norm(s.samples, axis=1)
    assert np.all(np.diff(r) <= 1e-12)


@settings(max_examples=20, deadline=None)
@given(bloch_vectors(max_norm=0.95), fields(), st.floats(0.05, 3.0))
def test_squared_length_rate(p0, v, d):
    # d|P|^2/dt = -2 D |P_T|^2
    dt = 1e-4
    s = evolve(p0, v, d, 2 * dt, dt)
    r2 = np.sum(s.samples**2, axis=1)
    fd = (r2[2] - r2[0]) / (2 * dt)
    pt2 = s.samples[1, 0] ** 2 + s.samples[1, 1] ** 2
    expected = -2 * d * pt2
    assert fd == pytest.approx(expected, rel=1e-5, abs=1e-12)


def test_determinism():
    a = evolve((0.1, 0.2, 0.3), (1, 2, 3), 0.5, 1.0, 0.01).samples
    b = evolve((0.1, 0.2, 0.3), (1, 2, 3), 0.5, 1.0, 0.01).samples
    assert np.array_equal(a, b)


# ---------------------------------------------------------------- stationarity


def test_stationarity_examples():
    sz, sx = PAULI[2], PAULI[0]
    ts = np.linspace(0, math.pi, 51)
    assert stationarity_check(np.diag([0.3, 0.7]), (0, 0, 2), sz, ts) <= 1e-9
    # H = sigma_z rotates P_x through -P_x in a quarter period
    dev = stationarity_check(to_density((1, 0, 0)), (0, 0, 1), sx, np.linspace(0, math.pi / 2, 51))
    assert dev == pytest.approx(2.0, abs=1e-12)
    assert stationarity_check(np.diag([0.5, 0.5]), (0.3, -1, 2), sx + 0.5 * sz, ts) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(fields(), st.floats(-1.0, 1.0))
def test_commuting_state_is_stationary(h, s):
    # rho built along h commutes with H = h.sigma
    n = np.linalg.norm(h)
    p = s * h / n if n > 1e-6 else np.zeros(3)
    obs = np.array([[0.3, 1 - 2j], [1 + 2j, -0.7]])
    assert stationarity_check(to_density(p), h, obs, np.linspace(0, 5, 11)) <= 1e-9


# ---------------------------------------------------------------- output


def test_diagnostics_and_csv():
    s = with_diagnostics(evolve((0.6, 0, 0), (0, 0, 1), 0.5, 0.1, 0.05))
    assert s.labels == ("px", "py", "pz", "entropy", "purity")
    np.testing.assert_allclose(s.column("purity"), np.linalg.norm(s.samples[:, :3], axis=1))
    buf = io.StringIO()
    s.write_csv(buf, comments=["hello"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "t,px,py,pz,entropy,purity"
    assert len(lines) == 2 + 3
    row = [float(x) for x in lines[3].split(",")]
    np.testing.assert_allclose(row[1:], s.samples[1], rtol=1e-14)


def test_time_series_validation():
    with pytest.raises(ValueError):
        TimeSeries(0.0, 0.0, np.ones(3))
    with pytest.raises(ValueError):
        TimeSeries(0.0, 1.0, np.ones((0,)))
    ts = TimeSeries(1.0, 0.5, np.arange(4.0))
    np.testing.assert_allclose(ts.times, [1.0, 1.5, 2.0, 2.5])
