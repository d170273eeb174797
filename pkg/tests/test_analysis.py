"""Measurement side: Lyapunov evaluators, settling semantics, rate envelopes,
the noise process, and tail statistics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridopt.analysis import (
    NOT_SETTLED,
    NoiseProcess,
    NotSettled,
    RateEnvelope,
    V0,
    V1,
    V_alt,
    distances_to_min,
    gaps,
    nesterov_envelope,
    nesterov_envelope_constant,
    percent_improvement,
    perturb_gradient,
    settling_time,
    tail_limsup,
    uniting_envelope,
)
from hybridopt.hybrid import (
    HybridState,
    IntegratorConfig,
    JumpRecord,
    SolutionArc,
    Termination,
    solve,
)
from hybridopt.objective import InvalidParameterError
from hybridopt.uniting import build_uniting_system

from helpers import QUAD, nsc_zeta2


def synthetic_arc(t, z1, j=None, q=None, jumps=()):
    t = np.asarray(t, dtype=float)
    n = len(t)
    z1 = np.asarray(z1, dtype=float).reshape(n, 1)
    j = np.zeros(n, dtype=np.int64) if j is None else np.asarray(j, dtype=np.int64)
    q = np.ones(n, dtype=np.int64) if q is None else np.asarray(q, dtype=np.int64)
    return SolutionArc(t=t, j=j, q=q, tau=t.copy(), z1=z1,
                       z2=np.zeros((n, 1)), jumps=list(jumps),
                       termination=Termination.TMaxReached)


# --- Lyapunov evaluators -------------------------------------------------------

def test_v0_hand_value():
    # gamma (L - L*) + 0.5 |z2|^2 = 2*9 + 8
    assert V0(QUAD, 2.0, (3.0, 4.0)) == 26.0


def test_v1_hand_value_at_tau_zero():
    # a_bar(0) = 1: 0.5 (3 + 4)^2 + (4/2) * 9 = 24.5 + 18
    assert V1(QUAD, 2.0, (3.0, 4.0), 0.0) == 42.5


def test_v_alt_matches_its_definition():
    gamma, psi = 2.0 / 3.0, 1.0 / 600.0
    nu = psi * (psi - 200.0)
    z1, z2 = 3.0, 4.0
    expected = (gamma * 9.0 + 0.5 * (psi * 3.0 + 4.0) ** 2 + 0.5 * nu * 9.0)
    assert V_alt(QUAD, gamma, psi, nu, (z1, z2)) == pytest.approx(expected, rel=1e-14)


def test_distances_and_gaps():
    arc = synthetic_arc([0.0, 1.0], [3.0, -4.0])
    np.testing.assert_allclose(distances_to_min(arc, QUAD), [3.0, 4.0])
    np.testing.assert_allclose(gaps(arc, QUAD), [9.0, 16.0])


# --- settling semantics --------------------------------------------------------

def test_settling_time_uses_the_last_crossing():
    # dips inside the 1% band at t = 1, pops out at t = 2, re-enters at t = 3
    arc = synthetic_arc([0.0, 1.0, 2.0, 3.0], [10.0, 0.05, 0.2, 0.05])
    assert settling_time(arc, QUAD, 0.01) == 3.0


def test_settling_time_not_settled_when_final_sample_is_outside():
    arc = synthetic_arc([0.0, 1.0, 2.0], [10.0, 0.05, 0.2])
    assert settling_time(arc, QUAD, 0.01) is NOT_SETTLED


def test_settling_time_boundary_cases():
    # start at the minimizer: settled at 0
    arc = synthetic_arc([0.0, 1.0], [0.0, 0.0])
    assert settling_time(arc, QUAD, 0.01) == 0.0
    # monotone entry: settles at the first sample inside the band
    arc = synthetic_arc([0.0, 1.0, 2.0], [10.0, 0.05, 0.01])
    assert settling_time(arc, QUAD, 0.01) == 1.0
    with pytest.raises(InvalidParameterError):
        settling_time(arc, QUAD, 1.0)
    with pytest.raises(InvalidParameterError):
        settling_time(arc, QUAD, 0.0)


def test_not_settled_is_a_singleton_sentinel():
    assert NotSettled() is NOT_SETTLED
    assert repr(NOT_SETTLED) == "NotSettled"


def test_percent_improvement():
    assert percent_improvement(10.0, 1.0) == 90.0
    assert percent_improvement(5.0, 5.0) == 0.0
    with pytest.raises(InvalidParameterError):
        percent_improvement(0.0, 1.0)
    with pytest.raises(InvalidParameterError):
        percent_improvement(1.0, -1.0)


@given(t_other=st.floats(1e-6, 1e6), frac=st.floats(0.0, 1.0))
def test_percent_improvement_bounds(t_other, frac):
    t_h = t_other * frac
    impr = percent_improvement(t_other, t_h)
    assert -1e-9 <= impr <= 100.0


# --- rate envelopes ------------------------------------------------------------

def test_nesterov_envelope_constant_oracle():
    # (1 + zeta^2) exp(sqrt(13/4 + zeta^4/M)) for zeta = 2, M = 2
    expected = 5.0 * math.exp(math.sqrt(13.0 / 4.0 + 8.0))
    assert nesterov_envelope_constant(2.0, 2.0) == pytest.approx(expected, rel=1e-15)
    assert nesterov_envelope_constant(2.0, 2.0) == pytest.approx(
        143.09945509360693, abs=1e-9
    )


def test_nesterov_envelope_shape():
    e1 = nesterov_envelope(1.0, 2.0, 2.0, 50.0, 0.0, 0.0)
    e4 = nesterov_envelope(4.0, 2.0, 2.0, 50.0, 0.0, 0.0)
    assert e4 == pytest.approx(e1 / 4.0, rel=1e-12)  # (t+2)^-2 scaling
    with pytest.raises(InvalidParameterError):
        nesterov_envelope(0.5, 2.0, 2.0, 50.0, 0.0, 0.0)


def test_uniting_envelope_on_a_solved_arc():
    p = nsc_zeta2()
    system = build_uniting_system(p, QUAD)
    cfg = IntegratorConfig(step=1e-3, event_tol=1e-9, t_max=3.0, j_max=10,
                           record_every=10)
    arc = solve(system, HybridState(50.0, 0.0, 1, 0.0), cfg)
    psi = 0.5 * p.alpha * p.gamma_local / p.lambda_local
    rate = RateEnvelope(kind="nsc", zeta=2.0, lipschitz_m=2.0,
                        psi_slope=0.5 * psi)
    report = uniting_envelope(arc, QUAD, rate)
    assert report.segments
    assert report.passed


def test_uniting_envelope_rejects_chattering_arcs():
    arc = synthetic_arc([0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0],
                        j=[0, 1, 2, 3],
                        jumps=[JumpRecord(0.0, k,
                                          HybridState(1.0, 0.0, 1, 0.0),
                                          HybridState(1.0, 0.0, 0, 0.0))
                               for k in range(3)])
    rate = RateEnvelope(kind="nsc", zeta=2.0, lipschitz_m=2.0)
    with pytest.raises(InvalidParameterError, match="at most twice"):
        uniting_envelope(arc, QUAD, rate)


# --- noise process -------------------------------------------------------------

def test_noise_process_is_deterministic():
    a = NoiseProcess(seed=7, sigma=0.5, horizon=2.0, grid=0.01)
    b = NoiseProcess(seed=7, sigma=0.5, horizon=2.0, grid=0.01)
    ts = [0.0, 0.005, 0.013, 1.5, 1.999]
    assert [a.value(t) for t in ts] == [b.value(t) for t in ts]
    c = NoiseProcess(seed=8, sigma=0.5, horizon=2.0, grid=0.01)
    assert any(a.value(t) != c.value(t) for t in ts)


def test_noise_process_interpolates_linearly():
    n = NoiseProcess(seed=0, sigma=1.0, horizon=1.0, grid=0.1)
    lo, hi = n.value(0.2), n.value(0.3)
    mid = n.value(0.25)
    assert mid == pytest.approx(0.5 * (lo + hi), abs=1e-9)
    # queries at or before zero return the first draw
    assert n.value(-1.0) == n.value(0.0)
    # queries beyond the horizon clamp to the last draw
    assert n.value(100.0) == n.value(200.0)


def test_noise_process_sigma_zero_is_exactly_zero():
    n = NoiseProcess(seed=3, sigma=0.0, horizon=1.0)
    assert n.value(0.37) == 0.0
    assert isinstance(n.value(0.37), float)
    v = NoiseProcess(seed=3, sigma=0.0, horizon=1.0, dim=3).value(0.37)
    assert isinstance(v, np.ndarray) and not v.any()


def test_noise_process_validation_and_dim():
    with pytest.raises(InvalidParameterError):
        NoiseProcess(seed=0, sigma=-1.0, horizon=1.0)
    with pytest.raises(InvalidParameterError):
        NoiseProcess(seed=0, sigma=1.0, horizon=1.0, grid=0.0)
    with pytest.raises(InvalidParameterError):
        NoiseProcess(seed=0, sigma=1.0, horizon=0.0)
    v = NoiseProcess(seed=0, sigma=1.0, horizon=1.0, dim=2).value(0.13)
    assert isinstance(v, np.ndarray) and v.shape == (2,)


@given(seed=st.integers(0, 1000), t=st.floats(0.0, 2.0))
@settings(max_examples=50)
def test_noise_stays_within_the_draw_range(seed, t):
    n = NoiseProcess(seed=seed, sigma=1.0, horizon=2.0, grid=0.05)
    draws = n._draws
    assert min(draws) - 1e-12 <= n.value(t) <= max(draws) + 1e-12


def test_sigma_zero_perturbation_reproduces_the_nominal_arc():
    p = nsc_zeta2()
    system = build_uniting_system(p, QUAD)
    cfg = IntegratorConfig(step=1e-3, event_tol=1e-9, t_max=2.0, j_max=10,
                           record_every=10)
    x0 = HybridState(50.0, 0.0, 1, 0.0)
    nominal = solve(system, x0, cfg)
    silent = perturb_gradient(system, NoiseProcess(seed=0, sigma=0.0, horizon=2.0))
    replay = solve(silent, x0, cfg)
    np.testing.assert_array_equal(nominal.t, replay.t)
    np.testing.assert_array_equal(nominal.z1, replay.z1)
    np.testing.assert_array_equal(nominal.z2, replay.z2)
    np.testing.assert_array_equal(nominal.q, replay.q)
    assert len(nominal.jumps) == len(replay.jumps)


# --- tail statistics -----------------------------------------------------------

def test_tail_limsup_measures_the_final_window():
    t = np.linspace(0.0, 10.0, 101)
    z1 = np.where(t < 8.0, 5.0, 0.25)
    arc = synthetic_arc(t, z1)
    d, g = tail_limsup(arc, QUAD, tail_fraction=0.2)
    assert d == 0.25
    assert g == 0.0625
    with pytest.raises(InvalidParameterError):
        tail_limsup(arc, QUAD, tail_fraction=0.0)
