"""Flow-field definitions: coefficient functions, hand-evaluated fields,
parameter validation, and the closed-loop wrapper."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hybridopt.algorithms import (
    HeavyBallParams,
    NesterovNscParams,
    NesterovScParams,
    RateParams,
    TripleMomentumParams,
    abar,
    as_closed_loop,
    betabar,
    dbar,
    gradient_descent_field,
    heavy_ball_field,
    nesterov_nsc_field,
    nesterov_sc_field,
    triple_momentum_field,
)
from hybridopt.analysis import NoiseProcess, perturb_gradient
from hybridopt.hybrid import HybridState, IntegratorConfig, solve
from hybridopt.objective import InvalidParameterError, make_scalar_quadratic

QUAD = make_scalar_quadratic(1.0)


# --- coefficient functions -----------------------------------------------------

def test_time_varying_coefficients_at_known_points():
    assert dbar(0.0) == 0.75
    assert dbar(1.0) == 0.5
    assert betabar(0.0) == -0.5
    assert betabar(1.0) == 0.0
    assert abar(0.0) == 1.0
    assert abar(2.0) == 0.5
    for fn in (dbar, betabar, abar):
        with pytest.raises(InvalidParameterError):
            fn(-0.1)


@given(t=st.floats(0.0, 1e6))
def test_coefficient_ranges(t):
    assert 0.0 < dbar(t) <= 0.75
    assert -0.5 <= betabar(t) < 1.0
    assert 0.0 < abar(t) <= 1.0


@pytest.mark.parametrize("kappa", [1.0, 2.0, 10.0, 100.0])
def test_strongly_convex_tuning_identity(kappa):
    p = NesterovScParams(zeta=1.0, lipschitz_m=2.0, kappa=kappa)
    rk = math.sqrt(kappa)
    assert p.d == pytest.approx(1.0 / (rk + 1.0))
    assert p.beta == pytest.approx((rk - 1.0) / (rk + 1.0))
    # 2 d + beta = 1 for every condition number
    assert 2.0 * p.d + p.beta == pytest.approx(1.0, abs=1e-12)
    assert p.rate_a == pytest.approx(1.0 / rk - 1.0 / (2.0 * kappa), abs=1e-12)


def test_rate_params_psi_nu():
    p = RateParams(m=0.5, alpha=1.0, gamma=2.0 / 3.0, lam=200.0)
    assert p.psi == pytest.approx(1.0 / 600.0, rel=1e-12)
    assert p.nu == pytest.approx((1.0 / 600.0) * (1.0 / 600.0 - 200.0), rel=1e-12)
    assert p.nu < 0
    with pytest.raises(InvalidParameterError):
        RateParams(m=1.0, alpha=1.0, gamma=1.0, lam=1.0)
    with pytest.raises(InvalidParameterError):
        RateParams(m=0.5, alpha=-1.0, gamma=1.0, lam=1.0)


def test_parameter_validation():
    with pytest.raises(InvalidParameterError):
        HeavyBallParams(lam=0.0, gamma=1.0)
    with pytest.raises(InvalidParameterError):
        HeavyBallParams(lam=1.0, gamma=-1.0)
    with pytest.raises(InvalidParameterError):
        NesterovNscParams(zeta=0.0, lipschitz_m=2.0)
    with pytest.raises(InvalidParameterError):
        NesterovScParams(zeta=1.0, lipschitz_m=2.0, kappa=0.5)
    with pytest.raises(InvalidParameterError):
        TripleMomentumParams(kappa=1.0, lipschitz_m=2.0)


# --- hand-evaluated fields -----------------------------------------------------

def test_heavy_ball_field_hand_value():
    f = heavy_ball_field(HeavyBallParams(lam=2.0, gamma=3.0), QUAD)
    dz1, dz2, dtau = f(0.0, 1.0, 2.0, 0.0)
    assert dz1 == 2.0
    assert dz2 == -2.0 * 2.0 - 3.0 * 2.0  # -lam z2 - gamma grad L(1)
    assert dtau == 1.0


def test_nesterov_nsc_field_hand_value_at_tau_zero():
    # at tau = 0: damping 2 dbar(0) = 3/2, lookahead betabar(0) = -1/2
    f = nesterov_nsc_field(NesterovNscParams(zeta=2.0, lipschitz_m=2.0), QUAD)
    dz1, dz2, dtau = f(0.0, 1.0, 2.0, 0.0)
    assert dz1 == 2.0
    # lookahead point 1 + (-1/2) 2 = 0 has zero gradient
    assert dz2 == pytest.approx(-1.5 * 2.0, abs=1e-15)
    assert dtau == 1.0


def test_nesterov_sc_field_hand_value():
    # kappa = 1: d = 1/2, beta = 0; gain = 1/(M zeta^2) = 3.125 for zeta = 0.4
    f = nesterov_sc_field(NesterovScParams(zeta=0.4, lipschitz_m=2.0, kappa=1.0), QUAD)
    dz1, dz2, dtau = f(0.0, 1.0, 2.0, 0.0)
    assert dz1 == 2.0
    assert dz2 == pytest.approx(-1.0 * 2.0 - 3.125 * 2.0, rel=1e-12)


def test_nesterov_sc_field_requires_mu():
    from hybridopt.objective import ObjectiveSpec

    no_mu = ObjectiveSpec(dim=1, eval=lambda z: z * z, grad=lambda z: 2 * z,
                          minimizer=0.0, min_value=0.0, alpha=1.0, lipschitz_m=2.0)
    with pytest.raises(InvalidParameterError):
        nesterov_sc_field(NesterovScParams(zeta=1.0, lipschitz_m=2.0, kappa=1.0), no_mu)


def test_gradient_descent_field():
    f = gradient_descent_field(0.5, QUAD)
    dz1, dz2, dtau = f(0.0, 3.0, 0.0, 0.0)
    assert dz1 == -0.5 * 6.0
    assert dz2 == 0.0
    with pytest.raises(InvalidParameterError):
        gradient_descent_field(0.0, QUAD)


def test_triple_momentum_parameters_and_field():
    p = TripleMomentumParams(kappa=10.0, lipschitz_m=2.0)
    rho = 1.0 - 1.0 / 10.0
    assert p.rho == pytest.approx(rho)
    assert p.gamma == pytest.approx((1.0 + rho) / 2.0)
    assert p.lam == pytest.approx(rho * rho / (2.0 - rho))
    assert p.sigma == pytest.approx(rho * rho / ((1.0 + rho) * (2.0 - rho)))
    assert p.delta == pytest.approx(rho * rho / (1.0 - rho * rho))
    f = triple_momentum_field(p, QUAD)
    dz1, dz2, dtau = f(0.0, 0.0, 0.0, 0.0)
    assert (dz1, dz2, dtau) == (0.0, 0.0, 1.0)


@pytest.mark.parametrize("field", [
    heavy_ball_field(HeavyBallParams(lam=2.0, gamma=1.0), QUAD),
    nesterov_nsc_field(NesterovNscParams(zeta=2.0, lipschitz_m=2.0), QUAD),
    nesterov_sc_field(NesterovScParams(zeta=1.0, lipschitz_m=2.0, kappa=1.0), QUAD),
    gradient_descent_field(1.0, QUAD),
    triple_momentum_field(TripleMomentumParams(kappa=4.0, lipschitz_m=2.0), QUAD),
])
def test_minimizer_with_zero_velocity_is_an_equilibrium(field):
    for tau in (0.0, 1.0, 7.0):
        dz1, dz2, dtau = field(tau, 0.0, 0.0, tau)
        assert dz1 == 0.0
        assert dz2 == 0.0


# --- closed-loop wrapper -------------------------------------------------------

def test_closed_loop_timer_tracks_flow_time():
    system = as_closed_loop(
        heavy_ball_field(HeavyBallParams(lam=2.0, gamma=1.0), QUAD), QUAD
    )
    arc = solve(system, HybridState(1.0, 0.0, 1, 0.0),
                IntegratorConfig(step=1e-3, event_tol=1e-9, t_max=2.0))
    assert arc.tau[-1] == pytest.approx(arc.t[-1], abs=1e-9)
    assert len(arc.jumps) == 0


def test_closed_loop_perturbation_hook():
    hb = HeavyBallParams(lam=2.0, gamma=1.0)
    with_hook = as_closed_loop(
        heavy_ball_field(hb, QUAD), QUAD, rebuild=lambda g: heavy_ball_field(hb, QUAD, g)
    )
    noise = NoiseProcess(seed=0, sigma=0.1, horizon=1.0)
    assert perturb_gradient(with_hook, noise) is not None

    without_hook = as_closed_loop(heavy_ball_field(hb, QUAD), QUAD)
    with pytest.raises(InvalidParameterError):
        perturb_gradient(without_hook, noise)
