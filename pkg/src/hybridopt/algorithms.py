"""Flow fields for the individual optimization ODEs.

Each algorithm is a second-order flow on (z1, z2) = (position, velocity):

* heavy ball:              z2' = -lambda z2 - gamma grad L(z1)
* accelerated, nonstrongly convex (time-varying damping d_bar and lookahead
  beta_bar driven by the timer tau):
                           z2' = -2 d_bar(tau) z2
                                 - (zeta^2/M) grad L(z1 + beta_bar(tau) z2)
* accelerated, strongly convex (constant d, beta from the condition number):
                           z2' = -2 d z2 - (1/(M zeta^2)) grad L(z1 + beta z2)
* triple momentum (ideal tuning from the condition number)
* gradient descent (first order, z2 unused)

Fields are pure closures over an objective's algorithm-facing view; they never
see the minimizer.  ``as_closed_loop`` wraps a field as a jump-free hybrid
system with tau' = 1, so the timer doubles as ordinary time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

from .hybrid import FlowField, HybridSystem
from .objective import AlgorithmView, InvalidParameterError, ObjectiveSpec, Vec

GradFn = Callable[[float, Vec], Vec]


def _nominal_grad(view: AlgorithmView) -> GradFn:
    g = view.grad
    return lambda t, z1: g(z1)


@dataclass(frozen=True)
class HeavyBallParams:
    """Friction lambda and gravity gamma, both positive."""

    lam: float
    gamma: float

    def __post_init__(self) -> None:
        if self.lam <= 0:
            raise InvalidParameterError("lambda must be positive")
        if self.gamma <= 0:
            raise InvalidParameterError("gamma must be positive")


@dataclass(frozen=True)
class NesterovNscParams:
    """Time-rescaling zeta and gradient Lipschitz constant M."""

    zeta: float
    lipschitz_m: float

    def __post_init__(self) -> None:
        if self.zeta <= 0:
            raise InvalidParameterError("zeta must be positive")
        if self.lipschitz_m <= 0:
            raise InvalidParameterError("lipschitz_m must be positive")


@dataclass(frozen=True)
class NesterovScParams:
    """Strongly convex tuning: d = 1/(sqrt(kappa)+1), beta = (sqrt(kappa)-1)/(sqrt(kappa)+1)."""

    zeta: float
    lipschitz_m: float
    kappa: float

    def __post_init__(self) -> None:
        if self.zeta <= 0:
            raise InvalidParameterError("zeta must be positive")
        if self.lipschitz_m <= 0:
            raise InvalidParameterError("lipschitz_m must be positive")
        if self.kappa < 1:
            raise InvalidParameterError("condition number kappa must be >= 1")

    @property
    def d(self) -> float:
        return 1.0 / (math.sqrt(self.kappa) + 1.0)

    @property
    def beta(self) -> float:
        rk = math.sqrt(self.kappa)
        return (rk - 1.0) / (rk + 1.0)

    @property
    def m_zeta(self) -> float:
        return self.lipschitz_m * self.zeta * self.zeta

    @property
    def rate_a(self) -> float:
        """Exponential rate constant a = d + beta/(2 kappa) = 1/sqrt(kappa) - 1/(2 kappa)."""
        return self.d + self.beta / (2.0 * self.kappa)


@dataclass(frozen=True)
class TripleMomentumParams:
    """Ideal triple-momentum tuning derived from (kappa, M); requires kappa > 1."""

    kappa: float
    lipschitz_m: float

    def __post_init__(self) -> None:
        if self.kappa <= 1:
            raise InvalidParameterError("triple momentum requires kappa > 1")
        if self.lipschitz_m <= 0:
            raise InvalidParameterError("lipschitz_m must be positive")

    @property
    def rho(self) -> float:
        return 1.0 - 1.0 / self.kappa

    @property
    def gamma(self) -> float:
        return (1.0 + self.rho) / self.lipschitz_m

    @property
    def lam(self) -> float:
        r = self.rho
        return r * r / (2.0 - r)

    @property
    def sigma(self) -> float:
        r = self.rho
        return r * r / ((1.0 + r) * (2.0 - r))

    @property
    def delta(self) -> float:
        r = self.rho
        return r * r / (1.0 - r * r)

    @property
    def eta(self) -> float:
        lam = self.lam
        return ((1.0 - lam) / (math.sqrt(self.gamma) * (1.0 + lam))) ** 2


@dataclass(frozen=True)
class RateParams:
    """Heavy-ball rate constants psi = m alpha gamma / lambda, nu = psi (psi - lambda)."""

    m: float
    alpha: float
    gamma: float
    lam: float

    def __post_init__(self) -> None:
        if not (0 < self.m < 1):
            raise InvalidParameterError("m must lie in (0, 1)")
        for name in ("alpha", "gamma", "lam"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be positive")

    @property
    def psi(self) -> float:
        return self.m * self.alpha * self.gamma / self.lam

    @property
    def nu(self) -> float:
        return self.psi * (self.psi - self.lam)


def dbar(t: float) -> float:
    """Vanishing damping coefficient 3/(2(t+2))."""
    if t < 0:
        raise InvalidParameterError("t must be nonnegative")
    return 1.5 / (t + 2.0)


def betabar(t: float) -> float:
    """Lookahead coefficient (t-1)/(t+2); negative for t < 1."""
    if t < 0:
        raise InvalidParameterError("t must be nonnegative")
    return (t - 1.0) / (t + 2.0)


def abar(tau: float) -> float:
    """Lyapunov weight 2/(tau+2); equals 1 at tau = 0."""
    if tau < 0:
        raise InvalidParameterError("tau must be nonnegative")
    return 2.0 / (tau + 2.0)


def heavy_ball_field(
    p: HeavyBallParams, obj: ObjectiveSpec, grad: Optional[GradFn] = None
) -> FlowField:
    """z1' = z2, z2' = -lambda z2 - gamma grad L(z1); tau' = 1."""
    g = grad if grad is not None else _nominal_grad(obj.algorithm_view())
    lam, gamma = p.lam, p.gamma

    def f(t: float, z1: Vec, z2: Vec, tau: float):
        return z2, -lam * z2 - gamma * g(t, z1), 1.0

    return f


def nesterov_nsc_field(
    p: NesterovNscParams, obj: ObjectiveSpec, grad: Optional[GradFn] = None
) -> FlowField:
    """z1' = z2, z2' = -2 d_bar(tau) z2 - (zeta^2/M) grad L(z1 + beta_bar(tau) z2)."""
    g = grad if grad is not None else _nominal_grad(obj.algorithm_view())
    gain = p.zeta * p.zeta / p.lipschitz_m

    def f(t: float, z1: Vec, z2: Vec, tau: float):
        inv = 1.0 / (tau + 2.0)
        return (
            z2,
            -3.0 * inv * z2 - gain * g(t, z1 + (tau - 1.0) * inv * z2),
            1.0,
        )

    return f


def nesterov_sc_field(
    p: NesterovScParams, obj: ObjectiveSpec, grad: Optional[GradFn] = None
) -> FlowField:
    """z1' = z2, z2' = -2 d z2 - (1/(M zeta^2)) grad L(z1 + beta z2)."""
    if obj.mu is None:
        raise InvalidParameterError("strongly convex field requires an objective with mu")
    g = grad if grad is not None else _nominal_grad(obj.algorithm_view())
    two_d = 2.0 * p.d
    beta = p.beta
    gain = 1.0 / p.m_zeta

    def f(t: float, z1: Vec, z2: Vec, tau: float):
        return z2, -two_d * z2 - gain * g(t, z1 + beta * z2), 1.0

    return f


def gradient_descent_field(
    gamma: float, obj: ObjectiveSpec, grad: Optional[GradFn] = None
) -> FlowField:
    """First-order flow z1' = -gamma grad L(z1); z2 is carried along as zero."""
    if gamma <= 0:
        raise InvalidParameterError("gamma must be positive")
    g = grad if grad is not None else _nominal_grad(obj.algorithm_view())

    def f(t: float, z1: Vec, z2: Vec, tau: float):
        return -gamma * g(t, z1), 0.0 * z2, 1.0

    return f


def triple_momentum_field(
    p: TripleMomentumParams, obj: ObjectiveSpec, grad: Optional[GradFn] = None
) -> FlowField:
    """z1' = z2, z2' = -2 sqrt(eta) z2 - (1 + sqrt(eta gamma)) grad L(z1 + sqrt(gamma) sigma z2)."""
    g = grad if grad is not None else _nominal_grad(obj.algorithm_view())
    damping = 2.0 * math.sqrt(p.eta)
    gain = 1.0 + math.sqrt(p.eta * p.gamma)
    look = math.sqrt(p.gamma) * p.sigma

    def f(t: float, z1: Vec, z2: Vec, tau: float):
        return z2, -damping * z2 - gain * g(t, z1 + look * z2), 1.0

    return f


def as_closed_loop(
    field_fn: FlowField,
    obj: ObjectiveSpec,
    rebuild: Optional[Callable[[GradFn], FlowField]] = None,
) -> HybridSystem:
    """Wrap a flow field as a jump-free hybrid system (flow set everywhere).

    The timer integrates tau' = 1, so a run started at tau = 0 has tau = t;
    time-varying fields read the timer.  When ``rebuild`` is given (a factory
    producing the field from a gradient function), the wrapped system supports
    gradient-noise perturbation.
    """
    perturbed = None
    if rebuild is not None:
        def perturbed(noise):
            base = obj.algorithm_view().grad
            noisy = _noisy_grad(base, noise)
            return as_closed_loop(rebuild(noisy), obj, rebuild=None)

    return HybridSystem(flows={0: field_fn, 1: field_fn}, perturbed=perturbed)


def _noisy_grad(base: Callable[[Vec], Vec], noise) -> GradFn:
    def g(t: float, z1: Vec) -> Vec:
        return base(z1) + noise.value(t)

    return g
