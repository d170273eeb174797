"""Restarting accelerated baselines with timer-driven resets.

Both baselines flow the rescaled accelerated dynamics

    z1' = (2/tau)(z2 - z1),   z2' = -2 c tau grad L(z1),   tau' = 1

on a timer window tau in [T_min, T_max] and periodically reset the timer:

* variant 1 ("hand1"): jump whenever tau is in [T_med, T_max]; the jump keeps
  z and resets tau to T_min.  Carries the objective-gap bound
  L(z1(t,0)) - L* <= B / t^2 valid until the first jump when
  z1(0,0) = z2(0,0) and tau(0) = T_min.
* variant 2 ("hand2", strongly convex): jump at tau >= T_max; the jump also
  collapses the momentum state, z2+ = z1, and carries an exponential bound.

The hybrid state embeds (z1, z2, tau) with the logic mode fixed at q = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .hybrid import HybridState, HybridSystem
from .objective import InvalidParameterError, ObjectiveSpec, Vec


@dataclass(frozen=True)
class Hand1Params:
    """Timer schedule and gain for the restarting baseline (variant 1).

    B = r^2/(2 c1) + T_min^2 (L(z1(0,0)) - L*) for starts inside a ball of
    radius r; the schedule satisfies T_med >= sqrt(B/delta_med) + T_min and
    T_max = T_med + 1.
    """

    c1: float
    t_min: float
    t_med: float
    t_max: float
    r: float
    delta_med: float
    b: float

    def __post_init__(self) -> None:
        for name in ("c1", "t_min", "r", "delta_med"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be positive")
        if not (0 < self.t_min < self.t_med < self.t_max):
            raise InvalidParameterError("schedule must satisfy 0 < T_min < T_med < T_max")
        if self.t_med + 1e-9 < math.sqrt(self.b / self.delta_med) + self.t_min:
            raise InvalidParameterError(
                "schedule must satisfy T_med >= sqrt(B/delta_med) + T_min"
            )


@dataclass(frozen=True)
class Hand2Params:
    """Gain and timer window for the strongly convex restarting baseline."""

    c: float
    t_min: float
    t_max: float

    def __post_init__(self) -> None:
        if self.c <= 0:
            raise InvalidParameterError("c must be positive")
        if not (0 < self.t_min < self.t_max):
            raise InvalidParameterError("window must satisfy 0 < T_min < T_max")

    def validity_ok(self, mu: float) -> bool:
        """Rate-bound validity: 1/(c mu) < T_max^2 - T_min^2."""
        return 1.0 / (self.c * mu) < self.t_max**2 - self.t_min**2

    def rate_constants(self, obj: ObjectiveSpec) -> dict:
        if obj.mu is None:
            raise InvalidParameterError("rate constants require an objective with mu")
        dt = self.t_max - self.t_min
        inv_cmu = 1.0 / (self.c * obj.mu)
        k1 = (inv_cmu + self.t_min**2) / dt**2
        k0 = (inv_cmu + self.t_min**2) / self.t_max**2
        return {
            "delta_t": dt,
            "k1": k1,
            "k0": k0,
            "k_b_tilde": 1.0 - k0,
            "k_a": 0.5 * k1 * obj.lipschitz_m,
        }


def derive_hand1_schedule(
    r: float, c1: float, t_min: float, delta_med: float, l0_minus_lstar: float
) -> Tuple[float, float, float]:
    """Return (B, T_med, T_max) with T_med at its lower bound and T_max = T_med + 1."""
    for name, v in (("r", r), ("c1", c1), ("t_min", t_min), ("delta_med", delta_med)):
        if v <= 0:
            raise InvalidParameterError(f"{name} must be positive")
    if l0_minus_lstar < 0:
        raise InvalidParameterError("l0_minus_lstar must be nonnegative")
    b = r * r / (2.0 * c1) + t_min * t_min * l0_minus_lstar
    t_med = math.sqrt(b / delta_med) + t_min
    return b, t_med, t_med + 1.0


def _restart_flow(gain_of_tau, obj: ObjectiveSpec):
    grad = obj.algorithm_view().grad

    def f(t: float, z1: Vec, z2: Vec, tau: float):
        inv = 2.0 / tau
        return inv * (z2 - z1), -gain_of_tau(tau) * grad(z1), 1.0

    return f


def build_hand1(p: Hand1Params, obj: ObjectiveSpec) -> HybridSystem:
    """Restarting baseline: jump window tau in [T_med, T_max], reset tau only."""
    two_c1 = 2.0 * p.c1
    flow = _restart_flow(lambda tau: two_c1 * tau, obj)
    t_min, t_med, t_max = p.t_min, p.t_med, p.t_max
    tol = 1e-12

    def in_flow_set(t: float, x: HybridState) -> bool:
        return t_min - tol <= x.tau <= t_max + tol

    def in_jump_set(t: float, x: HybridState) -> bool:
        return t_med <= x.tau <= t_max + tol

    def guard_margin(t: float, x: HybridState) -> float:
        return t_med - x.tau  # negative inside the jump window

    def jump_map(x: HybridState) -> HybridState:
        return HybridState(x.z1, x.z2, x.q, t_min)

    return HybridSystem(
        flows={0: flow, 1: flow},
        in_flow_set=in_flow_set,
        in_jump_set=in_jump_set,
        jump_map=jump_map,
        guard_margin=guard_margin,
    )


def hand1_rate_bound(t: float, b: float) -> float:
    """Objective-gap bound B/t^2, valid until the first jump when z1(0,0)=z2(0,0)."""
    if t <= 0:
        raise InvalidParameterError("t must be positive")
    return b / (t * t)


def build_hand2(p: Hand2Params, obj: ObjectiveSpec) -> HybridSystem:
    """Strongly convex restarting baseline: jump at tau >= T_max, z2+ = z1."""
    two_c = 2.0 * p.c
    flow = _restart_flow(lambda tau: two_c * tau, obj)
    t_min, t_max = p.t_min, p.t_max
    tol = 1e-12

    def in_flow_set(t: float, x: HybridState) -> bool:
        return t_min - tol <= x.tau <= t_max + tol

    def in_jump_set(t: float, x: HybridState) -> bool:
        return x.tau >= t_max - tol

    def guard_margin(t: float, x: HybridState) -> float:
        return t_max - x.tau

    def jump_map(x: HybridState) -> HybridState:
        # states are never mutated in place, so sharing z1 is safe
        return HybridState(x.z1, x.z1, x.q, t_min)

    return HybridSystem(
        flows={0: flow, 1: flow},
        in_flow_set=in_flow_set,
        in_jump_set=in_jump_set,
        jump_map=jump_map,
        guard_margin=guard_margin,
    )


def hand2_rate_bound(
    t: float, j: int, p: Hand2Params, obj: ObjectiveSpec, z1_0: Vec
) -> float:
    """Exponential bound k_a |z1(0,0) - z1*|^2 exp(-k_b_tilde alpha_tilde(t+j)).

    alpha_tilde(s) = max(s - DeltaT, 0) / (DeltaT + 1); valid for runs with
    z1(0,0) = z2(0,0) and tau(0) = T_min.
    """
    consts = p.rate_constants(obj)
    dt = consts["delta_t"]
    s = t + j
    alpha_tilde = max(s - dt, 0.0) / (dt + 1.0)
    dist_sq = obj.dist_to_min(z1_0) ** 2
    return consts["k_a"] * dist_sq * math.exp(-consts["k_b_tilde"] * alpha_tilde)
