"""Lyapunov evaluators, rate envelopes, settling measurement, noise harness.

Everything here is measurement-side: it may read the objective's minimizer,
which the algorithms themselves never see.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .algorithms import abar
from .hybrid import HybridSystem, SolutionArc
from .objective import InvalidParameterError, ObjectiveSpec, Vec, sqnorm, vnorm


class NotSettled:
    """Sentinel: the arc never permanently enters the settling ball."""

    _instance: Optional["NotSettled"] = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NotSettled"


NOT_SETTLED = NotSettled()


def V0(obj: ObjectiveSpec, gamma: float, z: Tuple[Vec, Vec]) -> float:
    """Heavy-ball Lyapunov function gamma (L - L*) + 0.5 |z2|^2."""
    z1, z2 = z
    return gamma * (obj.eval(z1) - obj.min_value) + 0.5 * sqnorm(z2)


def V1(obj: ObjectiveSpec, zeta: float, z: Tuple[Vec, Vec], tau: float) -> float:
    """Accelerated-flow Lyapunov function.

    0.5 |a_bar(tau)(z1 - z1*) + z2|^2 + (zeta^2/M)(L - L*), a_bar = 2/(tau+2).
    """
    z1, z2 = z
    a = abar(tau)
    mix = a * (z1 - obj.minimizer) + z2
    return 0.5 * sqnorm(mix) + (zeta * zeta / obj.lipschitz_m) * (
        obj.eval(z1) - obj.min_value
    )


def V_alt(
    obj: ObjectiveSpec, gamma: float, psi: float, nu: float, z: Tuple[Vec, Vec]
) -> float:
    """Tilted heavy-ball Lyapunov function used for the exponential rate.

    gamma (L - L*) + 0.5 |psi (z1 - z1*) + z2|^2 + (nu/2) |z1 - z1*|^2,
    with psi = m alpha gamma / lambda and nu = psi (psi - lambda) < 0.
    """
    z1, z2 = z
    d = z1 - obj.minimizer
    return (
        gamma * (obj.eval(z1) - obj.min_value)
        + 0.5 * sqnorm(psi * d + z2)
        + 0.5 * nu * sqnorm(d)
    )


def distances_to_min(arc: SolutionArc, obj: ObjectiveSpec) -> np.ndarray:
    """Per-sample |z1 - z1*| as a vector."""
    zstar = np.atleast_1d(np.asarray(obj.minimizer, dtype=float))
    diff = arc.z1 - zstar[None, :]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def gaps(arc: SolutionArc, obj: ObjectiveSpec) -> np.ndarray:
    """Per-sample objective gap L(z1) - L*."""
    n = arc.dim
    out = np.empty(len(arc))
    for i in range(len(arc)):
        z1 = float(arc.z1[i, 0]) if n == 1 else arc.z1[i]
        out[i] = obj.eval(z1) - obj.min_value
    return out


def settling_time(
    arc: SolutionArc, obj: ObjectiveSpec, fraction: float
) -> Union[float, NotSettled]:
    """Last-crossing settling time at the given fraction of initial distance.

    Returns the smallest sampled t_s such that |z1(t,j) - z1*| stays within
    fraction * |z1(0,0) - z1*| for every sample with t >= t_s, or NotSettled.
    An arc starting at the minimizer settles at 0.
    """
    if not (0 < fraction < 1):
        raise InvalidParameterError("fraction must lie in (0, 1)")
    if len(arc) == 0:
        raise InvalidParameterError("arc has no samples")
    dist = distances_to_min(arc, obj)
    if dist[0] == 0.0:
        return 0.0
    threshold = fraction * dist[0]
    outside = dist > threshold
    if outside[-1]:
        return NOT_SETTLED
    bad = np.nonzero(outside)[0]
    if bad.size == 0:
        return float(arc.t[0])
    return float(arc.t[bad[-1] + 1])


def percent_improvement(t_other: float, t_h: float) -> float:
    """((t_other - t_h) / t_other) * 100."""
    if t_other <= 0:
        raise InvalidParameterError("t_other must be positive")
    if t_h < 0:
        raise InvalidParameterError("t_h must be nonnegative")
    return (t_other - t_h) / t_other * 100.0


def nesterov_envelope_constant(zeta: float, lipschitz_m: float) -> float:
    """c = (1 + zeta^2) exp(sqrt(13/4 + zeta^4 / M))."""
    return (1.0 + zeta * zeta) * math.exp(
        math.sqrt(13.0 / 4.0 + zeta**4 / lipschitz_m)
    )


def nesterov_envelope(
    t: float, zeta: float, lipschitz_m: float, z1_0: Vec, z2_0: Vec, z1_star: Vec
) -> float:
    """Analytic bound on (zeta^2/M)(L(z1(t)) - L*) for t >= 1.

    (9 c / (t+2)^2) (|z1(0) - z1*|^2 + |z2(0)|^2) with the constant above.
    """
    if t < 1:
        raise InvalidParameterError("the envelope applies for t >= 1")
    c = nesterov_envelope_constant(zeta, lipschitz_m)
    r0 = sqnorm(z1_0 - z1_star) + sqnorm(z2_0)
    return 9.0 * c / ((t + 2.0) ** 2) * r0


@dataclass(frozen=True)
class RateEnvelope:
    """Constants for the segment-wise uniting rate check.

    ``kind`` picks the global-segment envelope: "nsc" applies the 9c/(t+2)^2
    family to the objective gap, "sc" the exponential exp(-a t) family.
    ``psi_slope`` is the asserted local log-decay rate: (1-m) psi for the
    accelerated variants, psi/2 for the united heavy-ball pair.
    """

    kind: str
    zeta: float = 1.0
    lipschitz_m: float = 1.0
    psi_slope: float = 0.0
    sc_rate_a: float = 0.0


@dataclass
class SegmentCheck:
    q: int
    t_start: float
    t_end: float
    passed: bool
    detail: str


@dataclass
class EnvelopeReport:
    segments: List[SegmentCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.segments)


def _fit_log_slope(t: np.ndarray, values: np.ndarray) -> Optional[float]:
    """Least-squares slope of log(values) over t, ignoring the numerical floor."""
    mask = values > 1e-13
    if mask.sum() < 10:
        return None
    tt = t[mask]
    vv = np.log(values[mask])
    if tt[-1] - tt[0] <= 0:
        return None
    return float(np.polyfit(tt, vv, 1)[0])


def uniting_envelope(
    arc: SolutionArc, obj: ObjectiveSpec, rate: RateEnvelope, slack: float = 0.1
) -> EnvelopeReport:
    """Segment-wise rate check for a solved uniting arc.

    Global (q = 1) segments: the analytic envelope must dominate the measured
    gap at every sample with segment time >= 1 ("nsc") or the fitted log-slope
    of the gap must reach -a (1 - slack) ("sc").  Local (q = 0) segments: the
    fitted log-slope of the gap must be <= -psi_slope (1 - slack).  Envelope
    prefactors are taken from the segment's initial state; only decay rates
    and envelope shapes are asserted.
    """
    if len(arc.jumps) > 2:
        raise InvalidParameterError("uniting arcs jump at most twice")
    report = EnvelopeReport()
    g = gaps(arc, obj)
    j_values = np.unique(arc.j)
    for jv in j_values:
        idx = np.nonzero(arc.j == jv)[0]
        if idx.size < 2:
            continue
        q = int(arc.q[idx[0]])
        t = arc.t[idx]
        seg_gap = g[idx]
        t0, t1 = float(t[0]), float(t[-1])
        if q == 1:
            if rate.kind == "nsc":
                # segment-local time: the global leg runs with tau from 0
                ts = t - t0
                mask = ts >= 1.0
                if not mask.any():
                    report.segments.append(
                        SegmentCheck(q, t0, t1, True, "segment shorter than 1 s; vacuous")
                    )
                    continue
                n0 = arc.dim
                z1_0 = float(arc.z1[idx[0], 0]) if n0 == 1 else arc.z1[idx[0]]
                z2_0 = float(arc.z2[idx[0], 0]) if n0 == 1 else arc.z2[idx[0]]
                scale = rate.zeta**2 / rate.lipschitz_m
                bad = 0
                worst = 0.0
                for k in np.nonzero(mask)[0]:
                    env = nesterov_envelope(
                        float(ts[k]), rate.zeta, rate.lipschitz_m, z1_0, z2_0,
                        obj.minimizer,
                    )
                    measured = scale * seg_gap[k]
                    if measured > env * (1.0 + 1e-9):
                        bad += 1
                        worst = max(worst, measured - env)
                ok = bad == 0
                report.segments.append(
                    SegmentCheck(q, t0, t1, ok,
                                 f"envelope violations: {bad} (worst excess {worst:g})")
                )
            else:
                slope = _fit_log_slope(t - t0, seg_gap)
                target = -rate.sc_rate_a * (1.0 - slack)
                ok = slope is not None and slope <= target
                report.segments.append(
                    SegmentCheck(q, t0, t1, ok, f"fitted slope {slope} vs {target}")
                )
        else:
            slope = _fit_log_slope(t - t0, seg_gap)
            target = -rate.psi_slope * (1.0 - slack)
            if slope is None:
                # segment already at the numerical floor: nothing to assert
                report.segments.append(
                    SegmentCheck(q, t0, t1, True, "gap at numerical floor; vacuous")
                )
            else:
                ok = slope <= target
                report.segments.append(
                    SegmentCheck(q, t0, t1, ok, f"fitted slope {slope} vs {target}")
                )
    return report


class NoiseProcess:
    """Piecewise-linear interpolation of i.i.d. Gaussian grid draws.

    Draws are taken at t = 0, grid, 2 grid, ... up to the horizon; evaluation
    between grid points interpolates linearly, and queries beyond the horizon
    clamp to the last draw.  Deterministic given (seed, sigma, grid, dim).
    """

    def __init__(
        self,
        seed: int,
        sigma: float,
        horizon: float,
        grid: float = 0.01,
        dim: int = 1,
    ) -> None:
        if sigma < 0:
            raise InvalidParameterError("sigma must be nonnegative")
        if grid <= 0 or horizon <= 0:
            raise InvalidParameterError("grid and horizon must be positive")
        self.seed = seed
        self.sigma = sigma
        self.grid = grid
        self.horizon = horizon
        self.dim = dim
        n = int(math.ceil(horizon / grid)) + 2
        if sigma == 0.0:
            self._draws = None
            self._scalar = dim == 1
            self._n = n
            return
        rng = np.random.default_rng(seed)
        draws = rng.normal(0.0, sigma, size=(n, dim))
        self._scalar = dim == 1
        if self._scalar:
            self._draws = draws[:, 0].tolist()  # plain floats keep the hot path fast
        else:
            self._draws = draws
        self._n = n

    def value(self, t: float):
        """Noise sample at accumulated flow time t (float or dim-vector)."""
        if self._draws is None:
            return 0.0 if self._scalar else np.zeros(self.dim)
        if t <= 0.0:
            return self._draws[0]
        x = t / self.grid
        i = int(x)
        if i >= self._n - 2:
            return self._draws[self._n - 1]
        frac = x - i
        lo = self._draws[i]
        hi = self._draws[i + 1]
        return lo + (hi - lo) * frac


def perturb_gradient(system: HybridSystem, noise: NoiseProcess) -> HybridSystem:
    """Rebuild a system so every gradient evaluation sees additive noise.

    The noise is indexed by the solve's accumulated flow time (jumps do not
    reset it); jump maps are untouched.  Requires a system built by a factory
    that registered a ``perturbed`` hook.
    """
    if system.perturbed is None:
        raise InvalidParameterError(
            "system does not support gradient perturbation (no perturbed hook)"
        )
    return system.perturbed(noise)


def tail_limsup(
    arc: SolutionArc, obj: ObjectiveSpec, tail_fraction: float = 0.2
) -> Tuple[float, float]:
    """(max |z1 - z1*|, max L - L*) over the last fraction of the arc's span."""
    if not (0 < tail_fraction <= 1):
        raise InvalidParameterError("tail_fraction must lie in (0, 1]")
    t_end = float(arc.t[-1])
    t_cut = t_end * (1.0 - tail_fraction)
    idx = np.nonzero(arc.t >= t_cut)[0]
    dist = distances_to_min(arc, obj)[idx]
    g = gaps(arc, obj)[idx]
    return float(dist.max()), float(g.max())
