"""Generic hybrid-system representation and fixed-step solver.

A hybrid system has data (C, F, D, G): a flow set with a flow field, and a
jump set with a jump map.  Solutions are parameterized by hybrid time (t, j),
elapsed flow time and jump count.  The solver uses classical RK4 with a fixed
step inside flows, bisection to localize entry into the jump set, and strict
jump priority: whenever the state is in D, the jump is taken.

Performance note: the hot loop works on raw state components (floats for
dimension 1, 1-D numpy arrays otherwise) rather than state objects, so that
multi-million-step runs stay in the tens of seconds in pure Python.  Flow
fields receive ``(t, z1, z2, tau)`` where t is accumulated flow time, and
return ``(dz1, dz2, dtau)``; the logic mode q is constant during flow and
selects the field.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .objective import InvalidParameterError, Vec
from .objective import sqnorm as _sqnorm

FlowField = Callable[[float, Vec, Vec, float], Tuple[Vec, Vec, float]]


class NumericBlowupError(RuntimeError):
    """Integration produced a non-finite state."""

    def __init__(self, t_estimate: float, state) -> None:
        super().__init__(f"non-finite state near t = {t_estimate}")
        self.t_estimate = t_estimate
        self.state = state


class NoSolutionError(RuntimeError):
    """The initial state lies in neither the flow set nor the jump set."""


class Termination(str, Enum):
    TMaxReached = "TMaxReached"
    JMaxReached = "JMaxReached"
    LeftCAndD = "LeftCAndD"
    Settled = "Settled"


@dataclass(frozen=True)
class HybridState:
    """x = (z1, z2, q, tau): position, velocity, logic mode, timer."""

    z1: Vec
    z2: Vec
    q: int
    tau: float

    def __post_init__(self) -> None:
        if self.q not in (0, 1):
            raise InvalidParameterError("q must be 0 or 1")
        if self.tau < 0:
            raise InvalidParameterError("tau must be nonnegative")


@dataclass(frozen=True, order=True)
class HybridTime:
    """(t, j): flow time and jump count; ordered lexicographically."""

    t: float
    j: int


@dataclass(frozen=True)
class SettleStop:
    """Early-stop rule: terminate once |z1 - center| <= radius.

    This is a first-crossing stop for runs where only the approach matters;
    settling times reported by analysis are always measured on the full arc
    with the last-crossing rule.
    """

    radius: float
    center: Vec = 0.0


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-4
    event_tol: float = 1e-9
    t_max: float = 10.0
    j_max: int = 10
    settle_stop: Optional[SettleStop] = None
    record_every: int = 10

    def __post_init__(self) -> None:
        if self.step <= 0:
            raise InvalidParameterError("step must be positive")
        if not (0 < self.event_tol < self.step):
            raise InvalidParameterError("event_tol must lie in (0, step)")
        if self.t_max <= 0:
            raise InvalidParameterError("t_max must be positive")
        if self.j_max < 0:
            raise InvalidParameterError("j_max must be nonnegative")
        if self.record_every < 1:
            raise InvalidParameterError("record_every must be >= 1")


@dataclass(frozen=True)
class HybridSystem:
    """Data (C, F, D, G) with mode-indexed flow fields.

    ``flows`` maps each logic mode q to its flow field.  ``in_flow_set`` and
    ``in_jump_set`` take ``(t, x)`` with t the accumulated flow time (the
    fields and predicates of a noise-perturbed system read the measurement
    noise at t); ``None`` means "everywhere" / "empty" respectively.
    ``guard_margin`` is an optional signed distance to the jump set, negative
    inside D, used by event localization when available.  ``perturbed`` is an
    optional factory rebuilding the system with additive gradient noise.
    """

    flows: Dict[int, FlowField]
    in_flow_set: Optional[Callable[[float, HybridState], bool]] = None
    in_jump_set: Optional[Callable[[float, HybridState], bool]] = None
    jump_map: Optional[Callable[[HybridState], HybridState]] = None
    guard_margin: Optional[Callable[[float, HybridState], float]] = None
    perturbed: Optional[Callable[["object"], "HybridSystem"]] = None

    def flow_field(self, x: HybridState, t: float = 0.0) -> Tuple[Vec, Vec, float, float]:
        """Spec-shaped view: derivative of (z1, z2, q, tau) at a state."""
        dz1, dz2, dtau = self.flows[x.q](t, x.z1, x.z2, x.tau)
        return dz1, dz2, 0.0, dtau

    def in_c(self, x: HybridState, t: float = 0.0) -> bool:
        return self.in_flow_set is None or self.in_flow_set(t, x)

    def in_d(self, x: HybridState, t: float = 0.0) -> bool:
        return self.in_jump_set is not None and self.in_jump_set(t, x)


@dataclass(frozen=True)
class JumpRecord:
    t: float
    j_before: int
    state_before: HybridState
    state_after: HybridState


@dataclass(frozen=True)
class Monitor:
    """Named per-sample callback; values become CSV columns."""

    name: str
    fn: Callable[[float, int, HybridState], float]


def _is_finite(v: Vec) -> bool:
    if isinstance(v, np.ndarray):
        return bool(np.isfinite(v).all())
    return math.isfinite(v)


def _rk4(
    f: FlowField, t: float, z1: Vec, z2: Vec, tau: float, h: float
) -> Tuple[Vec, Vec, float]:
    """One classical RK4 step of size h for (z1, z2, tau); q held constant."""
    a1, b1, c1 = f(t, z1, z2, tau)
    h2 = 0.5 * h
    th = t + h2
    a2, b2, c2 = f(th, z1 + h2 * a1, z2 + h2 * b1, tau + h2 * c1)
    a3, b3, c3 = f(th, z1 + h2 * a2, z2 + h2 * b2, tau + h2 * c2)
    a4, b4, c4 = f(t + h, z1 + h * a3, z2 + h * b3, tau + h * c3)
    s = h / 6.0
    return (
        z1 + s * (a1 + 2.0 * (a2 + a3) + a4),
        z2 + s * (b1 + 2.0 * (b2 + b3) + b4),
        tau + s * (c1 + 2.0 * (c2 + c3) + c4),
    )


def rk4_step(field: FlowField, x: HybridState, h: float, t: float = 0.0) -> HybridState:
    """Classical RK4 update of (z1, z2, tau); q is held constant during flow."""
    if h <= 0:
        raise InvalidParameterError("step h must be positive")
    z1, z2, tau = _rk4(field, t, x.z1, x.z2, x.tau, h)
    if not (_is_finite(z1) and _is_finite(z2) and math.isfinite(tau)):
        raise NumericBlowupError(t + h, HybridState(x.z1, x.z2, x.q, x.tau))
    return HybridState(z1, z2, x.q, tau)


def locate_jump(
    system: HybridSystem,
    x_inside_c: HybridState,
    x_entered_d: HybridState,
    h: float,
    tol: float,
    t0: float = 0.0,
) -> Tuple[float, HybridState]:
    """Bisect the step interval for the first entry into the jump set.

    Partial RK4 steps are re-integrated from the step start until the time
    bracket is narrower than tol; returns the in-D endpoint of the bracket.
    """
    if tol >= h:
        raise InvalidParameterError("tolerance must be smaller than the step")
    if system.in_d(x_inside_c, t0):
        return 0.0, x_inside_c
    f = system.flows[x_inside_c.q]
    z1, z2, q, tau = x_inside_c.z1, x_inside_c.z2, x_inside_c.q, x_inside_c.tau
    lo, hi = 0.0, h
    x_hi = x_entered_d
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        mz1, mz2, mtau = _rk4(f, t0, z1, z2, tau, mid)
        x_mid = HybridState(mz1, mz2, q, mtau)
        if system.in_d(x_mid, t0 + mid):
            hi, x_hi = mid, x_mid
        else:
            lo = mid
    return hi, x_hi


class SolutionArc:
    """A solved trajectory stored column-wise over hybrid time.

    Columns: t, j, q, tau (1-D float arrays) and z1, z2 (shape (N, n)).
    ``jumps`` lists every jump with before/after states; ``termination``
    carries the stop reason.  Recording is decimated (every k-th flow step)
    but always includes the initial sample, both sides of every jump, jump-set
    entry points, and the final sample.
    """

    def __init__(
        self,
        t: np.ndarray,
        j: np.ndarray,
        q: np.ndarray,
        tau: np.ndarray,
        z1: np.ndarray,
        z2: np.ndarray,
        jumps: List[JumpRecord],
        termination: Termination,
        monitor_values: Optional[Dict[str, np.ndarray]] = None,
    ) -> None:
        self.t = t
        self.j = j
        self.q = q
        self.tau = tau
        self.z1 = z1
        self.z2 = z2
        self.jumps = jumps
        self.termination = termination
        self.monitor_values = monitor_values or {}

    @property
    def dim(self) -> int:
        return self.z1.shape[1]

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> HybridState:
        n = self.dim
        z1 = float(self.z1[i, 0]) if n == 1 else self.z1[i].copy()
        z2 = float(self.z2[i, 0]) if n == 1 else self.z2[i].copy()
        return HybridState(z1, z2, int(self.q[i]), float(self.tau[i]))

    def time(self, i: int) -> HybridTime:
        return HybridTime(float(self.t[i]), int(self.j[i]))

    def samples(self) -> Iterator[Tuple[HybridTime, HybridState]]:
        for i in range(len(self.t)):
            yield self.time(i), self.state(i)

    @property
    def final_state(self) -> HybridState:
        return self.state(len(self.t) - 1)

    @property
    def final_time(self) -> HybridTime:
        return self.time(len(self.t) - 1)

    def csv_header(self) -> List[str]:
        n = self.dim
        cols = ["t", "j", "q", "tau"]
        cols += [f"z1_{i}" for i in range(n)]
        cols += [f"z2_{i}" for i in range(n)]
        cols += sorted(self.monitor_values)
        return cols

    def write_csv(self, path) -> None:
        mon_names = sorted(self.monitor_values)
        mon_cols = [self.monitor_values[m] for m in mon_names]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.csv_header())
            for i in range(len(self.t)):
                row = [repr(float(self.t[i])), int(self.j[i]), int(self.q[i]),
                       repr(float(self.tau[i]))]
                row += [repr(float(v)) for v in self.z1[i]]
                row += [repr(float(v)) for v in self.z2[i]]
                row += [repr(float(c[i])) for c in mon_cols]
                w.writerow(row)


class _Recorder:
    def __init__(self, dim: int, monitors: Sequence[Monitor]) -> None:
        self.dim = dim
        self.monitors = list(monitors)
        self.t: List[float] = []
        self.j: List[int] = []
        self.q: List[int] = []
        self.tau: List[float] = []
        self.z1: List = []
        self.z2: List = []
        self.mon: Dict[str, List[float]] = {m.name: [] for m in self.monitors}
        self._last_key: Optional[Tuple[float, int]] = None

    def record(self, t: float, j: int, q: int, z1: Vec, z2: Vec, tau: float) -> None:
        key = (t, j)
        if key == self._last_key:
            return
        self._last_key = key
        self.t.append(t)
        self.j.append(j)
        self.q.append(q)
        self.tau.append(tau)
        if self.dim == 1:
            self.z1.append(z1)
            self.z2.append(z2)
        else:
            self.z1.append(np.array(z1, dtype=float))
            self.z2.append(np.array(z2, dtype=float))
        if self.monitors:
            x = HybridState(z1, z2, q, tau)
            for m in self.monitors:
                self.mon[m.name].append(m.fn(t, j, x))

    def finalize(self, jumps: List[JumpRecord], termination: Termination) -> SolutionArc:
        n = len(self.t)
        if self.dim == 1:
            z1 = np.asarray(self.z1, dtype=float).reshape(n, 1)
            z2 = np.asarray(self.z2, dtype=float).reshape(n, 1)
        else:
            z1 = np.asarray(self.z1, dtype=float)
            z2 = np.asarray(self.z2, dtype=float)
        return SolutionArc(
            t=np.asarray(self.t, dtype=float),
            j=np.asarray(self.j, dtype=np.int64),
            q=np.asarray(self.q, dtype=np.int64),
            tau=np.asarray(self.tau, dtype=float),
            z1=z1,
            z2=z2,
            jumps=jumps,
            termination=termination,
            monitor_values={k: np.asarray(v, dtype=float) for k, v in self.mon.items()},
        )


def solve(
    system: HybridSystem,
    x0: HybridState,
    cfg: IntegratorConfig,
    monitors: Optional[Sequence[Monitor]] = None,
) -> SolutionArc:
    """Integrate a hybrid system from x0 with jump-priority semantics.

    At each accepted sample the jump set is checked first; while the state is
    in D (and j < j_max) the jump map is applied.  Flow steps that enter D are
    cut at the localized entry time; flow steps that leave C without entering
    D terminate the arc with LeftCAndD at the bisected exit point.
    """
    monitors = monitors or []
    h = cfg.step
    t = 0.0
    j = 0
    z1, z2, q, tau = x0.z1, x0.z2, x0.q, x0.tau

    def make_state() -> HybridState:
        return HybridState(z1, z2, q, tau)

    x = make_state()
    if not (system.in_c(x, t) or system.in_d(x, t)):
        raise NoSolutionError("initial state lies outside both the flow and jump sets")

    rec = _Recorder(1 if not isinstance(z1, np.ndarray) else len(z1), monitors)
    jumps: List[JumpRecord] = []
    rec.record(t, j, q, z1, z2, tau)

    settle = cfg.settle_stop
    if settle is not None:
        s_center = settle.center
        s_radius = settle.radius

    has_jump_set = system.in_jump_set is not None
    in_jump_set = system.in_jump_set
    in_flow_set = system.in_flow_set

    termination: Optional[Termination] = None
    # Base time and step count of the current uninterrupted flow segment;
    # t = seg_t0 + k*h avoids accumulation drift over millions of steps.
    seg_t0 = t
    seg_k = 0

    while termination is None:
        # Jump-priority: take jumps while the state is in D.
        if has_jump_set and in_jump_set(t, make_state()):
            jumped = False
            while True:
                if j >= cfg.j_max:
                    termination = Termination.JMaxReached
                    break
                before = make_state()
                rec.record(t, j, q, z1, z2, tau)
                after = system.jump_map(before)
                jumps.append(JumpRecord(t=t, j_before=j, state_before=before,
                                        state_after=after))
                z1, z2, q, tau = after.z1, after.z2, after.q, after.tau
                j += 1
                jumped = True
                rec.record(t, j, q, z1, z2, tau)
                if not in_jump_set(t, make_state()):
                    break
            if termination is not None:
                break
            if jumped:
                seg_t0, seg_k = t, 0

        if t >= cfg.t_max - 1e-15 * max(1.0, cfg.t_max):
            termination = Termination.TMaxReached
            break

        step = min(h, cfg.t_max - t)
        f = system.flows[q]
        n_z1, n_z2, n_tau = _rk4(f, t, z1, z2, tau, step)
        t_new = seg_t0 + (seg_k + 1) * h if step == h else cfg.t_max

        x_new = HybridState(n_z1, n_z2, q, max(n_tau, 0.0))
        if has_jump_set and in_jump_set(t_new, x_new):
            # Entered the jump set during the step: localize the entry.
            tol = min(cfg.event_tol, 0.5 * step)
            t_off, x_entry = locate_jump(system, make_state(), x_new, step, tol, t0=t)
            t = t + t_off
            z1, z2, tau = x_entry.z1, x_entry.z2, x_entry.tau
            rec.record(t, j, q, z1, z2, tau)
            seg_t0, seg_k = t, 0
            continue

        if in_flow_set is not None and not in_flow_set(t_new, x_new):
            # Left C without entering D: bisect to the boundary and stop.
            lo, hi = 0.0, step
            best = make_state()
            while hi - lo > min(cfg.event_tol, 0.5 * step):
                mid = 0.5 * (lo + hi)
                m_z1, m_z2, m_tau = _rk4(f, t, z1, z2, tau, mid)
                x_mid = HybridState(m_z1, m_z2, q, max(m_tau, 0.0))
                if in_flow_set(t + mid, x_mid) or (
                    has_jump_set and in_jump_set(t + mid, x_mid)
                ):
                    lo, best = mid, x_mid
                else:
                    hi = mid
            t = t + lo
            z1, z2, tau = best.z1, best.z2, best.tau
            if has_jump_set and in_jump_set(t, make_state()):
                rec.record(t, j, q, z1, z2, tau)
                seg_t0, seg_k = t, 0
                continue
            rec.record(t, j, q, z1, z2, tau)
            termination = Termination.LeftCAndD
            break

        # Accept the flow step.
        t = t_new
        z1, z2, tau = n_z1, n_z2, n_tau
        seg_k += 1
        if seg_k % cfg.record_every == 0:
            if not (_is_finite(z1) and _is_finite(z2)):
                raise NumericBlowupError(t, make_state())
            rec.record(t, j, q, z1, z2, tau)
        if settle is not None:
            d = z1 - s_center
            if _sqnorm(d) <= s_radius * s_radius:
                rec.record(t, j, q, z1, z2, tau)
                termination = Termination.Settled
                break

    rec.record(t, j, q, z1, z2, tau)
    if not (_is_finite(z1) and _is_finite(z2)):
        raise NumericBlowupError(t, make_state())
    return rec.finalize(jumps, termination)
