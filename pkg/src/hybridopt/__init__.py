"""Hybrid-systems optimization lab.

Continuous-time optimization flows (heavy ball, accelerated gradient in both
nonstrongly and strongly convex tunings, triple momentum), a supervisor that
unites a global accelerated flow with a local heavy ball flow through
hysteresis switching, restarting baselines, and the measurement tooling
(Lyapunov monitors, rate envelopes, settling times, gradient-noise harness)
used to compare them.
"""

from .objective import (
    AlgorithmView,
    InvalidParameterError,
    ObjectiveSpec,
    check_gradient_fd,
    make_diagonal_quadratic,
    make_objective,
    make_scalar_quadratic,
    make_shifted_quadratic,
    suboptimality_radius,
)
from .hybrid import (
    HybridState,
    HybridSystem,
    HybridTime,
    IntegratorConfig,
    Monitor,
    NoSolutionError,
    NumericBlowupError,
    SettleStop,
    SolutionArc,
    Termination,
    locate_jump,
    rk4_step,
    solve,
)
from .algorithms import (
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
from .uniting import (
    HysteresisDesignError,
    UnitingParams,
    UnitingVariant,
    build_uniting_system,
    derive_params,
    in_T01,
    in_T10,
    in_U0,
    validate_hysteresis,
)
from .baselines import (
    Hand1Params,
    Hand2Params,
    build_hand1,
    build_hand2,
    derive_hand1_schedule,
    hand1_rate_bound,
    hand2_rate_bound,
)
from .analysis import (
    NOT_SETTLED,
    NoiseProcess,
    NotSettled,
    RateEnvelope,
    V0,
    V1,
    V_alt,
    nesterov_envelope,
    nesterov_envelope_constant,
    percent_improvement,
    perturb_gradient,
    settling_time,
    tail_limsup,
    uniting_envelope,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
