"""Shared builders for the reference parameter sets used across the suite.

All tuning constants here mirror configs/: the two nonstrongly convex uniting
designs (zeta = 2 and zeta = 1), the united heavy-ball pair, the strongly
convex design, and the restarting-baseline schedules that match them.
"""

import math
import warnings
from pathlib import Path

from hybridopt.algorithms import HeavyBallParams, NesterovNscParams, NesterovScParams
from hybridopt.baselines import Hand1Params, Hand2Params, derive_hand1_schedule
from hybridopt.objective import make_scalar_quadratic
from hybridopt.uniting import UnitingVariant, derive_params

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"

QUAD = make_scalar_quadratic(1.0)

# T_min = (1 + sqrt(7)) / 2 pairs the zeta = 2 restart schedule with the
# accelerated flow's lookahead sign change.
T_MIN_ZETA2 = (1.0 + math.sqrt(7.0)) / 2.0


def nsc_zeta2(obj=QUAD):
    return derive_params(
        UnitingVariant.NesterovNsc, obj,
        eps0=10.0, eps10=5.0, c0=7000.0, c10=6819.676,
        gamma_local=2.0 / 3.0, lambda_local=200.0,
        nsc=NesterovNscParams(zeta=2.0, lipschitz_m=obj.lipschitz_m),
    )


def nsc_zeta1(obj=QUAD):
    return derive_params(
        UnitingVariant.NesterovNsc, obj,
        eps0=10.0, eps10=5.0, c0=320.0, c10=271.584,
        gamma_local=2.0 / 3.0, lambda_local=40.0,
        nsc=NesterovNscParams(zeta=1.0, lipschitz_m=obj.lipschitz_m),
    )


def hbf_pair(obj=QUAD):
    # d10 > d0 here by design; derive_params warns but accepts (d10 < 2 d0).
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return derive_params(
            UnitingVariant.HbfHbf, obj,
            eps0=12.5, eps10=6.3, c0=1200.0, c10=925.0, hat_c0=1201.0,
            gamma_local=0.5, lambda_local=30.0,
            global_hb=HeavyBallParams(lam=0.2, gamma=0.5),
        )


def sc_design(obj=QUAD):
    return derive_params(
        UnitingVariant.NesterovSc, obj,
        eps0=20.0, eps10=15.0, c0=20000.0, c10=8700.0,
        gamma_local=2.0 / 3.0, lambda_local=40.0,
        sc=NesterovScParams(zeta=0.4, lipschitz_m=obj.lipschitz_m, kappa=1.0),
    )


def hand1_zeta2(obj=QUAD, z1_0=50.0):
    b, t_med, t_max = derive_hand1_schedule(
        51.0, 0.5, T_MIN_ZETA2, 50000.0, obj.eval(z1_0) - obj.min_value
    )
    return Hand1Params(c1=0.5, t_min=T_MIN_ZETA2, t_med=t_med, t_max=t_max,
                       r=51.0, delta_med=50000.0, b=b)


def hand2_sc():
    return Hand2Params(c=0.78125, t_min=3.0, t_max=4.3)


def assert_hybrid_time_monotone(arc):
    """Samples must be nondecreasing in (t, j) lexicographic order."""
    for i in range(1, len(arc)):
        prev, cur = arc.time(i - 1), arc.time(i)
        assert prev <= cur, f"hybrid time regressed at sample {i}: {prev} -> {cur}"
