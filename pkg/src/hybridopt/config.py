"""Experiment configuration: TOML schema and run builders.

A config file has an ``[objective]`` table, optional ``[integrator]`` and
``[measure]`` tables, and a list of ``[[runs]]``, each naming an algorithm
with its parameters and initial condition.  Optional ``[sweep]`` and
``[noise]`` tables drive the comparison sweep and the noise harness.  See
``configs/`` for worked examples of every experiment.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Any, Dict, List, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .algorithms import (
    HeavyBallParams,
    NesterovNscParams,
    NesterovScParams,
    TripleMomentumParams,
    as_closed_loop,
    gradient_descent_field,
    heavy_ball_field,
    nesterov_nsc_field,
    nesterov_sc_field,
    triple_momentum_field,
)
from .baselines import (
    Hand1Params,
    Hand2Params,
    build_hand1,
    build_hand2,
    derive_hand1_schedule,
)
from .hybrid import HybridState, HybridSystem, IntegratorConfig
from .objective import InvalidParameterError, ObjectiveSpec, as_vec, make_objective
from .uniting import UnitingParams, UnitingVariant, build_uniting_system, derive_params


class ConfigError(ValueError):
    """A config file is missing or malformed; the message names the field."""


UNITING_ALGORITHMS = {
    "uniting_nesterov_nsc": UnitingVariant.NesterovNsc,
    "uniting_nesterov_sc": UnitingVariant.NesterovSc,
    "uniting_hbf_hbf": UnitingVariant.HbfHbf,
}

KNOWN_ALGORITHMS = sorted(
    [
        "heavy_ball",
        "nesterov_nsc",
        "nesterov_sc",
        "gradient_descent",
        "triple_momentum",
        "hand1",
        "hand2",
        *UNITING_ALGORITHMS,
    ]
)


@dataclass
class RunSpec:
    name: str
    algorithm: str
    params: Dict[str, Any]
    x0: Dict[str, Any]
    t_max: Optional[float] = None
    check_envelope: bool = False


@dataclass
class ExperimentConfig:
    objective: ObjectiveSpec
    runs: List[RunSpec]
    integrator: IntegratorConfig
    settle_fraction: float = 0.01
    sweep_rows: List[Dict[str, Any]] = dc_field(default_factory=list)
    noise: Dict[str, Any] = dc_field(default_factory=dict)
    raw: Dict[str, Any] = dc_field(default_factory=dict)


@dataclass
class BuiltRun:
    """A run resolved to a solvable (system, x0, integrator) triple."""

    name: str
    algorithm: str
    system: HybridSystem
    x0: HybridState
    integrator: IntegratorConfig
    uniting: Optional[UnitingParams] = None
    hand1: Optional[Hand1Params] = None
    hand2: Optional[Hand2Params] = None
    params: Dict[str, Any] = dc_field(default_factory=dict)
    check_envelope: bool = False


def _require(table: Dict[str, Any], key: str, context: str):
    if key not in table:
        raise ConfigError(f"missing required field {context}.{key}")
    return table[key]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML in {path}: {e}") from e

    obj_table = dict(_require(raw, "objective", "config"))
    obj_name = _require(obj_table, "name", "objective")
    obj_params = {k: v for k, v in obj_table.items() if k != "name"}
    try:
        objective = make_objective(obj_name, **obj_params)
    except (InvalidParameterError, TypeError) as e:
        raise ConfigError(f"objective: {e}") from e

    integ_table = dict(raw.get("integrator", {}))
    try:
        integrator = IntegratorConfig(
            step=float(integ_table.get("step", 1e-4)),
            event_tol=float(integ_table.get("event_tol", 1e-9)),
            t_max=float(integ_table.get("t_max", 10.0)),
            j_max=int(integ_table.get("j_max", 10)),
            record_every=int(integ_table.get("record_every", 10)),
        )
    except InvalidParameterError as e:
        raise ConfigError(f"integrator: {e}") from e

    measure = raw.get("measure", {})
    settle_fraction = float(measure.get("settle_fraction", 0.01))

    runs_raw = raw.get("runs", [])
    if not isinstance(runs_raw, list) or not runs_raw:
        raise ConfigError("config must define a nonempty [[runs]] list")
    runs: List[RunSpec] = []
    seen = set()
    for i, r in enumerate(runs_raw):
        algorithm = _require(r, "algorithm", f"runs[{i}]")
        if algorithm not in KNOWN_ALGORITHMS:
            raise ConfigError(
                f"runs[{i}].algorithm: unknown algorithm {algorithm!r}; "
                f"known: {KNOWN_ALGORITHMS}"
            )
        name = r.get("name", algorithm)
        if name in seen:
            raise ConfigError(f"runs[{i}].name: duplicate run name {name!r}")
        seen.add(name)
        runs.append(
            RunSpec(
                name=name,
                algorithm=algorithm,
                params=dict(r.get("params", {})),
                x0=dict(r.get("x0", {})),
                t_max=float(r["t_max"]) if "t_max" in r else None,
                check_envelope=bool(r.get("check_envelope", False)),
            )
        )

    sweep_rows = list(raw.get("sweep", {}).get("rows", []))
    noise = dict(raw.get("noise", {}))
    return ExperimentConfig(
        objective=objective,
        runs=runs,
        integrator=integrator,
        settle_fraction=settle_fraction,
        sweep_rows=sweep_rows,
        noise=noise,
        raw=raw,
    )


def _x0_state(spec: RunSpec, obj: ObjectiveSpec, defaults: Dict[str, Any]) -> HybridState:
    merged = {**defaults, **spec.x0}
    if "z1" not in merged:
        raise ConfigError(f"runs.{spec.name}.x0.z1 is required")
    z1 = as_vec(merged["z1"], obj.dim)
    z2 = as_vec(merged.get("z2", 0.0 if obj.dim == 1 else [0.0] * obj.dim), obj.dim)
    return HybridState(z1, z2, int(merged.get("q", 1)), float(merged.get("tau", 0.0)))


def build_run(spec: RunSpec, obj: ObjectiveSpec, base: IntegratorConfig) -> BuiltRun:
    """Resolve one run spec into a solvable system and initial state."""
    p = spec.params
    alg = spec.algorithm
    integ = base if spec.t_max is None else IntegratorConfig(
        step=base.step,
        event_tol=base.event_tol,
        t_max=spec.t_max,
        j_max=base.j_max,
        record_every=base.record_every,
    )
    uniting_params = None
    hand1_params = None
    hand2_params = None

    try:
        if alg == "heavy_ball":
            hb = HeavyBallParams(lam=float(p["lambda"]), gamma=float(p["gamma"]))
            system = as_closed_loop(
                heavy_ball_field(hb, obj), obj,
                rebuild=lambda g: heavy_ball_field(hb, obj, g),
            )
            x0 = _x0_state(spec, obj, {"q": 1, "tau": 0.0})
        elif alg == "nesterov_nsc":
            nsc = NesterovNscParams(
                zeta=float(p["zeta"]),
                lipschitz_m=float(p.get("lipschitz_m", obj.lipschitz_m)),
            )
            system = as_closed_loop(
                nesterov_nsc_field(nsc, obj), obj,
                rebuild=lambda g: nesterov_nsc_field(nsc, obj, g),
            )
            x0 = _x0_state(spec, obj, {"q": 1, "tau": 0.0})
        elif alg == "nesterov_sc":
            sc = _sc_params(p, obj)
            system = as_closed_loop(
                nesterov_sc_field(sc, obj), obj,
                rebuild=lambda g: nesterov_sc_field(sc, obj, g),
            )
            x0 = _x0_state(spec, obj, {"q": 1, "tau": 0.0})
        elif alg == "gradient_descent":
            gamma = float(p["gamma"])
            system = as_closed_loop(
                gradient_descent_field(gamma, obj), obj,
                rebuild=lambda g: gradient_descent_field(gamma, obj, g),
            )
            x0 = _x0_state(spec, obj, {"q": 1, "tau": 0.0})
        elif alg == "triple_momentum":
            tm = TripleMomentumParams(
                kappa=float(p["kappa"]),
                lipschitz_m=float(p.get("lipschitz_m", obj.lipschitz_m)),
            )
            system = as_closed_loop(
                triple_momentum_field(tm, obj), obj,
                rebuild=lambda g: triple_momentum_field(tm, obj, g),
            )
            x0 = _x0_state(spec, obj, {"q": 1, "tau": 0.0})
        elif alg in UNITING_ALGORITHMS:
            uniting_params = _uniting_params(alg, p, obj)
            system = build_uniting_system(uniting_params, obj)
            x0 = _x0_state(spec, obj, {"q": 1, "tau": 0.0})
            if x0.tau != 0.0:
                import warnings

                warnings.warn(
                    "uniting runs should start with tau = 0; the rate "
                    "guarantees assume it", stacklevel=2,
                )
        elif alg == "hand1":
            hand1_params = _hand1_params(spec, p, obj)
            system = build_hand1(hand1_params, obj)
            x0 = _x0_state(spec, obj, _hand_defaults(spec, hand1_params.t_min))
        elif alg == "hand2":
            hand2_params = Hand2Params(
                c=float(p["c"]), t_min=float(p["t_min"]), t_max=float(p["t_max"])
            )
            if obj.mu is not None and not hand2_params.validity_ok(obj.mu):
                raise ConfigError(
                    f"runs.{spec.name}: rate-bound validity 1/(c mu) < "
                    "T_max^2 - T_min^2 is violated"
                )
            system = build_hand2(hand2_params, obj)
            x0 = _x0_state(spec, obj, _hand_defaults(spec, hand2_params.t_min))
        else:  # pragma: no cover
            raise ConfigError(f"unknown algorithm {alg!r}")
    except KeyError as e:
        raise ConfigError(f"runs.{spec.name}.params missing key {e.args[0]!r}") from e
    except InvalidParameterError as e:
        raise ConfigError(f"runs.{spec.name}: {e}") from e

    return BuiltRun(
        name=spec.name,
        algorithm=alg,
        system=system,
        x0=x0,
        integrator=integ,
        uniting=uniting_params,
        hand1=hand1_params,
        hand2=hand2_params,
        params=dict(p),
        check_envelope=spec.check_envelope,
    )


def _hand_defaults(spec: RunSpec, t_min: float) -> Dict[str, Any]:
    # the restarting baselines start from z2 = z1 and tau = T_min by default
    defaults: Dict[str, Any] = {"q": 1, "tau": t_min}
    if "z1" in spec.x0:
        defaults["z2"] = spec.x0["z1"]
    return defaults


def _sc_params(p: Dict[str, Any], obj: ObjectiveSpec) -> NesterovScParams:
    if obj.mu is None and "kappa" not in p:
        raise ConfigError("nesterov_sc requires kappa or an objective with mu")
    kappa = float(p.get("kappa", obj.lipschitz_m / obj.mu if obj.mu else 1.0))
    return NesterovScParams(
        zeta=float(p["zeta"]),
        lipschitz_m=float(p.get("lipschitz_m", obj.lipschitz_m)),
        kappa=kappa,
    )


def _uniting_params(alg: str, p: Dict[str, Any], obj: ObjectiveSpec) -> UnitingParams:
    variant = UNITING_ALGORITHMS[alg]
    kwargs: Dict[str, Any] = dict(
        eps0=float(p["eps0"]),
        eps10=float(p["eps10"]),
        c0=float(p["c0"]),
        c10=float(p["c10"]),
        gamma_local=float(p["gamma_local"]),
        lambda_local=float(p["lambda_local"]),
    )
    if "hat_c0" in p:
        kwargs["hat_c0"] = float(p["hat_c0"])
    if variant is UnitingVariant.NesterovNsc:
        kwargs["nsc"] = NesterovNscParams(
            zeta=float(p["zeta"]),
            lipschitz_m=float(p.get("lipschitz_m", obj.lipschitz_m)),
        )
    elif variant is UnitingVariant.NesterovSc:
        kwargs["sc"] = _sc_params(p, obj)
    else:
        kwargs["global_hb"] = HeavyBallParams(
            lam=float(p["lambda_global"]), gamma=float(p["gamma_global"])
        )
    return derive_params(variant, obj, **kwargs)


def _hand1_params(spec: RunSpec, p: Dict[str, Any], obj: ObjectiveSpec) -> Hand1Params:
    c1 = float(p["c1"])
    t_min = float(p["t_min"])
    if "t_med" in p and "t_max" in p:
        t_med, t_max = float(p["t_med"]), float(p["t_max"])
        r = float(p.get("r", 1.0))
        delta_med = float(p.get("delta_med", 1.0))
        b = float(p.get("b", r * r / (2.0 * c1)))
    else:
        r = float(p["r"])
        delta_med = float(p["delta_med"])
        if "z1" not in spec.x0:
            raise ConfigError(f"runs.{spec.name}.x0.z1 required to derive the schedule")
        z1_0 = as_vec(spec.x0["z1"], obj.dim)
        b, t_med, t_max = derive_hand1_schedule(
            r, c1, t_min, delta_med, obj.eval(z1_0) - obj.min_value
        )
    return Hand1Params(
        c1=c1, t_min=t_min, t_med=t_med, t_max=t_max, r=r, delta_med=delta_med, b=b
    )
