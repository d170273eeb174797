"""Config-driven experiment runner.

Verbs:

* ``run``      solve each configured run; write per-run trace CSVs + runs.json
* ``compare``  solve all runs from shared starts (optionally sweeping initial
               conditions) and tabulate settling times and percent improvements
               of the uniting run over every other run
* ``noise``    re-run the uniting system with additive gradient noise over a
               (sigma, seed) grid and tabulate tail limsups
* ``validate`` print derived constants and check the switching-set geometry
               and objective structure; nonzero exit on any failed check

Output files are CSV/JSON for external plotting (gnuplot-friendly column
layout; see the trace header) and are written atomically.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import analysis
from .analysis import (
    NOT_SETTLED,
    NoiseProcess,
    RateEnvelope,
    perturb_gradient,
    settling_time,
    tail_limsup,
    uniting_envelope,
)
from .baselines import hand1_rate_bound
from .config import (
    BuiltRun,
    ConfigError,
    ExperimentConfig,
    IntegratorConfig,
    RunSpec,
    build_run,
    load_config,
)
from .hybrid import SolutionArc, Termination, solve
from .objective import (
    InvalidParameterError,
    check_gradient_fd,
    sampled_structure_report,
)
from .uniting import UnitingVariant, validate_hysteresis

RATE_M = 0.5  # convention for the heavy-ball rate constant psi = m alpha gamma / lambda


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_arc_csv(arc: SolutionArc, path: Path) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        arc.write_csv(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _state_dict(state) -> Dict[str, Any]:
    def conv(v):
        return [float(x) for x in np.atleast_1d(v)]

    return {
        "z1": conv(state.z1),
        "z2": conv(state.z2),
        "q": state.q,
        "tau": float(state.tau),
    }


def _psi(alpha: float, gamma: float, lam: float) -> float:
    return RATE_M * alpha * gamma / lam


def _envelope_for(built: BuiltRun, obj) -> Optional[RateEnvelope]:
    p = built.uniting
    if p is None:
        return None
    psi_local = _psi(p.alpha, p.gamma_local, p.lambda_local)
    if p.variant is UnitingVariant.NesterovNsc:
        return RateEnvelope(
            kind="nsc",
            zeta=p.nsc.zeta,
            lipschitz_m=p.lipschitz_m,
            psi_slope=(1.0 - RATE_M) * psi_local,
        )
    if p.variant is UnitingVariant.NesterovSc:
        return RateEnvelope(
            kind="sc",
            sc_rate_a=p.sc.rate_a,
            psi_slope=(1.0 - RATE_M) * psi_local,
        )
    psi_global = _psi(p.alpha, p.global_hb.gamma, p.global_hb.lam)
    return RateEnvelope(
        kind="sc",
        sc_rate_a=0.5 * psi_global,
        psi_slope=0.5 * psi_local,
    )


def _check_hand1_bound(built: BuiltRun, arc: SolutionArc, obj) -> Dict[str, Any]:
    """B/t^2 objective-gap bound on the j = 0 segment (premise: z1(0)=z2(0))."""
    premise = bool(
        np.allclose(arc.z1[0], arc.z2[0]) and abs(arc.tau[0] - built.hand1.t_min) < 1e-12
    )
    if not premise:
        return {"checked": False, "reason": "premise z1(0,0)=z2(0,0), tau(0)=T_min not met"}
    idx = np.nonzero((arc.j == 0) & (arc.t > 0))[0]
    g = analysis.gaps(arc, obj)[idx]
    bounds = np.array([hand1_rate_bound(float(t), built.hand1.b) for t in arc.t[idx]])
    ok = bool(np.all(g <= bounds * (1.0 + 1e-9)))
    return {"checked": True, "passed": ok, "samples": int(idx.size)}


def _solve_and_summarize(
    built: BuiltRun, cfg: ExperimentConfig
) -> tuple[SolutionArc, Dict[str, Any]]:
    arc = solve(built.system, built.x0, built.integrator)
    ts = settling_time(arc, cfg.objective, cfg.settle_fraction)
    summary: Dict[str, Any] = {
        "algorithm": built.algorithm,
        "settling_time": None if ts is NOT_SETTLED else float(ts),
        "termination": arc.termination.value,
        "jump_count": len(arc.jumps),
        "jump_times": [float(j.t) for j in arc.jumps],
        "final_state": _state_dict(arc.final_state),
    }
    if built.check_envelope:
        if built.uniting is not None:
            rate = _envelope_for(built, cfg.objective)
            report = uniting_envelope(arc, cfg.objective, rate)
            summary["envelope_checks"] = {
                "passed": report.passed,
                "segments": [dataclasses.asdict(s) for s in report.segments],
            }
        elif built.hand1 is not None:
            summary["envelope_checks"] = _check_hand1_bound(built, arc, cfg.objective)
    return arc, summary


def cmd_run(cfg: ExperimentConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries: Dict[str, Any] = {}
    for spec in cfg.runs:
        built = build_run(spec, cfg.objective, cfg.integrator)
        arc, summary = _solve_and_summarize(built, cfg)
        _write_arc_csv(arc, out_dir / f"{built.name}.csv")
        summaries[built.name] = summary
        st = summary["settling_time"]
        st_text = "not settled" if st is None else f"settled at {st:.4g} s"
        print(f"{built.name}: {st_text} ({summary['termination']}, "
              f"{summary['jump_count']} jumps)")
    _atomic_write_text(out_dir / "runs.json", json.dumps(summaries, indent=2) + "\n")
    return 0


def _apply_sweep_row(spec: RunSpec, row: Dict[str, Any]) -> RunSpec:
    params = dict(spec.params)
    x0 = dict(spec.x0)
    if "z1" in row:
        x0["z1"] = row["z1"]
        if spec.algorithm in ("hand1", "hand2"):
            x0.pop("z2", None)  # restarting baselines restart from z2 = z1
    if spec.algorithm.startswith("uniting"):
        for key in ("c0", "c10", "hat_c0"):
            if key in row:
                params[key] = row[key]
    if spec.algorithm == "hand1":
        for key in ("r", "delta_med"):
            if key in row:
                params[key] = row[key]
    if spec.algorithm == "hand2" and "c10" in row:
        pass
    return dataclasses.replace(spec, params=params, x0=x0)


def _format_table(header: List[str], rows: List[List[str]]) -> str:
    widths = [max(len(header[i]), *(len(r[i]) for r in rows)) if rows else len(header[i])
              for i in range(len(header))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def cmd_compare(cfg: ExperimentConfig, out_dir: Path) -> int:
    if len(cfg.runs) < 2:
        raise ConfigError("compare requires at least 2 runs")
    uniting_specs = [r for r in cfg.runs if r.algorithm.startswith("uniting")]
    if not uniting_specs:
        raise ConfigError("compare requires one uniting run")
    uniting_name = uniting_specs[0].name
    other_names = [r.name for r in cfg.runs if r.name != uniting_name]

    sweep = cfg.sweep_rows or [{}]
    out_dir.mkdir(parents=True, exist_ok=True)

    per_row: List[Dict[str, Any]] = []
    for row in sweep:
        times: Dict[str, Optional[float]] = {}
        for spec in cfg.runs:
            eff_spec = _apply_sweep_row(spec, row) if row else spec
            built = build_run(eff_spec, cfg.objective, cfg.integrator)
            arc = solve(built.system, built.x0, built.integrator)
            ts = settling_time(arc, cfg.objective, cfg.settle_fraction)
            times[spec.name] = None if ts is NOT_SETTLED else float(ts)
        entry: Dict[str, Any] = {"row": row, "times": times, "improvements": {}}
        t_h = times[uniting_name]
        for name in other_names:
            t_other = times[name]
            if t_h is None or t_other is None or t_other <= 0:
                entry["improvements"][name] = None
            else:
                entry["improvements"][name] = analysis.percent_improvement(t_other, t_h)
        per_row.append(entry)

    # averages over rows (ignoring unsettled entries)
    def avg(values: List[Optional[float]]) -> Optional[float]:
        vals = [v for v in values if v is not None]
        return sum(vals) / len(vals) if vals else None

    avg_times = {name: avg([e["times"][name] for e in per_row])
                 for name in [uniting_name, *other_names]}
    avg_impr = {name: avg([e["improvements"][name] for e in per_row])
                for name in other_names}

    def fmt(v: Optional[float]) -> str:
        return "-" if v is None else f"{v:.4g}"

    header = ["z1_0", *[f"t_{n}" for n in [uniting_name, *other_names]],
              *[f"impr_{n}_pct" for n in other_names]]
    rows_txt: List[List[str]] = []
    csv_lines = [",".join(header)]
    for e in per_row:
        z1v = e["row"].get("z1", "")
        cells = [str(z1v)]
        cells += [fmt(e["times"][n]) for n in [uniting_name, *other_names]]
        cells += [fmt(e["improvements"][n]) for n in other_names]
        rows_txt.append(cells)
        csv_lines.append(",".join(cells))
    avg_cells = ["average", *[fmt(avg_times[n]) for n in [uniting_name, *other_names]],
                 *[fmt(avg_impr[n]) for n in other_names]]
    rows_txt.append(avg_cells)
    csv_lines.append(",".join(avg_cells))

    table = _format_table(header, rows_txt)
    print(table, end="")
    _atomic_write_text(out_dir / "comparison.csv", "\n".join(csv_lines) + "\n")
    _atomic_write_text(out_dir / "comparison.txt", table)
    return 0


def cmd_noise(cfg: ExperimentConfig, out_dir: Path, default_seed: int) -> int:
    noise_cfg = cfg.noise
    if "sigmas" not in noise_cfg:
        raise ConfigError("noise command requires [noise].sigmas")
    sigmas = [float(s) for s in noise_cfg["sigmas"]]
    if any(s < 0 for s in sigmas):
        raise ConfigError("[noise].sigmas must be nonnegative")
    seeds = [int(s) for s in noise_cfg.get("seeds", [default_seed])]
    grid = float(noise_cfg.get("grid", 0.01))
    tail_fraction = float(noise_cfg.get("tail_fraction", 0.2))

    run_name = noise_cfg.get("run")
    candidates = [r for r in cfg.runs
                  if (r.name == run_name if run_name else r.algorithm.startswith("uniting"))]
    if not candidates:
        raise ConfigError("noise command requires a uniting run (or [noise].run)")
    spec = candidates[0]
    built = build_run(spec, cfg.objective, cfg.integrator)
    horizon = built.integrator.t_max

    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["sigma", "seed", "tail_limsup_dist", "tail_limsup_gap", "termination"]
    csv_lines = [",".join(header)]
    rows_txt: List[List[str]] = []
    for sigma in sigmas:
        for seed in seeds:
            noise = NoiseProcess(seed=seed, sigma=sigma, horizon=horizon, grid=grid,
                                 dim=cfg.objective.dim)
            system = perturb_gradient(built.system, noise)
            arc = solve(system, built.x0, built.integrator)
            d, g = tail_limsup(arc, cfg.objective, tail_fraction)
            cells = [f"{sigma:g}", str(seed), f"{d:.6e}", f"{g:.6e}",
                     arc.termination.value]
            rows_txt.append(cells)
            csv_lines.append(",".join(cells))
    table = _format_table(header, rows_txt)
    print(table, end="")
    _atomic_write_text(out_dir / "noise.csv", "\n".join(csv_lines) + "\n")
    return 0


def cmd_validate(cfg: ExperimentConfig, out_dir: Path, seed: int) -> int:
    failures: List[str] = []
    obj = cfg.objective

    print(f"objective: {obj.name} (dim {obj.dim}, alpha {obj.alpha:g}, "
          f"M {obj.lipschitz_m:g}, mu {'-' if obj.mu is None else f'{obj.mu:g}'})")
    struct = sampled_structure_report(obj, seed=seed)
    for key in ("quadratic_growth", "lipschitz"):
        ok = struct[f"{key}_ok"]
        print(f"  {key}: {'ok' if ok else 'FAIL'} (worst slack {struct[f'{key}_slack']:.3g})")
        if not ok:
            failures.append(f"objective {key}")
    rng = np.random.default_rng(seed)
    fd_err = max(
        check_gradient_fd(
            obj,
            float(rng.uniform(-10, 10)) if obj.dim == 1
            else rng.uniform(-10, 10, obj.dim),
            1e-5,
        )
        for _ in range(20)
    )
    print(f"  gradient finite-difference error: {fd_err:.3g}")
    if fd_err > 1e-6:
        failures.append("gradient finite differences")

    first_uniting = None
    for spec in cfg.runs:
        try:
            built = build_run(spec, obj, cfg.integrator)
        except ConfigError as e:
            print(f"run {spec.name}: derivation FAILED: {e}")
            failures.append(f"run {spec.name} derivation")
            continue
        p = built.uniting
        if p is not None:
            if first_uniting is None:
                first_uniting = built
            psi = _psi(p.alpha, p.gamma_local, p.lambda_local)
            nu = psi * (psi - p.lambda_local)
            print(f"run {spec.name} ({built.algorithm}):")
            print(f"  c_tilde0 = {p.c_tilde0:.6g}, c_tilde10 = {p.c_tilde10:.6g}")
            print(f"  d0 = {p.d0:.6g}, d10 = {p.d10:.6g}, hat_c0 = {p.hat_c0:.6g}")
            print(f"  psi = {psi:.6g}, nu = {nu:.6g} (m = {RATE_M})")
            if p.variant is UnitingVariant.NesterovSc:
                print(f"  a = {p.sc.rate_a:.6g}")
            if p.variant is UnitingVariant.NesterovNsc:
                c_env = analysis.nesterov_envelope_constant(p.nsc.zeta, p.lipschitz_m)
                print(f"  envelope constant c = {c_env:.6g}")
        elif built.hand1 is not None:
            h = built.hand1
            print(f"run {spec.name} ({built.algorithm}):")
            print(f"  B = {h.b:.6g}, T_min = {h.t_min:.6g}, "
                  f"T_med = {h.t_med:.6g}, T_max = {h.t_max:.6g}")
        elif built.hand2 is not None:
            h = built.hand2
            consts = h.rate_constants(obj)
            print(f"run {spec.name} ({built.algorithm}):")
            print(f"  T_min = {h.t_min:g}, T_max = {h.t_max:g}, c = {h.c:g}")
            print("  " + ", ".join(f"{k} = {v:.6g}" for k, v in consts.items()))

    if first_uniting is not None:
        rep = validate_hysteresis(first_uniting.uniting, obj, n_samples=100_000,
                                  seed=seed)
        print("hysteresis checks (100000 samples, box radius "
              f"{rep.box_radius:g}):")
        for label, ok, bad in (
            ("containment (T10 strictly inside U0)", rep.containment_ok,
             rep.containment_counterexamples),
            ("disjointness (T10 vs T01)", rep.disjoint_ok,
             rep.disjoint_counterexamples),
            ("covering (U0 union T01 at level c0)", rep.covering_ok,
             rep.covering_counterexamples),
        ):
            print(f"  {label}: {'ok' if ok else 'FAIL'}")
            if not ok:
                print(f"    counterexamples: {bad[:3]}")
                failures.append(label)

    if failures:
        print(f"FAILED checks: {failures}")
        return 1
    print("all checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridopt",
        description="hybrid-systems optimization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "solve configured runs and write traces"),
        ("compare", "tabulate settling times and percent improvements"),
        ("noise", "gradient-noise robustness table"),
        ("validate", "derived constants and design checks"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="path to a TOML experiment config")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--step", type=float, default=None,
                        help="override the integrator step")
        sp.add_argument("--full-trace", action="store_true",
                        help="record every integration step")
        sp.add_argument("--seed", type=int, default=0,
                        help="seed for sampling/noise defaults")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        integ = cfg.integrator
        if args.step is not None or args.full_trace:
            step = args.step if args.step is not None else integ.step
            integ = IntegratorConfig(
                step=step,
                event_tol=min(integ.event_tol, step / 1000.0),
                t_max=integ.t_max,
                j_max=integ.j_max,
                record_every=1 if args.full_trace else integ.record_every,
            )
            cfg = dataclasses.replace(cfg, integrator=integ)
        out_dir = Path(args.out)
        if args.command == "run":
            return cmd_run(cfg, out_dir)
        if args.command == "compare":
            return cmd_compare(cfg, out_dir)
        if args.command == "noise":
            return cmd_noise(cfg, out_dir, args.seed)
        return cmd_validate(cfg, out_dir, args.seed)
    except (ConfigError, InvalidParameterError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
