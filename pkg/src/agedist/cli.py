"""Command-line front end: JSON config in, CSV artifacts plus JSON summary out.

Exit codes: 0 success, 2 malformed configuration, 3 solver failed to
converge, 4 a replayed plan violated energy causality.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema
import numpy as np

from . import closedform, mdp, numerics, offline, sim
from .errors import AgedistError, CausalityError, ConfigError, ConvergenceError
from .model import SystemParams, distortion

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_CAUSALITY = 4

# Default model constants; a bare config reproduces the standard setup.
PARAM_DEFAULTS = {
    "lam": 0.4,
    "sigma2_theta": 1.0,
    "sigma2_ob": 0.5,
    "sigma2_ch": 2.8,
    "w": 200.0,
    "alpha": 0.999,
    "delta_max": 100,
    "b_max": 30,
    "sigma2_fd": 0.7,
    "horizon_K": 100_000,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lam": {"type": "number"},
                "sigma2_theta": {"type": "number"},
                "sigma2_ob": {"type": "number"},
                "sigma2_ch": {"type": "number"},
                "w": {"type": "number"},
                "alpha": {"type": "number"},
                "delta_max": {"type": "integer"},
                "b_max": {"type": "integer"},
                "sigma2_fd": {"type": ["number", "null"]},
                "horizon_K": {"type": "integer"},
            },
        },
        "ga": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_pop": {"type": "integer"},
                "n_iter": {"type": "integer"},
                "q_sel": {"type": "number"},
                "d_cross": {"type": "integer"},
                "seed": {"type": "integer"},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "w_list": {
                    "anyOf": [
                        {"type": "string"},
                        {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    ]
                },
                "methods": {
                    "type": "array",
                    "items": {"type": "string", "enum": list(sim.SWEEP_METHODS)},
                    "minItems": 1,
                },
                "K": {"type": "integer"},
                "offline_K": {"type": "integer"},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "K": {"type": "integer"},
                "seed": {"type": "integer"},
                "save_phase_len": {"type": "integer"},
                "replay_seed": {"type": "integer"},
            },
        },
        "online": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps": {"type": "number"},
                "max_sweeps": {"type": "integer"},
            },
        },
    },
}

COMMANDS = ("fixed", "save", "offline", "online", "fading", "tradeoff", "verify")


def load_config(path: str | None) -> dict:
    """Read, schema-validate and default-fill a run configuration."""
    if path is None:
        raw = {}
    else:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        details = "; ".join(
            f"{'/'.join(str(x) for x in e.absolute_path) or '<root>'}: {e.message}" for e in errors
        )
        raise ConfigError(f"config failed validation: {details}")
    return raw


def build_params(cfg: dict) -> SystemParams:
    merged = dict(PARAM_DEFAULTS)
    merged.update(cfg.get("params", {}))
    try:
        return SystemParams(**merged)
    except ValueError as exc:
        raise ConfigError(f"bad parameter values: {exc}") from exc


def parse_w_list(spec) -> list[float]:
    """Accept either an explicit list or a MATLAB-style start:step:stop string."""
    if isinstance(spec, list):
        return [float(x) for x in spec]
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"w_list string must be start:step:stop, got {spec!r}")
    try:
        start, step, stop = (float(x) for x in parts)
    except ValueError as exc:
        raise ConfigError(f"w_list values must be numeric: {spec!r}") from exc
    if step <= 0 or stop < start:
        raise ConfigError(f"w_list range is empty or descending: {spec!r}")
    n = int(np.floor((stop - start) / step + 1e-12)) + 1
    return [start + i * step for i in range(n)]


def _write_summary(out: Path, name: str, payload: dict) -> None:
    (out / f"{name}_summary.json").write_text(json.dumps(payload, indent=2) + "\n")


def _write_solution_csv(out: Path, name: str, fields: dict) -> None:
    with open(out / f"{name}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields.keys())
        writer.writerow([v if isinstance(v, str) else repr(v) for v in fields.values()])


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg)


def _solution_fields(sol: closedform.PolicySolution) -> dict:
    fields = {
        "power": sol.power,
        "avg_aoi": sol.avg_aoi,
        "avg_distortion": sol.avg_distortion,
        "weighted_cost": sol.weighted_cost,
        "regime": sol.regime_tag,
    }
    if sol.interval is not None:
        fields["interval"] = sol.interval
    return fields


def cmd_fixed(cfg: dict, out: Path, quiet: bool) -> int:
    params = build_params(cfg)
    sol = closedform.optimal_fixed_power(params)
    fields = _solution_fields(sol)
    fields["w_threshold"] = closedform.w_threshold(params)
    fields["ob_threshold"] = closedform.ob_threshold(params, params.w)
    _write_solution_csv(out, "fixed", fields)
    _write_summary(out, "fixed", fields)
    _say(quiet, f"fixed-power optimum: P={sol.power:.6f} cost={sol.weighted_cost:.6f} ({sol.regime_tag})")
    return EXIT_OK


def cmd_save(cfg: dict, out: Path, quiet: bool) -> int:
    params = build_params(cfg)
    sol = closedform.optimal_save_transmit(params)
    fields = _solution_fields(sol)
    _write_solution_csv(out, "save", fields)
    _write_summary(out, "save", fields)
    _say(quiet, f"save-and-transmit optimum: P={sol.power:.6f} cost={sol.weighted_cost:.6f} ({sol.regime_tag})")
    return EXIT_OK


def cmd_fading(cfg: dict, out: Path, quiet: bool) -> int:
    params = build_params(cfg)
    if params.sigma2_fd is None:
        raise ConfigError("fading command requires sigma2_fd")
    used_fallback = False
    try:
        sol = closedform.optimal_fading_power(params)
    except ConvergenceError:
        used_fallback = True
        sol = closedform.fading_grid_search(params)
    fields = _solution_fields(sol)
    fields["grid_fallback"] = used_fallback
    _write_solution_csv(out, "fading", {k: v for k, v in fields.items() if k != "grid_fallback"})
    _write_summary(out, "fading", fields)
    _say(quiet, f"fading optimum: P={sol.power:.6f} cost={sol.weighted_cost:.6f} ({sol.regime_tag})")
    return EXIT_OK


def cmd_offline(cfg: dict, out: Path, quiet: bool) -> int:
    params = build_params(cfg)
    sim_cfg = cfg.get("sim", {})
    horizon = sim_cfg.get("K", 100)
    seed = sim_cfg.get("seed", 1)
    ga_cfg = offline.GaConfig(**cfg.get("ga", {}))
    if ga_cfg.d_cross > horizon:
        raise ConfigError(f"ga.d_cross={ga_cfg.d_cross} exceeds the horizon {horizon}")
    trace = numerics.bernoulli_trace(params.lam, horizon, seed)
    result = offline.genetic_joint_optimize(params, trace, ga_cfg)
    offline.schedule_to_csv(result.schedule, params, out / "offline_schedule.csv")
    with open(out / "offline_history.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "best_cost"])
        for i, c in enumerate(result.history):
            writer.writerow([i, repr(c)])

    replay_seed = sim_cfg.get("replay_seed", seed)
    report = sim.simulate_policy(
        sim.OfflineReplayPolicy(result.schedule), params, horizon, replay_seed
    )
    summary = {
        "cost": result.cost,
        "avg_aoi": report.point.avg_aoi,
        "avg_distortion": report.point.avg_distortion,
        "n_intervals": len(result.schedule.inter_tx),
        "n_busy": result.schedule.n_busy,
        "trace_seed": seed,
        "replay_seed": replay_seed,
        "ga_iterations": ga_cfg.n_iter,
    }
    _write_summary(out, "offline", summary)
    _say(quiet, f"offline plan: cost={result.cost:.6f} busy_blocks={result.schedule.n_busy}")
    return EXIT_OK


def cmd_online(cfg: dict, out: Path, quiet: bool) -> int:
    params = build_params(cfg)
    online_cfg = cfg.get("online", {})
    sim_cfg = cfg.get("sim", {})
    try:
        solution = mdp.value_iteration(
            params,
            eps=online_cfg.get("eps", 1e-3),
            max_sweeps=online_cfg.get("max_sweeps", 1_000_000),
        )
    except ConvergenceError as exc:
        _write_summary(out, "online", {"converged": False, "error": str(exc)})
        _say(quiet, f"online solver failed: {exc}")
        return EXIT_NO_CONVERGENCE
    report = mdp.verify_structure(solution.values, solution.policy, solution.included)
    mdp.tables_to_csv(solution, out / "online_tables.csv")
    sim_report = sim.simulate_policy(
        sim.MdpTablePolicy(solution), params, sim_cfg.get("K", 100_000), sim_cfg.get("seed", 1)
    )
    summary = {
        "converged": True,
        "n_sweeps": solution.n_sweeps,
        "g_estimate": solution.g_estimate,
        "structure_checks_passed": report.n_passed,
        "structure_checks_total": len(report.checks),
        "structure": report.to_dict(),
        "empirical_avg_aoi": sim_report.point.avg_aoi,
        "empirical_avg_distortion": sim_report.point.avg_distortion,
        "empirical_weighted_cost": sim_report.point.weighted_cost,
        "sim_seed": sim_report.seed,
        "sim_blocks": sim_report.n_blocks,
    }
    _write_summary(out, "online", summary)
    _say(
        quiet,
        f"online policy: g={solution.g_estimate:.4f} empirical={sim_report.point.weighted_cost:.4f} "
        f"structure {report.n_passed}/{len(report.checks)}",
    )
    return EXIT_OK


def cmd_tradeoff(cfg: dict, out: Path, quiet: bool) -> int:
    params = build_params(cfg)
    sweep_cfg = cfg.get("sweep", {})
    sim_cfg = cfg.get("sim", {})
    w_list = parse_w_list(sweep_cfg.get("w_list", "20:25:500"))
    methods = sweep_cfg.get("methods", ["fixed", "save"])
    ga_cfg = offline.GaConfig(**cfg.get("ga", {}))
    entries = sim.tradeoff_sweep(
        params,
        w_list,
        methods,
        sim_blocks=sweep_cfg.get("K", sim_cfg.get("K", 100_000)),
        seed=sim_cfg.get("seed", 1),
        offline_blocks=sweep_cfg.get("offline_K", 100),
        ga=ga_cfg,
    )
    sim.sweep_to_csv(entries, out / "tradeoff.csv")
    failures = {f"{e.method}@w={e.w}": e.error for e in entries if e.error}
    summary = {
        "n_points": sum(e.point is not None for e in entries),
        "n_failures": len(failures),
        "failures": failures,
        "methods": methods,
        "w_count": len(w_list),
    }
    _write_summary(out, "tradeoff", summary)
    _say(quiet, f"tradeoff sweep: {summary['n_points']} points, {len(failures)} failures")
    return EXIT_OK


def cmd_verify(cfg: dict, out: Path, quiet: bool) -> int:
    params = build_params(cfg)
    results = run_verification(params, seed=cfg.get("sim", {}).get("seed", 1))
    for name, (ok, detail) in results.items():
        _say(quiet, f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    with open(out / "verify.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["check", "passed", "detail"])
        for name, (ok, detail) in results.items():
            writer.writerow([name, bool(ok), detail])
    summary = {name: {"passed": bool(ok), "detail": detail} for name, (ok, detail) in results.items()}
    n_failed = sum(not ok for ok, _ in results.values())
    summary["all_passed"] = n_failed == 0
    _write_summary(out, "verify", summary)
    return EXIT_OK if n_failed == 0 else 1


def run_verification(params: SystemParams, seed: int = 1) -> dict[str, tuple[bool, str]]:
    """A quick self-contained property battery over the main solvers."""
    results: dict[str, tuple[bool, str]] = {}
    rng = numerics.make_rng(seed)

    grid = np.linspace(0.0, 60.0, 601)
    dvals = np.array([distortion(float(p), params) for p in grid])
    ok = bool(
        np.all(np.diff(dvals) < 0)
        and np.all(np.diff(dvals, 2) > -1e-12)
        and abs(dvals[0] - params.sigma2_theta) < 1e-15
        and np.all(dvals > params.sigma2_ob)
    )
    results["distortion_shape"] = (ok, "strictly decreasing, convex, correct endpoints")

    zs = [0.2, 0.7, 1.5, 3.0, 10.0]
    worst = 0.0
    for z in zs:
        h = 1e-5 * max(z, 1.0)
        lhs = (
            numerics.exp_integral_e1_scaled(z + h) - numerics.exp_integral_e1_scaled(z - h)
        ) / (2 * h)
        rhs = numerics.exp_integral_e1_scaled(z) - 1.0 / z
        worst = max(worst, abs(lhs - rhs))
    cont = abs(
        numerics.exp_integral_e1(1.0 - 1e-12) - numerics.exp_integral_e1(1.0 + 1e-12)
    ) / numerics.exp_integral_e1(1.0)
    tail = 500.0 * numerics.exp_integral_e1_scaled(500.0)
    ok = worst < 1e-8 and cont < 1e-10 and 0.998 < tail < 1.0
    results["exp_integral"] = (ok, f"derivative residual {worst:.2e}, branch jump {cont:.2e}")

    mean, second = numerics.negbinomial_moments(5, params.lam)
    draws = 5 + rng.negative_binomial(5, params.lam, size=200_000)
    se = np.sqrt((second - mean**2) / len(draws))
    ok = abs(draws.mean() - mean) < 5 * se
    results["negbinomial_moments"] = (ok, f"MC mean {draws.mean():.4f} vs {mean:.4f}")

    bad = 0
    for _ in range(10):
        p = replace(
            params,
            lam=float(rng.uniform(0.1, 1.0)),
            sigma2_ch=float(rng.uniform(0.5, 5.0)),
            sigma2_ob=float(rng.uniform(0.0, 0.95)),
            w=float(rng.uniform(0.5, 500.0)),
        )
        sol = closedform.optimal_fixed_power(p)
        pg = np.arange(1.0, 100.0, 1e-3)
        costs = (pg + 1) / (2 * p.lam) + p.w * (
            p.sigma2_ob + (p.sigma2_theta - p.sigma2_ob) * p.sigma2_ch / (p.sigma2_ch + pg)
        )
        if sol.weighted_cost > costs.min() + 1e-6:
            bad += 1
    results["fixed_power_vs_grid"] = (bad == 0, f"{10 - bad}/10 random draws at the grid optimum")

    bad = 0
    for i in range(5):
        trace = numerics.bernoulli_trace(params.lam, 12, seed + i)
        try:
            sched, _ = offline.brute_force_offline(params, trace)
        except AgedistError:
            continue
        if sched.n_busy and not _kkt_no_improvement(sched, params):
            bad += 1
    results["water_filling_kkt"] = (bad == 0, f"{5 - bad}/5 seeded instances pass the transfer test")

    small = replace(params, delta_max=30, b_max=8, w=50.0, alpha=0.995)
    solution = mdp.value_iteration(small)
    report = mdp.verify_structure(solution.values, solution.policy, solution.included)
    closure = mdp.check_pruning_closure(small)
    ok = report.all_passed and not closure
    results["mdp_structure"] = (
        ok,
        f"{report.n_passed}/{len(report.checks)} checks, {len(closure)} closure offenders",
    )

    r1 = sim.simulate_policy(sim.FixedPolicy(5.0), params, 200_000, seed, record_traces=True)
    r2 = sim.simulate_policy(sim.FixedPolicy(5.0), params, 200_000, seed, record_traces=True)
    identical = (
        r1.point == r2.point
        and np.array_equal(r1.aoi_trace, r2.aoi_trace)
        and np.array_equal(r1.distortion_trace, r2.distortion_trace)
    )
    analytic = (5.0 + 1.0) / (2.0 * params.lam)
    drift = abs(r1.point.avg_aoi - analytic) / analytic
    ok = identical and drift < 0.02
    results["simulator"] = (ok, f"deterministic={identical}, renewal-age drift {drift:.3%}")
    return results


def _kkt_no_improvement(sched, params, quantum: float = 1e-3, tol: float = 1e-6) -> bool:
    """Moving a small slug of power to any later busy block must not help."""
    from .model import schedule_cost

    base = schedule_cost(sched, params)
    powers = list(sched.powers)
    for i in range(len(powers)):
        if powers[i] < quantum:
            continue
        for j in range(i + 1, len(powers)):
            trial = list(powers)
            trial[i] -= quantum
            trial[j] += quantum
            moved = replace(sched, powers=tuple(trial))
            if schedule_cost(moved, params) < base - tol:
                return False
    return True


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="agedist",
        description="Transmit-power policy solvers and simulators for an "
        "energy-harvesting sensor balancing information age against distortion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("fixed", "closed-form constant-power optimum"),
        ("save", "closed-form save-then-transmit optimum"),
        ("offline", "genetic interval search with water-filled powers"),
        ("online", "value-iteration policy, structure report and simulation"),
        ("fading", "constant-power optimum under Rayleigh fading"),
        ("tradeoff", "age/distortion operating points across weights"),
        ("verify", "quick self-check property battery"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", help="JSON run configuration", default=None)
        p.add_argument("--out", help="output directory", default="out")
        p.add_argument("--seed", type=int, help="override every configured seed", default=None)
        p.add_argument("--quiet", action="store_true", help="suppress progress output")

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.seed is not None:
        cfg.setdefault("ga", {})["seed"] = args.seed
        cfg.setdefault("sim", {})["seed"] = args.seed

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = {
        "fixed": cmd_fixed,
        "save": cmd_save,
        "offline": cmd_offline,
        "online": cmd_online,
        "fading": cmd_fading,
        "tradeoff": cmd_tradeoff,
        "verify": cmd_verify,
    }[args.command]
    try:
        return handler(cfg, out, args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CausalityError as exc:
        print(f"causality violation: {exc}", file=sys.stderr)
        return EXIT_CAUSALITY
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except AgedistError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
