"""Acceptance gate: one test per shipped criterion, each printing a PASS/FAIL
line (run with ``pytest tests/test_acceptance.py -s`` to see them inline).

Criterion 4 is split into its full-scale and reduced-scale halves. The
reduced half is expected to fail today: the exact solution of the capped
decision process at (delta_max=50, b_max=15, w=200) is not convex in the
buffer level near the age cap (154 states, worst second difference -0.4,
unchanged when converged to 1e-8 and reproduced by an independent per-state
backup), so the 7/7 requirement cannot be met at those caps. The assertion is
kept as stated rather than loosened.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import replace

import numpy as np
from scipy.integrate import quad

from agedist import (
    FixedPolicy,
    GaConfig,
    MdpTablePolicy,
    Schedule,
    SystemParams,
    bernoulli_trace,
    brute_force_offline,
    exp_integral_e1,
    fading_grid_search,
    genetic_joint_optimize,
    make_rng,
    optimal_fading_power,
    optimal_fixed_power,
    optimal_save_transmit,
    schedule_cost,
    simulate_policy,
    value_iteration,
    verify_structure,
    w_threshold,
)
from agedist.closedform import BOUNDARY


def _line(criterion: str, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def test_criterion_1_closed_form_matches_grid_oracle():
    """Fixed-power optimum beats a 1e-4 grid on 100 random parameter draws."""
    start = time.monotonic()
    rng = make_rng(20240817)
    grid = np.arange(1.0, 100.0 + 5e-5, 1e-4)
    worst = -np.inf
    for _ in range(100):
        p = SystemParams(
            lam=float(rng.uniform(0.1, 1.0)),
            sigma2_ch=float(rng.uniform(0.5, 5.0)),
            sigma2_ob=float(rng.uniform(0.0, 1.0 - 1e-12)),
            w=float(rng.uniform(0.1, 500.0)),
        )
        sol = optimal_fixed_power(p)
        costs = (grid + 1) / (2 * p.lam) + p.w * (
            p.sigma2_ob + (p.sigma2_theta - p.sigma2_ob) * p.sigma2_ch / (p.sigma2_ch + grid)
        )
        worst = max(worst, sol.weighted_cost - float(costs.min()))
    elapsed = time.monotonic() - start
    ok = worst <= 1e-6 and elapsed < 10.0
    _line("1", ok, f"worst excess over grid {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-6
    assert elapsed < 10.0


def test_criterion_2_renewal_age_of_fixed_policy():
    """Simulated fixed(P=5) age over 1e6 blocks lands on (P+1)/(2 lam) = 7.5."""
    start = time.monotonic()
    report = simulate_policy(FixedPolicy(5.0), SystemParams(), 10**6, 1)
    elapsed = time.monotonic() - start
    rel = abs(report.point.avg_aoi - 7.5) / 7.5
    ok = rel <= 0.01 and elapsed < 30.0
    _line("2", ok, f"avg age {report.point.avg_aoi:.4f} (rel err {rel:.3%}), {elapsed:.1f}s")
    assert rel <= 0.01
    assert elapsed < 30.0


def test_criterion_3_save_never_worse_than_fixed():
    """Banking energy first dominates the plain fixed-power policy."""
    details = []
    ok = True
    for w in (20.0, 50.0, 100.0, 200.0, 400.0):
        p = SystemParams(w=w)
        sv = optimal_save_transmit(p)
        fx = optimal_fixed_power(p)
        both_floor = sv.regime_tag == BOUNDARY and fx.regime_tag == BOUNDARY
        ok = ok and sv.weighted_cost <= fx.weighted_cost
        if not both_floor:
            ok = ok and sv.weighted_cost < fx.weighted_cost
        details.append(f"w={w:g}: {sv.weighted_cost:.3f} <= {fx.weighted_cost:.3f}")
    _line("3", ok, "; ".join(details))
    assert ok


def test_criterion_4_full_scale_structure(standard_online_solution):
    """Standard caps (100/30, w=200): converge and satisfy all seven shape checks."""
    solution = standard_online_solution.solution
    solve_seconds = standard_online_solution.seconds
    report = verify_structure(solution.values, solution.policy, solution.included)
    ok = solution.residuals[-1] < 1e-3 and report.all_passed and solve_seconds < 300.0
    _line(
        "4 (full scale)",
        ok,
        f"{solution.n_sweeps} sweeps in {solve_seconds:.0f}s, {report.n_passed}/7 checks",
    )
    assert solution.residuals[-1] < 1e-3
    assert solve_seconds < 300.0
    assert report.all_passed, str(report)


def test_criterion_4_reduced_scale_structure():
    """Reduced caps (50/15, w=200) must finish fast and pass the same checks.

    Known red: buffer convexity fails in the exact solution at these caps
    (see the module docstring); the check is asserted as stated anyway.
    """
    start = time.monotonic()
    solution = value_iteration(SystemParams(delta_max=50, b_max=15))
    report = verify_structure(solution.values, solution.policy, solution.included)
    elapsed = time.monotonic() - start
    ok = elapsed < 30.0 and report.all_passed
    failing = [c.name for c in report.checks if not c.passed]
    _line(
        "4 (reduced scale)",
        ok,
        f"{elapsed:.1f}s, {report.n_passed}/7 checks"
        + (f", failing: {', '.join(failing)}" if failing else ""),
    )
    assert elapsed < 30.0
    assert report.all_passed, str(report)


def test_criterion_5_online_near_save_limit(standard_online_solution):
    """Measured online cost sits within 10% above the save-and-transmit bound.

    An overshoot between 10% and 25% only warns; beyond 25% the test fails.
    """
    ratios = {}
    for w in (50.0, 200.0, 400.0):
        p = SystemParams(w=w)
        solution = standard_online_solution.solution if w == 200.0 else value_iteration(p)
        report = simulate_policy(MdpTablePolicy(solution), p, 10**5, 1)
        bound = optimal_save_transmit(p).weighted_cost
        ratios[w] = report.point.weighted_cost / bound
    within_target = all(r <= 1.10 for r in ratios.values())
    detail = ", ".join(f"w={w:g}: {r:.4f}x" for w, r in ratios.items())
    if within_target:
        _line("5", True, detail)
    else:
        soft = all(r <= 1.25 for r in ratios.values())
        _line("5", soft, detail + (" (soft range, warned)" if soft else ""))
        for w, r in ratios.items():
            if 1.10 < r <= 1.25:
                warnings.warn(f"online policy at w={w} is {r:.3f}x the save bound")
    assert all(r <= 1.25 for r in ratios.values())


def test_criterion_6_offline_search_matches_enumeration():
    """Genetic search lands within 5% of the exhaustive optimum, and the
    water-filled powers admit no profitable forward transfer."""
    start = time.monotonic()
    worst_ratio = 0.0
    kkt_ok = True
    for i in range(20):
        horizon = 8 + (i % 5)
        w = (20.0, 50.0, 100.0, 200.0)[i % 4]
        p = SystemParams(w=w)
        trace = bernoulli_trace(p.lam, horizon, 1000 + i)
        sched, best = brute_force_offline(p, trace)
        result = genetic_joint_optimize(
            p, trace, GaConfig(n_pop=200, n_iter=500, q_sel=0.5, d_cross=3, seed=2000 + i)
        )
        worst_ratio = max(worst_ratio, result.cost / best)
        for plan in (sched, result.schedule):
            if plan.n_busy and not _no_profitable_transfer(plan, p):
                kkt_ok = False
    elapsed = time.monotonic() - start
    ok = worst_ratio <= 1.05 and kkt_ok and elapsed < 120.0
    _line("6", ok, f"worst cost ratio {worst_ratio:.4f}, transfers clean={kkt_ok}, {elapsed:.0f}s")
    assert worst_ratio <= 1.05
    assert kkt_ok
    assert elapsed < 120.0


def _no_profitable_transfer(sched: Schedule, params: SystemParams, quantum=1e-3, tol=1e-6) -> bool:
    base = schedule_cost(sched, params)
    powers = list(sched.powers)
    for i in range(len(powers)):
        if powers[i] < quantum:
            continue
        for j in range(i + 1, len(powers)):
            trial = list(powers)
            trial[i] -= quantum
            trial[j] += quantum
            if schedule_cost(replace(sched, powers=tuple(trial)), params) < base - tol:
                return False
    return True


def test_criterion_7_fading_solver_and_special_function():
    """Fading fixed point matches grid search; fading never beats the clear
    channel; the exponential integral tracks quadrature to 1e-10."""
    fp_gap = 0.0
    ordering = True
    for w in (20.0, 50.0, 100.0, 200.0, 400.0):
        p = SystemParams(w=w, sigma2_fd=0.7)
        sol = optimal_fading_power(p)
        grid = fading_grid_search(p)
        fp_gap = max(fp_gap, abs(sol.power - grid.power))
        ordering = ordering and sol.weighted_cost >= optimal_fixed_power(p).weighted_cost

    worst_rel = 0.0
    for z in np.logspace(-4, np.log10(50.0), 1000):
        val, _ = quad(lambda t: np.exp(-t) / (z + t), 0.0, np.inf, epsabs=1e-15, epsrel=1e-13, limit=200)
        ref = float(np.exp(-z)) * val
        worst_rel = max(worst_rel, abs(exp_integral_e1(float(z)) - ref) / ref)

    ok = fp_gap < 1e-3 and ordering and worst_rel < 1e-10
    _line("7", ok, f"fixed-point gap {fp_gap:.1e}, ordering={ordering}, E1 rel err {worst_rel:.1e}")
    assert fp_gap < 1e-3
    assert ordering
    assert worst_rel < 1e-10


def test_criterion_8_curve_positions_out_of_scope():
    """Exact published curve coordinates are not asserted anywhere: the
    printed regime threshold (12.8929 at the default constants) is exactly
    twice the closed-form expression this package implements (6.4464), so
    absolute curve positions are unreproducible; the grid oracle of
    criterion 1 confirms the implemented threshold separates the regimes."""
    w0 = w_threshold(SystemParams())
    ok = abs(w0 - 6.446428571428572) < 1e-12 and abs(2 * w0 - 12.892857142857144) < 1e-12
    _line("8", ok, f"threshold {w0:.6f} (printed constant equals 2x = {2 * w0:.4f}); "
          "substituted by ordering/structure/oracle checks above")
    assert ok
