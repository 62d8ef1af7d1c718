"""Closed-form and fixed-point power optimizers.

Covers the constant-power transmitter (lower bound 1), its save-first
variant that banks energy during a long prefix and then runs at the harvest
rate (lower bound ``lam``), and the Rayleigh-fading extension solved by a
damped fixed-point iteration on the stationarity condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .model import SystemParams, distortion
from .numerics import exp_integral_e1_scaled

BOUNDARY = "boundary"
INTERIOR = "interior"

_FIXED_POINT_TOL = 1e-9
_FIXED_POINT_MAX_ITER = 10_000


@dataclass(frozen=True)
class PolicySolution:
    """A constant-power operating point and its cost decomposition."""

    power: float
    avg_aoi: float
    avg_distortion: float
    weighted_cost: float
    regime_tag: str
    interval: float | None = None

    def __post_init__(self):
        if self.regime_tag not in (BOUNDARY, INTERIOR):
            raise ValueError(f"unknown regime tag {self.regime_tag!r}")


def w_threshold(params: SystemParams) -> float:
    """Weight below which raising the power above 1 can never pay off."""
    s = params
    return (1.0 + s.sigma2_ch) ** 2 / (2.0 * s.lam * s.sigma2_theta * s.sigma2_ch)


def ob_threshold(params: SystemParams, w: float) -> float:
    """Observation-noise level above which power 1 stays optimal at weight w.

    May be negative when w is below ``w_threshold``; the boundary regime then
    applies for every observation-noise level.
    """
    if w <= 0:
        raise ValueError("w must be positive")
    return params.sigma2_theta * (1.0 - w_threshold(params) / w)


def _interior_power(params: SystemParams) -> float:
    s = params
    return math.sqrt(2.0 * s.lam * s.w * (s.sigma2_theta - s.sigma2_ob) * s.sigma2_ch) - s.sigma2_ch


def optimal_fixed_power(params: SystemParams) -> PolicySolution:
    """Best constant transmit power for a sensor that fires whenever funded.

    The sensor idles until the buffer covers the chosen power, so consecutive
    transmissions are separated by a negative-binomial waiting time and the
    average age is (P + 1) / (2 lam). Power sticks to the lower bound 1 for
    small weights or nearly uninformative observations; otherwise the interior
    stationary point applies (it is real-valued by design, not an integer).
    """
    if params.w <= w_threshold(params) or params.sigma2_ob >= ob_threshold(params, params.w):
        power, tag = 1.0, BOUNDARY
    else:
        power, tag = _interior_power(params), INTERIOR
    avg_aoi = (power + 1.0) / (2.0 * params.lam)
    avg_dist = distortion(power, params)
    return PolicySolution(power, avg_aoi, avg_dist, avg_aoi + params.w * avg_dist, tag)


def optimal_save_transmit(params: SystemParams) -> PolicySolution:
    """Best constant power when a long saving prefix removes energy randomness.

    With the buffer primed, transmissions every P/lam blocks are funded almost
    surely, the interval is deterministic, and the average age improves to
    (P + lam) / (2 lam). The power floor drops to ``lam`` and the regime
    thresholds shift accordingly. Reports the transmission interval as well.
    """
    s = params
    w0 = (s.lam + s.sigma2_ch) ** 2 / (2.0 * s.lam * s.sigma2_theta * s.sigma2_ch)
    if s.w <= w0 or s.sigma2_ob >= s.sigma2_theta * (1.0 - w0 / s.w):
        power, tag = s.lam, BOUNDARY
    else:
        power, tag = _interior_power(s), INTERIOR
    avg_aoi = (power + s.lam) / (2.0 * s.lam)
    avg_dist = distortion(power, s)
    return PolicySolution(
        power, avg_aoi, avg_dist, avg_aoi + s.w * avg_dist, tag, interval=power / s.lam
    )


def expected_fading_distortion(power: float, params: SystemParams) -> float:
    """Mean reconstruction MSE under an exponentially distributed power gain.

    Averaging the distortion law over the gain yields
    ``sigma2_ob + (sigma2_theta - sigma2_ob) * z * exp(z) * E1(z)`` with
    z = sigma2_ch / (sigma2_fd * power).
    """
    if params.sigma2_fd is None:
        raise ValueError("sigma2_fd must be set for the fading model")
    if power <= 0:
        raise ValueError("power must be positive")
    z = params.sigma2_ch / (params.sigma2_fd * power)
    s = params
    return s.sigma2_ob + (s.sigma2_theta - s.sigma2_ob) * z * exp_integral_e1_scaled(z)


def fading_cost(power: float, params: SystemParams) -> float:
    """Weighted-sum objective of the fading constant-power problem."""
    return (power + 1.0) / (2.0 * params.lam) + params.w * expected_fading_distortion(power, params)


def _fading_stationarity_map(power: float, params: SystemParams) -> float:
    s = params
    z = s.sigma2_ch / (s.sigma2_fd * power)
    e1s = exp_integral_e1_scaled(z)
    return 2.0 * s.lam * s.w * (s.sigma2_theta - s.sigma2_ob) * ((z * z + z) * e1s - z)


def _fading_boundary_solution(params: SystemParams) -> PolicySolution:
    avg_dist = expected_fading_distortion(1.0, params)
    avg_aoi = 1.0 / params.lam
    return PolicySolution(1.0, avg_aoi, avg_dist, avg_aoi + params.w * avg_dist, BOUNDARY)


def optimal_fading_power(params: SystemParams) -> PolicySolution:
    """Constant-power optimum under Rayleigh fading via fixed-point iteration.

    Successive substitution on the stationarity condition, starting from
    power 1, with a 0.5 damping factor whenever two consecutive steps change
    direction. Raises ``ConvergenceError`` at the iteration cap so callers can
    fall back to ``fading_grid_search``. The result respects the lower bound 1.
    """
    if params.sigma2_fd is None:
        raise ValueError("sigma2_fd must be set for the fading model")
    power = 1.0
    prev_step = None
    for _ in range(_FIXED_POINT_MAX_ITER):
        target = _fading_stationarity_map(power, params)
        step = target - power
        if prev_step is not None and step * prev_step < 0:
            step *= 0.5
        nxt = power + step
        if nxt < 1e-6:
            # The interior stationary point sits below the feasible floor.
            return _fading_boundary_solution(params)
        if abs(step) < _FIXED_POINT_TOL:
            power = nxt
            break
        power, prev_step = nxt, step
    else:
        raise ConvergenceError(
            f"fading fixed point did not settle within {_FIXED_POINT_MAX_ITER} iterations"
        )
    if power <= 1.0:
        return _fading_boundary_solution(params)
    avg_aoi = (power + 1.0) / (2.0 * params.lam)
    avg_dist = expected_fading_distortion(power, params)
    return PolicySolution(power, avg_aoi, avg_dist, avg_aoi + params.w * avg_dist, INTERIOR)


def fading_grid_search(
    params: SystemParams, lo: float = 1.0, hi: float = 100.0, step: float = 1e-3
) -> PolicySolution:
    """Brute-force fallback for the fading optimum on a regular power grid."""
    grid = np.arange(lo, hi + step / 2, step)
    costs = np.array([fading_cost(float(p), params) for p in grid])
    best = int(np.argmin(costs))
    power = float(grid[best])
    avg_aoi = (power + 1.0) / (2.0 * params.lam)
    avg_dist = expected_fading_distortion(power, params)
    tag = BOUNDARY if best == 0 else INTERIOR
    return PolicySolution(power, avg_aoi, avg_dist, avg_aoi + params.w * avg_dist, tag)
