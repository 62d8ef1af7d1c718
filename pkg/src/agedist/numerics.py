"""Special functions and random-variate helpers.

All stochastic modules draw from numpy's PCG64 generator so that a run is
fully determined by its integer seed.
"""

from __future__ import annotations

import math

import numpy as np

from .model import EnergyTrace

# Euler-Mascheroni constant, used by the small-argument series of E1.
_EULER_GAMMA = 0.5772156649015328606

# Series/continued-fraction switch point and iteration budgets for E1.
_E1_SWITCH = 1.0
_E1_MAX_TERMS = 200
_E1_CF_MIN_LEVELS = 30
_E1_CF_MAX_LEVELS = 200


def make_rng(seed: int) -> np.random.Generator:
    """The toolkit-wide generator: PCG64 seeded with a 64-bit integer."""
    return np.random.Generator(np.random.PCG64(seed))


def exp_integral_e1(z: float) -> float:
    """First-order exponential integral E1(z) = integral of exp(-u)/u over [z, inf).

    Power series with the Euler-Mascheroni constant below z = 1, continued
    fraction above; both branches are good to machine precision for positive
    arguments, and the continued-fraction branch underflows gracefully for
    very large z.
    """
    if z <= 0:
        raise ValueError(f"E1 requires a positive argument, got {z}")
    if z <= _E1_SWITCH:
        return _e1_series(z)
    return math.exp(-z) * _e1_cf_scaled(z)


def exp_integral_e1_scaled(z: float) -> float:
    """exp(z) * E1(z), stable for large z where E1 itself underflows."""
    if z <= 0:
        raise ValueError(f"E1 requires a positive argument, got {z}")
    if z <= _E1_SWITCH:
        return math.exp(z) * _e1_series(z)
    return _e1_cf_scaled(z)


def _e1_series(z: float) -> float:
    # E1(z) = -gamma - ln z + sum_{k>=1} (-1)^{k+1} z^k / (k * k!)
    acc = -_EULER_GAMMA - math.log(z)
    term = 1.0
    for k in range(1, _E1_MAX_TERMS + 1):
        term *= -z / k
        contrib = -term / k
        acc += contrib
        if abs(contrib) < 1e-18 * max(abs(acc), 1e-300):
            break
    return acc


def _e1_cf_scaled(z: float) -> float:
    # Modified Lentz evaluation of the continued fraction
    # exp(z) E1(z) = 1 / (z + 1 - 1/(z + 3 - 4/(z + 5 - 9/(...)))).
    tiny = 1e-300
    b = z + 1.0
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for n in range(1, _E1_CF_MAX_LEVELS + 1):
        a = -(n * n)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        if c == 0.0:
            c = tiny
        delta = c * d
        h *= delta
        if n >= _E1_CF_MIN_LEVELS and abs(delta - 1.0) < 1e-16:
            break
    return h


def bernoulli_trace(lam: float, n_blocks: int, seed: int) -> EnergyTrace:
    """Draw ``n_blocks`` i.i.d. unit-energy arrivals with probability ``lam``."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must be in [0, 1], got {lam}")
    rng = make_rng(seed)
    arrivals = (rng.random(n_blocks) < lam).astype(np.int64)
    return EnergyTrace(arrivals=arrivals, seed=seed)


def negbinomial_moments(power_units: int, lam: float) -> tuple[float, float]:
    """Mean and second moment of the blocks needed to harvest ``power_units``.

    The waiting time for P unit arrivals of rate ``lam`` is negative binomial;
    its first two moments are P/lam and P(P + 1 - lam)/lam^2 exactly.
    """
    if power_units < 1 or int(power_units) != power_units:
        raise ValueError("power_units must be a positive integer")
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"lam must be in (0, 1], got {lam}")
    p = float(power_units)
    return p / lam, p * (p + 1.0 - lam) / (lam * lam)
