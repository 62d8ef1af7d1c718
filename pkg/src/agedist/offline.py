"""Offline (non-causal) joint optimization of intervals and powers.

Given the whole arrival record up front, powers for a fixed interval layout
follow from a backward water-filling pass that equalizes marginal gains
subject to energy causality; the interval layout itself is searched with a
small genetic algorithm, or exhaustively at short horizons.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InfeasibleScheduleError
from .model import EnergyTrace, Schedule, SystemParams, departure_intervals, schedule_cost
from .numerics import make_rng

# Busy-block marker power: a block can be scheduled with (almost) no energy
# and still refresh the monitor, at the cost of full distortion.
EPS_POWER = 1e-6

# Granularity of the stepped pouring variant (kept as a test reference; the
# closed-form pour used here is its exact limit and agrees within a quantum)
# and the relative tolerance below which two marginal-gain levels count as
# already equalized.
POUR_QUANTUM = 1e-4
LEVEL_TOL = 1e-5


@dataclass(frozen=True)
class GaConfig:
    """Knobs of the genetic interval search."""

    n_pop: int = 100
    n_iter: int = 200
    q_sel: float = 0.5
    d_cross: int = 34
    seed: int = 1

    def __post_init__(self):
        if self.n_pop < 2:
            raise ValueError("n_pop must be at least 2")
        if self.n_iter < 0:
            raise ValueError("n_iter must be nonnegative")
        if not 0.0 < self.q_sel < 1.0:
            raise ValueError("q_sel must lie in (0, 1)")
        if self.n_pop * self.q_sel < 2:
            raise ValueError("n_pop * q_sel must be at least 2")
        if self.d_cross < 1:
            raise ValueError("d_cross must be at least 1")

    @property
    def n_parent(self) -> int:
        return int(round(self.n_pop * self.q_sel))


@dataclass(frozen=True)
class GaResult:
    """Best plan found by the genetic search plus its per-generation record."""

    schedule: Schedule
    cost: float
    history: tuple[float, ...]


def _gain_coeffs(inter_tx: list[int]) -> np.ndarray:
    """sqrt(Y_{l+1} / K) for each busy block l; the marginal gain of power in
    busy block l is (coeff / (sigma2_ch + P_l))^2."""
    k = sum(inter_tx)
    ys = departure_intervals(inter_tx)
    return np.sqrt(np.asarray(ys[1:], dtype=float) / k)


def water_levels(schedule: Schedule, params: SystemParams) -> np.ndarray:
    """Marginal gain of extra power in each busy block of a schedule."""
    if schedule.n_busy == 0:
        return np.array([])
    coeff = _gain_coeffs(list(schedule.inter_tx))
    powers = np.asarray(schedule.powers)
    return (coeff / (params.sigma2_ch + powers)) ** 2


def _pour(powers: np.ndarray, coeff: np.ndarray, lo: int, amount: float, s2c: float) -> None:
    """Add ``amount`` of power across blocks lo.. so their gains equalize.

    Closed-form limit of pouring in POUR_QUANTUM steps into the currently
    highest-gain block: blocks above the final common level are topped up to
    it, the rest are untouched. Mutates ``powers`` in place.
    """
    idx = np.arange(lo, len(powers))
    c = s2c + powers[idx]
    f = coeff[idx]
    with np.errstate(divide="ignore"):
        t_act = np.where(f > 0, c / np.where(f > 0, f, 1.0), np.inf)
    order = np.argsort(t_act, kind="stable")
    csum_c = 0.0
    csum_f = 0.0
    t_final = None
    active_m = 0
    for m, j in enumerate(order):
        if not np.isfinite(t_act[j]):
            break
        csum_c += c[j]
        csum_f += f[j]
        t_cand = (amount + csum_c) / csum_f
        nxt = t_act[order[m + 1]] if m + 1 < len(order) else np.inf
        if t_cand <= nxt:
            t_final = t_cand
            active_m = m + 1
            break
    if t_final is None:
        # Every block in range has zero gain; the energy is cost-neutral.
        powers[lo] += amount
        return
    active = order[:active_m]
    add = np.maximum(0.0, f[active] * t_final - c[active])
    # Normalize tiny rounding so exactly ``amount`` is distributed.
    scale = amount / add.sum() if add.sum() > 0 else 0.0
    powers[idx[active]] += add * scale


def backward_water_filling(
    inter_tx: list[int], interval_energy: list[float] | np.ndarray, params: SystemParams
) -> np.ndarray:
    """Optimal per-busy-block powers for a fixed interval layout.

    Walks the busy blocks backwards: each block first keeps the energy
    harvested in the interval before it; whenever that leaves its marginal
    gain below the blocks after it, the block keeps only enough to match
    their level and the remainder is spread forward so the levels stay as
    equal as causality allows. Every busy block ends up with at least
    EPS_POWER; layouts that cannot fund that marker are rejected.
    """
    inter_tx = [int(x) for x in inter_tx]
    if len(inter_tx) < 2:
        raise ValueError("need at least two intervals (one busy block)")
    nb = len(inter_tx) - 1
    e = np.asarray(interval_energy, dtype=float)
    if len(e) == len(inter_tx):
        e = e[:nb]  # energy of the final interval is never spent
    if len(e) != nb:
        raise ValueError("need one energy total per interval (or per busy block)")
    if np.any(e < 0):
        raise ValueError("interval energies must be nonnegative")
    prefix = np.cumsum(e)
    need = EPS_POWER * np.arange(1, nb + 1)
    if np.any(prefix < need - 1e-15):
        first = int(np.nonzero(prefix < need - 1e-15)[0][0]) + 1
        raise InfeasibleScheduleError(
            f"not enough energy before busy block {first} to mark it busy"
        )

    s2c = params.sigma2_ch
    coeff = _gain_coeffs(inter_tx)
    powers = np.zeros(nb)
    powers[nb - 1] = e[nb - 1]

    def gain(i: int) -> float:
        return (coeff[i] / (s2c + powers[i])) ** 2

    for l in range(nb - 2, -1, -1):
        powers[l] = e[l]
        # Compare against the best later block, not just the next one: a
        # floored zero-energy block in between can hide higher levels behind
        # it, and energy may always be deferred past it.
        level = max(gain(j) for j in range(l + 1, nb))
        if gain(l) < level * (1.0 - LEVEL_TOL):
            matched = coeff[l] / np.sqrt(level) - s2c if level > 0 else np.inf
            keep = min(max(matched, EPS_POWER), e[l])
            remainder = e[l] - keep
            powers[l] = keep
            if remainder > 0:
                _pour(powers, coeff, l, remainder, s2c)

    _raise_floors(powers, e)
    return powers


def _raise_floors(powers: np.ndarray, e: np.ndarray) -> None:
    """Top any below-marker block up to EPS_POWER by drafting surplus power.

    The backward pass can leave a block at zero when its interval harvested
    nothing and no later pour reached it. Moving power toward later blocks is
    always causal; a backward move is accepted only if the prefix-energy
    constraints still hold afterwards.
    """
    nb = len(powers)
    for j in range(nb):
        deficit = EPS_POWER - powers[j]
        if deficit <= 0:
            continue
        donors = sorted(
            (i for i in range(nb) if i != j and powers[i] - EPS_POWER > 0),
            key=lambda i: powers[i] - EPS_POWER,
            reverse=True,
        )
        for i in donors:
            take = min(deficit, powers[i] - EPS_POWER)
            powers[i] -= take
            powers[j] += take
            deficit -= take
            if deficit <= 1e-18:
                break
        if deficit > 1e-18:
            raise InfeasibleScheduleError(f"cannot fund busy-block marker at block {j + 1}")
    slack = np.cumsum(e) - np.cumsum(powers)
    if np.any(slack < -1e-9):
        first = int(np.nonzero(slack < -1e-9)[0][0]) + 1
        raise InfeasibleScheduleError(f"marker repair broke causality at busy block {first}")


def _schedule_from_layout(
    inter_tx: tuple[int, ...], trace: EnergyTrace, params: SystemParams
) -> Schedule:
    """Water-fill a layout against a trace; raises if it cannot be funded."""
    k = sum(inter_tx)
    if len(inter_tx) == 1:
        return Schedule(inter_tx=inter_tx, powers=(), horizon_K=k)
    e = trace.interval_energy(list(inter_tx))
    powers = backward_water_filling(list(inter_tx), e, params)
    return Schedule(inter_tx=inter_tx, powers=tuple(powers), horizon_K=k)


def decode_chromosome(genes: np.ndarray, horizon_K: int) -> tuple[int, ...] | None:
    """Turn a gene vector into an interval layout that covers the horizon.

    Genes are consumed until their running sum first reaches the horizon; the
    last one is trimmed to land exactly on it and zero genes are dropped.
    Returns None when the genes cannot cover the horizon.
    """
    total = 0
    taken: list[int] = []
    for g in genes:
        g = int(g)
        total += g
        taken.append(g)
        if total >= horizon_K:
            taken[-1] = g - (total - horizon_K)
            layout = tuple(x for x in taken if x > 0)
            return layout if layout else None
    return None


def genetic_joint_optimize(
    params: SystemParams, trace: EnergyTrace, cfg: GaConfig
) -> GaResult:
    """Search interval layouts with a genetic loop, powering each candidate by
    backward water-filling and scoring it with the exact schedule cost.

    Parents are drawn with fitness-proportional probabilities (fitness is the
    inverse cost; layouts the trace cannot fund score zero); each pair yields
    one child with ``d_cross`` genes bumped up and one with ``d_cross`` genes
    bumped down. The best plan over all generations is returned, along with
    the best cost seen in each generation.
    """
    horizon = len(trace)
    if cfg.d_cross > horizon:
        raise ValueError("d_cross cannot exceed the horizon")
    rng = make_rng(cfg.seed)
    pop = rng.integers(1, horizon + 1, size=(cfg.n_pop, horizon))

    cache: dict[tuple[int, ...], tuple[float, Schedule | None]] = {}

    def evaluate(genes: np.ndarray) -> tuple[float, Schedule | None]:
        layout = decode_chromosome(genes, horizon)
        if layout is None:
            return np.inf, None
        hit = cache.get(layout)
        if hit is not None:
            return hit
        try:
            sched = _schedule_from_layout(layout, trace, params)
            out = (schedule_cost(sched, params), sched)
        except InfeasibleScheduleError:
            out = (np.inf, None)
        cache[layout] = out
        return out

    best_cost = np.inf
    best_schedule: Schedule | None = None
    history: list[float] = []

    def evaluate_population() -> np.ndarray:
        nonlocal best_cost, best_schedule
        costs = np.empty(cfg.n_pop)
        for i in range(cfg.n_pop):
            cost, sched = evaluate(pop[i])
            costs[i] = cost
            if cost < best_cost:
                best_cost, best_schedule = cost, sched
        history.append(float(np.min(costs)))
        return costs

    costs = evaluate_population()
    for _ in range(cfg.n_iter):
        fitness = np.where(np.isfinite(costs), 1.0 / costs, 0.0)
        parents_idx = _select_parents(fitness, cfg.n_parent, rng)
        parents = pop[parents_idx]
        children = []
        while len(children) < cfg.n_pop - cfg.n_parent:
            pa, ma = parents[rng.integers(len(parents))], parents[rng.integers(len(parents))]
            up = pa.copy()
            spots = rng.choice(horizon, size=cfg.d_cross, replace=False)
            up[spots] = np.minimum(up[spots] + 1, horizon)
            children.append(up)
            if len(children) < cfg.n_pop - cfg.n_parent:
                down = ma.copy()
                spots = rng.choice(horizon, size=cfg.d_cross, replace=False)
                down[spots] = np.maximum(down[spots] - 1, 0)
                children.append(down)
        pop = np.vstack([parents] + children)
        costs = evaluate_population()

    if best_schedule is None:
        raise InfeasibleScheduleError("no feasible layout found for this trace")
    return GaResult(schedule=best_schedule, cost=float(best_cost), history=tuple(history))


def _select_parents(fitness: np.ndarray, n_parent: int, rng: np.random.Generator) -> np.ndarray:
    """Fitness-proportional draw without replacement, padding uniformly when
    fewer than ``n_parent`` chromosomes have positive fitness."""
    n = len(fitness)
    positive = np.nonzero(fitness > 0)[0]
    if len(positive) == 0:
        return rng.choice(n, size=n_parent, replace=False)
    if len(positive) == n_parent:
        return positive
    if len(positive) < n_parent:
        rest = np.setdiff1d(np.arange(n), positive)
        pad = rng.choice(rest, size=n_parent - len(positive), replace=False)
        return np.concatenate([positive, pad])
    probs = fitness / fitness.sum()
    return rng.choice(n, size=n_parent, replace=False, p=probs)


def brute_force_offline(
    params: SystemParams, trace: EnergyTrace, max_horizon: int = 14
) -> tuple[Schedule, float]:
    """Globally optimal plan by enumerating every interval layout.

    Practical only for short horizons (2^(K-1) layouts); layouts the trace
    cannot fund are skipped. Ties keep the first layout in enumeration order
    (cut-set bitmask order, so the never-transmit plan comes first).
    """
    k = len(trace)
    if k > max_horizon:
        raise ValueError(f"horizon {k} exceeds the enumeration cap {max_horizon}")
    best_cost = np.inf
    best = None
    for cuts in range(2 ** (k - 1)):
        layout = []
        prev = 0
        for pos in range(1, k):
            if cuts >> (pos - 1) & 1:
                layout.append(pos - prev)
                prev = pos
        layout.append(k - prev)
        try:
            sched = _schedule_from_layout(tuple(layout), trace, params)
        except InfeasibleScheduleError:
            continue
        cost = schedule_cost(sched, params)
        if cost < best_cost:
            best_cost, best = cost, sched
    if best is None:
        raise InfeasibleScheduleError("no feasible layout exists for this trace")
    return best, float(best_cost)


def schedule_to_csv(schedule: Schedule, params: SystemParams, path: str | Path) -> None:
    """Write one row per interval: index, length, power, marginal gain.

    The final interval carries no busy block, so its power and gain columns
    are left empty.
    """
    levels = water_levels(schedule, params)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["l", "X_l", "P_l", "nu_l"])
        for i, x in enumerate(schedule.inter_tx):
            if i < schedule.n_busy:
                writer.writerow([i + 1, x, repr(schedule.powers[i]), repr(float(levels[i]))])
            else:
                writer.writerow([i + 1, x, "", ""])


def schedule_from_csv(path: str | Path) -> Schedule:
    inter_tx: list[int] = []
    powers: list[float] = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            inter_tx.append(int(row["X_l"]))
            if row["P_l"] != "":
                powers.append(float(row["P_l"]))
    return Schedule(inter_tx=tuple(inter_tx), powers=tuple(powers), horizon_K=sum(inter_tx))
