"""Block-level Monte-Carlo execution of power-control policies.

Each block the policy picks a transmit power given what the sensor can know
(age, current distortion, buffer); arrivals drawn that block become spendable
in the next one. The report carries the empirical operating point and,
optionally, the full per-block age and distortion traces.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .closedform import fading_grid_search, optimal_fading_power, optimal_fixed_power, optimal_save_transmit
from .errors import AgedistError, CausalityError, ConvergenceError
from .mdp import MdpSolution, value_iteration
from .model import Schedule, SystemParams, TradeoffPoint, distortion, schedule_metrics
from .numerics import bernoulli_trace
from .offline import GaConfig, genetic_joint_optimize

# Non-MDP policies assume a buffer big enough that overflow never matters.
LARGE_BUFFER = 1_000_000.0


@dataclass(frozen=True)
class FixedPolicy:
    """Transmit at ``power`` whenever the buffer covers it."""

    power: float

    def __post_init__(self):
        if self.power < 1.0:
            raise ValueError("fixed policy requires power >= 1")


@dataclass(frozen=True)
class SaveTransmitPolicy:
    """Idle for a saving prefix, then fire ``power`` every ``interval`` blocks.

    ``interval`` may be fractional; attempts are scheduled by accumulating it.
    An underfunded attempt is skipped (and counted) rather than queued. The
    default prefix is ceil(sqrt(K)), long enough to make skips rare but
    negligible in the average.
    """

    power: float
    interval: float
    save_phase_len: int | None = None

    def __post_init__(self):
        if self.power <= 0:
            raise ValueError("power must be positive")
        if self.interval < 1.0:
            raise ValueError("interval must be at least one block")
        if self.save_phase_len is not None and self.save_phase_len < 0:
            raise ValueError("save_phase_len must be nonnegative")


@dataclass(frozen=True)
class MdpTablePolicy:
    """Look the action up in a converged policy table each block."""

    solution: MdpSolution


@dataclass(frozen=True)
class OfflineReplayPolicy:
    """Execute a precomputed plan; arrivals must actually fund it."""

    schedule: Schedule


PolicySpec = FixedPolicy | SaveTransmitPolicy | MdpTablePolicy | OfflineReplayPolicy


@dataclass(frozen=True)
class SimReport:
    """Empirical operating point of one seeded run."""

    point: TradeoffPoint
    blocks_skipped_for_energy: int
    seed: int
    n_blocks: int
    aoi_trace: np.ndarray | None = None
    distortion_trace: np.ndarray | None = None


def simulate_policy(
    spec: PolicySpec,
    params: SystemParams,
    n_blocks: int,
    seed: int,
    record_traces: bool = False,
) -> SimReport:
    """Run one policy against seeded arrivals and average its cost.

    The age and distortion charged to a block are the ones in force when the
    block starts; a transmission is felt from the following block. Buffer
    accounting is asserted every block, so a causality bug cannot pass
    silently. Equal seeds give bit-identical runs.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be at least 1")
    trace = bernoulli_trace(params.lam, n_blocks, seed)
    arrivals = trace.arrivals

    is_mdp = isinstance(spec, MdpTablePolicy)
    capacity = float(params.b_max) if is_mdp else LARGE_BUFFER
    if is_mdp:
        policy_table = spec.solution.policy
    replay_powers: dict[int, float] = {}
    if isinstance(spec, OfflineReplayPolicy):
        if spec.schedule.horizon_K != n_blocks:
            raise ValueError("replay schedule horizon must match the run length")
        replay_powers = dict(zip(spec.schedule.busy_blocks(), spec.schedule.powers))

    if isinstance(spec, SaveTransmitPolicy):
        save_len = (
            spec.save_phase_len
            if spec.save_phase_len is not None
            else math.ceil(math.sqrt(n_blocks))
        )
        next_attempt = save_len + spec.interval

    buffer = 0.0
    age = 1
    dist = params.sigma2_theta
    d_index = 0
    skipped = 0
    aoi_sum = 0
    dist_sum = 0.0
    aoi_trace = np.empty(n_blocks, dtype=np.int64) if record_traces else None
    dist_trace = np.empty(n_blocks) if record_traces else None
    spent = 0.0
    harvested_before = 0.0

    for k in range(1, n_blocks + 1):
        if isinstance(spec, FixedPolicy):
            p = spec.power if buffer >= spec.power else 0.0
        elif isinstance(spec, SaveTransmitPolicy):
            p = 0.0
            if k > save_len and k >= next_attempt:
                if buffer >= spec.power:
                    p = spec.power
                else:
                    skipped += 1
                next_attempt += spec.interval
        elif isinstance(spec, MdpTablePolicy):
            p = float(policy_table[min(age, params.delta_max) - 1, d_index, int(buffer)])
            if p < 0:
                raise AgedistError(f"policy lookup hit an excluded state at block {k}")
        else:
            p = replay_powers.get(k, 0.0)
            if p > buffer + 1e-9:
                raise CausalityError(k)

        aoi_sum += age
        dist_sum += dist
        if record_traces:
            aoi_trace[k - 1] = age
            dist_trace[k - 1] = dist

        if p > 0:
            if buffer + 1e-9 < p:
                raise AgedistError(f"policy overdrew the buffer at block {k}")
            buffer -= p
            spent += p
            age = 1
            dist = distortion(p, params)
            if is_mdp:
                d_index = int(round(p))
        else:
            age += 1
        buffer = min(buffer + arrivals[k - 1], capacity)
        assert buffer >= -1e-9, "buffer went negative"
        assert spent <= harvested_before + 1e-6, "spent energy before harvesting it"
        harvested_before += arrivals[k - 1]

    avg_aoi = aoi_sum / n_blocks
    avg_dist = dist_sum / n_blocks
    return SimReport(
        point=TradeoffPoint.from_parts(avg_aoi, avg_dist, params.w),
        blocks_skipped_for_energy=skipped,
        seed=seed,
        n_blocks=n_blocks,
        aoi_trace=aoi_trace,
        distortion_trace=dist_trace,
    )


SWEEP_METHODS = ("fixed", "save", "mdp", "offline", "fading")


@dataclass(frozen=True)
class SweepEntry:
    """One (method, weight) cell of a trade-off sweep."""

    method: str
    w: float
    point: TradeoffPoint | None
    seed: int
    n_blocks: int
    error: str | None = None


def tradeoff_sweep(
    params: SystemParams,
    w_list: list[float],
    methods: list[str],
    sim_blocks: int = 100_000,
    seed: int = 1,
    offline_blocks: int = 100,
    ga: GaConfig | None = None,
) -> list[SweepEntry]:
    """Operating points of the requested policies across the weight list.

    ``fixed``, ``save`` and ``fading`` are analytic; ``mdp`` solves the online
    controller at each weight and measures it over ``sim_blocks`` seeded
    blocks; ``offline`` runs the genetic search on a seeded ``offline_blocks``
    trace. A failure in one cell is recorded in its entry instead of aborting
    the sweep.
    """
    if not w_list:
        raise ValueError("w_list must not be empty")
    unknown = set(methods) - set(SWEEP_METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    entries: list[SweepEntry] = []
    for w in w_list:
        pw = replace(params, w=float(w))
        for method in methods:
            try:
                point = _sweep_point(method, pw, sim_blocks, seed, offline_blocks, ga)
                entries.append(SweepEntry(method, float(w), point, seed, sim_blocks))
            except (AgedistError, ValueError) as exc:
                entries.append(
                    SweepEntry(method, float(w), None, seed, sim_blocks, error=str(exc))
                )
    return entries


def _sweep_point(
    method: str,
    params: SystemParams,
    sim_blocks: int,
    seed: int,
    offline_blocks: int,
    ga: GaConfig | None,
) -> TradeoffPoint:
    if method == "fixed":
        sol = optimal_fixed_power(params)
        return TradeoffPoint.from_parts(sol.avg_aoi, sol.avg_distortion, params.w)
    if method == "save":
        sol = optimal_save_transmit(params)
        return TradeoffPoint.from_parts(sol.avg_aoi, sol.avg_distortion, params.w)
    if method == "fading":
        try:
            sol = optimal_fading_power(params)
        except ConvergenceError:
            sol = fading_grid_search(params)
        return TradeoffPoint.from_parts(sol.avg_aoi, sol.avg_distortion, params.w)
    if method == "mdp":
        solution = value_iteration(params)
        report = simulate_policy(MdpTablePolicy(solution), params, sim_blocks, seed)
        return report.point
    if method == "offline":
        trace = bernoulli_trace(params.lam, offline_blocks, seed)
        result = genetic_joint_optimize(params, trace, ga or GaConfig())
        avg_aoi, avg_dist = schedule_metrics(result.schedule, params)
        return TradeoffPoint.from_parts(avg_aoi, avg_dist, params.w)
    raise ValueError(f"unknown method {method!r}")


def sweep_to_csv(entries: list[SweepEntry], path) -> None:
    """One row per successful (method, w) cell."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "w", "avg_aoi", "avg_distortion", "weighted_cost", "seed", "K"])
        for e in entries:
            if e.point is None:
                continue
            writer.writerow(
                [
                    e.method,
                    repr(e.w),
                    repr(e.point.avg_aoi),
                    repr(e.point.avg_distortion),
                    repr(e.point.weighted_cost),
                    e.seed,
                    e.n_blocks,
                ]
            )


def sweep_from_csv(path) -> list[SweepEntry]:
    entries = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            point = TradeoffPoint(
                avg_aoi=float(row["avg_aoi"]),
                avg_distortion=float(row["avg_distortion"]),
                weighted_cost=float(row["weighted_cost"]),
                w_used=float(row["w"]),
            )
            entries.append(
                SweepEntry(
                    method=row["method"],
                    w=float(row["w"]),
                    point=point,
                    seed=int(row["seed"]),
                    n_blocks=int(row["K"]),
                )
            )
    return entries
