"""Core system model: parameters, distortion law, age accounting, schedule cost.

A sensing run is divided into unit blocks. In a busy block the sensor spends
transmit power ``p`` and the monitor's reconstruction error drops according to
``distortion(p)``; in an idle block the age of the freshest delivered
observation grows by one. Everything downstream (closed-form optimizers,
offline search, the online MDP, the simulator) is written against the
quantities defined here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SystemParams:
    """Scalar model constants shared by every solver.

    ``lam`` is the per-block probability of harvesting one unit of energy.
    ``sigma2_theta``/``sigma2_ob``/``sigma2_ch`` are the source, observation
    noise and (normalized) channel noise variances. ``w`` weights distortion
    against age in the scalar objective. ``alpha``, ``delta_max`` and
    ``b_max`` only matter for the online controller; ``sigma2_fd`` is the
    mean channel power gain of the fading variant and may be left unset.
    """

    lam: float = 0.4
    sigma2_theta: float = 1.0
    sigma2_ob: float = 0.5
    sigma2_ch: float = 2.8
    w: float = 200.0
    alpha: float = 0.999
    delta_max: int = 100
    b_max: int = 30
    sigma2_fd: float | None = None
    horizon_K: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lam must be in (0, 1], got {self.lam}")
        if not self.sigma2_theta > self.sigma2_ob >= 0.0:
            raise ValueError("need sigma2_theta > sigma2_ob >= 0")
        if self.sigma2_ch <= 0.0:
            raise ValueError("sigma2_ch must be positive")
        if self.w < 0.0:
            raise ValueError("w must be nonnegative")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.delta_max < 2:
            raise ValueError("delta_max must be at least 2")
        if self.b_max < 1:
            raise ValueError("b_max must be at least 1")
        if self.horizon_K < 1:
            raise ValueError("horizon_K must be at least 1")
        if self.sigma2_fd is not None and not 0.0 < self.sigma2_fd < 1.0:
            raise ValueError("sigma2_fd must lie in (0, 1) when set")


def distortion(p: float, params: SystemParams) -> float:
    """Reconstruction MSE after a transmission at power ``p``.

    Strictly decreasing and convex in ``p``; equals ``sigma2_theta`` at zero
    power and tends to ``sigma2_ob`` as the power grows.
    """
    if p < 0:
        raise ValueError(f"power must be nonnegative, got {p}")
    if p == 0:
        return params.sigma2_theta
    s = params
    return s.sigma2_ob + (s.sigma2_theta - s.sigma2_ob) * s.sigma2_ch / (s.sigma2_ch + p)


def departure_intervals(inter_tx: list[int]) -> list[int]:
    """Map inter-transmission times X_1..X_L to inter-departure times Y_1..Y_L.

    A virtual zero-power busy block precedes the run, so the first departure
    interval is one block longer than X_1 and the last one block shorter than
    X_L (the final interval ends without a completed transmission). Totals
    are preserved. The last entry may be zero when X_L == 1.
    """
    if len(inter_tx) < 2:
        raise ValueError("need at least two intervals (one busy block)")
    if any(x < 1 for x in inter_tx):
        raise ValueError("all inter-transmission times must be >= 1")
    return [inter_tx[0] + 1] + list(inter_tx[1:-1]) + [inter_tx[-1] - 1]


@dataclass(frozen=True)
class Schedule:
    """A complete offline plan: interval lengths plus per-busy-block powers.

    ``inter_tx`` lists L interval lengths summing to ``horizon_K``; the l-th
    busy block (l = 1..L-1) occupies the first block after the l-th interval
    and spends ``powers[l-1]``. A single-interval schedule never transmits.
    """

    inter_tx: tuple[int, ...]
    powers: tuple[float, ...]
    horizon_K: int

    def __post_init__(self):
        object.__setattr__(self, "inter_tx", tuple(int(x) for x in self.inter_tx))
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        if len(self.inter_tx) < 1:
            raise ValueError("schedule needs at least one interval")
        if any(x < 1 for x in self.inter_tx):
            raise ValueError("all inter-transmission times must be >= 1")
        if sum(self.inter_tx) != self.horizon_K:
            raise ValueError(
                f"intervals sum to {sum(self.inter_tx)}, expected horizon {self.horizon_K}"
            )
        if len(self.powers) != len(self.inter_tx) - 1:
            raise ValueError("need exactly one power per busy block (L - 1)")
        if any(p < 0 for p in self.powers):
            raise ValueError("powers must be nonnegative")

    @property
    def n_busy(self) -> int:
        return len(self.inter_tx) - 1

    def departure_intervals(self) -> list[int]:
        if len(self.inter_tx) == 1:
            return [self.horizon_K]
        return departure_intervals(list(self.inter_tx))

    def busy_blocks(self) -> list[int]:
        """1-based block indices occupied by busy blocks."""
        acc, out = 0, []
        for x in self.inter_tx[:-1]:
            acc += x
            out.append(acc + 1)
        return out

    def completion_blocks(self) -> list[int]:
        """Blocks whose end delivers a fresh observation (same as busy blocks)."""
        return self.busy_blocks()


@dataclass(frozen=True)
class EnergyTrace:
    """Per-block unit energy arrivals, with the seed that produced them."""

    arrivals: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.arrivals, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("arrivals must be one-dimensional")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("arrivals must be 0/1 valued")
        object.__setattr__(self, "arrivals", arr)

    def __len__(self) -> int:
        return len(self.arrivals)

    def interval_energy(self, inter_tx: list[int]) -> np.ndarray:
        """Energy harvested during each interval X_l of a plan over this trace."""
        if not inter_tx or sum(inter_tx) != len(self.arrivals):
            raise ValueError("intervals must cover the trace exactly")
        bounds = np.cumsum([0] + list(inter_tx))
        return np.add.reduceat(self.arrivals, bounds[:-1]).astype(float)


@dataclass(frozen=True)
class TradeoffPoint:
    """One (average age, average distortion, weighted cost) operating point."""

    avg_aoi: float
    avg_distortion: float
    weighted_cost: float
    w_used: float

    def __post_init__(self):
        if self.weighted_cost != self.avg_aoi + self.w_used * self.avg_distortion:
            raise ValueError("weighted_cost must equal avg_aoi + w * avg_distortion")

    @classmethod
    def from_parts(cls, avg_aoi: float, avg_distortion: float, w: float) -> "TradeoffPoint":
        return cls(avg_aoi, avg_distortion, avg_aoi + w * avg_distortion, w)


def aoi_process(completion_blocks: list[int], horizon_K: int) -> np.ndarray:
    """Per-block age sequence given the blocks whose end delivers an update.

    The age in block k counts blocks since the most recent completion strictly
    before k; a virtual completion at block 0 starts the clock, so the age is
    1 in block 1 and resets to 1 in the block after each completion.
    """
    comps = list(completion_blocks)
    if any(c2 <= c1 for c1, c2 in zip(comps, comps[1:])):
        raise ValueError("completion blocks must be strictly increasing")
    if comps and (comps[0] < 1 or comps[-1] > horizon_K):
        raise ValueError("completion blocks must lie in 1..horizon_K")
    ages = np.empty(horizon_K, dtype=np.int64)
    last = 0
    it = iter(comps)
    nxt = next(it, None)
    for k in range(1, horizon_K + 1):
        while nxt is not None and nxt < k:
            last = nxt
            nxt = next(it, None)
        ages[k - 1] = k - last
    return ages


def schedule_cost(s: Schedule, params: SystemParams) -> float:
    """Average weighted-sum age and distortion achieved by an offline plan.

    Each departure interval Y_l contributes (Y_l + Y_l^2)/2 total age plus
    w * Y_l times the distortion left by the previous busy block; the virtual
    block before the run leaves distortion sigma2_theta.
    """
    avg_aoi, avg_dist = schedule_metrics(s, params)
    return avg_aoi + params.w * avg_dist


def schedule_metrics(s: Schedule, params: SystemParams) -> tuple[float, float]:
    """Average age and average distortion components of ``schedule_cost``."""
    ys = s.departure_intervals()
    dists = [params.sigma2_theta] + [distortion(p, params) for p in s.powers]
    aoi_total = sum((y + y * y) / 2.0 for y in ys)
    dist_total = sum(d * y for d, y in zip(dists, ys))
    return aoi_total / s.horizon_K, dist_total / s.horizon_K


def check_causality(s: Schedule, trace: EnergyTrace) -> tuple[bool, int | None]:
    """Whether every busy block is funded by energy harvested before it starts.

    Returns (True, None) if feasible, otherwise (False, l) with the 1-based
    index of the first busy block whose cumulative power exceeds the energy
    available by then. A small slack absorbs float dust from power solvers.
    """
    if sum(s.inter_tx) != len(trace):
        raise ValueError("schedule and trace must share the horizon")
    if s.n_busy == 0:
        return True, None
    e = trace.interval_energy(list(s.inter_tx))
    cum_power = np.cumsum(s.powers)
    cum_energy = np.cumsum(e[: s.n_busy])
    bad = np.nonzero(cum_power > cum_energy + 1e-9)[0]
    if len(bad):
        return False, int(bad[0]) + 1
    return True, None
