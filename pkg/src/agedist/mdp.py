"""Online power control as a discounted Markov decision process.

The state is (age, distortion label, buffer level); the distortion label is
the integer power that produced the current reconstruction (0 for the virtual
start), so state identity never depends on floating-point values. Value
iteration runs as synchronous whole-table sweeps; a transmission forgets age
and distortion, which collapses its continuation value to a small
(power, buffer) table and keeps each sweep cheap.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError
from .model import SystemParams, distortion

VALUE_SENTINEL = np.nan
POLICY_SENTINEL = -1


@dataclass(frozen=True)
class MdpState:
    """Age, distortion label (generating power) and buffer level."""

    delta: int
    d_index: int
    b: int


def included_mask(params: SystemParams) -> np.ndarray:
    """Boolean grid over (delta, d_index, b) of states kept in the model.

    A state whose buffer could not have been refilled since the transmission
    that set its distortion label is unreachable: right after spending p the
    buffer is at most b_max - p + 1, and each of the delta - 1 blocks since
    adds at most one unit. The virtual label 0 excludes nothing.
    """
    a, d, b = _dims(params)
    deltas = np.arange(1, a + 1)[:, None, None]
    labels = np.arange(d)[None, :, None]
    buffers = np.arange(b)[None, None, :]
    return deltas + (params.b_max - labels) >= buffers


def build_state_space(params: SystemParams) -> list[MdpState]:
    """All included states, in (delta, d_index, b) lexicographic order."""
    mask = included_mask(params)
    return [
        MdpState(int(i) + 1, int(j), int(k)) for i, j, k in np.argwhere(mask)
    ]


def transition(state: MdpState, p: int, arrival: int, params: SystemParams) -> MdpState:
    """Next state after spending ``p`` and harvesting ``arrival`` this block.

    Idling ages the monitor view by one block (saturating at delta_max) and
    banks the arrival (overflow beyond b_max is discarded); transmitting
    resets the age, relabels the distortion with ``p`` and debits the buffer.
    """
    if arrival not in (0, 1):
        raise ValueError("arrival must be 0 or 1")
    if not 0 <= p <= state.b:
        raise ValueError(f"power {p} not in 0..{state.b}")
    if p == 0:
        return MdpState(
            min(state.delta + 1, params.delta_max),
            state.d_index,
            min(state.b + arrival, params.b_max),
        )
    return MdpState(1, p, min(state.b - p + arrival, params.b_max))


def stage_cost(state: MdpState, p: int, params: SystemParams) -> float:
    """Weighted age-plus-distortion of the block that follows the action."""
    if not 0 <= p <= state.b:
        raise ValueError(f"power {p} not in 0..{state.b}")
    if p > 0:
        return 1.0 + params.w * distortion(p, params)
    return state.delta + 1.0 + params.w * distortion(state.d_index, params)


@dataclass(frozen=True)
class MdpSolution:
    """Converged value/policy tables plus convergence bookkeeping.

    Excluded states hold NaN in ``values`` and -1 in ``policy``. ``g_estimate``
    rescales the discounted value of the reference state (age 1, virtual
    label, empty buffer) into an average-cost estimate.
    """

    values: np.ndarray
    policy: np.ndarray
    included: np.ndarray
    g_estimate: float
    n_sweeps: int
    residuals: tuple[float, ...]


def _dims(params: SystemParams) -> tuple[int, int, int]:
    return params.delta_max, params.b_max + 1, params.b_max + 1


def _sweep(
    v: np.ndarray,
    cost_tx: np.ndarray,
    cost_idle: np.ndarray,
    up: np.ndarray,
    bplus: np.ndarray,
    lam: float,
    alpha: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One synchronous Bellman backup over the whole dense table.

    Returns the new table plus the per-buffer best transmit value and argmin
    power (the transmit continuation only depends on power and buffer).
    """
    n_b = v.shape[2]
    v_reset = v[0]  # age-1 slice seen right after any transmission
    q_tx = np.full((n_b, n_b), np.inf)
    for p in range(1, n_b):
        bs = np.arange(p, n_b)
        row = v_reset[p]
        # b - p + 1 <= b_max whenever p >= 1, so no clamp is needed here.
        q_tx[p, bs] = cost_tx[p] + alpha * (lam * row[bs - p + 1] + (1 - lam) * row[bs - p])
    best_tx = q_tx[1:].min(axis=0)
    best_tx_p = q_tx[1:].argmin(axis=0) + 1
    v_up = v[up]
    q_idle = cost_idle + alpha * (lam * v_up[:, :, bplus] + (1 - lam) * v_up)
    return np.minimum(q_idle, best_tx[None, None, :]), best_tx, best_tx_p


def value_iteration(
    params: SystemParams, eps: float = 1e-3, max_sweeps: int = 1_000_000
) -> MdpSolution:
    """Discounted value iteration from the zero table until the sup-norm
    change of a sweep drops below ``eps``.

    The backup minimizes stage cost plus the discounted expectation over the
    two arrival outcomes; ties prefer the smaller power (idling beats any
    equal-value transmission). Raises ``ConvergenceError`` at the sweep cap.
    """
    a, d, n_b = _dims(params)
    lam, alpha = params.lam, params.alpha
    powers = np.arange(d)
    dvals = np.array([distortion(int(p), params) for p in powers])
    cost_tx = 1.0 + params.w * dvals
    cost_idle = (
        (np.arange(1, a + 1) + 1.0)[:, None, None] + params.w * dvals[None, :, None]
    )
    up = np.minimum(np.arange(a) + 1, a - 1)
    bplus = np.minimum(np.arange(n_b) + 1, n_b - 1)

    v = np.zeros((a, d, n_b))
    residuals: list[float] = []
    for sweep in range(1, max_sweeps + 1):
        v_new, _, _ = _sweep(v, cost_tx, cost_idle, up, bplus, lam, alpha)
        res = float(np.max(np.abs(v_new - v)))
        residuals.append(res)
        v = v_new
        if res < eps:
            break
    else:
        raise ConvergenceError(
            f"value iteration still changing by {residuals[-1]:.3g} after {max_sweeps} sweeps"
        )

    _, best_tx, best_tx_p = _sweep(v, cost_tx, cost_idle, up, bplus, lam, alpha)
    v_up = v[up]
    q_idle = cost_idle + alpha * (lam * v_up[:, :, bplus] + (1 - lam) * v_up)
    policy = np.where(
        q_idle <= best_tx[None, None, :], 0, best_tx_p[None, None, :]
    ).astype(np.int64)

    mask = included_mask(params)
    values = np.where(mask, v, VALUE_SENTINEL)
    policy = np.where(mask, policy, POLICY_SENTINEL)
    g = (1.0 - alpha) * float(v[0, 0, 0])
    return MdpSolution(
        values=values,
        policy=policy,
        included=mask,
        g_estimate=g,
        n_sweeps=len(residuals),
        residuals=tuple(residuals),
    )


def check_pruning_closure(params: SystemParams) -> list[tuple[MdpState, int, int, MdpState]]:
    """Excluded states reachable from included ones; empty when pruning is safe.

    Each offender is reported as (source, power, arrival, target).
    """
    mask = included_mask(params)
    offenders = []
    for state in build_state_space(params):
        for p in range(0, state.b + 1):
            for arrival in (0, 1):
                nxt = transition(state, p, arrival, params)
                if not mask[nxt.delta - 1, nxt.d_index, nxt.b]:
                    offenders.append((state, p, arrival, nxt))
    return offenders


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    n_violations: int
    examples: tuple[tuple[int, int, int], ...]


@dataclass(frozen=True)
class StructureReport:
    """Outcome of the seven shape checks on converged tables."""

    checks: tuple[CheckResult, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def n_passed(self) -> int:
        return sum(c.passed for c in self.checks)

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else f"FAIL ({c.n_violations} violations)"
            lines.append(f"{c.name}: {status}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            c.name: {"passed": c.passed, "violations": c.n_violations} for c in self.checks
        }


def _collect(name: str, mask_bad: np.ndarray, offset=(0, 0, 0)) -> CheckResult:
    idx = np.argwhere(mask_bad)
    examples = tuple(
        (int(i) + 1 + offset[0], int(j) + offset[1], int(k) + offset[2]) for i, j, k in idx[:5]
    )
    return CheckResult(name, len(idx) == 0, int(len(idx)), examples)


def verify_structure(
    values: np.ndarray, policy: np.ndarray, included: np.ndarray, value_tol: float = 1e-9
) -> StructureReport:
    """Check the monotone/convex/threshold shape of converged tables.

    Values must be non-decreasing in age and in distortion (the distortion
    label order is reversed: higher label means lower distortion), and
    non-increasing, discretely convex in buffer level. The policy must be
    non-decreasing in buffer, and along age (respectively distortion) it must
    idle below a threshold and hold one constant positive power above it.
    Only included states are compared; every line of the grid is checked
    through adjacent included pairs.
    """
    v, pol, m = values, policy, included
    checks = []

    diff = np.diff(v, axis=0)
    pair = m[1:] & m[:-1]
    checks.append(_collect("value_nondecreasing_in_age", pair & (diff < -value_tol)))

    # ascending label = descending distortion, so values may only go down.
    diff = np.diff(v, axis=1)
    pair = m[:, 1:, :] & m[:, :-1, :]
    checks.append(_collect("value_nondecreasing_in_distortion", pair & (diff > value_tol)))

    diff = np.diff(v, axis=2)
    pair = m[:, :, 1:] & m[:, :, :-1]
    checks.append(_collect("value_nonincreasing_in_buffer", pair & (diff > value_tol)))

    second = np.diff(v, axis=2, n=2)
    triple = m[:, :, 2:] & m[:, :, 1:-1] & m[:, :, :-2]
    checks.append(_collect("value_convex_in_buffer", triple & (second < -value_tol)))

    pdiff = np.diff(pol, axis=2)
    pair = m[:, :, 1:] & m[:, :, :-1]
    checks.append(_collect("policy_nondecreasing_in_buffer", pair & (pdiff < 0)))

    checks.append(_threshold_check("policy_threshold_in_age", pol, m, axis=0))
    checks.append(_threshold_check("policy_threshold_in_distortion", pol, m, axis=1))
    return StructureReport(checks=tuple(checks))


def _threshold_check(name: str, policy: np.ndarray, mask: np.ndarray, axis: int) -> CheckResult:
    """Along the given axis (ordered by increasing age or distortion), the
    included entries must read as zeros followed by one repeated positive
    power."""
    bad = []
    other_axes = [ax for ax in range(3) if ax != axis]
    shape = policy.shape
    for i in range(shape[other_axes[0]]):
        for j in range(shape[other_axes[1]]):
            idx: list = [slice(None)] * 3
            idx[other_axes[0]] = i
            idx[other_axes[1]] = j
            line = policy[tuple(idx)]
            mline = mask[tuple(idx)]
            vals = line[mline]
            if axis == 1:
                vals = vals[::-1]  # ascending distortion = descending label
            if not _is_threshold_line(vals):
                first = [0, 0, 0]
                first[other_axes[0]] = i
                first[other_axes[1]] = j
                bad.append((first[0] + 1, first[1], first[2]))
    return CheckResult(name, len(bad) == 0, len(bad), tuple(bad[:5]))


def _is_threshold_line(vals: np.ndarray) -> bool:
    pos = vals[vals > 0]
    if len(pos) and len(np.unique(pos)) > 1:
        return False
    flags = (vals > 0).astype(int)
    return bool(np.all(np.diff(flags) >= 0))


def tables_to_csv(solution: MdpSolution, path: str | Path) -> None:
    """One row per included state: delta, d_index, b, value, power."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta", "d_index", "b", "value", "power"])
        for i, j, k in np.argwhere(solution.included):
            writer.writerow(
                [i + 1, j, k, repr(float(solution.values[i, j, k])), int(solution.policy[i, j, k])]
            )


def tables_from_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rebuild dense (values, policy, included) grids from ``tables_to_csv`` output."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(
                (int(row["delta"]), int(row["d_index"]), int(row["b"]), float(row["value"]), int(row["power"]))
            )
    a = max(r[0] for r in rows)
    d = max(r[1] for r in rows) + 1
    n_b = max(r[2] for r in rows) + 1
    values = np.full((a, d, n_b), VALUE_SENTINEL)
    policy = np.full((a, d, n_b), POLICY_SENTINEL, dtype=np.int64)
    included = np.zeros((a, d, n_b), dtype=bool)
    for delta, j, k, val, pw in rows:
        values[delta - 1, j, k] = val
        policy[delta - 1, j, k] = pw
        included[delta - 1, j, k] = True
    return values, policy, included
