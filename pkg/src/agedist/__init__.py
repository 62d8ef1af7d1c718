"""Transmit-power policy toolkit for an energy-harvesting sensor that trades
information age against reconstruction distortion.

Four policy families are covered: a constant-power transmitter, its
save-then-transmit performance limit, non-causal interval/power plans found
by water-filling plus genetic search, and a causal controller solved as a
discounted Markov decision process. A block-level simulator measures any of
them, and a CLI reproduces the standard trade-off curves as CSV artifacts.
"""

from .closedform import (
    PolicySolution,
    expected_fading_distortion,
    fading_grid_search,
    ob_threshold,
    optimal_fading_power,
    optimal_fixed_power,
    optimal_save_transmit,
    w_threshold,
)
from .errors import (
    AgedistError,
    CausalityError,
    ConfigError,
    ConvergenceError,
    InfeasibleScheduleError,
)
from .mdp import (
    MdpSolution,
    MdpState,
    StructureReport,
    build_state_space,
    check_pruning_closure,
    included_mask,
    stage_cost,
    transition,
    value_iteration,
    verify_structure,
)
from .model import (
    EnergyTrace,
    Schedule,
    SystemParams,
    TradeoffPoint,
    aoi_process,
    check_causality,
    departure_intervals,
    distortion,
    schedule_cost,
    schedule_metrics,
)
from .numerics import (
    bernoulli_trace,
    exp_integral_e1,
    exp_integral_e1_scaled,
    make_rng,
    negbinomial_moments,
)
from .offline import (
    GaConfig,
    GaResult,
    backward_water_filling,
    brute_force_offline,
    decode_chromosome,
    genetic_joint_optimize,
    schedule_from_csv,
    schedule_to_csv,
    water_levels,
)
from .sim import (
    FixedPolicy,
    MdpTablePolicy,
    OfflineReplayPolicy,
    SaveTransmitPolicy,
    SimReport,
    SweepEntry,
    simulate_policy,
    sweep_from_csv,
    sweep_to_csv,
    tradeoff_sweep,
)

__version__ = "0.1.0"
