"""Energy-efficient power allocation and RRH selection for layered NOMA
cloud radio access networks: system model, fractional-programming solver with
a convex-approximation inner loop, a global monotonic-optimization oracle,
an M/G/1 delay-to-rate transform, signalling-overhead estimates, and a
deterministic data-parallel sweep harness."""

from .model import (ChannelState, ConfigError, EnergyReport, FeasibilityReport,
                    NetworkConfig, PowerAllocation, Tolerances, UserSpec,
                    check_feasibility, derive_binaries, energy_efficiency,
                    sic_margin, sinr, total_power, user_rate, weighted_sum_rate)
from .traffic import (TrafficSpec, delay_roots, max_delay_from_queue,
                      min_rate_for_delay, validate_delay)
from .dinkelbach import (DinkelbachTrace, InfeasibleProblemError, InnerSolver,
                         solve, surplus)
from .scale import ScaleSolver, scale_coeffs
from .polyblock import PolyblockSolver, canonicalize, polyblock_solve, project
from .scenarios import Scenario, build_config, gen_channel, run_sweep
from .overhead import QuantizationTable, count_centralized, count_distributed
from .parallel import SweepPlan, benchmark, build_plan, parallel_sweep

__all__ = [
    "ChannelState", "ConfigError", "EnergyReport", "FeasibilityReport",
    "NetworkConfig", "PowerAllocation", "Tolerances", "UserSpec",
    "check_feasibility", "derive_binaries", "energy_efficiency", "sic_margin",
    "sinr", "total_power", "user_rate", "weighted_sum_rate",
    "TrafficSpec", "delay_roots", "max_delay_from_queue", "min_rate_for_delay",
    "validate_delay",
    "DinkelbachTrace", "InfeasibleProblemError", "InnerSolver", "solve", "surplus",
    "ScaleSolver", "scale_coeffs",
    "PolyblockSolver", "canonicalize", "polyblock_solve", "project",
    "Scenario", "build_config", "gen_channel", "run_sweep",
    "QuantizationTable", "count_centralized", "count_distributed",
    "SweepPlan", "benchmark", "build_plan", "parallel_sweep",
]

__version__ = "0.1.0"
