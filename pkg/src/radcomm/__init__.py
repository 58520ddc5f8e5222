"""Power allocation for coexisting multicarrier radar and communication systems."""

from radcomm.scenario import (
    ChannelRealization,
    ConfigError,
    Constraints,
    SystemConfig,
    generate_channels,
    grouped_profile,
    load_config,
)
from radcomm.metrics import (
    PowerAllocation,
    SolveReport,
    Status,
    comm_throughput,
    radar_sinr,
    to_db,
)
from radcomm.baselines import (
    check_feasibility,
    comm_absent_optimum,
    greedy_report,
    greedy_search,
    waterfill_comm,
)
from radcomm.joint_design import solve_joint
from radcomm.unilateral_design import UnilateralProblem, solve_unilateral

__all__ = [
    "ChannelRealization",
    "ConfigError",
    "Constraints",
    "PowerAllocation",
    "SolveReport",
    "Status",
    "SystemConfig",
    "UnilateralProblem",
    "check_feasibility",
    "comm_absent_optimum",
    "comm_throughput",
    "generate_channels",
    "greedy_report",
    "greedy_search",
    "grouped_profile",
    "load_config",
    "radar_sinr",
    "solve_joint",
    "solve_unilateral",
    "to_db",
    "waterfill_comm",
]
