"""swamsim: deterministic multi-tenant wireless access/backhaul simulator."""

from .core import (
    BROADCAST,
    Frame,
    FrameKind,
    MacAddress,
    TunnelId,
    VlanAllocator,
    VlanMode,
    max_nodes,
    pop_vlan,
    push_vlan,
    tunnel_count,
)
from .errors import SwamError
from .scenario import Scenario, load_scenario, parse_scenario
from .simkit import Flow, outage_duration, rtt_series, throughput_series

__version__ = "0.1.0"

__all__ = [
    "BROADCAST",
    "Flow",
    "Frame",
    "FrameKind",
    "MacAddress",
    "Scenario",
    "SwamError",
    "TunnelId",
    "VlanAllocator",
    "VlanMode",
    "load_scenario",
    "max_nodes",
    "outage_duration",
    "parse_scenario",
    "pop_vlan",
    "push_vlan",
    "rtt_series",
    "throughput_series",
    "tunnel_count",
    "__version__",
]
