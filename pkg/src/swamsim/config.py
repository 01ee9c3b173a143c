"""Run parameters shared by the world, the engine and the scenario loader."""

from __future__ import annotations

from dataclasses import dataclass

from .core import VlanMode


@dataclass
class SimParams:
    horizon_us: int = 10_000_000
    seed: int = 1
    detection_delay_us: int = 50_000
    controller_latency_us: int = 50_000
    agent_delay_us: int = 10_000
    capacity_window_us: int = 100_000
    default_latency_us: int = 1000
    default_capacity_bps: int | None = None
    throughput_bin_us: int = 100_000
    llc_xid: bool = True
    vlan_mode: VlanMode = VlanMode.DIGITS
    jitter_us: int = 0
    copy_budget: int | None = None
    mac_aging_us: int | None = None
