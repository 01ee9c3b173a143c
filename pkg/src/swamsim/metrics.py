"""Run measurements: deliveries, RTT samples, drops by cause, control events.

Append-only during a run; the CSV writers below are the export contract.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


def flow_of(frame_flow_id: Any) -> str | None:
    """Flows tag their frames with ('probe'|'data', name, seq, sent_us)."""
    if isinstance(frame_flow_id, tuple) and frame_flow_id[0] in ("probe", "data"):
        return frame_flow_id[1]
    return None


@dataclass
class MetricStore:
    # (flow or None, t_us, gateway node id, size_bytes, kind)
    hn_deliveries: list[tuple[str | None, int, int, int, str]] = field(
        default_factory=list
    )
    client_deliveries: list[tuple[str, int, int]] = field(default_factory=list)
    rtt_samples: list[tuple[str, int, int]] = field(default_factory=list)
    drops: Counter = field(default_factory=Counter)  # cause -> count
    flow_drops: Counter = field(default_factory=Counter)  # (flow, cause) -> count
    control_events: list[tuple[int, str, str]] = field(default_factory=list)
    mac_writes: list[tuple[int, str, str, str, str]] = field(
        default_factory=list
    )  # (t_us, node, bridge, mac, port)
    link_bits: Counter = field(default_factory=Counter)  # (link, bin) -> bits
    injected: Counter = field(default_factory=Counter)  # flow -> frames
    in_flight: Counter = field(default_factory=Counter)  # flow -> frames at horizon
    emissions: int = 0
    copy_budget_exceeded: bool = False

    def event(self, t_us: int, kind: str, detail: str) -> None:
        self.control_events.append((t_us, kind, detail))

    def drop(self, cause: str, flow: str | None = None) -> None:
        self.drops[cause] += 1
        if flow is not None:
            self.flow_drops[(flow, cause)] += 1

    # -- derived series ---------------------------------------------------------

    def flows_seen(self) -> list[str]:
        names = {f for f, *_ in self.hn_deliveries if f is not None}
        names.update(f for f, _, _ in self.rtt_samples)
        names.update(self.injected)
        return sorted(names)

    def deliveries_for(self, flow: str) -> list[tuple[int, int, int]]:
        """(t_us, gateway, size_bytes) for one flow, in delivery order."""
        return [
            (t, gw, size)
            for f, t, gw, size, _kind in self.hn_deliveries
            if f == flow
        ]

    # -- CSV export ---------------------------------------------------------------

    def write_csvs(self, outdir: Path, throughput_bin_us: int = 100_000) -> None:
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "flow_throughput.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["flow", "bin_start_us", "bps"])
            for flow in self.flows_seen():
                for start, bps in throughput_bins(self, flow, throughput_bin_us):
                    writer.writerow([flow, start, bps])
        with open(outdir / "rtt.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["flow", "t_us", "rtt_us"])
            for flow, t, rtt in sorted(self.rtt_samples):
                writer.writerow([flow, t, rtt])
        with open(outdir / "events.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_us", "kind", "detail"])
            for t, kind, detail in self.control_events:
                writer.writerow([t, kind, detail])
        with open(outdir / "drops.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cause", "count"])
            for cause in sorted(self.drops):
                writer.writerow([cause, self.drops[cause]])


def throughput_bins(
    metrics: MetricStore, flow: str, bin_us: int
) -> list[tuple[int, float]]:
    """Delivered payload bits per bin over the flow's delivery span."""
    if bin_us <= 0:
        raise ValueError("bin must be positive")
    deliveries = metrics.deliveries_for(flow)
    if not deliveries:
        return []
    per_bin: Counter = Counter()
    for t, _gw, size in deliveries:
        per_bin[t // bin_us] += size * 8
    first, last = min(per_bin), max(per_bin)
    return [
        (idx * bin_us, per_bin.get(idx, 0) * 1_000_000 / bin_us)
        for idx in range(first, last + 1)
    ]
