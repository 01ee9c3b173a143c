"""Deterministic discrete-event engine, traffic flows and measurements.

Time is integer microseconds. Events are processed in nondecreasing time with
ties broken by insertion sequence, so a run is a pure function of (scenario,
seed). The copy budget aborts runs whose frame population explodes (the
negative control for loop-avoidance tests).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable

from .core import Frame, FrameKind, MacAddress, TenantId
from .errors import NoSamples
from .metrics import MetricStore, flow_of, throughput_bins
from .world import World, hn_host_mac

PING_SIZE_BYTES = 84
DEFAULT_CBR_SIZE_BYTES = 1250


class EventKind(Enum):
    FRAME_ARRIVAL = "FRAME_ARRIVAL"
    LINK_EVENT = "LINK_EVENT"
    CONTROL_ACTION = "CONTROL_ACTION"
    FLOW_TICK = "FLOW_TICK"
    ATTACH = "ATTACH"
    SCENARIO_ACTION = "SCENARIO_ACTION"


@dataclass
class Flow:
    """Constant-rate data or periodic probe traffic from one client toward
    its tenant's home network; frames carry the flow tag end to end."""

    name: str
    client_mac: MacAddress
    tenant: TenantId
    kind: str  # "cbr" | "ping"
    start_us: int
    stop_us: int
    rate_bps: int = 32_000_000
    size_bytes: int = DEFAULT_CBR_SIZE_BYTES
    interval_us: int = 5000  # ping period

    def tick_time(self, k: int) -> int:
        if self.kind == "ping":
            return self.start_us + k * self.interval_us
        # Exact rational spacing so the average rate matches rate_bps.
        return self.start_us + (k * self.size_bytes * 8 * 1_000_000) // self.rate_bps

    def frame(self, k: int, now: int) -> Frame:
        dst = hn_host_mac(self.tenant)
        if self.kind == "ping":
            return Frame(
                src=self.client_mac, dst=dst, kind=FrameKind.PROBE,
                size_bytes=PING_SIZE_BYTES, flow_id=("probe", self.name, k, now),
            )
        return Frame(
            src=self.client_mac, dst=dst, kind=FrameKind.DATA,
            size_bytes=self.size_bytes, flow_id=("data", self.name, k, now),
        )


class Engine:
    """Event queue bound to a world; single-threaded, single run."""

    def __init__(self, world: World, copy_budget: int | None = None):
        self.world = world
        self.copy_budget = copy_budget
        self._queue: list[tuple[int, int, EventKind, Any]] = []
        self._seq = 0
        world.schedule_call = self.call_at
        world.schedule_frame = self.frame_at

    def _push(self, t_us: int, kind: EventKind, payload: Any) -> None:
        heapq.heappush(self._queue, (t_us, self._seq, kind, payload))
        self._seq += 1

    def call_at(
        self,
        t_us: int,
        fn: Callable[[int], None],
        kind: EventKind = EventKind.CONTROL_ACTION,
    ) -> None:
        self._push(t_us, kind, fn)

    def frame_at(self, t_us, node, iface, frame, transmitter) -> None:
        self._push(t_us, EventKind.FRAME_ARRIVAL, (node, iface, frame, transmitter))

    def add_flow(self, flow: Flow) -> None:
        self._schedule_tick(flow, 0)

    def _schedule_tick(self, flow: Flow, k: int) -> None:
        t = flow.tick_time(k)
        if t >= flow.stop_us:
            return

        def tick(now: int) -> None:
            attachment = self.world.topo.access_attach.get(flow.client_mac)
            if attachment is not None:
                node, _tenant = attachment
                self.world.inject_at_vap(node, flow.tenant, flow.frame(k, now), now)
            self._schedule_tick(flow, k + 1)

        self.call_at(t, tick, EventKind.FLOW_TICK)

    def run(self, horizon_us: int) -> MetricStore:
        metrics = self.world.metrics
        while self._queue:
            t, _seq, kind, payload = heapq.heappop(self._queue)
            if t > horizon_us:
                heapq.heappush(self._queue, (t, _seq, kind, payload))
                break
            if kind is EventKind.FRAME_ARRIVAL:
                node, iface, frame, transmitter = payload
                self.world.frame_arrival(node, iface, frame, t, transmitter)
            else:
                payload(t)
            if self.copy_budget is not None and metrics.emissions > self.copy_budget:
                metrics.copy_budget_exceeded = True
                break
        for t, _seq, kind, payload in self._queue:
            if kind is EventKind.FRAME_ARRIVAL:
                flow = flow_of(payload[2].flow_id)
                if flow is not None:
                    metrics.in_flight[flow] += 1
        return metrics


def run(
    world: World,
    events: Iterable[tuple[int, Callable[[int], None]]],
    horizon_us: int,
    flows: Iterable[Flow] = (),
    copy_budget: int | None = None,
) -> MetricStore:
    """Process all scheduled work up to the horizon; deterministic for a
    given (world, events, flows, seed)."""
    engine = Engine(world, copy_budget)
    for t_us, fn in events:
        engine.call_at(t_us, fn, EventKind.SCENARIO_ACTION)
    for flow in flows:
        engine.add_flow(flow)
    return engine.run(horizon_us)


# -- measurement extraction ---------------------------------------------------------


def outage_duration(metrics: MetricStore, flow: str, interval_us: int) -> int:
    """Largest delivery gap at the home network minus one nominal interval;
    zero when no gap exceeds the interval."""
    times = [t for f, t, _gw, _size, _kind in metrics.hn_deliveries if f == flow]
    if not times:
        raise NoSamples(f"flow {flow} delivered nothing")
    max_gap = max(
        (b - a for a, b in zip(times, times[1:])), default=0
    )
    return max(0, max_gap - interval_us)


def rtt_series(metrics: MetricStore, flow: str) -> list[tuple[int, int]]:
    """(send time, round-trip time) per answered probe."""
    return sorted(
        (sent, rtt) for f, sent, rtt in metrics.rtt_samples if f == flow
    )


def throughput_series(
    metrics: MetricStore, flow: str, bin_us: int
) -> list[tuple[int, float]]:
    """(bin start, delivered bits/s) measured at the home-network boundary."""
    return throughput_bins(metrics, flow, bin_us)
