"""World fabric: nodes, radios, home networks and clients wired together.

The engine delivers timestamped frame arrivals here; everything that happens
at one instant inside a node (bridge walk, push/pop, mux) runs synchronously,
and only radio hops re-enter the event queue with their link latency.

Each tenant's home network is one extra bridge outside the controller's
reach: a plain MAC-learning bridge with one port per gateway tunnel_if plus a
host that answers probes and ARP requests.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from .config import SimParams
from .controller import Controller
from .core import (
    BROADCAST,
    Frame,
    FrameKind,
    MacAddress,
    NodeId,
    TenantId,
    tenant_letter,
    trace_line,
)
from .datapath import Emission, MacTable, SwamNode, bridge_forward
from .errors import NoSuchVap
from .metrics import MetricStore, flow_of
from .substrate import (
    CapacityMeter,
    LlidSpace,
    Topology,
    attach_client,
    link_key,
    set_link_state,
    transmit,
)

HN_HOST_PORT = "hn_host"


def hn_port_name(gateway: NodeId) -> str:
    return f"hn_port_s{gateway}"


def hn_name(tenant: TenantId) -> str:
    return f"hn{tenant_letter(tenant)}"


def hn_host_mac(tenant: TenantId) -> MacAddress:
    return MacAddress(bytes([0x02, 0, 0, 0, tenant, 0xFE]))


@dataclass
class HomeNetwork:
    """Tenant home network: a regular bridge joining the overlay sub-trees."""

    tenant: TenantId
    host_mac: MacAddress
    table: MacTable = field(default_factory=MacTable)
    gateway_ports: dict[NodeId, str] = field(default_factory=dict)

    @property
    def name(self) -> str:
        return hn_name(self.tenant)

    def ports(self) -> set[str]:
        return {HN_HOST_PORT} | set(self.gateway_ports.values())


class World:
    """Single-writer simulation state driven by the event engine."""

    def __init__(
        self,
        topo: Topology,
        llids: LlidSpace,
        nodes: dict[NodeId, SwamNode],
        controller: Controller,
        params: SimParams,
        metrics: MetricStore,
        rng: random.Random | None = None,
    ):
        self.topo = topo
        self.llids = llids
        self.nodes = nodes
        self.controller = controller
        self.params = params
        self.metrics = metrics
        self.rng = rng or random.Random(params.seed)
        self.meter = CapacityMeter(params.capacity_window_us)
        self.hns: dict[TenantId, HomeNetwork] = {}
        self.trace: list[str] | None = None
        # Bound by the engine: schedule_call(t_us, fn), schedule_frame(t_us,
        # node, iface, frame, transmitter).
        self.schedule_call: Callable[[int, Callable[[int], None]], None] | None = None
        self.schedule_frame = None

    def build_home_networks(self) -> None:
        """One home network per registered tenant, a port per gateway."""
        for tenant in sorted(self.controller.presence):
            presence = self.controller.presence[tenant]
            hn = HomeNetwork(tenant=tenant, host_mac=hn_host_mac(tenant))
            hn.table.aging_us = self.params.mac_aging_us
            for gw in sorted(presence.gateways):
                hn.gateway_ports[gw] = hn_port_name(gw)
            self.hns[tenant] = hn

    # -- tracing ------------------------------------------------------------------

    def _trace(self, now: int, node: str, iface: str, direction: str, frame: Frame):
        if self.trace is not None:
            self.trace.append(trace_line(now, node, iface, direction, frame))

    # -- frame fabric ---------------------------------------------------------------

    def inject_at_vap(
        self, node_id: NodeId, tenant: TenantId, frame: Frame, now: int
    ) -> None:
        bridge = self.nodes[node_id].bridges.get(tenant)
        if bridge is None or not bridge.vaps:
            raise NoSuchVap(f"tenant {tenant} has no vap on s{node_id}")
        flow = flow_of(frame.flow_id)
        if flow is not None:
            self.metrics.injected[flow] += 1
        self.frame_arrival(node_id, bridge.vaps[0], frame, now)

    def frame_arrival(
        self,
        node_id: NodeId,
        iface: str,
        frame: Frame,
        now: int,
        transmitter: NodeId | None = None,
    ) -> None:
        node = self.nodes[node_id]
        self._trace(now, node.name, iface, "in", frame)
        result = node.process(frame, iface, now, transmitter)
        for tenant, mac, port in result.mac_writes:
            self.metrics.mac_writes.append(
                (now, node.name, f"br_{tenant_letter(tenant)}", str(mac), port)
            )
        for cause, dropped in result.drops:
            self.metrics.drop(cause, flow_of(dropped.flow_id))
        for emission in result.emissions:
            self.metrics.emissions += 1
            self._trace(now, node.name, emission.iface, "out", emission.frame)
            if emission.next_hop is not None:
                self._radio_out(node, emission, now)
            elif emission.iface == node.bridges[emission.tenant].tunnel_if:
                self._into_home_network(emission.tenant, node_id, emission.frame, now)
            else:
                self._vap_out(node_id, emission, now)

    def _radio_out(self, node: SwamNode, emission: Emission, now: int) -> None:
        result = transmit(
            self.topo,
            self.llids,
            self.meter,
            node.id,
            emission.frame,
            now,
            self.params.jitter_us,
            self.rng,
        )
        for cause in result.drops:
            self.metrics.drop(cause, flow_of(emission.frame.flow_id))
        for t_arrival, peer, frame in result.arrivals:
            self.metrics.link_bits[
                (link_key(node.id, peer), now // self.params.throughput_bin_us)
            ] += frame.size_bytes * 8
            self.schedule_frame(t_arrival, peer, self.nodes[peer].mux.radio, frame, node.id)

    def _vap_out(self, node_id: NodeId, emission: Emission, now: int) -> None:
        frame = emission.frame
        for mac in sorted(self.topo.access_attach):
            node, tenant = self.topo.access_attach[mac]
            if node != node_id or tenant != emission.tenant:
                continue
            if frame.dst == mac or frame.dst.is_broadcast:
                self._client_receive(mac, frame, now)

    def _client_receive(self, mac: MacAddress, frame: Frame, now: int) -> None:
        tag = frame.flow_id
        if not isinstance(tag, tuple):
            return
        if tag[0] == "probe" and frame.dst == mac:
            _kind, flow, _seq, sent = tag
            self.metrics.rtt_samples.append((flow, sent, now - sent))
        elif tag[0] == "data" and frame.dst == mac:
            self.metrics.client_deliveries.append((tag[1], now, frame.size_bytes))

    def _into_home_network(
        self, tenant: TenantId, gateway: NodeId, frame: Frame, now: int
    ) -> None:
        hn = self.hns[tenant]
        if frame.dst == hn.host_mac or frame.dst.is_broadcast:
            self.metrics.hn_deliveries.append(
                (flow_of(frame.flow_id), now, gateway, frame.size_bytes,
                 frame.kind.value)
            )
            if frame.kind is FrameKind.ARP_REQUEST:
                self.metrics.event(
                    now, "arp_delivered_hn",
                    f"tenant={tenant_letter(tenant)} src={frame.src} gw=s{gateway}",
                )
        self._hn_bridge(hn, frame, hn.gateway_ports[gateway], now)

    def _hn_bridge(self, hn: HomeNetwork, frame: Frame, in_port: str, now: int):
        outputs, changed = bridge_forward(hn.table, frame, in_port, hn.ports(), now)
        if changed:
            self.metrics.mac_writes.append(
                (now, hn.name, "bridge", str(frame.src), in_port)
            )
        gw_by_port = {p: g for g, p in hn.gateway_ports.items()}
        for port, out_frame in outputs:
            self.metrics.emissions += 1
            if port == HN_HOST_PORT:
                self._hn_host(hn, out_frame, now)
            else:
                gateway = gw_by_port[port]
                tun_if = self.nodes[gateway].bridges[hn.tenant].tunnel_if
                self.frame_arrival(gateway, tun_if, out_frame, now)

    def _hn_host(self, hn: HomeNetwork, frame: Frame, now: int) -> None:
        """The tenant host answers probes and ARP requests; data is absorbed."""
        if frame.kind is FrameKind.PROBE and frame.dst == hn.host_mac:
            reply = Frame(
                src=hn.host_mac, dst=frame.src, kind=FrameKind.PROBE,
                size_bytes=frame.size_bytes, flow_id=frame.flow_id,
            )
            self._hn_bridge(hn, reply, HN_HOST_PORT, now)
        elif frame.kind is FrameKind.ARP_REQUEST:
            reply = Frame(
                src=hn.host_mac, dst=frame.src, kind=FrameKind.ARP_REPLY,
                size_bytes=64,
            )
            self._hn_bridge(hn, reply, HN_HOST_PORT, now)

    # -- substrate events --------------------------------------------------------------

    def attach(self, mac: MacAddress, tenant: TenantId, node: NodeId, now: int):
        """Client attach (break-before-make): move the attachment, emit the
        client's link discovery broadcast, notify the controller agent."""
        presence = self.controller.presence[tenant]
        previous = attach_client(self.topo, mac, tenant, node, presence.vap_nodes)
        self.metrics.event(
            now, "attach",
            f"mac={mac} tenant={tenant_letter(tenant)} node=s{node}"
            + (f" prev=s{previous}" if previous is not None else ""),
        )
        if self.params.llc_xid:
            self.inject_at_vap(
                node, tenant,
                Frame(src=mac, dst=BROADCAST, kind=FrameKind.LLC_XID, size_bytes=64),
                now,
            )
        arp_at = now + self.params.agent_delay_us

        def agent(t: int) -> None:
            inj_node, inj_tenant, arp = self.controller.on_client_attach(
                mac, tenant, node
            )
            self.metrics.event(t, "arp_injected", f"mac={mac} node=s{inj_node}")
            self.inject_at_vap(inj_node, inj_tenant, arp, t)

        self.schedule_call(arp_at, agent)

    def link_state(self, a: NodeId, b: NodeId, up: bool, now: int) -> None:
        event = set_link_state(self.topo, a, b, up, now)
        if event is None:
            return
        self.metrics.event(
            now, "link_up" if up else "link_down", f"link=s{a}-s{b}"
        )
        notify_at = now + self.params.detection_delay_us

        def notify(t: int) -> None:
            self.metrics.event(t, "link_detected", f"link=s{a}-s{b} up={up}")
            if up:
                return
            apply_at = t + self.params.controller_latency_us

            def apply(t2: int) -> None:
                moved = self.controller.on_link_failure(event.link, t2)
                self.metrics.event(
                    t2, "reroute_done", f"link=s{a}-s{b} tunnels={len(moved)}"
                )

            self.schedule_call(apply_at, apply)

        self.schedule_call(notify_at, notify)

    def update_root(
        self, tenant: TenantId, node: NodeId, new_root: NodeId, now: int
    ) -> None:
        """Gateway relocation: the old uplink closes when the update starts,
        the new uplink opens (and spoofed ARPs flood) one controller latency
        later, rules strictly before ARPs."""
        pending = self.controller.begin_root_update(tenant, node, new_root, now)
        self.metrics.event(
            now, "relocation_begin",
            f"tenant={tenant_letter(tenant)} node=s{node} "
            f"root=s{pending.old_root}->s{new_root}",
        )

        def finish(t: int) -> None:
            injections = self.controller.finish_root_update(pending, t)
            self.metrics.event(
                t, "relocation_rules_applied",
                f"tenant={tenant_letter(tenant)} node=s{node} root=s{new_root}",
            )
            for inj_node, inj_tenant, arp in injections:
                self.metrics.event(t, "arp_injected", f"mac={arp.src} node=s{inj_node}")
                self.inject_at_vap(inj_node, inj_tenant, arp, t)

        self.schedule_call(now + self.params.controller_latency_us, finish)

    # -- dumps ------------------------------------------------------------------------

    def dump_rules(
        self, sections: tuple[str, ...] = ("access", "int", "bh", "mux")
    ) -> str:
        lines: list[str] = []
        for node_id in sorted(self.nodes):
            lines.extend(self.nodes[node_id].dump_lines(sections))
        if "access" in sections:
            for tenant in sorted(self.hns):
                hn = self.hns[tenant]
                lines.append(f"home {hn.name}")
                lines.append(f"    ports: {', '.join(sorted(hn.ports()))}")
                for mac in sorted(hn.table.entries):
                    port, _seen = hn.table.entries[mac]
                    lines.append(f"    mac {mac} -> {port}")
        return "\n".join(lines) + "\n"
