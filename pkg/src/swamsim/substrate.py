"""Simulated wireless backhaul medium and wired attachments.

Links are undirected with per-direction capacity accounting (token bucket over
a fixed window). Each node numbers its mesh links locally: neighbors sorted by
node id get link ids 1, 2, 3, ... These local link ids are the outer tags used
by the mux layer; the sending driver resolves the addressed next hop from its
own link-id space, so on the p2mp medium exactly the addressed neighbor
accepts a transmission.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .core import Frame, MacAddress, NodeId, TenantId, VlanId
from .datapath import MuxMap, veth_name
from .errors import NoSuchVap, UnknownLink, ValidationError

DEFAULT_WINDOW_US = 100_000


def link_key(a: NodeId, b: NodeId) -> tuple[NodeId, NodeId]:
    return (a, b) if a < b else (b, a)


@dataclass
class RadioLink:
    a: NodeId
    b: NodeId
    latency_us: int = 1000
    capacity_bps: int | None = None  # None = unlimited
    up: bool = True


@dataclass(frozen=True)
class LinkEvent:
    time_us: int
    link: tuple[NodeId, NodeId]
    up: bool


@dataclass
class Topology:
    nodes: dict[NodeId, bool] = field(default_factory=dict)  # id -> wired
    links: dict[tuple[NodeId, NodeId], RadioLink] = field(default_factory=dict)
    # client MAC -> (node, tenant); absent key means unattached
    access_attach: dict[MacAddress, tuple[NodeId, TenantId]] = field(
        default_factory=dict
    )

    def neighbors(self, node: NodeId) -> list[NodeId]:
        out = []
        for (a, b) in self.links:
            if a == node:
                out.append(b)
            elif b == node:
                out.append(a)
        return sorted(out)

    def link(self, a: NodeId, b: NodeId) -> RadioLink:
        try:
            return self.links[link_key(a, b)]
        except KeyError:
            raise UnknownLink(f"no link s{a}-s{b}") from None


LlidSpace = dict[NodeId, dict[NodeId, VlanId]]


def assign_llids(topo: Topology) -> LlidSpace:
    """Per node, neighbors sorted by id get link ids 1, 2, 3, ..."""
    return {
        node: {peer: i for i, peer in enumerate(topo.neighbors(node), start=1)}
        for node in sorted(topo.nodes)
    }


def build_mux(node: NodeId, topo: Topology, llids: LlidSpace) -> MuxMap:
    """Mux view for one node: egress tags are its own link ids; the inbound
    table records the tag each peer uses to address this node."""
    mux = MuxMap()
    for peer, tag in llids.get(node, {}).items():
        vport = veth_name(peer)
        mux.egress[vport] = tag
        mux.peer_by_vport[vport] = peer
        mux.inbound[peer] = (llids[peer][node], vport)
    return mux


def build_topology(
    nodes: list[tuple[NodeId, bool]],
    links: list[tuple[NodeId, NodeId, int, int | None]],
) -> tuple[Topology, LlidSpace]:
    """Validate and assemble the substrate; all links start UP."""
    if len(nodes) < 2:
        raise ValidationError("topology needs at least 2 nodes")
    topo = Topology()
    for node, wired in nodes:
        if node in topo.nodes:
            raise ValidationError(f"duplicate node s{node}")
        topo.nodes[node] = wired
    for a, b, latency_us, capacity_bps in links:
        if a == b:
            raise ValidationError(f"link s{a}-s{b} joins a node to itself")
        if a not in topo.nodes or b not in topo.nodes:
            raise ValidationError(f"link s{a}-s{b} references unknown node")
        key = link_key(a, b)
        if key in topo.links:
            raise ValidationError(f"duplicate link s{a}-s{b}")
        topo.links[key] = RadioLink(key[0], key[1], latency_us, capacity_bps)
    return topo, assign_llids(topo)


@dataclass
class CapacityMeter:
    """Per-direction token bucket over fixed accounting windows."""

    window_us: int = DEFAULT_WINDOW_US
    _state: dict[tuple[NodeId, NodeId], tuple[int, int]] = field(
        default_factory=dict
    )  # (src, dst) -> (window index, bits used)

    def admit(
        self, src: NodeId, dst: NodeId, bits: int, now: int, capacity_bps: int | None
    ) -> bool:
        if capacity_bps is None:
            return True
        window = now // self.window_us
        idx, used = self._state.get((src, dst), (window, 0))
        if idx != window:
            used = 0
        budget = capacity_bps * self.window_us // 1_000_000
        if used + bits > budget:
            self._state[(src, dst)] = (window, used)
            return False
        self._state[(src, dst)] = (window, used + bits)
        return True


@dataclass
class TransmitResult:
    arrivals: list[tuple[int, NodeId, Frame]] = field(default_factory=list)
    drops: list[str] = field(default_factory=list)


def transmit(
    topo: Topology,
    llids: LlidSpace,
    meter: CapacityMeter,
    sender: NodeId,
    frame: Frame,
    now: int,
    jitter_us: int = 0,
    rng: random.Random | None = None,
) -> TransmitResult:
    """Radio transmission: offered to every neighbor, accepted only by the
    one the outer tag addresses (resolved from the sender's link-id space).

    Loss is a counted outcome, never an exception: a dead link, an unknown
    outer tag or an exhausted capacity window each yield one drop record.
    """
    result = TransmitResult()
    outer = frame.vlan_stack[0]
    next_hop = None
    for peer, tag in llids.get(sender, {}).items():
        if tag == outer:
            next_hop = peer
            break
    if next_hop is None:
        result.drops.append("unknown_outer_tag")
        return result
    link = topo.link(sender, next_hop)
    if not link.up:
        result.drops.append("dead_link")
        return result
    if not meter.admit(sender, next_hop, frame.size_bytes * 8, now, link.capacity_bps):
        result.drops.append("capacity")
        return result
    latency = link.latency_us
    if jitter_us and rng is not None:
        latency += rng.randint(0, jitter_us)
    result.arrivals.append((now + latency, next_hop, frame))
    return result


def set_link_state(
    topo: Topology, a: NodeId, b: NodeId, up: bool, now: int
) -> LinkEvent | None:
    """Flip a link; returns the event to deliver to the controller, or None
    when the state did not change (no duplicate notifications)."""
    link = topo.link(a, b)
    if link.up == up:
        return None
    link.up = up
    return LinkEvent(now, link_key(a, b), up)


def attach_client(
    topo: Topology,
    mac: MacAddress,
    tenant: TenantId,
    node: NodeId,
    nodes_with_vap: set[NodeId],
) -> NodeId | None:
    """Attach a client to the tenant vap on `node`, break-before-make.

    Returns the previous node, if any. The caller injects the client's link
    discovery broadcast and notifies the controller agent.
    """
    if node not in nodes_with_vap:
        raise NoSuchVap(f"tenant {tenant} has no vap on s{node}")
    previous = topo.access_attach.pop(mac, None)
    topo.access_attach[mac] = (node, tenant)
    return previous[0] if previous is not None else None
