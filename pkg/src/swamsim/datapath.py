"""Per-node packet pipeline: tenant bridges, integration bridge, backhaul bridge, mux.

A SwamNode assembles the three-level switch hierarchy plus the per-radio mux.
Upstream frames travel vap/tunnel_if -> tenant bridge -> br_int (push) ->
br_bh -> mux -> radio; transit frames stay below the tenant bridges
(mux -> br_bh -> mux); downstream frames reverse the upstream walk via a
pop rule in br_int.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .core import (
    Frame,
    MacAddress,
    NodeId,
    TenantId,
    VlanId,
    pop_vlan,
    push_vlan,
    tenant_letter,
)
from .errors import (
    MalformedFrame,
    NoRoute,
    UnknownOuterTag,
    UnknownVport,
)

# br_int port identifier for the side facing the backhaul bridge.
FROM_BH = "bh"

DROP_PRIORITY = 100
FORWARD_PRIORITY = 10


@dataclass(frozen=True)
class PortRef:
    """Globally unique port handle: (node, bridge, port name)."""

    node: NodeId
    bridge: str
    name: str

    def __str__(self) -> str:
        return f"s{self.node}:{self.bridge}:{self.name}"


@dataclass
class MacTable:
    """Classical learning-bridge table; aging disabled unless aging_us set."""

    aging_us: int | None = None
    entries: dict[MacAddress, tuple[str, int]] = field(default_factory=dict)

    def learn(self, mac: MacAddress, port: str, now: int) -> bool:
        """Bind mac to port; returns True when the binding changed."""
        if mac.is_broadcast:
            return False
        prev = self.entries.get(mac)
        self.entries[mac] = (port, now)
        return prev is None or prev[0] != port

    def lookup(self, mac: MacAddress, now: int) -> str | None:
        entry = self.entries.get(mac)
        if entry is None:
            return None
        port, seen = entry
        if self.aging_us is not None and now - seen > self.aging_us:
            del self.entries[mac]
            return None
        return port


def bridge_forward(
    table: MacTable,
    frame: Frame,
    in_port: str,
    ports: set[str],
    now: int = 0,
) -> tuple[list[tuple[str, Frame]], bool]:
    """Learning-bridge step: learn src, then unicast, filter or flood.

    Returns the (port, frame) outputs plus whether the src binding changed.
    Unknown destinations flood every port except the ingress one.
    """
    if in_port not in ports:
        raise ValueError(f"ingress {in_port} not attached to bridge")
    if frame.depth != 0:
        raise ValueError("tenant-bridge frames are untagged")
    changed = table.learn(frame.src, in_port, now)
    if frame.dst.is_broadcast:
        return [(p, frame) for p in sorted(ports) if p != in_port], changed
    out = table.lookup(frame.dst, now)
    if out is None:
        return [(p, frame) for p in sorted(ports) if p != in_port], changed
    if out == in_port:
        return [], changed  # destination lives on the ingress segment
    return [(out, frame)], changed


class IntAction(Enum):
    PUSH = "push"
    POP = "pop"
    DROP = "drop"


@dataclass(frozen=True)
class IntRule:
    """Integration-bridge rule; higher priority wins."""

    priority: int
    in_port: str
    action: IntAction
    vlan: VlanId | None = None  # pushed tag, or matched inner tag for POP
    out_port: str | None = None  # FROM_BH for PUSH; tenant-bridge port for POP

    def describe(self) -> str:
        extra = ""
        if self.action is IntAction.PUSH:
            extra = f" vlan={self.vlan} out={self.out_port}"
        elif self.action is IntAction.POP:
            extra = f" vlan={self.vlan} out={self.out_port}"
        return f"prio={self.priority} in={self.in_port} action={self.action.value}{extra}"


@dataclass(frozen=True)
class IntOutcome:
    forwarded: bool
    out_port: str | None = None
    frame: Frame | None = None
    cause: str | None = None  # int_drop_rule | int_no_rule when not forwarded


def _rule_matches(rule: IntRule, frame: Frame, in_port: str) -> bool:
    if rule.in_port != in_port:
        return False
    if rule.action is IntAction.POP and rule.vlan is not None:
        return frame.depth >= 1 and frame.vlan_stack[0] == rule.vlan
    return True


def int_process(rules: list[IntRule], frame: Frame, in_port: str) -> IntOutcome:
    """Apply the highest-priority matching rule; no match means drop."""
    best: IntRule | None = None
    for rule in rules:
        if _rule_matches(rule, frame, in_port):
            if best is None or rule.priority > best.priority:
                best = rule
    if best is None:
        return IntOutcome(False, cause="int_no_rule")
    if best.action is IntAction.DROP:
        return IntOutcome(False, cause="int_drop_rule")
    if best.action is IntAction.PUSH:
        return IntOutcome(True, FROM_BH, push_vlan(frame, best.vlan))
    if frame.depth == 0:
        raise MalformedFrame("pop rule matched an untagged frame")
    inner, _tag = pop_vlan(frame)
    return IntOutcome(True, best.out_port, inner)


def bh_forward(rules: dict[VlanId, str], frame: Frame) -> str:
    """Backhaul bridge: switch on the inner tunnel VLAN, frame untouched."""
    if frame.depth < 1:
        raise ValueError("backhaul bridge requires a tagged frame")
    vport = rules.get(frame.vlan_stack[0])
    if vport is None:
        raise NoRoute(f"no backhaul rule for VLAN {frame.vlan_stack[0]}")
    return vport


@dataclass
class MuxMap:
    """Per-radio mux translating virtual ports to outer link tags.

    egress maps each virtual port to the local link id of the neighbor it
    reaches; inbound records, per peered neighbor, the tag that neighbor uses
    to address this node (exchanged at peering) and the receiving vport.
    """

    radio: str = "radio0"
    egress: dict[str, VlanId] = field(default_factory=dict)
    peer_by_vport: dict[str, NodeId] = field(default_factory=dict)
    inbound: dict[NodeId, tuple[VlanId, str]] = field(default_factory=dict)


def mux_egress(mux: MuxMap, vport: str, frame: Frame) -> Frame:
    """Add the outer link tag for the neighbor behind vport."""
    if frame.depth != 1:
        raise ValueError("mux egress expects a single-tagged frame")
    tag = mux.egress.get(vport)
    if tag is None:
        raise UnknownVport(f"{vport} not attached to {mux.radio}")
    return push_vlan(frame, tag)


def mux_ingress(
    mux: MuxMap, frame: Frame, transmitter: NodeId | None = None
) -> tuple[str, Frame]:
    """Strip the outer tag of a radio frame addressed to this node.

    Raises UnknownOuterTag when the frame is not addressed to one of this
    node's links (non-addressed copies on the p2mp medium are dropped here).
    """
    if frame.depth != 2:
        raise ValueError("radio frames carry exactly two tags")
    outer = frame.vlan_stack[0]
    if transmitter is not None:
        entry = mux.inbound.get(transmitter)
        if entry is None or entry[0] != outer:
            raise UnknownOuterTag(f"tag {outer} not addressed to this node")
        vport = entry[1]
    else:
        matches = [vp for peer, (tag, vp) in mux.inbound.items() if tag == outer]
        if len(matches) != 1:
            raise UnknownOuterTag(f"tag {outer} not addressed to this node")
        vport = matches[0]
    inner, _tag = pop_vlan(frame)
    return vport, inner


@dataclass
class TenantBridge:
    """Per-tenant access bridge on one node."""

    tenant: TenantId
    table: MacTable = field(default_factory=MacTable)
    vaps: list[str] = field(default_factory=list)
    tunnel_if: str | None = None
    tunnel_ports: dict[NodeId, str] = field(default_factory=dict)  # peer -> port

    def ports(self) -> set[str]:
        out = set(self.vaps) | set(self.tunnel_ports.values())
        if self.tunnel_if is not None:
            out.add(self.tunnel_if)
        return out


@dataclass
class Emission:
    """One frame leaving a node through a concrete interface."""

    iface: str  # vap/tunnel_if port name, or the radio name
    frame: Frame
    tenant: TenantId | None = None  # owning tenant for vap/tunnel_if
    next_hop: NodeId | None = None  # addressed neighbor for radio emissions


@dataclass
class ProcessResult:
    emissions: list[Emission] = field(default_factory=list)
    drops: list[tuple[str, Frame]] = field(default_factory=list)
    mac_writes: list[tuple[TenantId, MacAddress, str]] = field(default_factory=list)


@dataclass
class SwamNode:
    """One node: tenant bridges + br_int + br_bh + mux, with its rule state."""

    id: NodeId
    wired: bool = False
    bridges: dict[TenantId, TenantBridge] = field(default_factory=dict)
    push_rules: dict[str, IntRule] = field(default_factory=dict)  # port -> rule
    pop_rules: dict[VlanId, IntRule] = field(default_factory=dict)  # vlan -> rule
    drop_ports: set[str] = field(default_factory=set)
    bh_rules: dict[VlanId, str] = field(default_factory=dict)  # vlan -> vport
    mux: MuxMap = field(default_factory=MuxMap)

    @property
    def name(self) -> str:
        return f"s{self.id}"

    # -- provisioning helpers (driven by the controller) --------------------

    def ensure_bridge(self, tenant: TenantId) -> TenantBridge:
        bridge = self.bridges.get(tenant)
        if bridge is None:
            bridge = TenantBridge(tenant=tenant)
            self.bridges[tenant] = bridge
        return bridge

    def vap_count(self) -> int:
        return sum(len(b.vaps) for b in self.bridges.values())

    def int_rules(self) -> list[IntRule]:
        """Flat rule list, the integration bridge's canonical contents."""
        rules = [
            IntRule(DROP_PRIORITY, port, IntAction.DROP)
            for port in sorted(self.drop_ports)
        ]
        rules.extend(self.push_rules[p] for p in sorted(self.push_rules))
        rules.extend(self.pop_rules[v] for v in sorted(self.pop_rules))
        return rules

    def owner_of(self, port: str) -> TenantId | None:
        for tenant, bridge in self.bridges.items():
            if port in bridge.ports():
                return tenant
        return None

    # -- pipeline ------------------------------------------------------------

    def process(
        self,
        frame: Frame,
        ingress: str,
        now: int = 0,
        transmitter: NodeId | None = None,
    ) -> ProcessResult:
        """Run one frame through the full hierarchy from the given interface."""
        result = ProcessResult()
        if ingress == self.mux.radio:
            self._from_radio(frame, transmitter, now, result)
        else:
            tenant = self.owner_of(ingress)
            if tenant is None:
                raise ValueError(f"unknown ingress {ingress} on {self.name}")
            self._bridge_run(tenant, frame, ingress, now, result)
        return result

    def _from_radio(
        self,
        frame: Frame,
        transmitter: NodeId | None,
        now: int,
        result: ProcessResult,
    ) -> None:
        try:
            _vport, inner = mux_ingress(self.mux, frame, transmitter)
        except UnknownOuterTag:
            result.drops.append(("unknown_outer_tag", frame))
            return
        vlan = inner.vlan_stack[0]
        out_vport = self.bh_rules.get(vlan)
        if out_vport is not None:
            # Transit: stays below the tenant bridges, inner tag untouched.
            tagged = mux_egress(self.mux, out_vport, inner)
            result.emissions.append(
                Emission(
                    self.mux.radio,
                    tagged,
                    next_hop=self.mux.peer_by_vport[out_vport],
                )
            )
            return
        rule = self.pop_rules.get(vlan)
        if rule is None:
            result.drops.append(("no_route", inner))
            return
        delivered, _tag = pop_vlan(inner)
        tenant = self.owner_of(rule.out_port)
        self._bridge_run(tenant, delivered, rule.out_port, now, result)

    def _bridge_run(
        self,
        tenant: TenantId,
        frame: Frame,
        in_port: str,
        now: int,
        result: ProcessResult,
    ) -> None:
        bridge = self.bridges[tenant]
        outputs, changed = bridge_forward(
            bridge.table, frame, in_port, bridge.ports(), now
        )
        if changed:
            result.mac_writes.append((tenant, frame.src, in_port))
        for port, out_frame in outputs:
            if port in bridge.vaps or port == bridge.tunnel_if:
                result.emissions.append(Emission(port, out_frame, tenant=tenant))
                continue
            self._toward_backhaul(out_frame, port, result)

    def _toward_backhaul(self, frame: Frame, port: str, result: ProcessResult) -> None:
        if port in self.drop_ports:
            result.drops.append(("int_drop_rule", frame))
            return
        rule = self.push_rules.get(port)
        if rule is None:
            result.drops.append(("int_no_rule", frame))
            return
        tagged = push_vlan(frame, rule.vlan)
        vport = self.bh_rules.get(rule.vlan)
        if vport is None:
            result.drops.append(("no_route", tagged))
            return
        out = mux_egress(self.mux, vport, tagged)
        result.emissions.append(
            Emission(self.mux.radio, out, next_hop=self.mux.peer_by_vport[vport])
        )

    # -- dumps ----------------------------------------------------------------

    def dump_lines(
        self, sections: tuple[str, ...] = ("access", "int", "bh", "mux")
    ) -> list[str]:
        """Deterministic sorted text dump of rules and MAC tables."""
        lines = [f"node {self.name}"]
        if "access" in sections:
            for tenant in sorted(self.bridges):
                bridge = self.bridges[tenant]
                lines.append(f"  bridge br_{tenant_letter(tenant)}")
                lines.append(f"    ports: {', '.join(sorted(bridge.ports()))}")
                for mac in sorted(bridge.table.entries):
                    port, _seen = bridge.table.entries[mac]
                    lines.append(f"    mac {mac} -> {port}")
        if "int" in sections:
            lines.append("  bridge br_int")
            for rule in self.int_rules():
                lines.append(f"    {rule.describe()}")
        if "bh" in sections:
            lines.append("  bridge br_bh")
            for vlan in sorted(self.bh_rules):
                lines.append(f"    vlan={vlan} -> {self.bh_rules[vlan]}")
        if "mux" in sections:
            lines.append(f"  mux {self.mux.radio}")
            for vport in sorted(self.mux.egress):
                lines.append(f"    {vport} -> {self.mux.egress[vport]}")
        return lines


def vap_name(tenant: TenantId, node: NodeId) -> str:
    return f"vap_{tenant_letter(tenant)}_{node}"

def tunnel_if_name(tenant: TenantId) -> str:
    return f"tun_if_{tenant_letter(tenant)}"

def tunnel_port_name(tenant: TenantId, origin: NodeId, dest: NodeId) -> str:
    return f"p_{tenant_letter(tenant)}_{origin}_{dest}"

def veth_name(neighbor: NodeId) -> str:
    return f"veth_to_s{neighbor}"
