"""Control plane: tenant provisioning, root selection, tunnel paths and reroute.

The controller is a deterministic state machine over the node rule tables.
Loop avoidance is the degenerate direct-tunnel form of spanning tree: every
access bridge keeps open only the port of its uplink tunnel to its assigned
root, and a root keeps open only the ports toward the nodes rooted at it.
All rule mutations are appended to a timestamped rule-change log.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import (
    BROADCAST,
    Frame,
    FrameKind,
    MacAddress,
    NodeId,
    TenantId,
    TunnelId,
    VAPS_PER_RADIO,
    VlanAllocator,
    VlanId,
    tenant_letter,
)
from .datapath import (
    FORWARD_PRIORITY,
    FROM_BH,
    IntAction,
    IntRule,
    SwamNode,
    tunnel_if_name,
    tunnel_port_name,
    vap_name,
    veth_name,
)
from .core import VlanMode
from .errors import (
    CapacityExceeded,
    Disconnected,
    EncodingOverflow,
    NotAGateway,
    VapCapExceeded,
    ValidationError,
)
from .substrate import LlidSpace, Topology, link_key

PRIMARY = "PRIMARY"
BACKUP = "BACKUP"


@dataclass
class TenantPresence:
    tenant: TenantId
    home: str
    gateways: set[NodeId] = field(default_factory=set)
    nodes: set[NodeId] = field(default_factory=set)  # nodes with an access bridge
    vap_nodes: set[NodeId] = field(default_factory=set)
    root_of: dict[NodeId, NodeId] = field(default_factory=dict)


@dataclass
class PlanEntry:
    tunnel: TunnelId
    vlan: VlanId
    path: list[NodeId]
    backup: list[NodeId] | None
    active: str = PRIMARY
    active_path: list[NodeId] = field(default_factory=list)
    suspended: bool = False


@dataclass
class PendingRootUpdate:
    tenant: TenantId
    node: NodeId
    old_root: NodeId
    new_root: NodeId


def path_links(path: list[NodeId]) -> set[tuple[NodeId, NodeId]]:
    return {link_key(a, b) for a, b in zip(path, path[1:])}


def compute_path(
    topo: Topology,
    src: NodeId,
    dst: NodeId,
    banned: frozenset[tuple[NodeId, NodeId]] = frozenset(),
) -> list[NodeId]:
    """Minimum-hop path over UP links; ties broken by the lexicographically
    smallest node sequence (greedy走 toward the destination)."""
    if src == dst:
        raise ValueError("src == dst")

    def usable(a: NodeId, b: NodeId) -> bool:
        key = link_key(a, b)
        return key not in banned and topo.links[key].up

    dist: dict[NodeId, int] = {dst: 0}
    queue = deque([dst])
    while queue:
        cur = queue.popleft()
        for nbr in topo.neighbors(cur):
            if nbr not in dist and usable(cur, nbr):
                dist[nbr] = dist[cur] + 1
                queue.append(nbr)
    if src not in dist:
        raise Disconnected(f"s{src} cannot reach s{dst}")
    path = [src]
    cur = src
    while cur != dst:
        cur = min(
            n
            for n in topo.neighbors(cur)
            if usable(cur, n) and dist.get(n, -1) == dist[cur] - 1
        )
        path.append(cur)
    return path


def compute_backup(
    topo: Topology, primary: list[NodeId]
) -> list[NodeId] | None:
    """Pre-planned alternative: link-disjoint from the primary when possible,
    else at least avoiding the first hop; None when nothing exists."""
    src, dst = primary[0], primary[-1]
    for banned in (path_links(primary), {link_key(primary[0], primary[1])}):
        try:
            return compute_path(topo, src, dst, frozenset(banned))
        except Disconnected:
            continue
    return None


class Controller:
    """Provisioning, access (roots, mobility) and backhaul (paths) modules."""

    def __init__(
        self,
        nodes: dict[NodeId, SwamNode],
        topo: Topology,
        llids: LlidSpace,
        allocator: VlanAllocator,
    ):
        self.nodes = nodes
        self.topo = topo
        self.llids = llids
        self.allocator = allocator
        self.presence: dict[TenantId, TenantPresence] = {}
        self.plan: dict[TunnelId, PlanEntry] = {}
        self.pinned_paths: dict[TunnelId, list[NodeId]] = {}
        self.rule_log: list[tuple[int, str, str, str, str]] = []

    # -- logging ---------------------------------------------------------------

    def _log(self, now: int, node: NodeId, bridge: str, op: str, desc: str) -> None:
        self.rule_log.append((now, f"s{node}", bridge, op, desc))

    # -- provisioning ----------------------------------------------------------

    def register_tenant(
        self, tenant: TenantId, gateways: list[NodeId], home: str
    ) -> TenantPresence:
        for g in gateways:
            if not self.topo.nodes.get(g, False):
                raise ValidationError(f"gateway s{g} of tenant {tenant} is not wired")
        if not gateways:
            raise ValidationError(f"tenant {tenant} needs at least one gateway")
        presence = TenantPresence(tenant=tenant, home=home, gateways=set(gateways))
        self.presence[tenant] = presence
        return presence

    def provision_presence(
        self, tenant: TenantId, node: NodeId, with_vap: bool = True, now: int = 0
    ) -> None:
        """Instantiate tenant presence on a node and mesh it with the tenant's
        existing presence: both tunnel directions per peer, push/pop rules at
        both ends, backhaul rules along the computed paths, drop rules per the
        current root assignment. Idempotent; atomic on VLAN budget failure."""
        presence = self.presence[tenant]
        if node not in self.topo.nodes:
            raise ValidationError(f"unknown node s{node}")
        swam = self.nodes[node]
        new_node = node not in presence.nodes
        if new_node:
            # Pre-flight the whole allocation so a failure leaves no partial rules.
            peers = sorted(presence.nodes)
            if self.allocator.mode is VlanMode.SEQUENTIAL:
                if self.allocator.remaining() < 2 * len(peers):
                    raise CapacityExceeded(
                        f"provisioning s{node} for tenant {tenant} needs "
                        f"{2 * len(peers)} VLANs"
                    )
            elif tenant > 9 or node > 9 or any(p > 9 for p in peers):
                raise EncodingOverflow(
                    "digit VLAN encoding needs tenant ids and node indices <= 9"
                )
        bridge = swam.ensure_bridge(tenant)
        vap = vap_name(tenant, node)
        if with_vap and vap not in bridge.vaps:
            if swam.vap_count() >= VAPS_PER_RADIO:
                raise VapCapExceeded(f"s{node} already hosts {VAPS_PER_RADIO} vaps")
            bridge.vaps.append(vap)
            presence.vap_nodes.add(node)
            self._log(now, node, f"br_{tenant_letter(tenant)}", "add", f"vap {vap}")
        if node in presence.gateways and bridge.tunnel_if is None:
            bridge.tunnel_if = tunnel_if_name(tenant)
            self._log(
                now, node, f"br_{tenant_letter(tenant)}", "add",
                f"tunnel_if {bridge.tunnel_if}",
            )
        if not new_node:
            return
        presence.root_of[node] = (
            node if node in presence.gateways else self._default_root(presence)
        )
        for peer in sorted(presence.nodes):
            self._mesh_pair(tenant, node, peer, now)
        presence.nodes.add(node)
        self.refresh_drops(tenant, now)

    def _default_root(self, presence: TenantPresence) -> NodeId:
        return min(presence.gateways)

    def _mesh_pair(self, tenant: TenantId, a: NodeId, b: NodeId, now: int) -> None:
        """Create both unidirectional tunnels between presence nodes a and b."""
        for origin, dest in ((a, b), (b, a)):
            tunnel = TunnelId(tenant, origin, dest)
            vlan = self.allocator.encode(tunnel)
            reverse_vlan = self.allocator.encode(tunnel.reversed)
            port = tunnel_port_name(tenant, origin, dest)
            node = self.nodes[origin]
            bridge = node.ensure_bridge(tenant)
            if dest not in bridge.tunnel_ports:
                bridge.tunnel_ports[dest] = port
                self._log(
                    now, origin, f"br_{tenant_letter(tenant)}", "add", f"port {port}"
                )
            node.push_rules[port] = IntRule(
                FORWARD_PRIORITY, port, IntAction.PUSH, vlan, FROM_BH
            )
            self._log(now, origin, "br_int", "add", f"push {port} vlan={vlan}")
            node.pop_rules[reverse_vlan] = IntRule(
                FORWARD_PRIORITY, FROM_BH, IntAction.POP, reverse_vlan, port
            )
            self._log(
                now, origin, "br_int", "add", f"pop vlan={reverse_vlan} -> {port}"
            )
            path = self.pinned_paths.get(tunnel) or compute_path(
                self.topo, origin, dest
            )
            entry = PlanEntry(
                tunnel, vlan, path, compute_backup(self.topo, path), PRIMARY
            )
            self.plan[tunnel] = entry
            self.install_tunnel_path(tunnel, path, now)

    # -- backhaul module ---------------------------------------------------------

    def install_tunnel_path(
        self, tunnel: TunnelId, path: list[NodeId], now: int
    ) -> None:
        """Point br_bh rules along `path`; remove stale rules of this tunnel's
        VLAN from nodes that left the path. Terminal node keeps no transit
        rule (the pop rule in br_int delivers there)."""
        entry = self.plan[tunnel]
        vlan = entry.vlan
        old_transit = set(entry.active_path[:-1])
        new_transit = path[:-1]
        for node_id in sorted(old_transit - set(new_transit)):
            if vlan in self.nodes[node_id].bh_rules:
                del self.nodes[node_id].bh_rules[vlan]
                self._log(now, node_id, "br_bh", "del", f"vlan={vlan}")
        for hop, node_id in enumerate(new_transit):
            vport = veth_name(path[hop + 1])
            node = self.nodes[node_id]
            if node.bh_rules.get(vlan) != vport:
                node.bh_rules[vlan] = vport
                self._log(now, node_id, "br_bh", "set", f"vlan={vlan} -> {vport}")
        entry.active_path = list(path)
        entry.suspended = False

    def _suspend_tunnel(self, tunnel: TunnelId, now: int) -> None:
        entry = self.plan[tunnel]
        for node_id in sorted(set(entry.active_path[:-1])):
            if entry.vlan in self.nodes[node_id].bh_rules:
                del self.nodes[node_id].bh_rules[entry.vlan]
                self._log(now, node_id, "br_bh", "del", f"vlan={entry.vlan}")
        entry.active_path = []
        entry.suspended = True

    def on_link_failure(
        self, link: tuple[NodeId, NodeId], now: int
    ) -> list[TunnelId]:
        """Move every tunnel riding the failed link to its pre-planned backup;
        replan from scratch when the backup is not viable. Tunnels away from
        the link keep their rules untouched."""
        failed = link_key(*link)
        moved: list[TunnelId] = []
        for tunnel in sorted(self.plan):
            entry = self.plan[tunnel]
            if entry.suspended or failed not in path_links(entry.active_path):
                continue
            moved.append(tunnel)
            backup = entry.backup
            if backup is not None and self._viable(backup):
                entry.active = BACKUP
                self.install_tunnel_path(tunnel, backup, now)
                continue
            try:
                fresh = compute_path(self.topo, tunnel.origin, tunnel.dest)
            except Disconnected:
                self._suspend_tunnel(tunnel, now)
                continue
            entry.path = fresh
            entry.backup = compute_backup(self.topo, fresh)
            entry.active = PRIMARY
            self.install_tunnel_path(tunnel, fresh, now)
        return moved

    def _viable(self, path: list[NodeId]) -> bool:
        return all(self.topo.links[k].up for k in path_links(path))

    # -- access module (roots, loop avoidance, mobility) -------------------------

    def refresh_drops(self, tenant: TenantId, now: int) -> None:
        """Re-derive the loop-avoidance drop set from the root assignment:
        port i->j stays open iff j is i's root or i is j's root."""
        presence = self.presence[tenant]
        roots = presence.root_of
        for node_id in sorted(presence.nodes | set(roots)):
            node = self.nodes[node_id]
            bridge = node.bridges.get(tenant)
            if bridge is None:
                continue
            for peer, port in sorted(bridge.tunnel_ports.items()):
                open_ = roots.get(node_id) == peer or roots.get(peer) == node_id
                if open_ and port in node.drop_ports:
                    node.drop_ports.discard(port)
                    self._log(now, node_id, "br_int", "del", f"drop {port}")
                elif not open_ and port not in node.drop_ports:
                    node.drop_ports.add(port)
                    self._log(now, node_id, "br_int", "add", f"drop {port}")

    def apply_root(
        self, tenant: TenantId, node: NodeId, root: NodeId, now: int = 0
    ) -> None:
        """Point the node's access bridge at `root`: every other backhaul
        port gets a high-priority drop, the uplink port is opened."""
        presence = self.presence[tenant]
        if root not in presence.gateways:
            raise NotAGateway(f"s{root} is not a gateway of tenant {tenant}")
        presence.root_of[node] = root
        self.refresh_drops(tenant, now)

    def begin_root_update(
        self, tenant: TenantId, node: NodeId, new_root: NodeId, now: int
    ) -> PendingRootUpdate:
        """Start a gateway relocation: the uplink to the old root is blocked
        immediately; the new uplink opens when the update completes."""
        presence = self.presence[tenant]
        if new_root not in presence.gateways:
            raise NotAGateway(f"s{new_root} is not a gateway of tenant {tenant}")
        old_root = presence.root_of[node]
        port = self.nodes[node].bridges[tenant].tunnel_ports.get(old_root)
        if port is not None and port not in self.nodes[node].drop_ports:
            self.nodes[node].drop_ports.add(port)
            self._log(now, node, "br_int", "add", f"drop {port}")
        return PendingRootUpdate(tenant, node, old_root, new_root)

    def finish_root_update(
        self, pending: PendingRootUpdate, now: int
    ) -> list[tuple[NodeId, TenantId, Frame]]:
        """Apply the root move and return the spoofed ARP injections (one per
        client attached to the node's vap), to be injected after the rules."""
        presence = self.presence[pending.tenant]
        presence.root_of[pending.node] = pending.new_root
        self.refresh_drops(pending.tenant, now)
        injections = []
        for mac in self.attached_clients(pending.tenant, pending.node):
            injections.append(
                (pending.node, pending.tenant, spoofed_arp(mac))
            )
        return injections

    def attached_clients(self, tenant: TenantId, node: NodeId) -> list[MacAddress]:
        return sorted(
            mac
            for mac, (n, t) in self.topo.access_attach.items()
            if n == node and t == tenant
        )

    def on_client_attach(
        self, mac: MacAddress, tenant: TenantId, node: NodeId
    ) -> tuple[NodeId, TenantId, Frame]:
        """Agent reaction to a vap attach: one spoofed broadcast ARP request
        on behalf of the client, injected at its new vap."""
        return node, tenant, spoofed_arp(mac)

    def rule_log_lines(self) -> list[str]:
        return [
            f"t={t} node={node} bridge={bridge} op={op} {desc}"
            for t, node, bridge, op, desc in self.rule_log
        ]


def spoofed_arp(mac: MacAddress) -> Frame:
    return Frame(
        src=mac, dst=BROADCAST, kind=FrameKind.ARP_REQUEST, size_bytes=64,
        flow_id=("arp", str(mac)),
    )
