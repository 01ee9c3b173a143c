"""Identity types, frame representation, VLAN-stack handling and tunnel arithmetic.

Everything in this module is a plain value: frames are immutable, push/pop
return new frames, and the allocator is the only stateful object (a bijection
between tunnel identities and VLAN ids).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from .errors import (
    CapacityExceeded,
    EncodingOverflow,
    StackOverflow,
    StackUnderflow,
    UnknownVlan,
)

# Small integer aliases; validation happens at the boundaries that create them.
NodeId = int
TenantId = int
VlanId = int

VLAN_MIN = 1
VLAN_MAX = 4094  # 802.1Q reserves 0 and 4095
MAX_STACK_DEPTH = 2
SEQUENTIAL_FLOOR = 100  # ids below 100 are reserved for substrate outer tags
DEFAULT_TENANT_CAP = 10
VAPS_PER_RADIO = 5


@dataclass(frozen=True, order=True)
class MacAddress:
    """Six-octet hardware address; equality and ordering are bytewise."""

    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 6:
            raise ValueError(f"MAC needs 6 octets, got {len(self.octets)}")

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        parts = text.split(":")
        if len(parts) != 6:
            raise ValueError(f"bad MAC address {text!r}")
        return cls(bytes(int(p, 16) for p in parts))

    @property
    def is_broadcast(self) -> bool:
        return self.octets == b"\xff" * 6

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)


BROADCAST = MacAddress(b"\xff" * 6)


class FrameKind(Enum):
    DATA = "DATA"
    ARP_REQUEST = "ARP_REQUEST"
    ARP_REPLY = "ARP_REPLY"
    LLC_XID = "LLC_XID"
    PROBE = "PROBE"


@dataclass(frozen=True)
class Frame:
    """Ethernet-like frame; vlan_stack is outermost-first.

    The payload is symbolic: behaviour depends only on frame class, the
    addresses and the tags, so no byte encoding is carried around.
    """

    src: MacAddress
    dst: MacAddress
    vlan_stack: tuple[VlanId, ...] = ()
    kind: FrameKind = FrameKind.DATA
    size_bytes: int = 64
    flow_id: Any = None

    @property
    def depth(self) -> int:
        return len(self.vlan_stack)


def push_vlan(frame: Frame, tag: VlanId) -> Frame:
    """Return the frame with `tag` as the new outermost entry."""
    if frame.depth >= MAX_STACK_DEPTH:
        raise StackOverflow(f"frame already carries {frame.depth} tags")
    return replace(frame, vlan_stack=(tag,) + frame.vlan_stack)


def pop_vlan(frame: Frame) -> tuple[Frame, VlanId]:
    """Strip the outermost tag; inverse of push_vlan."""
    if frame.depth == 0:
        raise StackUnderflow("pop from untagged frame")
    return replace(frame, vlan_stack=frame.vlan_stack[1:]), frame.vlan_stack[0]


@dataclass(frozen=True, order=True)
class TunnelId:
    """Unidirectional backhaul tunnel: (t, i, j) and (t, j, i) are distinct."""

    tenant: TenantId
    origin: NodeId
    dest: NodeId

    def __post_init__(self):
        if self.origin == self.dest:
            raise ValueError("tunnel endpoints must differ")

    @property
    def reversed(self) -> "TunnelId":
        return TunnelId(self.tenant, self.dest, self.origin)


class VlanMode(Enum):
    # Encode (t, i, j) as the decimal digits t*100 + i*10 + j; readable in
    # rule dumps but only valid for tenant ids and node indices <= 9.
    DIGITS = "digits"
    # Lowest free id >= 100; works for any topology within the VLAN budget.
    SEQUENTIAL = "sequential"


@dataclass
class VlanAllocator:
    """Bijection TunnelId <-> VLAN id.

    encode() is idempotent: asking again for a known tunnel returns the tag
    already assigned to it.
    """

    mode: VlanMode = VlanMode.DIGITS
    assigned: dict[TunnelId, VlanId] = field(default_factory=dict)
    by_vlan: dict[VlanId, TunnelId] = field(default_factory=dict)
    next_free: int = SEQUENTIAL_FLOOR

    def encode(self, tunnel: TunnelId) -> VlanId:
        existing = self.assigned.get(tunnel)
        if existing is not None:
            return existing
        if self.mode is VlanMode.DIGITS:
            if tunnel.tenant > 9 or tunnel.origin > 9 or tunnel.dest > 9:
                raise EncodingOverflow(
                    f"digit encoding cannot express {tunnel} (index > 9)"
                )
            tag = tunnel.tenant * 100 + tunnel.origin * 10 + tunnel.dest
        else:
            while self.next_free in self.by_vlan:
                self.next_free += 1
            if self.next_free > VLAN_MAX:
                raise CapacityExceeded("no VLAN id left in [100, 4094]")
            tag = self.next_free
            self.next_free += 1
        if not VLAN_MIN <= tag <= VLAN_MAX:
            raise CapacityExceeded(f"tag {tag} outside usable VLAN range")
        if tag in self.by_vlan:
            raise CapacityExceeded(f"tag {tag} already taken by {self.by_vlan[tag]}")
        self.assigned[tunnel] = tag
        self.by_vlan[tag] = tunnel
        return tag

    def decode(self, tag: VlanId) -> TunnelId:
        try:
            return self.by_vlan[tag]
        except KeyError:
            raise UnknownVlan(f"VLAN {tag} was never allocated") from None

    def remaining(self) -> int:
        """Free ids left in the allocatable range [100, 4094]."""
        used = sum(1 for v in self.by_vlan if v >= SEQUENTIAL_FLOOR)
        return (VLAN_MAX - SEQUENTIAL_FLOOR + 1) - used


def tunnel_count(tenants: int, nodes: int) -> int:
    """Worst-case unidirectional tunnel budget for full tenant presence."""
    if tenants < 1 or nodes < 2:
        raise ValueError("need tenants >= 1 and nodes >= 2")
    return 2 * tenants * nodes * (nodes - 1)


def max_nodes(tenants: int, budget: int) -> int:
    """Largest N whose full-presence tunnel budget fits."""
    if tenants < 1 or budget < 4:
        raise ValueError("need tenants >= 1 and budget >= 4")
    n = 2
    while tunnel_count(tenants, n + 1) <= budget:
        n += 1
    return n


def tenant_letter(tenant: TenantId) -> str:
    """Tenant 1 -> 'A', 2 -> 'B', ...; used in port and bridge names."""
    if 1 <= tenant <= 26:
        return chr(ord("A") + tenant - 1)
    return f"T{tenant}"


def trace_line(
    t_us: int, node: str, iface: str, direction: str, frame: Frame
) -> str:
    """One line of the frame trace format used by tests and --trace output."""
    vlans = ",".join(str(v) for v in frame.vlan_stack)
    return (
        f"t={t_us} node={node} if={iface} dir={direction} "
        f"src={frame.src} dst={frame.dst} vlans=[{vlans}] kind={frame.kind.value}"
    )
