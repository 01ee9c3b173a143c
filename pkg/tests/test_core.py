"""Identity types, VLAN stack handling and tunnel arithmetic."""

import pytest
from hypothesis import given, strategies as st

from swamsim.core import (
    BROADCAST,
    Frame,
    MacAddress,
    TunnelId,
    VlanAllocator,
    VlanMode,
    max_nodes,
    pop_vlan,
    push_vlan,
    trace_line,
    tunnel_count,
)
from swamsim.errors import (
    CapacityExceeded,
    EncodingOverflow,
    StackOverflow,
    StackUnderflow,
    UnknownVlan,
)

MAC_A = MacAddress.parse("02:00:00:00:01:01")
MAC_B = MacAddress.parse("02:00:00:00:01:02")


def brute_force_tunnels(tenants: int, nodes: int) -> int:
    """Independent oracle: enumerate (tenant, ordered pair, direction)."""
    count = 0
    for _tenant in range(tenants):
        for _direction in range(2):
            for i in range(nodes):
                for j in range(nodes):
                    if i != j:
                        count += 1
    return count


def brute_force_max_nodes(tenants: int, budget: int) -> int:
    n = 2
    while brute_force_tunnels(tenants, n + 1) <= budget:
        n += 1
    return n


class TestTunnelArithmetic:
    def test_matches_brute_force_enumeration(self):
        for tenants in range(1, 13):
            for nodes in range(2, 26):
                assert tunnel_count(tenants, nodes) == brute_force_tunnels(
                    tenants, nodes
                )

    @pytest.mark.parametrize(
        "tenants,nodes,expected",
        [(10, 14, 3640), (1, 2, 4), (5, 20, 3800)],
    )
    def test_examples(self, tenants, nodes, expected):
        assert tunnel_count(tenants, nodes) == expected
        assert expected <= 4096

    @pytest.mark.parametrize(
        "tenants,budget,expected", [(10, 4096, 14), (5, 4096, 20), (1, 4096, 45)]
    )
    def test_max_nodes(self, tenants, budget, expected):
        assert max_nodes(tenants, budget) == expected
        assert max_nodes(tenants, budget) == brute_force_max_nodes(tenants, budget)

    def test_max_nodes_is_maximal(self):
        for tenants in (1, 5, 10):
            n = max_nodes(tenants, 4096)
            assert tunnel_count(tenants, n) <= 4096 < tunnel_count(tenants, n + 1)

    def test_monotonic(self):
        for t in range(1, 6):
            for n in range(2, 12):
                assert tunnel_count(t + 1, n) > tunnel_count(t, n)
                assert tunnel_count(t, n + 1) > tunnel_count(t, n)


class TestVlanAllocator:
    def test_digit_encoding_examples(self):
        alloc = VlanAllocator(mode=VlanMode.DIGITS)
        assert alloc.encode(TunnelId(1, 0, 2)) == 102
        assert alloc.encode(TunnelId(1, 2, 0)) == 120
        assert alloc.encode(TunnelId(1, 3, 0)) == 130

    def test_encode_idempotent(self):
        alloc = VlanAllocator(mode=VlanMode.SEQUENTIAL)
        tunnel = TunnelId(3, 1, 2)
        assert alloc.encode(tunnel) == alloc.encode(tunnel)
        assert len(alloc.assigned) == 1

    def test_decode_inverts(self):
        alloc = VlanAllocator(mode=VlanMode.DIGITS)
        alloc.encode(TunnelId(1, 0, 2))
        alloc.encode(TunnelId(1, 3, 0))
        assert alloc.decode(102) == TunnelId(1, 0, 2)
        assert alloc.decode(130) == TunnelId(1, 3, 0)

    def test_decode_unknown(self):
        alloc = VlanAllocator()
        with pytest.raises(UnknownVlan):
            alloc.decode(999)

    def test_digit_table_tenant_one(self):
        # Full digit table over nodes {0..3}: vlan is always 100 + 10i + j.
        alloc = VlanAllocator(mode=VlanMode.DIGITS)
        for i in range(4):
            for j in range(4):
                if i != j:
                    assert alloc.encode(TunnelId(1, i, j)) == 100 + 10 * i + j

    def test_digit_overflow(self):
        alloc = VlanAllocator(mode=VlanMode.DIGITS)
        with pytest.raises(EncodingOverflow):
            alloc.encode(TunnelId(10, 0, 1))
        with pytest.raises(EncodingOverflow):
            alloc.encode(TunnelId(1, 0, 11))

    def test_sequential_starts_at_100(self):
        alloc = VlanAllocator(mode=VlanMode.SEQUENTIAL)
        assert alloc.encode(TunnelId(1, 0, 1)) == 100
        assert alloc.encode(TunnelId(1, 1, 0)) == 101

    def test_sequential_exhaustion(self):
        alloc = VlanAllocator(mode=VlanMode.SEQUENTIAL)
        for k in range(4094 - 100 + 1):
            alloc.encode(TunnelId(1, 0, k + 1))
        with pytest.raises(CapacityExceeded):
            alloc.encode(TunnelId(2, 0, 1))

    @given(
        st.lists(
            st.tuples(
                st.integers(1, 9), st.integers(0, 9), st.integers(0, 9)
            ).filter(lambda t: t[1] != t[2]),
            max_size=40,
        ),
        st.sampled_from([VlanMode.DIGITS, VlanMode.SEQUENTIAL]),
    )
    def test_allocation_bijection(self, triples, mode):
        alloc = VlanAllocator(mode=mode)
        for tenant, i, j in triples:
            tunnel = TunnelId(tenant, i, j)
            tag = alloc.encode(tunnel)
            assert alloc.decode(tag) == tunnel
        tags = list(alloc.assigned.values())
        assert len(tags) == len(set(tags))
        assert all(1 <= tag <= 4094 for tag in tags)


class TestVlanStack:
    def test_push_order(self):
        frame = Frame(src=MAC_A, dst=MAC_B)
        tagged = push_vlan(frame, 102)
        assert tagged.vlan_stack == (102,)
        double = push_vlan(tagged, 7)
        assert double.vlan_stack == (7, 102)

    def test_push_overflow(self):
        frame = Frame(src=MAC_A, dst=MAC_B, vlan_stack=(7, 102))
        with pytest.raises(StackOverflow):
            push_vlan(frame, 1)

    def test_pop_lifo(self):
        frame = Frame(src=MAC_A, dst=MAC_B, vlan_stack=(7, 102))
        inner, tag = pop_vlan(frame)
        assert tag == 7 and inner.vlan_stack == (102,)
        bare, tag2 = pop_vlan(inner)
        assert tag2 == 102 and bare.vlan_stack == ()

    def test_pop_underflow(self):
        with pytest.raises(StackUnderflow):
            pop_vlan(Frame(src=MAC_A, dst=MAC_B))

    @given(st.lists(st.sampled_from(["push", "pop"]), max_size=30))
    def test_random_sequences_bounded(self, ops):
        frame = Frame(src=MAC_A, dst=MAC_B)
        tag = 100
        for op in ops:
            if op == "push":
                if frame.depth == 2:
                    with pytest.raises(StackOverflow):
                        push_vlan(frame, tag)
                else:
                    frame = push_vlan(frame, tag)
                    tag += 1
            else:
                if frame.depth == 0:
                    with pytest.raises(StackUnderflow):
                        pop_vlan(frame)
                else:
                    frame, _ = pop_vlan(frame)
            assert 0 <= frame.depth <= 2

    @given(st.integers(1, 4094))
    def test_pop_inverts_push(self, tag):
        frame = Frame(src=MAC_A, dst=MAC_B, vlan_stack=(5,))
        popped, got = pop_vlan(push_vlan(frame, tag))
        assert popped == frame and got == tag


class TestMacAndTrace:
    def test_mac_roundtrip(self):
        assert str(MAC_A) == "02:00:00:00:01:01"
        assert MacAddress.parse(str(MAC_A)) == MAC_A

    def test_broadcast(self):
        assert BROADCAST.is_broadcast
        assert not MAC_A.is_broadcast

    def test_bad_mac(self):
        with pytest.raises(ValueError):
            MacAddress.parse("02:00:00")

    def test_trace_line_format(self):
        frame = Frame(src=MAC_A, dst=BROADCAST, vlan_stack=(7, 102))
        line = trace_line(61_000, "s1", "radio0", "out", frame)
        assert line == (
            "t=61000 node=s1 if=radio0 dir=out src=02:00:00:00:01:01 "
            "dst=ff:ff:ff:ff:ff:ff vlans=[7,102] kind=DATA"
        )

    def test_trace_line_untagged(self):
        frame = Frame(src=MAC_A, dst=MAC_B)
        assert "vlans=[]" in trace_line(0, "s0", "vap_A_0", "in", frame)
