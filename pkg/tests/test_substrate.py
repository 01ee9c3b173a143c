"""Topology, link ids, radio transmission, capacity and attachment."""

import random

import pytest

from swamsim.core import Frame, MacAddress
from swamsim.datapath import mux_ingress
from swamsim.errors import NoSuchVap, UnknownLink, ValidationError
from swamsim.substrate import (
    CapacityMeter,
    Topology,
    assign_llids,
    attach_client,
    build_mux,
    build_topology,
    link_key,
    set_link_state,
    transmit,
)

KITE_NODES = [(0, True), (1, False), (2, False), (3, False), (4, True)]
KITE_LINKS = [
    (0, 1, 1000, None), (1, 2, 1000, None), (1, 3, 1000, None),
    (2, 4, 1000, None), (3, 4, 1000, None),
]

MAC = MacAddress.parse("02:00:00:00:02:01")


def kite():
    return build_topology(KITE_NODES, KITE_LINKS)


class TestBuildTopology:
    def test_kite(self):
        topo, llids = kite()
        assert len(topo.nodes) == 5 and len(topo.links) == 5
        assert all(link.up for link in topo.links.values())

    def test_kite_link_ids(self):
        _topo, llids = kite()
        assert llids[0] == {1: 1}
        assert llids[1] == {0: 1, 2: 2, 3: 3}
        assert llids[2] == {1: 1, 4: 2}
        assert llids[3] == {1: 1, 4: 2}
        assert llids[4] == {2: 1, 3: 2}

    def test_single_link_symmetric(self):
        _topo, llids = build_topology([(0, True), (1, False)], [(0, 1, 1000, None)])
        assert llids[0][1] == 1 and llids[1][0] == 1

    def test_duplicate_link_rejected(self):
        with pytest.raises(ValidationError):
            build_topology(
                [(0, False), (1, False)],
                [(0, 1, 1000, None), (1, 0, 1000, None)],
            )

    def test_self_link_rejected(self):
        with pytest.raises(ValidationError):
            build_topology([(0, False), (1, False)], [(0, 0, 1000, None)])

    def test_llids_stable_across_flaps(self):
        topo, llids = kite()
        set_link_state(topo, 1, 3, False, 0)
        set_link_state(topo, 1, 3, True, 10)
        assert assign_llids(topo) == llids


def radio_frame(outer: int, inner: int = 214) -> Frame:
    return Frame(src=MAC, dst=MAC, vlan_stack=(outer, inner), size_bytes=1000)


class TestTransmit:
    def test_addressed_neighbor_receives(self):
        topo, llids = kite()
        meter = CapacityMeter()
        out = transmit(topo, llids, meter, 1, radio_frame(llids[1][2]), 5000)
        assert out.drops == []
        assert out.arrivals == [(6000, 2, radio_frame(llids[1][2]))]

    def test_dead_link_drops(self):
        topo, llids = kite()
        set_link_state(topo, 1, 3, False, 0)
        out = transmit(topo, llids, CapacityMeter(), 1, radio_frame(llids[1][3]), 0)
        assert out.arrivals == [] and out.drops == ["dead_link"]

    def test_unknown_outer_tag(self):
        topo, llids = kite()
        out = transmit(topo, llids, CapacityMeter(), 1, radio_frame(99), 0)
        assert out.drops == ["unknown_outer_tag"]

    def test_exactly_one_neighbor_accepts(self):
        """p2mp: offering any transmission to every neighbor's mux, exactly
        the addressed one accepts."""
        rng = random.Random(11)
        for _ in range(50):
            n = rng.randint(2, 8)
            nodes = [(i, i == 0) for i in range(n)]
            links = []
            for i in range(1, n):
                links.append((rng.randrange(i), i, 1000, None))
            extra = rng.randint(0, n)
            while extra:
                a, b = rng.randrange(n), rng.randrange(n)
                if a != b and link_key(a, b) not in {link_key(x, y) for x, y, *_ in links}:
                    links.append((a, b, 1000, None))
                extra -= 1
            topo, llids = build_topology(nodes, links)
            muxes = {i: build_mux(i, topo, llids) for i in range(n)}
            for sender in range(n):
                for tag in list(llids[sender].values()) + [77]:
                    accepted = []
                    for peer in topo.neighbors(sender):
                        try:
                            mux_ingress(muxes[peer], radio_frame(tag), sender)
                            accepted.append(peer)
                        except Exception:
                            pass
                    if tag == 77:
                        assert accepted == []
                    else:
                        assert len(accepted) == 1
                        assert llids[sender][accepted[0]] == tag


def bucket_oracle(arrivals, capacity_bps, window_us):
    """Independent token bucket: (t, bits) -> admitted booleans."""
    budget = capacity_bps * window_us // 1_000_000
    used: dict[int, int] = {}
    verdicts = []
    for t, bits in arrivals:
        window = t // window_us
        if used.get(window, 0) + bits > budget:
            verdicts.append(False)
        else:
            used[window] = used.get(window, 0) + bits
            verdicts.append(True)
    return verdicts


class TestCapacity:
    def test_double_offered_load_drops_half(self):
        topo, llids = build_topology(
            [(0, True), (1, True)], [(0, 1, 1000, 10_000_000)]
        )
        meter = CapacityMeter(window_us=100_000)
        # 2x capacity within one window: 10000-bit frames every 500us = 20 Mbps
        big = Frame(src=MAC, dst=MAC, vlan_stack=(1, 214), size_bytes=1250)
        sent, dropped = 0, 0
        for k in range(200):
            out = transmit(topo, llids, meter, 0, big, k * 500)
            sent += 1
            dropped += len(out.drops)
        assert dropped >= sent // 2

    def test_meter_matches_oracle(self):
        rng = random.Random(3)
        capacity, window = 5_000_000, 100_000
        meter = CapacityMeter(window_us=window)
        arrivals = sorted(
            (rng.randrange(0, 400_000), rng.choice([800, 8000, 12000]))
            for _ in range(300)
        )
        got = [meter.admit(0, 1, bits, t, capacity) for t, bits in arrivals]
        assert got == bucket_oracle(arrivals, capacity, window)

    def test_directions_metered_separately(self):
        meter = CapacityMeter(window_us=100_000)
        assert meter.admit(0, 1, 400_000, 0, 5_000_000)
        assert meter.admit(1, 0, 400_000, 0, 5_000_000)
        assert not meter.admit(0, 1, 200_000, 10, 5_000_000)


class TestLinkState:
    def test_down_returns_event(self):
        topo, _ = kite()
        event = set_link_state(topo, 1, 3, False, 60_000_000)
        assert event is not None and event.link == (1, 3) and not event.up
        assert not topo.link(1, 3).up

    def test_idempotent(self):
        topo, _ = kite()
        assert set_link_state(topo, 1, 3, False, 0) is not None
        assert set_link_state(topo, 1, 3, False, 5) is None

    def test_up_restores(self):
        topo, llids = kite()
        set_link_state(topo, 1, 3, False, 0)
        set_link_state(topo, 1, 3, True, 10)
        out = transmit(topo, llids, CapacityMeter(), 1, radio_frame(llids[1][3]), 20)
        assert len(out.arrivals) == 1

    def test_unknown_link(self):
        topo, _ = kite()
        with pytest.raises(UnknownLink):
            set_link_state(topo, 0, 4, False, 0)


class TestAttach:
    def test_break_before_make(self):
        topo, _ = kite()
        attach_client(topo, MAC, 2, 1, {1, 3})
        previous = attach_client(topo, MAC, 2, 3, {1, 3})
        assert previous == 1
        assert topo.access_attach[MAC] == (3, 2)

    def test_no_such_vap(self):
        topo, _ = kite()
        with pytest.raises(NoSuchVap):
            attach_client(topo, MAC, 2, 0, {1, 3})
