"""Scenario execution: world construction, timeline scheduling, outputs."""

from __future__ import annotations

import random
from dataclasses import dataclass
from pathlib import Path

from .config import SimParams
from .controller import Controller
from .core import TunnelId, VlanAllocator
from .datapath import SwamNode
from .metrics import MetricStore
from .presets import resolve
from .scenario import Scenario, TimelineAction, tenant_id_of
from .simkit import Engine, EventKind, Flow
from .substrate import build_mux, build_topology
from .world import World


@dataclass
class RunResult:
    scenario: Scenario
    world: World
    metrics: MetricStore
    # int/access dumps taken just before the first link failure and at the end
    pre_dump: str | None = None
    post_dump: str | None = None
    trace: list[str] | None = None


def build_world(scn: Scenario, seed: int | None = None) -> tuple[World, list[Flow]]:
    params = scn.params
    if seed is not None:
        params.seed = seed
    topo, llids = build_topology(scn.nodes, scn.links)
    nodes = {
        node: SwamNode(node, wired, mux=build_mux(node, topo, llids))
        for node, wired in scn.nodes
    }
    allocator = VlanAllocator(mode=params.vlan_mode)
    controller = Controller(nodes, topo, llids, allocator)
    for spec in scn.tenants:
        controller.register_tenant(spec.tenant, spec.gateways, spec.home)
        for origin, dest, hops in spec.pins:
            controller.pinned_paths[TunnelId(spec.tenant, origin, dest)] = hops
            controller.pinned_paths[TunnelId(spec.tenant, dest, origin)] = hops[::-1]
    for spec in scn.tenants:
        for node in sorted(set(spec.vaps) | set(spec.gateways)):
            controller.provision_presence(
                spec.tenant, node, with_vap=node in spec.vaps
            )
        for node, root in sorted(spec.roots.items()):
            controller.apply_root(spec.tenant, node, root)
    if params.mac_aging_us is not None:
        for node in nodes.values():
            for bridge in node.bridges.values():
                bridge.table.aging_us = params.mac_aging_us
    metrics = MetricStore()
    world = World(
        topo, llids, nodes, controller, params, metrics,
        rng=random.Random(params.seed),
    )
    world.build_home_networks()
    flows = [
        Flow(
            name=f.name,
            client_mac=scn.clients[f.client].mac,
            tenant=scn.clients[f.client].tenant,
            kind=f.kind,
            start_us=f.start_us,
            stop_us=f.stop_us,
            rate_bps=f.rate_bps,
            size_bytes=f.size_bytes,
            interval_us=f.interval_us,
        )
        for f in scn.flows
    ]
    return world, flows


def _schedule_action(
    world: World, action: TimelineAction, scn: Scenario
) -> tuple[int, callable]:
    if action.kind in ("link_down", "link_up"):
        a, b = action.args
        up = action.kind == "link_up"
        return action.t_us, lambda t: world.link_state(a, b, up, t)
    if action.kind == "update_root":
        letter, node, root = action.args
        tenant = tenant_id_of(letter)
        return action.t_us, lambda t: world.update_root(tenant, node, root, t)
    # handover
    client_name, node = action.args
    client = scn.clients[client_name]
    return action.t_us, lambda t: world.attach(client.mac, client.tenant, node, t)


def run_scenario(
    scn: Scenario,
    seed: int | None = None,
    trace: bool = False,
    copy_budget: int | None = None,
    horizon_us: int | None = None,
) -> RunResult:
    """One deterministic run of a scenario up to its horizon."""
    world, flows = build_world(scn, seed)
    if trace:
        world.trace = []
    engine = Engine(world, copy_budget=copy_budget or scn.params.copy_budget)
    for name in sorted(scn.clients):
        client = scn.clients[name]
        engine.call_at(
            0,
            lambda t, c=client: world.attach(c.mac, c.tenant, c.node, t),
            EventKind.ATTACH,
        )
    result = RunResult(scn, world, world.metrics, trace=world.trace)
    breaks = [a.t_us for a in scn.timeline if a.kind == "link_down"]
    if breaks:
        def snapshot(t: int) -> None:
            result.pre_dump = world.dump_rules(("access", "int"))

        engine.call_at(min(breaks) - 1, snapshot, EventKind.SCENARIO_ACTION)
    for action in scn.timeline:
        t_us, fn = _schedule_action(world, action, scn)
        engine.call_at(t_us, fn, EventKind.SCENARIO_ACTION)
    for flow in flows:
        engine.add_flow(flow)
    engine.run(scn.params.horizon_us if horizon_us is None else horizon_us)
    if breaks:
        result.post_dump = world.dump_rules(("access", "int"))
    return result


def dump_rules(ref: str | Path, at_us: int) -> str:
    """State of every bridge's rules and MAC tables at the given instant."""
    scn = resolve(ref)
    result = run_scenario(scn, horizon_us=at_us)
    return result.world.dump_rules()


def run_experiment(
    ref: str | Path,
    outdir: str | Path | None = None,
    seed: int | None = None,
    trace: bool = False,
    figures: bool = True,
) -> Path:
    """Run a preset or scenario file and write the output bundle."""
    from .report import write_outputs

    scn = resolve(ref)
    result = run_scenario(scn, seed=seed, trace=trace)
    if outdir is None:
        outdir = Path(f"{scn.name}_out")
    outdir = Path(outdir)
    write_outputs(result, outdir, figures=figures)
    return outdir
