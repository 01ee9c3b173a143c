"""Scenario files: a line-oriented sectioned text format.

Sections: [params], [nodes], [links], [tenants], [clients], [flows],
[timeline]. See docs/scenario-format.md for the full grammar. Parsing and
validation report the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .config import SimParams
from .core import MacAddress, NodeId, TenantId, VlanMode
from .errors import ParseError, ValidationError

SECTIONS = ("params", "nodes", "links", "tenants", "clients", "flows", "timeline")


@dataclass
class TenantSpec:
    letter: str
    tenant: TenantId
    vaps: list[NodeId]
    gateways: list[NodeId]
    home: str
    roots: dict[NodeId, NodeId] = field(default_factory=dict)
    pins: list[tuple[NodeId, NodeId, list[NodeId]]] = field(default_factory=list)


@dataclass
class ClientSpec:
    name: str
    mac: MacAddress
    tenant: TenantId
    node: NodeId


@dataclass
class FlowSpec:
    name: str
    client: str
    kind: str  # cbr | ping
    start_us: int
    stop_us: int
    rate_bps: int = 32_000_000
    size_bytes: int = 1250
    interval_us: int = 5000


@dataclass
class TimelineAction:
    t_us: int
    kind: str  # link_down | link_up | update_root | handover
    args: tuple
    line: int = 0


@dataclass
class Scenario:
    params: SimParams = field(default_factory=SimParams)
    nodes: list[tuple[NodeId, bool]] = field(default_factory=list)
    links: list[tuple[NodeId, NodeId, int, int | None]] = field(default_factory=list)
    tenants: list[TenantSpec] = field(default_factory=list)
    clients: dict[str, ClientSpec] = field(default_factory=dict)
    flows: list[FlowSpec] = field(default_factory=list)
    timeline: list[TimelineAction] = field(default_factory=list)
    name: str = "scenario"


def tenant_id_of(letter: str, line: int = 0) -> TenantId:
    if len(letter) == 1 and "A" <= letter <= "Z":
        return ord(letter) - ord("A") + 1
    raise ParseError(f"tenant must be a single letter A-Z, got {letter!r}", line)


def parse_node(token: str, line: int) -> NodeId:
    if token.startswith("s") and token[1:].isdigit():
        return int(token[1:])
    raise ParseError(f"expected node like s0, got {token!r}", line)


def parse_time(token: str, line: int = 0) -> int:
    for suffix, scale in (("us", 1), ("ms", 1000), ("s", 1_000_000)):
        if token.endswith(suffix):
            body = token[: -len(suffix)]
            try:
                return round(float(body) * scale)
            except ValueError:
                break
    if token.isdigit():
        return int(token)
    raise ParseError(f"bad time {token!r} (use e.g. 60s, 50ms, 250us)", line)


def parse_rate(token: str, line: int = 0) -> int:
    for suffix, scale in (
        ("Gbps", 1_000_000_000), ("Mbps", 1_000_000), ("kbps", 1000), ("bps", 1),
    ):
        if token.endswith(suffix):
            body = token[: -len(suffix)]
            try:
                return round(float(body) * scale)
            except ValueError:
                break
    if token.isdigit():
        return int(token)
    raise ParseError(f"bad rate {token!r} (use e.g. 32Mbps)", line)


def _kv(tokens: list[str], line: int) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ParseError(f"expected key=value, got {tok!r}", line)
        key, value = tok.split("=", 1)
        out[key] = value
    return out


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    scn = Scenario(name=name)
    tenants_by_letter: dict[str, TenantSpec] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            if section not in SECTIONS:
                raise ParseError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            raise ParseError("content before any [section]", lineno)
        tokens = line.split()
        if section == "params":
            _parse_param(scn.params, line, lineno)
        elif section == "nodes":
            wired = len(tokens) > 1 and tokens[1] == "wired"
            scn.nodes.append((parse_node(tokens[0], lineno), wired))
        elif section == "links":
            a, b = parse_node(tokens[0], lineno), parse_node(tokens[1], lineno)
            opts = _kv(tokens[2:], lineno)
            latency = (
                parse_time(opts["latency"], lineno)
                if "latency" in opts
                else scn.params.default_latency_us
            )
            capacity = (
                parse_rate(opts["capacity"], lineno)
                if "capacity" in opts
                else scn.params.default_capacity_bps
            )
            scn.links.append((a, b, latency, capacity))
        elif section == "tenants":
            _parse_tenant_line(scn, tenants_by_letter, tokens, lineno)
        elif section == "clients":
            if tokens[0] != "client" or len(tokens) < 2:
                raise ParseError("expected: client NAME mac=.. tenant=X node=sN", lineno)
            opts = _kv(tokens[2:], lineno)
            try:
                mac = MacAddress.parse(opts["mac"])
            except (KeyError, ValueError) as exc:
                raise ParseError(f"bad client mac: {exc}", lineno) from None
            scn.clients[tokens[1]] = ClientSpec(
                tokens[1], mac, tenant_id_of(opts["tenant"], lineno),
                parse_node(opts["node"], lineno),
            )
        elif section == "flows":
            if tokens[0] != "flow" or len(tokens) < 2:
                raise ParseError("expected: flow NAME client=.. kind=..", lineno)
            opts = _kv(tokens[2:], lineno)
            try:
                spec = FlowSpec(
                    name=tokens[1],
                    client=opts["client"],
                    kind=opts["kind"],
                    start_us=parse_time(opts["start"], lineno),
                    stop_us=parse_time(opts["stop"], lineno),
                )
            except KeyError as exc:
                raise ParseError(f"flow missing {exc}", lineno) from None
            if spec.kind not in ("cbr", "ping"):
                raise ParseError(f"flow kind must be cbr or ping, got {spec.kind!r}", lineno)
            if "rate" in opts:
                spec.rate_bps = parse_rate(opts["rate"], lineno)
            if "size" in opts:
                spec.size_bytes = int(opts["size"])
            if "interval" in opts:
                spec.interval_us = parse_time(opts["interval"], lineno)
            scn.flows.append(spec)
        elif section == "timeline":
            scn.timeline.append(_parse_action(tokens, lineno))
    _validate(scn)
    return scn


def _parse_param(params: SimParams, line: str, lineno: int) -> None:
    if "=" not in line:
        raise ParseError("expected key = value", lineno)
    key, value = (part.strip() for part in line.split("=", 1))
    times = {
        "horizon": "horizon_us",
        "detection_delay": "detection_delay_us",
        "controller_latency": "controller_latency_us",
        "agent_delay": "agent_delay_us",
        "capacity_window": "capacity_window_us",
        "default_latency": "default_latency_us",
        "throughput_bin": "throughput_bin_us",
        "jitter": "jitter_us",
        "mac_aging": "mac_aging_us",
    }
    if key in times:
        setattr(params, times[key], parse_time(value, lineno))
    elif key == "default_capacity":
        params.default_capacity_bps = (
            None if value == "unlimited" else parse_rate(value, lineno)
        )
    elif key == "seed":
        params.seed = int(value)
    elif key == "copy_budget":
        params.copy_budget = None if value == "none" else int(value)
    elif key == "llc_xid":
        if value not in ("on", "off"):
            raise ParseError("llc_xid must be on or off", lineno)
        params.llc_xid = value == "on"
    elif key == "vlan_mode":
        try:
            params.vlan_mode = VlanMode(value)
        except ValueError:
            raise ParseError("vlan_mode must be digits or sequential", lineno) from None
    else:
        raise ParseError(f"unknown parameter {key!r}", lineno)


def _parse_tenant_line(
    scn: Scenario,
    by_letter: dict[str, TenantSpec],
    tokens: list[str],
    lineno: int,
) -> None:
    if tokens[0] == "tenant":
        letter = tokens[1]
        opts = _kv(tokens[2:], lineno)
        if "gateways" not in opts:
            raise ValidationError(f"tenant {letter} has no gateway", lineno)
        spec = TenantSpec(
            letter=letter,
            tenant=tenant_id_of(letter, lineno),
            vaps=[parse_node(n, lineno) for n in opts.get("vaps", "").split(",") if n],
            gateways=[parse_node(n, lineno) for n in opts["gateways"].split(",")],
            home=opts.get("home", f"hn{letter}"),
        )
        by_letter[letter] = spec
        scn.tenants.append(spec)
    elif tokens[0] == "root":
        # root <tenant> <node> <root-node>
        spec = _tenant_ref(by_letter, tokens[1], lineno)
        spec.roots[parse_node(tokens[2], lineno)] = parse_node(tokens[3], lineno)
    elif tokens[0] == "path":
        # path <tenant> <origin> <dest> via sA,sB,...  (reverse pinned symmetric)
        spec = _tenant_ref(by_letter, tokens[1], lineno)
        if len(tokens) < 6 or tokens[4] != "via":
            raise ParseError("expected: path T sI sJ via s..,s..", lineno)
        origin, dest = parse_node(tokens[2], lineno), parse_node(tokens[3], lineno)
        hops = [parse_node(n, lineno) for n in tokens[5].split(",")]
        if hops[0] != origin or hops[-1] != dest:
            raise ValidationError("pinned path must start/end at the endpoints", lineno)
        spec.pins.append((origin, dest, hops))
    else:
        raise ParseError(f"unknown tenants directive {tokens[0]!r}", lineno)


def _tenant_ref(by_letter: dict[str, TenantSpec], letter: str, lineno: int) -> TenantSpec:
    try:
        return by_letter[letter]
    except KeyError:
        raise ValidationError(f"unknown tenant {letter!r}", lineno) from None


def _parse_action(tokens: list[str], lineno: int) -> TimelineAction:
    if tokens[0] != "at" or len(tokens) < 3:
        raise ParseError("expected: at TIME ACTION ...", lineno)
    t = parse_time(tokens[1], lineno)
    kind = tokens[2]
    rest = tokens[3:]
    if kind in ("link_down", "link_up"):
        if len(rest) != 2:
            raise ParseError(f"{kind} needs two nodes", lineno)
        args = (parse_node(rest[0], lineno), parse_node(rest[1], lineno))
    elif kind == "update_root":
        if len(rest) != 3:
            raise ParseError("update_root needs: TENANT NODE NEW_ROOT", lineno)
        args = (rest[0], parse_node(rest[1], lineno), parse_node(rest[2], lineno))
    elif kind == "handover":
        if len(rest) != 2:
            raise ParseError("handover needs: CLIENT NODE", lineno)
        args = (rest[0], parse_node(rest[1], lineno))
    else:
        raise ParseError(f"unknown timeline action {kind!r}", lineno)
    return TimelineAction(t, kind, args, lineno)


def _validate(scn: Scenario) -> None:
    node_ids = {n for n, _wired in scn.nodes}
    if len(node_ids) != len(scn.nodes):
        raise ValidationError("duplicate node definition")
    wired = {n for n, w in scn.nodes if w}
    seen_links = set()
    for a, b, _lat, _cap in scn.links:
        if a not in node_ids or b not in node_ids:
            raise ValidationError(f"link s{a}-s{b} references unknown node")
        key = (min(a, b), max(a, b))
        if a == b or key in seen_links:
            raise ValidationError(f"bad or duplicate link s{a}-s{b}")
        seen_links.add(key)
    letters = {t.letter for t in scn.tenants}
    if len(letters) != len(scn.tenants):
        raise ValidationError("duplicate tenant")
    for spec in scn.tenants:
        presence = set(spec.vaps) | set(spec.gateways)
        if not spec.gateways:
            raise ValidationError(f"tenant {spec.letter} has no gateway")
        for g in spec.gateways:
            if g not in wired:
                raise ValidationError(
                    f"tenant {spec.letter} gateway s{g} is not a wired node"
                )
        for n in presence:
            if n not in node_ids:
                raise ValidationError(f"tenant {spec.letter} references unknown s{n}")
        for node, root in spec.roots.items():
            if node not in presence:
                raise ValidationError(
                    f"root assignment for tenant {spec.letter} on non-presence s{node}"
                )
            if root not in spec.gateways:
                raise ValidationError(
                    f"tenant {spec.letter} root s{root} is not one of its gateways"
                )
        for origin, dest, hops in spec.pins:
            if origin not in presence or dest not in presence:
                raise ValidationError(
                    f"pinned path endpoints must be presence nodes of {spec.letter}"
                )
            for x, y in zip(hops, hops[1:]):
                if (min(x, y), max(x, y)) not in seen_links:
                    raise ValidationError(f"pinned path uses missing link s{x}-s{y}")
    by_letter = {t.letter: t for t in scn.tenants}
    for client in scn.clients.values():
        spec = next((t for t in scn.tenants if t.tenant == client.tenant), None)
        if spec is None:
            raise ValidationError(f"client {client.name} references unknown tenant")
        if client.node not in spec.vaps:
            raise ValidationError(
                f"client {client.name} starts on s{client.node} where tenant "
                f"{spec.letter} has no vap"
            )
    for flow in scn.flows:
        if flow.client not in scn.clients:
            raise ValidationError(f"flow {flow.name} references unknown client")
        if not flow.start_us < flow.stop_us:
            raise ValidationError(f"flow {flow.name} has start >= stop")
        if flow.start_us > scn.params.horizon_us:
            raise ValidationError(f"flow {flow.name} starts after the horizon")
    for action in scn.timeline:
        if action.t_us > scn.params.horizon_us:
            raise ValidationError(
                f"timeline action at {action.t_us}us is past the horizon", action.line
            )
        if action.kind in ("link_down", "link_up"):
            a, b = action.args
            if (min(a, b), max(a, b)) not in seen_links:
                raise ValidationError(f"timeline references missing link s{a}-s{b}",
                                      action.line)
        elif action.kind == "update_root":
            letter, node, root = action.args
            spec = by_letter.get(letter)
            if spec is None:
                raise ValidationError(f"timeline references unknown tenant {letter}",
                                      action.line)
            if root not in spec.gateways:
                raise ValidationError(
                    f"update_root target s{root} is not a gateway of {letter}",
                    action.line,
                )
        elif action.kind == "handover":
            client, node = action.args
            if client not in scn.clients:
                raise ValidationError(f"timeline references unknown client {client}",
                                      action.line)
            spec = next(
                t for t in scn.tenants if t.tenant == scn.clients[client].tenant
            )
            if node not in spec.vaps:
                raise ValidationError(
                    f"handover to s{node} where tenant {spec.letter} has no vap",
                    action.line,
                )


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), name=path.stem)
