"""Run outputs: metrics CSVs, rule-change log, text report and figures."""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .core import tenant_letter
from .metrics import MetricStore
from .runner import RunResult
from .simkit import outage_duration, rtt_series, throughput_series


def write_outputs(result: RunResult, outdir: Path, figures: bool = True) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    metrics = result.metrics
    metrics.write_csvs(outdir, result.scenario.params.throughput_bin_us)
    (outdir / "rules_log.txt").write_text(
        "\n".join(result.world.controller.rule_log_lines()) + "\n"
    )
    (outdir / "report.txt").write_text(build_report(result))
    if result.trace is not None:
        (outdir / "trace.txt").write_text("\n".join(result.trace) + "\n")
    if figures:
        render_figures(metrics, outdir, result.scenario.params.throughput_bin_us)


def _fmt_ms(us: int | float) -> str:
    return f"{us / 1000:.3f}ms"


def build_report(result: RunResult) -> str:
    scn, metrics = result.scenario, result.metrics
    p = scn.params
    lines = [
        f"run report: {scn.name}",
        f"  seed={p.seed} horizon={_fmt_ms(p.horizon_us)}",
        f"  nodes={len(scn.nodes)} links={len(scn.links)} "
        f"tenants={len(scn.tenants)} clients={len(scn.clients)} flows={len(scn.flows)}",
        f"  configured delays: detection={_fmt_ms(p.detection_delay_us)} "
        f"controller={_fmt_ms(p.controller_latency_us)} "
        f"agent={_fmt_ms(p.agent_delay_us)}",
        "",
        "events:",
    ]
    interesting = (
        "link_down", "link_up", "link_detected", "reroute_done",
        "relocation_begin", "relocation_rules_applied", "attach",
        "arp_injected", "arp_delivered_hn",
    )
    for t, kind, detail in metrics.control_events:
        if kind in interesting:
            lines.append(f"  t={_fmt_ms(t)} {kind} {detail}")
    lines.append("")
    disruptions = sorted(a.t_us for a in scn.timeline)
    first_disruption = disruptions[0] if disruptions else None
    for flow in scn.flows:
        lines.append(f"flow {flow.name} ({flow.kind}, client {flow.client}):")
        if flow.kind == "ping":
            series = rtt_series(metrics, flow.name)
            if not series:
                lines.append("  no probe replies")
                continue
            gap = outage_duration(metrics, flow.name, flow.interval_us)
            lines.append(
                f"  probes answered={len(series)} "
                f"outage={_fmt_ms(gap)} (largest home-network delivery gap minus "
                f"one {_fmt_ms(flow.interval_us)} interval)"
            )
            if first_disruption is not None:
                before = [rtt for t, rtt in series if t < first_disruption]
                after = [rtt for t, rtt in series if t >= disruptions[-1]]
                if before:
                    lines.append(f"  RTT before first event: {_fmt_ms(_mean(before))}")
                if after:
                    lines.append(f"  RTT after last event:   {_fmt_ms(_mean(after))}")
            else:
                lines.append(f"  RTT mean: {_fmt_ms(_mean([r for _, r in series]))}")
        else:
            bins = throughput_series(metrics, flow.name, p.throughput_bin_us)
            if not bins:
                lines.append("  nothing delivered")
                continue
            rates = [bps for _, bps in bins[1:-1]] or [bps for _, bps in bins]
            lines.append(
                f"  delivered mean {_mean(rates) / 1e6:.2f} Mbps "
                f"over {len(bins)} bins (peak {max(rates) / 1e6:.2f} Mbps)"
            )
    lines.append("")
    updates = tunnel_update_times(metrics)
    if updates:
        lines.append("tunnel updates after attach events:")
        for mac, t_attach, delta in updates:
            lines.append(
                f"  {mac} attach at {_fmt_ms(t_attach)}: refresh flood reached the "
                f"home network after {_fmt_ms(delta)}"
            )
        lines.append("")
    writes = mac_write_counts(metrics, since_us=first_disruption or 0)
    if writes and first_disruption is not None:
        lines.append("mac-table writes after the first timeline event:")
        for (node, bridge), count in sorted(writes.items()):
            lines.append(f"  {node} {bridge}: {count}")
        lines.append("")
    if result.pre_dump is not None:
        same = result.pre_dump == result.post_dump
        lines.append(
            "access/integration rule dumps before vs after reroute: "
            + ("identical" if same else "DIFFER")
        )
        lines.append("")
    lines.append("drops by cause:")
    if metrics.drops:
        for cause in sorted(metrics.drops):
            lines.append(f"  {cause}: {metrics.drops[cause]}")
    else:
        lines.append("  none")
    if metrics.copy_budget_exceeded:
        lines.append("")
        lines.append("RUN ABORTED: frame copy budget exceeded (forwarding loop)")
    return "\n".join(lines) + "\n"


def _mean(xs) -> float:
    return sum(xs) / len(xs)


def tunnel_update_times(metrics: MetricStore) -> list[tuple[str, int, int]]:
    """Per attach event, the time until that client's spoofed refresh flood
    reached the tenant home network: (mac, attach time, delta)."""
    out = []
    for t_attach, kind, detail in metrics.control_events:
        if kind != "attach" or t_attach == 0:
            continue
        mac = detail.split()[0].split("=", 1)[1]
        for t, k2, d2 in metrics.control_events:
            if k2 == "arp_delivered_hn" and t > t_attach and f"src={mac}" in d2:
                out.append((mac, t_attach, t - t_attach))
                break
    return out


def mac_write_counts(
    metrics: MetricStore, since_us: int = 0
) -> Counter:
    counts: Counter = Counter()
    for t, node, bridge, _mac, _port in metrics.mac_writes:
        if t >= since_us:
            counts[(node, bridge)] += 1
    return counts


def render_figures(
    metrics: MetricStore, outdir: Path, bin_us: int
) -> list[Path]:
    """Throughput and RTT figures rendered next to the CSVs."""
    made = []
    flows = metrics.flows_seen()
    tput = {
        f: throughput_series(metrics, f, bin_us)
        for f in flows
        if any(True for ff, *_ in metrics.hn_deliveries if ff == f)
    }
    tput = {f: bins for f, bins in tput.items() if bins}
    if tput:
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for flow, bins in sorted(tput.items()):
            xs = [start / 1e6 for start, _ in bins]
            ys = [bps / 1e6 for _, bps in bins]
            ax.step(xs, ys, where="post", label=flow)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("delivered rate [Mbit/s]")
        ax.legend(loc="best", fontsize=8)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = Path(outdir) / "throughput.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        made.append(path)
    rtt = {f: rtt_series(metrics, f) for f in flows}
    rtt = {f: s for f, s in rtt.items() if s}
    if rtt:
        fig, ax = plt.subplots(figsize=(8, 4.5))
        for flow, series in sorted(rtt.items()):
            xs = [t / 1e6 for t, _ in series]
            ys = [r / 1000 for _, r in series]
            ax.plot(xs, ys, lw=0.8, label=flow)
        ax.set_xlabel("probe send time [s]")
        ax.set_ylabel("RTT [ms]")
        ax.legend(loc="best", fontsize=8)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        path = Path(outdir) / "rtt.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        made.append(path)
    return made
