"""Figure rendering for run reports, sweep tables, and bench results.

Strictly downstream of the data artifacts: every function takes the plain
dict/rows form that the JSON and CSV outputs carry, so figures can be
re-rendered from saved files. The CLI writes these PNGs next to the
delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

PHASE_COLORS = {
    "MoveAbovePick": "#8dd3c7", "Descend": "#ffffb3", "Close": "#bebada",
    "Lift": "#fb8072", "Transit": "#80b1d3", "DescendPlace": "#fdb462",
    "Open": "#b3de69", "Retreat": "#fccde5", "Done": "#d9d9d9",
}


def render_run_figure(report: dict, path) -> None:
    """Three panels: phase timeline, packet outcomes, alarms and task events."""
    fig, (ax_phase, ax_pkt, ax_ev) = plt.subplots(
        3, 1, figsize=(9, 8), gridspec_kw={"height_ratios": [2, 2, 1]})

    for seg in report.get("phase_timing", []):
        ax_phase.barh(seg["transfer"], seg["end_s"] - seg["start_s"],
                      left=seg["start_s"], height=0.6,
                      color=PHASE_COLORS.get(seg["phase"], "#cccccc"),
                      edgecolor="white", linewidth=0.3)
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in PHASE_COLORS.values()]
    ax_phase.legend(handles, PHASE_COLORS.keys(), fontsize=6, ncol=3, loc="upper right")
    ax_phase.set_yticks(range(len({s["transfer"] for s in report.get("phase_timing", [])}) or 1))
    ax_phase.set_ylabel("transfer")
    ax_phase.set_xlabel("simulated time [s]")
    done = "complete" if report["complete"] else "incomplete"
    ax_phase.set_title(f"{report['scenario']} (seed {report['seed']}): {done} "
                       f"at {report['completion_time_s']:.2f}s")

    op = report["packets"]["audit"]["operator"]
    labels = ["applied", "skipped", "ignored_halt", "auth_failed", "replayed",
              "malformed", "rate_dropped", "seq_rejected"]
    counts = [op.get(k, 0) for k in labels]
    labels += ["ch_dropped", "in_flight", "forged_ok"]
    counts += [report["packets"]["dropped"], report["packets"]["audit"]["in_flight"],
               report["packets"]["forged_accepted"]]
    bars = ax_pkt.bar(range(len(labels)), counts, color="#4878a8")
    ax_pkt.bar_label(bars, fontsize=7)
    ax_pkt.set_xticks(range(len(labels)), labels, rotation=30, ha="right", fontsize=7)
    ax_pkt.set_ylabel("packets")
    ax_pkt.set_title(f"sent={report['packets']['sent']}  "
                     f"estops={report['estop_count']}  "
                     f"block_drops={report['block_drops']}  "
                     f"clipped={report['clipped_count']}")

    for ev in report.get("task_events", []):
        marker = {"block_attached": "^", "block_placed": "o", "block_dropped": "x"}
        ax_ev.plot(ev["t_s"], 1, marker.get(ev["kind"], "."), color="#2a6033", ms=8)
    for alarm in report.get("alarms", []):
        ax_ev.axvline(alarm["t_s"], color="#c03028", ls="--", lw=1)
        ax_ev.text(alarm["t_s"], 0.4, alarm["kind"], rotation=90, fontsize=6,
                   color="#c03028", va="bottom")
    ax_ev.set_ylim(0, 2)
    ax_ev.set_yticks([])
    ax_ev.set_xlabel("simulated time [s]  (markers: task events, dashed: alarms)")

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_figure(rows: list[dict], param: str, path) -> None:
    """Mean/median completion time and completion rate against one parameter."""
    xs = [float(r[param]) for r in rows]
    mean_t = [float(r["mean_completion_s"]) for r in rows]
    median_t = [float(r["median_completion_s"]) for r in rows]
    rate = [float(r["complete_rate"]) for r in rows]

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(xs, mean_t, "o-", color="#4878a8", label="mean completion time")
    ax.plot(xs, median_t, "s--", color="#6baed6", label="median completion time")
    ax.set_xlabel(param)
    ax.set_ylabel("completion time [s]")
    ax2 = ax.twinx()
    ax2.plot(xs, rate, "d-", color="#c03028", label="completion rate")
    ax2.set_ylabel("completion rate")
    ax2.set_ylim(-0.05, 1.05)
    lines1, labels1 = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines1 + lines2, labels1 + labels2, fontsize=8, loc="center left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_bench_figure(bench: dict, path) -> None:
    """Latency and memory bars per key length."""
    rows = bench["rows"]
    bits = [str(r["key_bits"]) for r in rows]
    med = [r["roundtrip_median_us"] for r in rows]
    p99 = [r["roundtrip_p99_us"] for r in rows]
    mem = [r["memory_delta_kb"] for r in rows]

    fig, (ax_lat, ax_mem) = plt.subplots(1, 2, figsize=(8, 3.5))
    x = range(len(bits))
    ax_lat.bar([i - 0.2 for i in x], med, width=0.4, label="median", color="#4878a8")
    ax_lat.bar([i + 0.2 for i in x], p99, width=0.4, label="p99", color="#c03028")
    ax_lat.set_xticks(list(x), [f"{b}-bit" for b in bits])
    ax_lat.set_ylabel("seal+open latency [us]")
    ax_lat.axhline(1000.0, color="gray", ls=":", lw=1)  # 1 kHz budget per packet
    ax_lat.legend(fontsize=8)
    ax_lat.set_title(f"{bench['auth_mode']} / {bench['packet_size']}B x {bench['count']}")

    ax_mem.bar(list(x), mem, color="#6baed6")
    ax_mem.set_xticks(list(x), [f"{b}-bit" for b in bits])
    ax_mem.set_ylabel("memory delta [KB]")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
