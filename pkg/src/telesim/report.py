"""Run reports: metrics of one scenario run, serializable deterministically.

packets.sent counts operator command packets only; attacker injections are
tracked under packets.audit (injected / forged_accepted). delivered counts
operator packets that reached the robot endpoint; dropped counts packets the
channel discarded; in_flight counts packets still queued or scheduled when
the run ended. forged_accepted counts tampered or injected packets the robot
acted on (applied or halt-triggering), which authentication must hold at
zero. completion_time_s equals the time budget when the task did not
complete.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field


@dataclass
class PacketStats:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    forged_accepted: int = 0
    auth_failures: int = 0
    audit: dict = field(default_factory=dict)


@dataclass
class RunReport:
    scenario: str
    seed: int
    time_budget_s: float
    complete: bool
    completion_time_s: float
    completion_ticks: int | None
    transfers_done: int
    block_drops: int
    estop_count: int
    commloss_count: int
    skipped_total: int
    clipped_count: int
    packets: PacketStats
    alarms: list = field(default_factory=list)
    task_events: list = field(default_factory=list)
    phase_timing: list = field(default_factory=list)
    final_state: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    # Metrics compared when checking that an attack visibly differs from baseline.
    def metric_dict(self) -> dict:
        return {
            "complete": self.complete,
            "completion_ticks": self.completion_ticks,
            "transfers_done": self.transfers_done,
            "block_drops": self.block_drops,
            "estop_count": self.estop_count,
            "commloss_count": self.commloss_count,
            "skipped_total": self.skipped_total,
            "clipped_count": self.clipped_count,
            "delivered": self.packets.delivered,
            "dropped": self.packets.dropped,
            "forged_accepted": self.packets.forged_accepted,
            "auth_failures": self.packets.auth_failures,
            "alarm_count": len(self.alarms),
            "final_arms": json.dumps(self.final_state.get("arms"), sort_keys=True),
        }


def load_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_sweep_csv(rows: list[dict], path) -> None:
    """One aggregate row per sweep point; column order follows the first row."""
    if not rows:
        raise ValueError("no sweep rows to write")
    fields = list(rows[0].keys())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
