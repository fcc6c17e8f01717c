"""Deterministic discrete-event core: one scenario run and parameter sweeps.

The in-memory transport steps a simulated clock at the configured tick rate
(1 kHz by default). Each tick: the robot emits feedback, the operator plans
one command from the newest feedback it has received, the channel (and any
attacker) schedules deliveries, and the robot consumes everything due this
tick through the defense receive chain, ordered by (delivery time,
insertion index). All randomness comes from one generator seeded by the
scenario, so a report is a pure function of (config, seed).
"""

from __future__ import annotations

import heapq
import itertools
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import attacks as atk
from . import defense as dfs
from . import robot as rb
from . import task
from . import wire
from .report import PacketStats, RunReport, write_sweep_csv
from .scenario import ConfigInvalid, ScenarioConfig

OP = "operator"
ATK = "attacker"

_ACCEPTED_KINDS = (rb.APPLIED, rb.ESTOP, rb.COMM_LOSS_HALT)


def _audit() -> dict:
    return {
        "applied": 0, "skipped": 0, "estop_triggered": 0, "commloss_triggered": 0,
        "ignored_halt": 0, "auth_failed": 0, "replayed": 0, "malformed": 0,
        "rate_dropped": 0, "seq_rejected": 0,
    }


class Simulation:
    def __init__(self, cfg: ScenarioConfig):
        cfg.validate()
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.tick_us = round(1_000_000 / cfg.limits.tick_rate)
        self.budget_ticks = round(cfg.time_budget_s * cfg.limits.tick_rate)

        self.robot = rb.Robot(limits=cfg.limits)
        self.board = task.Pegboard.for_script(cfg.script)
        self.world = task.World(self.board, cfg.script)
        self.surgeon = task.Surgeon(cfg.script)

        ch = cfg.channel
        self.interceptor = (atk.Interceptor(ch.attack, self.rng)
                            if ch.attacker_role == atk.ROLE_INTERMEDIARY else None)
        self.driver = (atk.make_driver(ch.attack, self.rng)
                       if ch.attack is not None and ch.attacker_role != atk.ROLE_NONE
                       else None)

        d = cfg.defense
        if d.auth_on:
            key = d.session_key()
            self.seal_op = dfs.Sealer(key, dfs.OPERATOR_SENDER, d.auth_mode)
            self.seal_robot = dfs.Sealer(key, dfs.ROBOT_SENDER, d.auth_mode)
            self.open_robot = dfs.Opener(key, d.auth_mode)
            self.open_op = dfs.Opener(key, d.auth_mode)
        self.gate = dfs.SequenceGate(d.seq_window) if d.harden_sequence else None
        self.limiter = dfs.RateLimiter(d.rate_limit) if d.rate_limiting else None
        self.monitor = (dfs.Monitor(d.monitor, gap_window=d.seq_window)
                        if d.monitoring else None)

        self._cmd_heap: list = []
        self._fb_heap: list = []
        self._heap_idx = 0
        self._window_was_active = False

        self.audit_op = _audit()
        self.audit_atk = _audit()
        self.sent = 0
        self.delivered_op = 0
        self.injected = 0
        self.forged_accepted = 0
        self.clipped_count = 0
        self.fb_auth_failures = 0
        self.fb_replayed = 0
        self.fb_malformed = 0
        self.task_events: list[task.TaskEvent] = []
        self.completion_tick: int | None = None

    # -- helpers -------------------------------------------------------------

    def _push(self, heap, deliver_at_us, payload, origin=OP, tampered=False):
        self._heap_idx += 1
        heapq.heappush(heap, (deliver_at_us, self._heap_idx, payload, origin, tampered))

    def _seal_cmd(self, data: bytes) -> bytes:
        if not self.cfg.defense.auth_on:
            return data
        return wire.encode_envelope(self.seal_op.seal(data))

    def _seal_fb(self, data: bytes) -> bytes:
        if not self.cfg.defense.auth_on:
            return data
        return wire.encode_envelope(self.seal_robot.seal(data))

    def _open_cmd(self, data: bytes, audit: dict) -> bytes | None:
        if not self.cfg.defense.auth_on:
            return data
        if not wire.is_envelope(data):
            audit["malformed"] += 1
            return None
        try:
            return self.open_robot.open(wire.decode_envelope(data))
        except wire.MalformedPacket:
            audit["malformed"] += 1
        except dfs.AuthFailure:
            audit["auth_failed"] += 1
        except dfs.ReplayedNonce:
            audit["replayed"] += 1
        return None

    def _receive_feedback(self, data: bytes) -> wire.FeedbackPacket | None:
        if self.cfg.defense.auth_on:
            if not wire.is_envelope(data):
                self.fb_malformed += 1
                return None
            try:
                data = self.open_op.open(wire.decode_envelope(data))
            except wire.MalformedPacket:
                self.fb_malformed += 1
                return None
            except dfs.AuthFailure:
                self.fb_auth_failures += 1
                return None
            except dfs.ReplayedNonce:
                self.fb_replayed += 1
                return None
        try:
            return wire.decode_feedback(data)
        except wire.WireError:
            self.fb_malformed += 1
            return None

    def _robot_receive(self, data: bytes, origin: str, tampered: bool, now_s: float):
        audit = self.audit_op if origin == OP else self.audit_atk
        plain = self._open_cmd(data, audit)
        if plain is None:
            return
        try:
            pkt = wire.decode_command(plain)
        except wire.WireError:
            audit["malformed"] += 1
            return
        if self.monitor is not None:
            self.monitor.observe(pkt.seq, now_s)
        if self.limiter is not None and not self.limiter.allow(now_s):
            audit["rate_dropped"] += 1
            return
        if self.gate is not None:
            verdict = self.gate.check(pkt.seq)
            if verdict != dfs.SEQ_ACCEPT:
                audit["seq_rejected"] += 1
                return
        events = self.robot.handle_packet(pkt)
        for ev in events:
            if ev.kind == rb.APPLIED:
                audit["applied"] += 1
                if ev.clipped:
                    self.clipped_count += 1
            elif ev.kind == rb.SKIPPED:
                audit["skipped"] += 1
            elif ev.kind == rb.ESTOP:
                audit["estop_triggered"] += 1
            elif ev.kind == rb.COMM_LOSS_HALT:
                audit["commloss_triggered"] += 1
            elif ev.kind == rb.IGNORED_HALT:
                audit["ignored_halt"] += 1
            if (tampered or origin == ATK) and ev.kind in _ACCEPTED_KINDS:
                self.forged_accepted += 1
        # On-site staff begin a reset whenever the robot halts.
        if self.robot.mode != rb.RUNNING and not self.robot.reset_pending:
            self.robot.reset_estop()

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunReport:
        ch = self.cfg.channel
        mutating = isinstance(ch.attack, (atk.Modify, atk.FeedbackSpoof))
        end_tick = self.budget_ticks

        for tick in range(1, self.budget_ticks + 1):
            t_us = tick * self.tick_us
            now_s = t_us / 1e6
            self.robot.advance_to(t_us)

            window = ch.window_active(now_s)
            if self._window_was_active and not window and self.interceptor is not None:
                for at, data in self.interceptor.flush(t_us):
                    self._push(self._cmd_heap, at, data)
            self._window_was_active = window

            # Robot -> operator feedback.
            fb_bytes = self._seal_fb(wire.encode_feedback(self.robot.emit_feedback()))
            if self.interceptor is not None and window:
                for at, data in self.interceptor.intercept_feedback(fb_bytes, t_us):
                    self._push(self._fb_heap, at, data, tampered=mutating)
            else:
                self._push(self._fb_heap, t_us, fb_bytes)

            latest_fb = None
            while self._fb_heap and self._fb_heap[0][0] <= t_us:
                _, _, data, _, _ = heapq.heappop(self._fb_heap)
                fb = self._receive_feedback(data)
                if fb is not None and (latest_fb is None or fb.seq >= latest_fb.seq):
                    latest_fb = fb

            # Operator -> robot command.
            pkt = self.surgeon.plan_command(latest_fb, t_us)
            self.sent += 1
            cmd_bytes = self._seal_cmd(wire.encode_command(pkt))
            if self.driver is not None:
                self.driver.observe(cmd_bytes)
            if self.interceptor is not None and window:
                for at, data in self.interceptor.intercept_command(cmd_bytes, t_us):
                    self._push(self._cmd_heap, at, data, tampered=mutating)
            else:
                self._push(self._cmd_heap, t_us, cmd_bytes)

            # Observer/intermediary injections.
            if self.driver is not None and window:
                for inj in self.driver.tick(t_us):
                    self.injected += 1
                    self._push(self._cmd_heap, t_us, wire.encode_command(inj),
                               origin=ATK, tampered=True)

            while self._cmd_heap and self._cmd_heap[0][0] <= t_us:
                _, _, data, origin, tampered = heapq.heappop(self._cmd_heap)
                if origin == OP:
                    self.delivered_op += 1
                self._robot_receive(data, origin, tampered, now_s)

            self.task_events.extend(self.world.step(self.robot, t_us))

            if self.completion_tick is None and \
                    task.task_status(self.board, self.cfg.script).complete:
                self.completion_tick = tick
                if not self.cfg.run_to_budget:
                    end_tick = tick
                    break

        return self._build_report(end_tick)

    # -- report assembly -----------------------------------------------------

    def _build_report(self, end_tick: int) -> RunReport:
        cfg = self.cfg
        complete = self.completion_tick is not None
        completion_s = ((self.completion_tick * self.tick_us) / 1e6 if complete
                        else cfg.time_budget_s)
        in_flight = len(self._cmd_heap) + (self.interceptor.pending if self.interceptor else 0)
        dropped = self.interceptor.dropped if self.interceptor else 0

        audit = {
            "operator": dict(self.audit_op),
            "attacker": dict(self.audit_atk) | {"injected": self.injected},
            "feedback": {"auth_failed": self.fb_auth_failures,
                         "replayed": self.fb_replayed,
                         "malformed": self.fb_malformed},
            "in_flight": in_flight,
        }
        packets = PacketStats(
            sent=self.sent,
            delivered=self.delivered_op,
            dropped=dropped,
            forged_accepted=self.forged_accepted,
            auth_failures=(self.audit_op["auth_failed"] + self.audit_atk["auth_failed"]
                           + self.fb_auth_failures),
            audit=audit,
        )

        alarms = []
        if self.limiter is not None:
            alarms.extend(self.limiter.alarms)
        if self.monitor is not None:
            alarms.extend(self.monitor.alarms)
        alarms.sort(key=lambda a: (a.t_s, a.kind))

        end_s = (end_tick * self.tick_us) / 1e6
        phase_entries = [(0, 0, task.MOVE_ABOVE_PICK)] + self.surgeon.phase_log
        phase_timing = []
        for i, (t_us, transfer, phase) in enumerate(phase_entries):
            stop = phase_entries[i + 1][0] if i + 1 < len(phase_entries) else end_tick * self.tick_us
            phase_timing.append({
                "transfer": transfer, "phase": phase,
                "start_s": t_us / 1e6, "end_s": stop / 1e6,
            })

        status = task.task_status(self.board, cfg.script)
        return RunReport(
            scenario=cfg.name,
            seed=cfg.seed,
            time_budget_s=cfg.time_budget_s,
            complete=complete,
            completion_time_s=completion_s,
            completion_ticks=self.completion_tick,
            transfers_done=status.transfers_done,
            block_drops=self.world.block_drops,
            estop_count=self.robot.estop_count,
            commloss_count=self.robot.commloss_count,
            skipped_total=self.robot.skipped_total,
            clipped_count=self.clipped_count,
            packets=packets,
            alarms=[{"kind": a.kind, "t_s": a.t_s, "detail": a.detail} for a in alarms],
            task_events=[{"kind": e.kind, "block": e.block, "arm": e.arm,
                          "t_s": e.t_us / 1e6} for e in self.task_events],
            phase_timing=phase_timing,
            final_state={
                "arms": [{"pos": list(a.pos), "rot": list(a.rot),
                          "grasp_mdeg": a.grasp_mdeg, "holding": a.holding}
                         for a in self.robot.arms],
                "mode": self.robot.mode,
                "last_seq": self.robot.last_seq,
                "end_s": end_s,
            },
        )


def run_scenario(cfg: ScenarioConfig) -> RunReport:
    """Execute one scenario on the in-memory transport."""
    if cfg.channel.transport == "udp":
        from .udp import run_scenario_udp
        return run_scenario_udp(cfg)
    return Simulation(cfg).run()


def _run_from_dict(raw: dict) -> RunReport:
    return Simulation(ScenarioConfig.from_dict(raw)).run()


def _set_path(raw: dict, path: str, value) -> None:
    keys = path.split(".")
    node = raw
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node or node[key] is None:
            raise ConfigInvalid(f"sweep parameter path {path!r} not found in scenario")
        node = node[key]
    if not isinstance(node, dict):
        raise ConfigInvalid(f"sweep parameter path {path!r} not found in scenario")
    node[keys[-1]] = value


@dataclass
class SweepResult:
    rows: list[dict]
    reports: list[list[RunReport]] = field(default_factory=list)

    def save_csv(self, path) -> None:
        write_sweep_csv(self.rows, path)


def sweep(base: ScenarioConfig, grid: dict[str, list], seeds: list[int],
          jobs: int = 1, keep_reports: bool = False) -> SweepResult:
    """Run the cartesian product of grid x seeds; one aggregate row per point."""
    if not grid or any(not vals for vals in grid.values()):
        raise ConfigInvalid("sweep grid must be nonempty")
    if not seeds:
        raise ConfigInvalid("sweep needs at least one seed")

    names = list(grid.keys())
    points = list(itertools.product(*(grid[n] for n in names)))
    configs: list[dict] = []
    for point in points:
        for seed in seeds:
            raw = base.to_dict()
            for name, value in zip(names, point):
                _set_path(raw, name, value)
            raw["seed"] = int(seed)
            ScenarioConfig.from_dict(raw)  # validate before running anything
            configs.append(raw)

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            all_reports = list(pool.map(_run_from_dict, configs))
    else:
        all_reports = [_run_from_dict(raw) for raw in configs]

    rows = []
    kept = []
    per_point = len(seeds)
    for i, point in enumerate(points):
        reports = all_reports[i * per_point:(i + 1) * per_point]
        times = [r.completion_time_s for r in reports]
        row = {name: value for name, value in zip(names, point)}
        row.update({
            "seeds": per_point,
            "complete_rate": sum(r.complete for r in reports) / per_point,
            "mean_completion_s": statistics.fmean(times),
            "median_completion_s": statistics.median(times),
            "mean_estops": statistics.fmean(r.estop_count for r in reports),
            "mean_block_drops": statistics.fmean(r.block_drops for r in reports),
            "mean_skipped": statistics.fmean(r.skipped_total for r in reports),
        })
        rows.append(row)
        if keep_reports:
            kept.append(reports)
    return SweepResult(rows=rows, reports=kept)
