"""Real-datagram transport: operator, attacker, and robot as three threads.

Each endpoint owns its state and talks to the others only through UDP
sockets on loopback, wall-clock paced at the configured tick rate. With an
intermediary attacker all traffic flows through the attacker's two proxy
ports; a network observer gets a mirror of the command stream and injects
packets straight at the robot. This mode demonstrates the attacks over a
real stack and is excluded from the determinism guarantees of the
in-memory transport (reports carry wall-clock timings).
"""

from __future__ import annotations

import heapq
import random
import select
import socket
import threading
import time

from . import attacks as atk
from . import defense as dfs
from . import robot as rb
from . import task
from . import wire
from .report import PacketStats, RunReport
from .scenario import ScenarioConfig

_BUF = 1 << 20


def _mk_socket(host: str, port: int) -> socket.socket:
    sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, _BUF)
    sock.bind((host, port))
    return sock


class _RobotSide:
    """Robot endpoint: defense receive chain, robot, world, counters."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.robot = rb.Robot(limits=cfg.limits)
        self.board = task.Pegboard.for_script(cfg.script)
        self.world = task.World(self.board, cfg.script)
        d = cfg.defense
        self.opener = dfs.Opener(d.session_key(), d.auth_mode) if d.auth_on else None
        self.gate = dfs.SequenceGate(d.seq_window) if d.harden_sequence else None
        self.limiter = dfs.RateLimiter(d.rate_limit) if d.rate_limiting else None
        self.monitor = dfs.Monitor(d.monitor, gap_window=d.seq_window) if d.monitoring else None
        self.received = 0
        self.counts = {"applied": 0, "skipped": 0, "ignored_halt": 0, "halted": 0,
                       "auth_failed": 0, "replayed": 0, "malformed": 0,
                       "rate_dropped": 0, "seq_rejected": 0}
        self.clipped = 0

    def receive(self, data: bytes, now_s: float) -> None:
        self.received += 1
        if self.opener is not None:
            if not wire.is_envelope(data):
                self.counts["malformed"] += 1
                return
            try:
                data = self.opener.open(wire.decode_envelope(data))
            except (wire.MalformedPacket, dfs.AuthFailure, dfs.ReplayedNonce) as exc:
                key = {"MalformedPacket": "malformed", "AuthFailure": "auth_failed",
                       "ReplayedNonce": "replayed"}[type(exc).__name__]
                self.counts[key] += 1
                return
        try:
            pkt = wire.decode_command(data)
        except wire.WireError:
            self.counts["malformed"] += 1
            return
        if self.monitor is not None:
            self.monitor.observe(pkt.seq, now_s)
        if self.limiter is not None and not self.limiter.allow(now_s):
            self.counts["rate_dropped"] += 1
            return
        if self.gate is not None and self.gate.check(pkt.seq) != dfs.SEQ_ACCEPT:
            self.counts["seq_rejected"] += 1
            return
        for ev in self.robot.handle_packet(pkt):
            if ev.kind == rb.APPLIED:
                self.counts["applied"] += 1
                if ev.clipped:
                    self.clipped += 1
            elif ev.kind == rb.SKIPPED:
                self.counts["skipped"] += 1
            elif ev.kind == rb.IGNORED_HALT:
                self.counts["ignored_halt"] += 1
            else:
                self.counts["halted"] += 1
        if self.robot.mode != rb.RUNNING and not self.robot.reset_pending:
            self.robot.reset_estop()


def run_scenario_udp(cfg: ScenarioConfig) -> RunReport:
    cfg.validate()
    ch = cfg.channel
    rng = random.Random(cfg.seed)
    tick_s = 1.0 / cfg.limits.tick_rate

    sock_robot = _mk_socket(ch.host, ch.robot_port)
    sock_op = _mk_socket(ch.host, ch.operator_port)
    robot_addr = sock_robot.getsockname()
    op_addr = sock_op.getsockname()

    has_attacker = ch.attacker_role != atk.ROLE_NONE and ch.attack is not None
    intermediary = ch.attacker_role == atk.ROLE_INTERMEDIARY
    if has_attacker:
        sock_atk_cmd = _mk_socket(ch.host, ch.attacker_cmd_port)
        sock_atk_fb = _mk_socket(ch.host, ch.attacker_fb_port)
        atk_cmd_addr = sock_atk_cmd.getsockname()
        atk_fb_addr = sock_atk_fb.getsockname()

    cmd_dest = atk_cmd_addr if intermediary else robot_addr
    fb_dest = atk_fb_addr if intermediary else op_addr
    mirror_to = atk_cmd_addr if (has_attacker and not intermediary) else None

    stop = threading.Event()
    t0 = time.monotonic()
    robot_side = _RobotSide(cfg)
    surgeon = task.Surgeon(cfg.script)
    d = cfg.defense
    seal_op = dfs.Sealer(d.session_key(), dfs.OPERATOR_SENDER, d.auth_mode) if d.auth_on else None
    seal_rb = dfs.Sealer(d.session_key(), dfs.ROBOT_SENDER, d.auth_mode) if d.auth_on else None
    open_op = dfs.Opener(d.session_key(), d.auth_mode) if d.auth_on else None

    state = {"sent": 0, "completed_at": None, "events": []}

    def now_s() -> float:
        return time.monotonic() - t0

    def robot_thread():
        out = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        next_tick = time.monotonic() + tick_s
        while not stop.is_set():
            timeout = max(0.0, next_tick - time.monotonic())
            readable, _, _ = select.select([sock_robot], [], [], timeout)
            for sock in readable:
                data, _ = sock.recvfrom(4096)
                robot_side.receive(data, now_s())
            if time.monotonic() < next_tick:
                continue
            next_tick += tick_s
            t_us = int(now_s() * 1e6)
            robot_side.robot.advance_to(t_us)
            state["events"].extend(robot_side.world.step(robot_side.robot, t_us))
            fb = wire.encode_feedback(robot_side.robot.emit_feedback())
            if seal_rb is not None:
                fb = wire.encode_envelope(seal_rb.seal(fb))
            out.sendto(fb, fb_dest)
            if state["completed_at"] is None and \
                    task.task_status(robot_side.board, cfg.script).complete:
                state["completed_at"] = now_s()
                stop.set()
        out.close()

    def operator_thread():
        out = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock_op.setblocking(False)
        next_tick = time.monotonic() + tick_s
        while not stop.is_set():
            timeout = max(0.0, next_tick - time.monotonic())
            readable, _, _ = select.select([sock_op], [], [], timeout)
            latest = None
            for sock in readable:
                while True:
                    try:
                        data, _ = sock.recvfrom(4096)
                    except BlockingIOError:
                        break
                    if open_op is not None:
                        if not wire.is_envelope(data):
                            continue
                        try:
                            data = open_op.open(wire.decode_envelope(data))
                        except (wire.MalformedPacket, dfs.DefenseError):
                            continue
                    try:
                        fb = wire.decode_feedback(data)
                    except wire.WireError:
                        continue
                    if latest is None or fb.seq >= latest.seq:
                        latest = fb
            if time.monotonic() < next_tick:
                continue
            next_tick += tick_s
            t_us = int(now_s() * 1e6)
            pkt = surgeon.plan_command(latest, t_us)
            state["sent"] += 1
            data = wire.encode_command(pkt)
            if seal_op is not None:
                data = wire.encode_envelope(seal_op.seal(data))
            out.sendto(data, cmd_dest)
            if mirror_to is not None:
                out.sendto(data, mirror_to)
        out.close()

    def attacker_thread():
        out = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        interceptor = atk.Interceptor(ch.attack, rng) if intermediary else None
        driver = atk.make_driver(ch.attack, rng)
        pending: list = []
        idx = 0
        window_was = False
        next_tick = time.monotonic() + tick_s
        while not stop.is_set():
            timeout = max(0.0, next_tick - time.monotonic())
            if pending:
                timeout = min(timeout, max(0.0, pending[0][0] / 1e6 - now_s()))
            readable, _, _ = select.select([sock_atk_cmd, sock_atk_fb], [], [], timeout)
            t_us = int(now_s() * 1e6)
            active = ch.window_active(now_s())
            if window_was and not active and interceptor is not None:
                for at, data in interceptor.flush(t_us):
                    idx += 1
                    heapq.heappush(pending, (at, idx, data, robot_addr))
            window_was = active
            for sock in readable:
                data, _ = sock.recvfrom(4096)
                is_cmd = sock is sock_atk_cmd
                if is_cmd and driver is not None:
                    driver.observe(data)
                dest = robot_addr if is_cmd else op_addr
                if interceptor is not None and active:
                    fn = (interceptor.intercept_command if is_cmd
                          else interceptor.intercept_feedback)
                    for at, payload in fn(data, t_us):
                        if at <= t_us:
                            out.sendto(payload, dest)
                        else:
                            idx += 1
                            heapq.heappush(pending, (at, idx, payload, dest))
                else:
                    out.sendto(data, dest)
            while pending and pending[0][0] <= int(now_s() * 1e6):
                _, _, payload, dest = heapq.heappop(pending)
                out.sendto(payload, dest)
            if time.monotonic() >= next_tick:
                next_tick += tick_s
                if driver is not None and active:
                    for pkt in driver.tick(t_us):
                        out.sendto(wire.encode_command(pkt), robot_addr)
        out.close()

    threads = [threading.Thread(target=robot_thread, name="robot", daemon=True),
               threading.Thread(target=operator_thread, name="operator", daemon=True)]
    if has_attacker:
        threads.append(threading.Thread(target=attacker_thread, name="attacker", daemon=True))
    for t in threads:
        t.start()
    stop.wait(timeout=cfg.time_budget_s)
    stop.set()
    for t in threads:
        t.join(timeout=2.0)
    sock_robot.close()
    sock_op.close()
    if has_attacker:
        sock_atk_cmd.close()
        sock_atk_fb.close()

    completed = state["completed_at"]
    status = task.task_status(robot_side.board, cfg.script)
    c = robot_side.counts
    alarms = []
    if robot_side.limiter is not None:
        alarms.extend(robot_side.limiter.alarms)
    if robot_side.monitor is not None:
        alarms.extend(robot_side.monitor.alarms)
    return RunReport(
        scenario=cfg.name,
        seed=cfg.seed,
        time_budget_s=cfg.time_budget_s,
        complete=completed is not None,
        completion_time_s=completed if completed is not None else cfg.time_budget_s,
        completion_ticks=None,
        transfers_done=status.transfers_done,
        block_drops=robot_side.world.block_drops,
        estop_count=robot_side.robot.estop_count,
        commloss_count=robot_side.robot.commloss_count,
        skipped_total=robot_side.robot.skipped_total,
        clipped_count=robot_side.clipped,
        packets=PacketStats(
            sent=state["sent"],
            delivered=robot_side.received,
            dropped=max(0, state["sent"] - robot_side.received),
            forged_accepted=0,  # wire provenance is not tracked over real sockets
            auth_failures=c["auth_failed"],
            audit={"robot_side": dict(c), "transport": "udp"},
        ),
        alarms=[{"kind": a.kind, "t_s": a.t_s, "detail": a.detail} for a in alarms],
        task_events=[{"kind": e.kind, "block": e.block, "arm": e.arm, "t_s": e.t_us / 1e6}
                     for e in state["events"]],
        phase_timing=[],
        final_state={"arms": [{"pos": list(a.pos), "rot": list(a.rot),
                               "grasp_mdeg": a.grasp_mdeg, "holding": a.holding}
                              for a in robot_side.robot.arms],
                     "mode": robot_side.robot.mode,
                     "last_seq": robot_side.robot.last_seq},
    )
