from __future__ import annotations

import math
import random

import pytest

from telesim import robot as rb
from telesim.wire import ArmCommand, CommandPacket


def cmd(seq, dpos0=(0, 0, 0), drot0=(0, 0, 0), grasp0=0, dpos1=(0, 0, 0)):
    return CommandPacket(seq=seq, arms=(
        ArmCommand(dpos=dpos0, drot=drot0, grasp_delta=grasp0),
        ArmCommand(dpos=dpos1),
    ))


def reference_step(state: dict, pkt: CommandPacket, lim: rb.SafetyLimits) -> str:
    """Independent single-step re-statement of the acceptance policy.

    Operates on a plain dict so it shares no code with the Robot class.
    Returns the event kind produced for the packet.
    """
    if state["mode"] != rb.RUNNING:
        state["halt_max"] = max(state["halt_max"], pkt.seq)
        return "ignored_halt"
    if pkt.seq <= state["last_seq"]:
        return "skipped"
    if pkt.seq - state["last_seq"] >= lim.gap_limit:
        state["mode"] = rb.COMM_LOSS
        state["commloss"] += 1
        state["halt_max"] = max(state["last_seq"], pkt.seq)
        return "commloss"
    state["skipped_total"] += pkt.seq - state["last_seq"] - 1
    state["last_seq"] = pkt.seq

    proposals = []
    for idx in range(2):
        arm_cmd = pkt.arms[idx]
        dp = arm_cmd.dpos
        dr = arm_cmd.drot
        if math.sqrt(dp[0] ** 2 + dp[1] ** 2 + dp[2] ** 2) > lim.delta_estop_um or \
           math.sqrt(dr[0] ** 2 + dr[1] ** 2 + dr[2] ** 2) > lim.rot_estop_urad:
            state["mode"] = rb.SOFT_ESTOP
            state["estops"] += 1
            state["halt_max"] = state["last_seq"]
            return "estop"
        dp_len = math.sqrt(dp[0] ** 2 + dp[1] ** 2 + dp[2] ** 2)
        if dp_len > lim.delta_clip_um:
            dp = tuple(int(c * (lim.delta_clip_um / dp_len)) for c in dp)
        dr_len = math.sqrt(dr[0] ** 2 + dr[1] ** 2 + dr[2] ** 2)
        if dr_len > lim.rot_clip_urad:
            dr = tuple(int(c * (lim.rot_clip_urad / dr_len)) for c in dr)
        pos = state["pos"][idx]
        new_pos = (pos[0] + dp[0], pos[1] + dp[1], pos[2] + dp[2])
        for ax in range(3):
            if new_pos[ax] < lim.workspace_min_um[ax] or new_pos[ax] > lim.workspace_max_um[ax]:
                state["mode"] = rb.SOFT_ESTOP
                state["estops"] += 1
                state["halt_max"] = state["last_seq"]
                return "estop"
        rot = state["rot"][idx]
        new_rot = (rot[0] + dr[0], rot[1] + dr[1], rot[2] + dr[2])
        g = state["grasp"][idx] + arm_cmd.grasp_delta
        g = max(rb.GRASP_MIN_MDEG, min(rb.GRASP_MAX_MDEG, g))
        proposals.append((new_pos, new_rot, g))
    for idx, (p, r, g) in enumerate(proposals):
        state["pos"][idx] = p
        state["rot"][idx] = r
        state["grasp"][idx] = g
    return "applied"


def fresh_reference(bot: rb.Robot) -> dict:
    return {
        "mode": rb.RUNNING, "last_seq": 0, "skipped_total": 0,
        "estops": 0, "commloss": 0, "halt_max": 0,
        "pos": [a.pos for a in bot.arms], "rot": [a.rot for a in bot.arms],
        "grasp": [a.grasp_mdeg for a in bot.arms],
    }


def random_stream(rng: random.Random, n: int) -> list[CommandPacket]:
    seq = 0
    out = []
    for _ in range(n):
        r = rng.random()
        if r < 0.08:
            jump = -rng.randrange(1, 20)          # stale / replayed
        elif r < 0.10:
            jump = rng.randrange(900, 1400)       # near and past the gap limit
        elif r < 0.45:
            jump = rng.randrange(2, 30)           # lossy gap
        else:
            jump = 1
        seq = max(1, seq + jump)
        mag = rng.choice([0, 50, 200, 480, 900, 4000, 6000])
        vec = [0, 0, 0]
        vec[rng.randrange(3)] = rng.choice([-1, 1]) * mag
        out.append(cmd(seq, dpos0=tuple(vec), grasp0=rng.choice([-500, 0, 500])))
    return out


def test_stale_packet_skipped():
    bot = rb.Robot()
    bot.last_seq = 100
    before = [a.pos for a in bot.arms]
    events = bot.handle_packet(cmd(99, dpos0=(400, 0, 0)))
    assert [e.kind for e in events] == [rb.SKIPPED]
    assert [a.pos for a in bot.arms] == before
    assert bot.last_seq == 100 and bot.skipped_total == 0


def test_gap_within_limit_accepted_and_counted():
    bot = rb.Robot()
    bot.last_seq = 100
    events = bot.handle_packet(cmd(600))
    assert [e.kind for e in events] == [rb.APPLIED]
    assert bot.skipped_total == 499
    assert bot.last_seq == 600


def test_gap_past_limit_halts():
    bot = rb.Robot()
    bot.last_seq = 100
    events = bot.handle_packet(cmd(1200))
    assert [e.kind for e in events] == [rb.COMM_LOSS_HALT]
    assert bot.mode == rb.COMM_LOSS
    assert bot.commloss_count == 1
    assert bot.last_seq == 100


def test_gap_boundary():
    bot = rb.Robot()
    bot.last_seq = 100
    events = bot.handle_packet(cmd(1099))  # gap 999: largest accepted jump
    assert [e.kind for e in events] == [rb.APPLIED]
    assert bot.last_seq == 1099
    bot2 = rb.Robot()
    bot2.last_seq = 100
    events = bot2.handle_packet(cmd(1100))  # gap 1000 = limit: halt
    assert [e.kind for e in events] == [rb.COMM_LOSS_HALT]


def test_oversized_delta_estops_and_freezes_pose():
    bot = rb.Robot()
    before = [a.pos for a in bot.arms]
    events = bot.handle_packet(cmd(1, dpos0=(50_000, 0, 0)))
    assert [e.kind for e in events] == [rb.ESTOP]
    assert bot.mode == rb.SOFT_ESTOP
    assert bot.estop_count == 1
    assert [a.pos for a in bot.arms] == before


def test_mid_range_delta_clipped():
    bot = rb.Robot()
    start_x = bot.arms[0].pos[0]
    events = bot.handle_packet(cmd(1, dpos0=(2_000, 0, 0)))
    assert events[0].kind == rb.APPLIED and events[0].clipped
    assert bot.arms[0].pos[0] == start_x + 500


def test_benign_delta_not_clipped():
    bot = rb.Robot()
    events = bot.handle_packet(cmd(1, dpos0=(200, 0, 0)))
    assert events[0].kind == rb.APPLIED and not events[0].clipped


def test_workspace_exit_estops():
    bot = rb.Robot()
    bot.arms[0].pos = (99_900, 0, 0)
    events = bot.handle_packet(cmd(1, dpos0=(400, 0, 0)))
    assert [e.kind for e in events] == [rb.ESTOP]
    assert bot.arms[0].pos == (99_900, 0, 0)


def test_rotation_estop_and_clip():
    bot = rb.Robot()
    assert bot.handle_packet(cmd(1, drot0=(60_000, 0, 0)))[0].kind == rb.ESTOP
    bot2 = rb.Robot()
    ev = bot2.handle_packet(cmd(1, drot0=(8_000, 0, 0)))
    assert ev[0].kind == rb.APPLIED and ev[0].clipped
    assert bot2.arms[0].rot == (5_000, 0, 0)


def test_clip_is_total_under_any_stream():
    rng = random.Random(11)
    bot = rb.Robot()
    prev = [a.pos for a in bot.arms]
    for pkt in random_stream(rng, 3_000):
        bot.handle_packet(pkt)
        for idx, arm in enumerate(bot.arms):
            step = math.dist(arm.pos, prev[idx])
            assert step <= bot.limits.delta_clip_um + 1e-9
        prev = [a.pos for a in bot.arms]


def test_halted_pose_frozen():
    bot = rb.Robot()
    bot.handle_packet(cmd(1, dpos0=(50_000, 0, 0)))
    assert bot.mode == rb.SOFT_ESTOP
    snapshot = [(a.pos, a.rot, a.grasp_mdeg) for a in bot.arms]
    for seq in range(2, 50):
        events = bot.handle_packet(cmd(seq, dpos0=(300, 0, 0), grasp0=100))
        assert [e.kind for e in events] == [rb.IGNORED_HALT]
    assert [(a.pos, a.rot, a.grasp_mdeg) for a in bot.arms] == snapshot


def test_reset_requires_halt():
    bot = rb.Robot()
    with pytest.raises(rb.NotHalted):
        bot.reset_estop()


def test_reset_completes_after_latency():
    bot = rb.Robot()
    bot.handle_packet(cmd(1, dpos0=(50_000, 0, 0)))
    bot.reset_estop()
    bot.advance_to(1_999_999)
    assert bot.mode == rb.SOFT_ESTOP
    bot.advance_to(2_000_000)
    assert bot.mode == rb.RUNNING


def test_reset_resyncs_to_halt_max_seq():
    bot = rb.Robot()
    bot.handle_packet(cmd(1, dpos0=(50_000, 0, 0)))
    bot.reset_estop()
    for seq in (500, 900, 750):
        bot.handle_packet(cmd(seq))
    bot.advance_to(2_000_000)
    assert bot.mode == rb.RUNNING
    assert bot.last_seq == 900
    assert bot.handle_packet(cmd(900))[0].kind == rb.SKIPPED
    assert bot.handle_packet(cmd(901))[0].kind == rb.APPLIED


def test_no_immunity_window_after_reset():
    bot = rb.Robot()
    t = 0
    injections = 0
    for tick in range(10_000):  # 10 simulated seconds
        t = tick * 1000
        bot.advance_to(t)
        if tick % 500 == 0:  # attacker packet every 0.5 s
            injections += 1
            bot.handle_packet(cmd(bot.last_seq + 100, dpos0=(50_000, 0, 0)))
            if bot.mode != rb.RUNNING and not bot.reset_pending:
                bot.reset_estop()
        assert bot.mode != rb.RUNNING or tick % 2000 == 0
    assert bot.estop_count >= 4


def test_feedback_snapshots():
    bot = rb.Robot()
    fb1 = bot.emit_feedback()
    assert fb1.status == 0 and fb1.skipped_total == 0
    fb2 = bot.emit_feedback()
    assert fb2.seq - fb1.seq == 1
    bot.last_seq = 100
    bot.handle_packet(cmd(5000))
    fb3 = bot.emit_feedback()
    assert fb3.status == 2


def test_grasp_clamped_to_actuator_range():
    bot = rb.Robot()
    bot.handle_packet(cmd(1, grasp0=30_000))
    assert bot.arms[0].grasp_mdeg == rb.GRASP_MAX_MDEG
    bot.handle_packet(cmd(2, grasp0=-32_000))
    bot.handle_packet(cmd(3, grasp0=-32_000))
    assert bot.arms[0].grasp_mdeg == rb.GRASP_MIN_MDEG


def test_matches_reference_on_random_streams():
    for trial in range(20):
        rng = random.Random(1000 + trial)
        bot = rb.Robot()
        ref = fresh_reference(bot)
        for pkt in random_stream(rng, 2_000):
            events = bot.handle_packet(pkt)
            kind = reference_step(ref, pkt, bot.limits)
            assert events[0].kind == kind
        assert ref["last_seq"] == bot.last_seq
        assert ref["skipped_total"] == bot.skipped_total
        assert ref["mode"] == bot.mode
        assert ref["estops"] == bot.estop_count
        assert ref["pos"] == [a.pos for a in bot.arms]
        assert ref["grasp"] == [a.grasp_mdeg for a in bot.arms]


def test_determinism_same_stream_same_state():
    stream = random_stream(random.Random(5), 1_000)
    bots = [rb.Robot(), rb.Robot()]
    logs = []
    for bot in bots:
        log = []
        for pkt in stream:
            log.extend(bot.handle_packet(pkt))
        logs.append(log)
    assert logs[0] == logs[1]
    assert [a.pos for a in bots[0].arms] == [a.pos for a in bots[1].arms]


def test_limits_validation():
    with pytest.raises(ValueError):
        rb.SafetyLimits(delta_clip_um=600, delta_estop_um=500).validate()
    with pytest.raises(ValueError):
        rb.SafetyLimits(gap_limit=0).validate()
    with pytest.raises(ValueError):
        rb.SafetyLimits(tick_rate=0).validate()
