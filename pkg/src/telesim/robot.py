"""Simulated robot endpoint.

Consumes command packets at a fixed tick rate and emits feedback packets.
Implements the sequence-acceptance policy (skip stale, halt on jumps past
the gap limit), per-packet velocity clipping, workspace bounds, a software
E-stop, and reset-with-latency semantics. All pose state is kept in the
wire's integer units so identical packet streams produce bit-identical
states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .wire import ArmPose, CommandPacket, FeedbackPacket, Vec3

# Robot modes; values double as the feedback status byte.
RUNNING = 0
SOFT_ESTOP = 1
COMM_LOSS = 2

# Grasp actuator range (millidegrees): 0 = fully closed, 30 deg = fully open.
GRASP_MIN_MDEG = 0
GRASP_MAX_MDEG = 30_000

# Event kinds returned by handle_packet.
APPLIED = "applied"
SKIPPED = "skipped"
ESTOP = "estop"
COMM_LOSS_HALT = "commloss"
IGNORED_HALT = "ignored_halt"


class NotHalted(Exception):
    """reset_estop called while the robot is running."""


@dataclass(frozen=True)
class RobotEvent:
    kind: str
    seq: int
    clipped: bool = False


@dataclass
class SafetyLimits:
    """Safety envelope, in wire units (micrometers / microradians).

    delta_clip is the largest per-packet translation actually applied;
    commands between delta_clip and delta_estop are clamped (direction
    preserved), anything past delta_estop halts the robot. gap_limit is
    the largest accepted sequence jump, in packets (~1 s at 1 kHz).
    """

    workspace_min_um: Vec3 = (-100_000, -100_000, -100_000)
    workspace_max_um: Vec3 = (100_000, 100_000, 100_000)
    delta_clip_um: int = 500
    delta_estop_um: int = 5_000
    rot_clip_urad: int = 5_000
    rot_estop_urad: int = 50_000
    gap_limit: int = 1_000
    tick_rate: int = 1_000
    reset_latency_s: float = 2.0

    def validate(self) -> None:
        if not 0 < self.delta_clip_um < self.delta_estop_um:
            raise ValueError("require 0 < delta_clip < delta_estop")
        if not 0 < self.rot_clip_urad < self.rot_estop_urad:
            raise ValueError("require 0 < rot_clip < rot_estop")
        if self.gap_limit < 1:
            raise ValueError("gap_limit must be >= 1")
        if self.tick_rate <= 0:
            raise ValueError("tick_rate must be positive")
        if self.reset_latency_s < 0:
            raise ValueError("reset_latency_s must be >= 0")


@dataclass
class ArmState:
    pos: Vec3 = (0, 0, 0)            # micrometers
    rot: Vec3 = (0, 0, 0)            # microradians
    grasp_mdeg: int = GRASP_MAX_MDEG
    holding: int | None = None       # block id, managed by the task world


DEFAULT_START_POS: tuple[Vec3, Vec3] = ((-30_000, 0, 20_000), (30_000, 0, 20_000))


def _norm(v: Vec3) -> float:
    return math.hypot(v[0], v[1], v[2])


def _clamp_vec(v: Vec3, max_norm: int) -> tuple[Vec3, bool]:
    """Scale v down to max_norm, truncating toward zero so the clamp is total."""
    n = _norm(v)
    if n <= max_norm:
        return v, False
    scale = max_norm / n
    return (int(v[0] * scale), int(v[1] * scale), int(v[2] * scale)), True


class Robot:
    """One robot endpoint; callers must serialize handle_packet/emit_feedback."""

    def __init__(self, limits: SafetyLimits | None = None,
                 start_pos: tuple[Vec3, Vec3] = DEFAULT_START_POS):
        self.limits = limits or SafetyLimits()
        self.limits.validate()
        self.arms = [ArmState(pos=start_pos[0]), ArmState(pos=start_pos[1])]
        self.mode = RUNNING
        self.last_seq = 0
        self.skipped_total = 0
        self.estop_count = 0
        self.commloss_count = 0
        self.clock_us = 0
        self.feedback_seq = 0
        self._halt_seen_max = 0
        self._reset_done_us: int | None = None

    # -- command path ------------------------------------------------------

    def handle_packet(self, pkt: CommandPacket) -> list[RobotEvent]:
        if self.mode != RUNNING:
            if pkt.seq > self._halt_seen_max:
                self._halt_seen_max = pkt.seq
            return [RobotEvent(IGNORED_HALT, pkt.seq)]

        if pkt.seq <= self.last_seq:
            return [RobotEvent(SKIPPED, pkt.seq)]

        # Jumps of gap_limit or more mean over a second of lost data: halt.
        # Accepting strictly below the limit is what makes a takeover offset
        # work at 999 and fail at 1000.
        gap = pkt.seq - self.last_seq
        if gap >= self.limits.gap_limit:
            self.mode = COMM_LOSS
            self.commloss_count += 1
            self._halt_seen_max = max(self.last_seq, pkt.seq)
            return [RobotEvent(COMM_LOSS_HALT, pkt.seq)]

        self.skipped_total += gap - 1
        self.last_seq = pkt.seq

        lim = self.limits
        applied = []
        clipped = False
        for arm, cmd in zip(self.arms, pkt.arms):
            if _norm(cmd.dpos) > lim.delta_estop_um or _norm(cmd.drot) > lim.rot_estop_urad:
                return self._trip_estop(pkt.seq)
            dpos, c1 = _clamp_vec(cmd.dpos, lim.delta_clip_um)
            drot, c2 = _clamp_vec(cmd.drot, lim.rot_clip_urad)
            new_pos = (arm.pos[0] + dpos[0], arm.pos[1] + dpos[1], arm.pos[2] + dpos[2])
            for axis in range(3):
                if not lim.workspace_min_um[axis] <= new_pos[axis] <= lim.workspace_max_um[axis]:
                    return self._trip_estop(pkt.seq)
            new_rot = (arm.rot[0] + drot[0], arm.rot[1] + drot[1], arm.rot[2] + drot[2])
            new_grasp = min(GRASP_MAX_MDEG, max(GRASP_MIN_MDEG, arm.grasp_mdeg + cmd.grasp_delta))
            applied.append((new_pos, new_rot, new_grasp))
            clipped = clipped or c1 or c2

        for arm, (new_pos, new_rot, new_grasp) in zip(self.arms, applied):
            arm.pos, arm.rot, arm.grasp_mdeg = new_pos, new_rot, new_grasp
        return [RobotEvent(APPLIED, pkt.seq, clipped=clipped)]

    def _trip_estop(self, seq: int) -> list[RobotEvent]:
        self.mode = SOFT_ESTOP
        self.estop_count += 1
        self._halt_seen_max = self.last_seq
        return [RobotEvent(ESTOP, seq)]

    # -- feedback path -----------------------------------------------------

    def emit_feedback(self) -> FeedbackPacket:
        self.feedback_seq += 1
        return FeedbackPacket(
            seq=self.feedback_seq,
            timestamp_us=self.clock_us,
            arms=(
                ArmPose(pos=self.arms[0].pos, rot=self.arms[0].rot,
                        grasp_angle=self.arms[0].grasp_mdeg),
                ArmPose(pos=self.arms[1].pos, rot=self.arms[1].rot,
                        grasp_angle=self.arms[1].grasp_mdeg),
            ),
            status=self.mode,
            skipped_total=self.skipped_total,
        )

    # -- reset / clock -----------------------------------------------------

    def reset_estop(self) -> None:
        """Begin a reset; the robot returns to RUNNING after the reset latency."""
        if self.mode == RUNNING:
            raise NotHalted("robot is not halted")
        if self._reset_done_us is None:
            self._reset_done_us = self.clock_us + int(self.limits.reset_latency_s * 1e6)

    @property
    def reset_pending(self) -> bool:
        return self._reset_done_us is not None

    def advance_to(self, t_us: int) -> None:
        """Move the robot clock forward, completing a pending reset if due."""
        self.clock_us = t_us
        if self._reset_done_us is not None and t_us >= self._reset_done_us:
            self._reset_done_us = None
            if self.mode != RUNNING:
                self.mode = RUNNING
                # Re-sync to the newest sequence number seen during the halt.
                self.last_seq = max(self.last_seq, self._halt_seen_max)
