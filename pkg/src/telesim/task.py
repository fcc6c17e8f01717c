"""Simplified FLS block-transfer task: pegboard world and scripted surgeon.

Three rubber blocks start on left-side pegs and must end on scripted
right-side pegs. A deterministic waypoint state machine stands in for the
human operator: it plans one command packet per tick from the latest robot
feedback, closing the grasp to pick, rolling the tool during the carry,
and opening above the destination peg. Block state follows simple
attach/drop/place rules driven by grasp-angle crossings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import robot as rb
from .wire import (FLAG_GRASP_CLOSE, ArmCommand, CommandPacket, FeedbackPacket,
                   STATUS_RUNNING, Vec3)

LEFT = "left"
RIGHT = "right"

# Grasp thresholds (millidegrees). The grip counts as closed at or below
# GRASP_CLOSED_MDEG; crossing it downward grabs, crossing upward releases.
GRASP_CLOSED_MDEG = 10_000
GRASP_CLOSE_TARGET_MDEG = 2_000
GRASP_OPEN_TARGET_MDEG = rb.GRASP_MAX_MDEG
GRASP_RATE_MDEG = 500        # per packet while opening/closing
GRASP_SQUEEZE_MDEG = 100     # per packet holding force during a carry

# Tool roll applied during the carry (microradians) and per-packet step.
CARRY_ROLL_URAD = 100_000
ROLL_STEP_URAD = 1_000
ROLL_TOLERANCE_URAD = 10_000

# Surgeon phases, in per-transfer order.
MOVE_ABOVE_PICK = "MoveAbovePick"
DESCEND = "Descend"
CLOSE = "Close"
LIFT = "Lift"
TRANSIT = "Transit"
DESCEND_PLACE = "DescendPlace"
OPEN = "Open"
RETREAT = "Retreat"
DONE = "Done"

PHASE_ORDER = (MOVE_ABOVE_PICK, DESCEND, CLOSE, LIFT, TRANSIT,
               DESCEND_PLACE, OPEN, RETREAT)

# Task events.
BLOCK_ATTACHED = "block_attached"
BLOCK_DROPPED = "block_dropped"
BLOCK_PLACED = "block_placed"


@dataclass(frozen=True)
class OnPeg:
    side: str
    index: int


@dataclass(frozen=True)
class Held:
    arm: int


@dataclass(frozen=True)
class Dropped:
    x_um: int
    y_um: int


@dataclass(frozen=True)
class TaskEvent:
    kind: str
    block: int
    arm: int
    t_us: int


def peg_position(side: str, index: int) -> Vec3:
    """Peg centers: 2x3 grids, 30 mm spacing, board plane z=0.

    Left board columns at x = -60/-30 mm, right board mirrored at +30/+60 mm;
    rows at y = -30/0/+30 mm. Index runs 1..6 row-major.
    """
    if not 1 <= index <= 6:
        raise ValueError(f"peg index {index} out of range 1..6")
    col = (index - 1) % 2
    row = (index - 1) // 2
    y = -30_000 + row * 30_000
    if side == LEFT:
        x = -60_000 + col * 30_000
    elif side == RIGHT:
        x = 60_000 - col * 30_000
    else:
        raise ValueError(f"unknown side {side!r}")
    return (x, y, 0)


@dataclass(frozen=True)
class Transfer:
    source: int   # left peg index
    dest: int     # right peg index
    arm: int      # 0 = left arm, 1 = right arm


@dataclass
class TaskScript:
    transfers: tuple[Transfer, ...] = (
        Transfer(4, 2, 0), Transfer(5, 3, 0), Transfer(6, 6, 1),
    )
    capture_radius_um: int = 3_000
    lift_height_um: int = 20_000
    nominal_step_um: int = 200

    def validate(self, limits: rb.SafetyLimits | None = None) -> None:
        if not self.transfers:
            raise ValueError("script needs at least one transfer")
        for t in self.transfers:
            peg_position(LEFT, t.source)
            peg_position(RIGHT, t.dest)
            if t.arm not in (0, 1):
                raise ValueError(f"arm must be 0 or 1, got {t.arm}")
        if self.capture_radius_um <= 0 or self.nominal_step_um <= 0:
            raise ValueError("capture radius and nominal step must be positive")
        if limits is not None and self.nominal_step_um >= limits.delta_clip_um:
            raise ValueError("nominal_step must stay below delta_clip")


@dataclass
class Pegboard:
    """Block locations keyed by block id; block i is transfer i's block."""

    blocks: dict[int, object] = field(default_factory=dict)

    @classmethod
    def for_script(cls, script: TaskScript) -> "Pegboard":
        return cls(blocks={i: OnPeg(LEFT, t.source) for i, t in enumerate(script.transfers)})

    def block_position(self, block: int, robot: rb.Robot) -> Vec3:
        loc = self.blocks[block]
        if isinstance(loc, OnPeg):
            return peg_position(loc.side, loc.index)
        if isinstance(loc, Held):
            return robot.arms[loc.arm].pos
        return (loc.x_um, loc.y_um, 0)


@dataclass
class TaskStatus:
    transfers_done: int
    complete: bool


def task_status(board: Pegboard, script: TaskScript) -> TaskStatus:
    done = sum(
        1 for i, t in enumerate(script.transfers)
        if board.blocks.get(i) == OnPeg(RIGHT, t.dest)
    )
    return TaskStatus(transfers_done=done, complete=done == len(script.transfers))


def _dist(a: Vec3, b: Vec3) -> float:
    return math.dist(a, b)


class World:
    """Applies the attach/drop/place rules after each robot step."""

    def __init__(self, board: Pegboard, script: TaskScript):
        self.board = board
        self.script = script
        self.block_drops = 0
        self._prev_grasp = [rb.GRASP_MAX_MDEG, rb.GRASP_MAX_MDEG]

    def step(self, robot: rb.Robot, t_us: int) -> list[TaskEvent]:
        events: list[TaskEvent] = []
        eps = self.script.capture_radius_um
        for arm_idx, arm in enumerate(robot.arms):
            prev = self._prev_grasp[arm_idx]
            cur = arm.grasp_mdeg
            closed_now = cur <= GRASP_CLOSED_MDEG
            closed_before = prev <= GRASP_CLOSED_MDEG
            if closed_now and not closed_before and arm.holding is None:
                # Grasp closed this tick: attach the nearest free block in reach.
                best = None
                for block, loc in self.board.blocks.items():
                    if not isinstance(loc, (OnPeg, Dropped)):
                        continue
                    d = _dist(arm.pos, self.board.block_position(block, robot))
                    if d <= eps and (best is None or d < best[1]):
                        best = (block, d)
                if best is not None:
                    block = best[0]
                    self.board.blocks[block] = Held(arm_idx)
                    arm.holding = block
                    events.append(TaskEvent(BLOCK_ATTACHED, block, arm_idx, t_us))
            elif closed_before and not closed_now and arm.holding is not None:
                # Grasp opened this tick: place on a peg in reach, else drop.
                block = arm.holding
                arm.holding = None
                placed = None
                for side in (LEFT, RIGHT):
                    for index in range(1, 7):
                        if _dist(arm.pos, peg_position(side, index)) <= eps:
                            placed = OnPeg(side, index)
                            break
                    if placed:
                        break
                if placed is not None:
                    self.board.blocks[block] = placed
                    events.append(TaskEvent(BLOCK_PLACED, block, arm_idx, t_us))
                else:
                    self.board.blocks[block] = Dropped(arm.pos[0], arm.pos[1])
                    self.block_drops += 1
                    events.append(TaskEvent(BLOCK_DROPPED, block, arm_idx, t_us))
            self._prev_grasp[arm_idx] = cur
        return events


@dataclass
class _Waypoint:
    pos: Vec3
    roll_urad: int  # target x-axis rotation


class Surgeon:
    """Deterministic closed-loop operator: one command packet per tick.

    Commands a capped step toward the current waypoint based on the latest
    fed-back pose; advances phases when the fed-back pose is within the
    capture radius (and roll tolerance) of the waypoint. Waits with
    zero-delta packets whenever the robot reports a halt.
    """

    def __init__(self, script: TaskScript):
        self.script = script
        self.phase = MOVE_ABOVE_PICK
        self.transfer_idx = 0
        self.seq = 0
        self.last_feedback: FeedbackPacket | None = None
        self.phase_log: list[tuple[int, int, str]] = []  # (t_us, transfer, phase)

    @property
    def done(self) -> bool:
        return self.phase == DONE

    def _waypoint(self) -> _Waypoint:
        t = self.script.transfers[self.transfer_idx]
        src = peg_position(LEFT, t.source)
        dst = peg_position(RIGHT, t.dest)
        lift = self.script.lift_height_um
        table = {
            MOVE_ABOVE_PICK: _Waypoint((src[0], src[1], lift), 0),
            DESCEND: _Waypoint(src, 0),
            CLOSE: _Waypoint(src, 0),
            LIFT: _Waypoint((src[0], src[1], lift), CARRY_ROLL_URAD),
            TRANSIT: _Waypoint((dst[0], dst[1], lift), CARRY_ROLL_URAD),
            DESCEND_PLACE: _Waypoint(dst, 0),
            OPEN: _Waypoint(dst, 0),
            RETREAT: _Waypoint((dst[0], dst[1], lift), 0),
        }
        return table[self.phase]

    def _advance_phase(self, t_us: int) -> None:
        idx = PHASE_ORDER.index(self.phase)
        if idx + 1 < len(PHASE_ORDER):
            self.phase = PHASE_ORDER[idx + 1]
        elif self.transfer_idx + 1 < len(self.script.transfers):
            self.transfer_idx += 1
            self.phase = MOVE_ABOVE_PICK
        else:
            self.phase = DONE
        self.phase_log.append((t_us, self.transfer_idx, self.phase))

    def plan_command(self, feedback: FeedbackPacket | None, t_us: int) -> CommandPacket:
        if feedback is not None:
            if self.last_feedback is None or feedback.seq >= self.last_feedback.seq:
                self.last_feedback = feedback
        self.seq += 1
        fb = self.last_feedback

        idle = (ArmCommand(), ArmCommand())
        if self.done or fb is None:
            return CommandPacket(seq=self.seq, timestamp_us=t_us, arms=idle)
        if fb.status != STATUS_RUNNING:
            # Operator waits out the halt; packets keep flowing.
            return CommandPacket(seq=self.seq, timestamp_us=t_us, arms=idle)

        arm_idx = self.script.transfers[self.transfer_idx].arm
        pose = fb.arms[arm_idx]
        wp = self._waypoint()

        # Translation: capped proportional step, exact remainder when close.
        delta = (wp.pos[0] - pose.pos[0], wp.pos[1] - pose.pos[1], wp.pos[2] - pose.pos[2])
        dist = math.hypot(*delta)
        step = self.script.nominal_step_um
        if dist > step:
            scale = step / dist
            dpos = (int(delta[0] * scale), int(delta[1] * scale), int(delta[2] * scale))
        else:
            dpos = delta

        # Tool roll toward the phase target, capped per packet.
        roll_err = wp.roll_urad - pose.rot[0]
        droll = max(-ROLL_STEP_URAD, min(ROLL_STEP_URAD, roll_err))
        drot = (droll, 0, 0)

        # Grasp handling per phase.
        grasp_delta = 0
        flags = 0
        if self.phase == CLOSE:
            grasp_delta = -GRASP_RATE_MDEG
            flags = FLAG_GRASP_CLOSE
        elif self.phase in (LIFT, TRANSIT, DESCEND_PLACE):
            grasp_delta = -GRASP_SQUEEZE_MDEG
            flags = FLAG_GRASP_CLOSE
        elif self.phase == OPEN:
            grasp_delta = GRASP_RATE_MDEG

        # Phase advancement from fed-back state.
        if self.phase == CLOSE:
            if pose.grasp_angle <= GRASP_CLOSE_TARGET_MDEG:
                self._advance_phase(t_us)
        elif self.phase == OPEN:
            if pose.grasp_angle >= GRASP_OPEN_TARGET_MDEG:
                self._advance_phase(t_us)
        elif dist <= self.script.capture_radius_um and abs(roll_err) <= ROLL_TOLERANCE_URAD:
            self._advance_phase(t_us)

        arms = [ArmCommand(), ArmCommand()]
        arms[arm_idx] = ArmCommand(dpos=dpos, drot=drot, grasp_delta=grasp_delta, flags=flags)
        return CommandPacket(seq=self.seq, timestamp_us=t_us, arms=tuple(arms))
