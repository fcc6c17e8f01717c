"""Attacker-in-the-channel: traffic interception and packet injection.

Two attacker roles are modeled. A network intermediary sits on the path and
may reorder, drop, delay, or rewrite traffic in flight. A network observer
copies traffic and injects new packets alongside the legitimate stream
(sequence-leading takeover and repeated E-stop forcing). All randomness
comes from a caller-supplied seeded generator, so delivery schedules are
reproducible.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import wire
from .wire import ArmCommand, CommandPacket, Vec3

ROLE_NONE = "none"
ROLE_OBSERVER = "observer"
ROLE_INTERMEDIARY = "intermediary"

PER_PACKET = "per_packet"
GROUP = "group"

_I32_MIN, _I32_MAX = -(2**31), 2**31 - 1


def _sat32(x: float) -> int:
    return max(_I32_MIN, min(_I32_MAX, int(round(x))))


class ConfigError(ValueError):
    """Invalid attack or channel configuration."""


# --------------------------------------------------------------------------
# Delay models


@dataclass(frozen=True)
class ConstantDelay:
    delay_s: float

    def sample(self, rng: random.Random) -> float:
        return self.delay_s

    def mean(self) -> float:
        return self.delay_s

    def validate(self) -> None:
        if self.delay_s < 0:
            raise ConfigError("delay must be >= 0")


@dataclass(frozen=True)
class UniformDelay:
    lo_s: float
    hi_s: float

    def sample(self, rng: random.Random) -> float:
        return rng.uniform(self.lo_s, self.hi_s)

    def mean(self) -> float:
        return (self.lo_s + self.hi_s) / 2.0

    def validate(self) -> None:
        if self.lo_s < 0 or self.hi_s < self.lo_s:
            raise ConfigError("require 0 <= lo <= hi")


@dataclass(frozen=True)
class GaussianDelay:
    """Truncated normal delay; a stated range maps to mean +/- 3 sigma."""

    mean_s: float
    std_s: float
    lo_s: float = 0.0
    hi_s: float | None = None

    @classmethod
    def from_range(cls, lo_s: float, hi_s: float) -> "GaussianDelay":
        return cls(mean_s=(lo_s + hi_s) / 2.0, std_s=(hi_s - lo_s) / 6.0,
                   lo_s=lo_s, hi_s=hi_s)

    def sample(self, rng: random.Random) -> float:
        while True:
            x = rng.gauss(self.mean_s, self.std_s)
            if x >= self.lo_s and (self.hi_s is None or x <= self.hi_s):
                return x

    def mean(self) -> float:
        # Symmetric truncation (or negligible one-sided mass) keeps the mean.
        return self.mean_s

    def validate(self) -> None:
        if self.std_s <= 0 or self.lo_s < 0:
            raise ConfigError("require std > 0 and lo >= 0")
        if self.hi_s is not None and self.hi_s <= self.lo_s:
            raise ConfigError("require hi > lo")


DelayModel = ConstantDelay | UniformDelay | GaussianDelay


# --------------------------------------------------------------------------
# Content mutations


@dataclass(frozen=True)
class NegatePos:
    pass


@dataclass(frozen=True)
class NegateRot:
    pass


@dataclass(frozen=True)
class InvertGrasp:
    pass


@dataclass(frozen=True)
class SwapArms:
    pass


@dataclass(frozen=True)
class ScalePos:
    """Fixed factor, or a fresh uniform draw from [lo, hi] per packet."""

    factor: float | None = None
    lo: float = 0.5
    hi: float = 2.0


Mutation = NegatePos | NegateRot | InvertGrasp | SwapArms | ScalePos


def _neg(v: Vec3) -> Vec3:
    return (-v[0], -v[1], -v[2])


def mutate_command(pkt: CommandPacket, mutations: tuple[Mutation, ...],
                   rng: random.Random) -> CommandPacket:
    arms = list(pkt.arms)
    for m in mutations:
        if isinstance(m, NegatePos):
            arms = [ArmCommand(_neg(a.dpos), a.drot, a.grasp_delta, a.flags) for a in arms]
        elif isinstance(m, NegateRot):
            arms = [ArmCommand(a.dpos, _neg(a.drot), a.grasp_delta, a.flags) for a in arms]
        elif isinstance(m, InvertGrasp):
            arms = [ArmCommand(a.dpos, a.drot, -a.grasp_delta,
                               a.flags ^ wire.FLAG_GRASP_CLOSE) for a in arms]
        elif isinstance(m, SwapArms):
            arms = [arms[1], arms[0]]
        elif isinstance(m, ScalePos):
            s = m.factor if m.factor is not None else rng.uniform(m.lo, m.hi)
            arms = [ArmCommand(tuple(_sat32(s * c) for c in a.dpos),
                               a.drot, a.grasp_delta, a.flags) for a in arms]
    return CommandPacket(seq=pkt.seq, timestamp_us=pkt.timestamp_us,
                         arms=(arms[0], arms[1]))


# --------------------------------------------------------------------------
# Attack specs


@dataclass(frozen=True)
class Reorder:
    queue_len: int = 32

    def validate(self) -> None:
        if self.queue_len < 1:
            raise ConfigError("reorder queue length must be >= 1")


@dataclass(frozen=True)
class Drop:
    eta: float
    mode: str = PER_PACKET
    group_size: int = 100

    def validate(self) -> None:
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta must lie in [0, 1]")
        if self.mode not in (PER_PACKET, GROUP):
            raise ConfigError(f"unknown drop mode {self.mode!r}")
        if self.group_size < 1:
            raise ConfigError("group size must be >= 1")


@dataclass(frozen=True)
class Delay:
    model: DelayModel = ConstantDelay(0.3)

    def validate(self) -> None:
        self.model.validate()


@dataclass(frozen=True)
class Modify:
    mutations: tuple[Mutation, ...]

    def validate(self) -> None:
        if not self.mutations:
            raise ConfigError("modify attack needs at least one mutation")


@dataclass(frozen=True)
class Hijack:
    """Sequence-leading takeover; offset=None draws uniform [1, 999]."""

    offset: int | None = None
    dpos_um: Vec3 = (0, 0, 0)     # scripted payload applied every injected packet
    single_shot: bool = False

    def validate(self) -> None:
        if self.offset is not None and self.offset < 1:
            raise ConfigError("hijack offset must be >= 1")


@dataclass(frozen=True)
class ForceReset:
    period_s: float = 0.5
    delta_um: int = 50_000

    def validate(self) -> None:
        if self.period_s <= 0:
            raise ConfigError("force-reset period must be positive")
        if self.delta_um <= 0:
            raise ConfigError("force-reset delta must be positive")


@dataclass(frozen=True)
class FeedbackSpoof:
    pos_offset_um: Vec3 = (0, 0, 0)
    mask_status: bool = False

    def validate(self) -> None:
        if self.pos_offset_um == (0, 0, 0) and not self.mask_status:
            raise ConfigError("feedback spoof needs an offset or status mask")


AttackSpec = Reorder | Drop | Delay | Modify | Hijack | ForceReset | FeedbackSpoof

_INTERMEDIARY_ONLY = (Reorder, Drop, Delay, Modify, FeedbackSpoof)
_INJECTION = (Hijack, ForceReset)


@dataclass
class ChannelConfig:
    transport: str = "mem"                    # "mem" | "udp"
    attacker_role: str = ROLE_NONE
    attack: AttackSpec | None = None
    window_start_s: float = 0.0
    window_stop_s: float | None = None
    # UDP transport endpoints (loopback demo mode).
    host: str = "127.0.0.1"
    operator_port: int = 47801
    attacker_cmd_port: int = 47802
    attacker_fb_port: int = 47803
    robot_port: int = 47804

    def validate(self) -> None:
        if self.transport not in ("mem", "udp"):
            raise ConfigError(f"unknown transport {self.transport!r}")
        if self.attacker_role not in (ROLE_NONE, ROLE_OBSERVER, ROLE_INTERMEDIARY):
            raise ConfigError(f"unknown attacker role {self.attacker_role!r}")
        if self.window_start_s < 0:
            raise ConfigError("attack window start must be >= 0")
        if self.window_stop_s is not None and self.window_stop_s <= self.window_start_s:
            raise ConfigError("attack window must end after it starts")
        if self.attack is None:
            return
        self.attack.validate()
        if isinstance(self.attack, _INTERMEDIARY_ONLY) and self.attacker_role != ROLE_INTERMEDIARY:
            raise ConfigError("traffic-rewriting attacks require the intermediary role")
        if isinstance(self.attack, _INJECTION) and self.attacker_role == ROLE_NONE:
            raise ConfigError("injection attacks require observer or intermediary role")

    def window_active(self, now_s: float) -> bool:
        if self.attack is None:
            return False
        if now_s < self.window_start_s:
            return False
        return self.window_stop_s is None or now_s < self.window_stop_s


# --------------------------------------------------------------------------
# Stateful interception (intermediary role)


class Interceptor:
    """Applies one intermediary attack to a datagram stream.

    intercept() returns zero or more (deliver_at_us, payload) entries;
    Reorder holds packets in its queue until it fills, so callers must
    flush() when the attack window closes or the stream ends.
    """

    def __init__(self, attack: AttackSpec | None, rng: random.Random):
        self.attack = attack
        self.rng = rng
        self.dropped = 0
        self._queue: list[bytes] = []
        self._group_left = 0
        self._group_drop = False

    @property
    def pending(self) -> int:
        return len(self._queue)

    def intercept_command(self, data: bytes, now_us: int) -> list[tuple[int, bytes]]:
        a = self.attack
        if a is None:
            return [(now_us, data)]
        if isinstance(a, Reorder):
            self._queue.append(data)
            if len(self._queue) >= a.queue_len:
                pick = self.rng.randrange(len(self._queue))
                return [(now_us, self._queue.pop(pick))]
            return []
        if isinstance(a, Drop):
            if a.mode == PER_PACKET:
                if self.rng.random() < a.eta:
                    self.dropped += 1
                    return []
                return [(now_us, data)]
            if self._group_left == 0:
                self._group_left = a.group_size
                self._group_drop = self.rng.random() < a.eta
            self._group_left -= 1
            if self._group_drop:
                self.dropped += 1
                return []
            return [(now_us, data)]
        if isinstance(a, Delay):
            return [(now_us + int(a.model.sample(self.rng) * 1e6), data)]
        if isinstance(a, Modify):
            return [(now_us, self._rewrite_command(data))]
        # Injection attacks and feedback-only attacks forward commands untouched.
        return [(now_us, data)]

    def intercept_feedback(self, data: bytes, now_us: int) -> list[tuple[int, bytes]]:
        a = self.attack
        if isinstance(a, Delay):
            return [(now_us + int(a.model.sample(self.rng) * 1e6), data)]
        if isinstance(a, FeedbackSpoof):
            return [(now_us, self._rewrite_feedback(data, a))]
        return [(now_us, data)]

    def flush(self, now_us: int) -> list[tuple[int, bytes]]:
        out = [(now_us, d) for d in self._queue]
        self._queue.clear()
        return out

    def _rewrite_command(self, data: bytes) -> bytes:
        try:
            pkt = wire.decode_command(data)
        except wire.WireError:
            return self._flip_bit(data)  # sealed or opaque: blind corruption
        mutated = mutate_command(pkt, self.attack.mutations, self.rng)
        return wire.encode_command(mutated)

    def _rewrite_feedback(self, data: bytes, spoof: FeedbackSpoof) -> bytes:
        try:
            pkt = wire.decode_feedback(data)
        except wire.WireError:
            return self._flip_bit(data)
        off = spoof.pos_offset_um
        arms = tuple(
            wire.ArmPose(pos=(a.pos[0] + off[0], a.pos[1] + off[1], a.pos[2] + off[2]),
                         rot=a.rot, grasp_angle=a.grasp_angle)
            for a in pkt.arms
        )
        status = wire.STATUS_RUNNING if spoof.mask_status else pkt.status
        return wire.encode_feedback(wire.FeedbackPacket(
            seq=pkt.seq, timestamp_us=pkt.timestamp_us, arms=arms,
            status=status, skipped_total=pkt.skipped_total))

    def _flip_bit(self, data: bytes) -> bytes:
        out = bytearray(data)
        bit = self.rng.randrange(len(out) * 8)
        out[bit // 8] ^= 1 << (bit % 8)
        return bytes(out)


# --------------------------------------------------------------------------
# Injection drivers (observer role)


def inject_hijack(observed_seq: int, offset: int, dpos_um: Vec3 = (0, 0, 0),
                  timestamp_us: int = 0) -> CommandPacket:
    """Craft one leading packet from a captured sequence number."""
    arm = ArmCommand(dpos=dpos_um)
    return CommandPacket(seq=observed_seq + offset, timestamp_us=timestamp_us,
                         arms=(arm, ArmCommand()))


class HijackDriver:
    """Takes over after one observed packet and keeps leading at full rate."""

    def __init__(self, spec: Hijack, rng: random.Random):
        self.spec = spec
        self.offset = spec.offset if spec.offset is not None else rng.randint(1, 999)
        self.observed_seq: int | None = None
        self.injected_seq: int | None = None
        self.fired = False

    def observe(self, data: bytes) -> None:
        try:
            self.observed_seq = wire.decode_command(data).seq
        except wire.WireError:
            # Sealed traffic: recon fails, fall back to counting datagrams.
            self.observed_seq = (self.observed_seq or 0) + 1

    def tick(self, now_us: int) -> list[CommandPacket]:
        if self.observed_seq is None:
            return []
        if self.spec.single_shot and self.fired:
            return []
        if self.injected_seq is None:
            self.injected_seq = self.observed_seq + self.offset
        else:
            self.injected_seq += 1
        self.fired = True
        return [CommandPacket(seq=self.injected_seq, timestamp_us=now_us,
                              arms=(ArmCommand(dpos=self.spec.dpos_um), ArmCommand()))]


class ForceResetDriver:
    """Periodically injects a leading over-limit packet to force E-stops."""

    def __init__(self, spec: ForceReset, rng: random.Random):
        self.spec = spec
        self.rng = rng
        self.observed_seq: int | None = None
        self.injected_seq = 0
        self._next_due_us: int | None = None

    def observe(self, data: bytes) -> None:
        try:
            self.observed_seq = wire.decode_command(data).seq
        except wire.WireError:
            self.observed_seq = (self.observed_seq or 0) + 1

    def tick(self, now_us: int) -> list[CommandPacket]:
        if self.observed_seq is None:
            return []
        if self._next_due_us is None:
            self._next_due_us = now_us
        if now_us < self._next_due_us:
            return []
        self._next_due_us += int(self.spec.period_s * 1e6)
        lead_base = max(self.observed_seq, self.injected_seq)
        self.injected_seq = lead_base + self.rng.randint(1, 999)
        pkt = CommandPacket(seq=self.injected_seq, timestamp_us=now_us,
                            arms=(ArmCommand(dpos=(self.spec.delta_um, 0, 0)),
                                  ArmCommand()))
        return [pkt]


def make_driver(attack: AttackSpec, rng: random.Random):
    if isinstance(attack, Hijack):
        return HijackDriver(attack, rng)
    if isinstance(attack, ForceReset):
        return ForceResetDriver(attack, rng)
    return None
