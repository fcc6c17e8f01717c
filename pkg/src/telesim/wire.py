"""Binary codec for the control link.

Fixed little-endian layouts with CRC-32 framing for command and feedback
packets, plus the envelope framing used by the authenticated transport.
All wire quantities are fixed-point integers (micrometers, microradians,
millidegrees); there is no floating point on the wire.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

MAGIC = b"RT"
ENVELOPE_MAGIC = b"SE"
VERSION = 1

TYPE_COMMAND = 0x01
TYPE_FEEDBACK = 0x02
TYPE_ENVELOPE = 0x03

COMMAND_SIZE = 76
FEEDBACK_SIZE = 80
NONCE_SIZE = 12
TAG_SIZE = 16
ENVELOPE_OVERHEAD = 4 + NONCE_SIZE + 2 + TAG_SIZE  # header + nonce + ct length + tag

# Feedback status byte (mirrors the robot mode enum).
STATUS_RUNNING = 0
STATUS_SOFT_ESTOP = 1
STATUS_COMM_LOSS = 2

FLAG_GRASP_CLOSE = 0x0001


class WireError(Exception):
    """Base class for codec failures."""


class MalformedPacket(WireError):
    """Wrong length, magic, version, type, or field domain."""


class ChecksumMismatch(WireError):
    """CRC-32 check failed: corruption or unchecksummed tampering."""


Vec3 = tuple[int, int, int]

_ZERO: Vec3 = (0, 0, 0)


@dataclass(frozen=True)
class ArmCommand:
    """Per-arm motion increment carried by one command packet."""

    dpos: Vec3 = _ZERO        # micrometers
    drot: Vec3 = _ZERO        # microradians
    grasp_delta: int = 0      # millidegrees
    flags: int = 0            # bit 0 = grasp-close intent


@dataclass(frozen=True)
class CommandPacket:
    seq: int
    timestamp_us: int = 0
    arms: tuple[ArmCommand, ArmCommand] = (ArmCommand(), ArmCommand())


@dataclass(frozen=True)
class ArmPose:
    """Per-arm absolute state reported by the robot."""

    pos: Vec3 = _ZERO         # micrometers
    rot: Vec3 = _ZERO         # microradians
    grasp_angle: int = 0      # millidegrees


@dataclass(frozen=True)
class FeedbackPacket:
    seq: int
    timestamp_us: int = 0
    arms: tuple[ArmPose, ArmPose] = (ArmPose(), ArmPose())
    status: int = STATUS_RUNNING
    skipped_total: int = 0


@dataclass(frozen=True)
class SecureEnvelope:
    """Sealed datagram: fixed header, 12-byte nonce, ciphertext, 16-byte tag.

    The nonce is a 4-byte sender id followed by an 8-byte monotone counter.
    """

    nonce: bytes
    ciphertext: bytes
    tag: bytes


# Command body: header (magic, version, type, seq, timestamp) + 2 arm records.
_CMD_BODY = struct.Struct("<2sBBIQ" + "3i3ihH" * 2)
# Feedback body: header + 2 pose records + status/pad/skipped_total.
_FB_BODY = struct.Struct("<2sBBIQ" + "3i3ih" * 2 + "B3xI")
_CRC = struct.Struct("<I")
_ENV_HEAD = struct.Struct("<2sBB12sH")

assert _CMD_BODY.size + _CRC.size == COMMAND_SIZE
assert _FB_BODY.size + _CRC.size == FEEDBACK_SIZE


def compute_checksum(data: bytes) -> int:
    """CRC-32 (reflected, init and final-xor all-ones) of ``data``."""
    return zlib.crc32(data) & 0xFFFFFFFF


def encode_command(p: CommandPacket) -> bytes:
    a0, a1 = p.arms
    body = _CMD_BODY.pack(
        MAGIC, VERSION, TYPE_COMMAND, p.seq, p.timestamp_us,
        *a0.dpos, *a0.drot, a0.grasp_delta, a0.flags,
        *a1.dpos, *a1.drot, a1.grasp_delta, a1.flags,
    )
    return body + _CRC.pack(compute_checksum(body))


def decode_command(data: bytes) -> CommandPacket:
    if len(data) != COMMAND_SIZE:
        raise MalformedPacket(f"command packet must be {COMMAND_SIZE} bytes, got {len(data)}")
    body, (crc,) = data[:-4], _CRC.unpack(data[-4:])
    fields = _CMD_BODY.unpack(body)
    if fields[0] != MAGIC or fields[1] != VERSION or fields[2] != TYPE_COMMAND:
        raise MalformedPacket("bad magic/version/type")
    if crc != compute_checksum(body):
        raise ChecksumMismatch("command CRC mismatch")
    f = fields[3:]
    return CommandPacket(
        seq=f[0],
        timestamp_us=f[1],
        arms=(
            ArmCommand(dpos=(f[2], f[3], f[4]), drot=(f[5], f[6], f[7]),
                       grasp_delta=f[8], flags=f[9]),
            ArmCommand(dpos=(f[10], f[11], f[12]), drot=(f[13], f[14], f[15]),
                       grasp_delta=f[16], flags=f[17]),
        ),
    )


def encode_feedback(p: FeedbackPacket) -> bytes:
    a0, a1 = p.arms
    body = _FB_BODY.pack(
        MAGIC, VERSION, TYPE_FEEDBACK, p.seq, p.timestamp_us,
        *a0.pos, *a0.rot, a0.grasp_angle,
        *a1.pos, *a1.rot, a1.grasp_angle,
        p.status, p.skipped_total,
    )
    return body + _CRC.pack(compute_checksum(body))


def decode_feedback(data: bytes) -> FeedbackPacket:
    if len(data) != FEEDBACK_SIZE:
        raise MalformedPacket(f"feedback packet must be {FEEDBACK_SIZE} bytes, got {len(data)}")
    body, (crc,) = data[:-4], _CRC.unpack(data[-4:])
    fields = _FB_BODY.unpack(body)
    if fields[0] != MAGIC or fields[1] != VERSION or fields[2] != TYPE_FEEDBACK:
        raise MalformedPacket("bad magic/version/type")
    if crc != compute_checksum(body):
        raise ChecksumMismatch("feedback CRC mismatch")
    f = fields[3:]
    status = f[16]
    if status not in (STATUS_RUNNING, STATUS_SOFT_ESTOP, STATUS_COMM_LOSS):
        raise MalformedPacket(f"unknown status byte {status}")
    return FeedbackPacket(
        seq=f[0],
        timestamp_us=f[1],
        arms=(
            ArmPose(pos=(f[2], f[3], f[4]), rot=(f[5], f[6], f[7]), grasp_angle=f[8]),
            ArmPose(pos=(f[9], f[10], f[11]), rot=(f[12], f[13], f[14]), grasp_angle=f[15]),
        ),
        status=status,
        skipped_total=f[17],
    )


def encode_envelope(env: SecureEnvelope) -> bytes:
    if len(env.nonce) != NONCE_SIZE:
        raise MalformedPacket(f"nonce must be {NONCE_SIZE} bytes")
    if len(env.tag) != TAG_SIZE:
        raise MalformedPacket(f"tag must be {TAG_SIZE} bytes")
    if len(env.ciphertext) > 0xFFFF:
        raise MalformedPacket("ciphertext too long for 16-bit length field")
    head = _ENV_HEAD.pack(ENVELOPE_MAGIC, VERSION, TYPE_ENVELOPE, env.nonce,
                          len(env.ciphertext))
    return head + env.ciphertext + env.tag


def decode_envelope(data: bytes) -> SecureEnvelope:
    if len(data) < ENVELOPE_OVERHEAD:
        raise MalformedPacket("envelope too short")
    magic, version, ptype, nonce, ct_len = _ENV_HEAD.unpack(data[:_ENV_HEAD.size])
    if magic != ENVELOPE_MAGIC or version != VERSION or ptype != TYPE_ENVELOPE:
        raise MalformedPacket("bad envelope magic/version/type")
    if len(data) != ENVELOPE_OVERHEAD + ct_len:
        raise MalformedPacket("envelope length field mismatch")
    ct = data[_ENV_HEAD.size:_ENV_HEAD.size + ct_len]
    tag = data[-TAG_SIZE:]
    return SecureEnvelope(nonce=nonce, ciphertext=ct, tag=tag)


def is_envelope(data: bytes) -> bool:
    """Cheap peek used by receive paths to route raw vs sealed datagrams."""
    return len(data) >= 4 and data[:2] == ENVELOPE_MAGIC


def envelope_header_bytes(env: SecureEnvelope) -> bytes:
    """Header and nonce bytes covered (with the ciphertext) by the auth tag."""
    return bytes((0x53, 0x45, VERSION, TYPE_ENVELOPE)) + env.nonce
