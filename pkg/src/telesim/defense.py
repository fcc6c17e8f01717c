"""Mitigation stack for the control link.

Four independent mitigations, insertable at either endpoint: authenticated
(optionally encrypted) packet sealing under a pre-shared 256-bit session
key, a hardened sequence gate with a bounded acceptance window, a token
bucket limiting the processing rate, and a link monitor that flags dual
sequence-number streams and out-of-order bursts. Tag-verification failures
drop the packet silently (and count it); halting on them would just hand
an attacker a new denial-of-service lever.
"""

from __future__ import annotations

import hmac
import hashlib
from collections import deque
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import wire
from .wire import SecureEnvelope

AUTH_NONE = "none"
AUTH_MAC = "mac"     # plaintext body, 16-byte keyed tag
AUTH_AEAD = "aead"   # AES-GCM, 128-bit tag

OPERATOR_SENDER = 1
ROBOT_SENDER = 2

_MAX_COUNTER = 2**64 - 1
_ENVELOPE_AAD_PREFIX = bytes((0x53, 0x45, wire.VERSION, wire.TYPE_ENVELOPE))

SEQ_ACCEPT = "accept"
SEQ_REPLAY = "replay"
SEQ_JUMP_TOO_LARGE = "jump_too_large"

ALARM_DUAL_STREAM = "dual_stream"
ALARM_OUT_OF_ORDER = "out_of_order"
ALARM_RATE = "rate"


class DefenseError(Exception):
    pass


class AuthFailure(DefenseError):
    """Tag did not verify: forgery or corruption. Drop and count."""


class ReplayedNonce(DefenseError):
    """Nonce counter at or below the last one seen from this sender."""


class NonceExhausted(DefenseError):
    """Nonce counter wrapped; the session must re-key."""


@dataclass
class MonitorConfig:
    ooo_threshold: int = 50   # out-of-order arrivals tolerated per 1 s window
    chain_min: int = 10       # packets per stream before a chain counts

    def validate(self) -> None:
        if self.ooo_threshold < 1 or self.chain_min < 1:
            raise ValueError("monitor thresholds must be >= 1")


@dataclass
class DefenseConfig:
    auth_mode: str = AUTH_NONE
    key: bytes = bytes(32)            # pre-shared, provisioned out of band
    key_bits: int = 256               # operational key length; bench compares all
    seq_window: int = 1000
    rate_limit: float = 1100.0        # packets per second
    harden_sequence: bool = False
    rate_limiting: bool = False
    monitoring: bool = False
    monitor: MonitorConfig = field(default_factory=MonitorConfig)

    @property
    def auth_on(self) -> bool:
        return self.auth_mode != AUTH_NONE

    def validate(self, limits=None) -> None:
        if self.auth_mode not in (AUTH_NONE, AUTH_MAC, AUTH_AEAD):
            raise ValueError(f"unknown auth mode {self.auth_mode!r}")
        if self.auth_on and len(self.key) != 32:
            raise ValueError("session key must be 256 bits")
        if self.key_bits not in (128, 192, 256):
            raise ValueError("key_bits must be one of 128/192/256")
        if self.seq_window < 1:
            raise ValueError("seq_window must be >= 1")
        if self.rate_limit <= 0:
            raise ValueError("rate_limit must be positive")
        self.monitor.validate()
        if limits is not None:
            if self.rate_limiting and self.rate_limit <= limits.tick_rate:
                raise ValueError("rate_limit must exceed the nominal packet rate")
            if self.seq_window > limits.gap_limit:
                raise ValueError("seq_window must not exceed the robot gap limit")

    def session_key(self) -> bytes:
        return self.key[: self.key_bits // 8]


class Sealer:
    """Seals packets from one sender under one session key."""

    def __init__(self, key: bytes, sender_id: int, mode: str = AUTH_AEAD):
        if mode not in (AUTH_MAC, AUTH_AEAD):
            raise ValueError("sealer requires mac or aead mode")
        self.mode = mode
        self.key = key
        self.sender_id = sender_id
        self.counter = 0
        self._aead = AESGCM(key) if mode == AUTH_AEAD else None

    def seal(self, plaintext: bytes) -> SecureEnvelope:
        if self.counter > _MAX_COUNTER:
            raise NonceExhausted("nonce counter wrapped; re-key required")
        nonce = self.sender_id.to_bytes(4, "big") + self.counter.to_bytes(8, "big")
        self.counter += 1
        aad = _ENVELOPE_AAD_PREFIX + nonce
        if self.mode == AUTH_AEAD:
            blob = self._aead.encrypt(nonce, plaintext, aad)
            return SecureEnvelope(nonce=nonce, ciphertext=blob[:-16], tag=blob[-16:])
        tag = hmac.new(self.key, aad + plaintext, hashlib.sha256).digest()[:16]
        return SecureEnvelope(nonce=nonce, ciphertext=plaintext, tag=tag)


class Opener:
    """Verifies envelopes and rejects per-sender nonce replays."""

    def __init__(self, key: bytes, mode: str = AUTH_AEAD):
        if mode not in (AUTH_MAC, AUTH_AEAD):
            raise ValueError("opener requires mac or aead mode")
        self.mode = mode
        self.key = key
        self._aead = AESGCM(key) if mode == AUTH_AEAD else None
        self._last_counter: dict[bytes, int] = {}

    def open(self, env: SecureEnvelope) -> bytes:
        aad = _ENVELOPE_AAD_PREFIX + env.nonce
        if self.mode == AUTH_AEAD:
            try:
                plaintext = self._aead.decrypt(env.nonce, env.ciphertext + env.tag, aad)
            except InvalidTag:
                raise AuthFailure("envelope tag failed to verify") from None
        else:
            expected = hmac.new(self.key, aad + env.ciphertext, hashlib.sha256).digest()[:16]
            if not hmac.compare_digest(expected, env.tag):
                raise AuthFailure("envelope tag failed to verify")
            plaintext = env.ciphertext
        sender, counter = env.nonce[:4], int.from_bytes(env.nonce[4:], "big")
        last = self._last_counter.get(sender)
        if last is not None and counter <= last:
            raise ReplayedNonce(f"nonce counter {counter} <= {last}")
        self._last_counter[sender] = counter
        return plaintext


class SequenceGate:
    """Hardened sequence check: strictly increasing, jumps bounded by W."""

    def __init__(self, window: int):
        self.window = window
        self.last_accepted = 0

    def check(self, seq: int) -> str:
        if seq <= self.last_accepted:
            return SEQ_REPLAY
        if seq - self.last_accepted > self.window:
            return SEQ_JUMP_TOO_LARGE
        self.last_accepted = seq
        return SEQ_ACCEPT


@dataclass(frozen=True)
class Alarm:
    kind: str
    t_s: float
    detail: str = ""


class RateLimiter:
    """Token bucket: capacity R, refill R per second, one alarm per window."""

    def __init__(self, rate: float):
        self.rate = rate
        self.tokens = rate
        self._last_refill: float | None = None
        self._next_alarm_ok = float("-inf")
        self.alarms: list[Alarm] = []
        self.dropped = 0

    def allow(self, now_s: float) -> bool:
        if self._last_refill is None:
            self._last_refill = now_s
        elif now_s > self._last_refill:
            self.tokens = min(self.rate, self.tokens + (now_s - self._last_refill) * self.rate)
            self._last_refill = now_s
        if self.tokens >= 1.0:
            self.tokens -= 1.0
            return True
        self.dropped += 1
        if now_s >= self._next_alarm_ok:
            self.alarms.append(Alarm(ALARM_RATE, now_s, "processing rate exceeded"))
            self._next_alarm_ok = now_s + 1.0
        return False


class _Chain:
    __slots__ = ("tail", "times")

    def __init__(self, seq: int, now_s: float):
        self.tail = seq
        self.times: deque[float] = deque([now_s])


class Monitor:
    """Link/network status watcher over arriving sequence numbers.

    Arrivals are greedily assigned to the monotone chain whose tail is the
    largest value below the new sequence number within the gap window; two
    simultaneously active chains are the signature of an injected stream
    running alongside the legitimate one.
    """

    WINDOW_S = 1.0

    def __init__(self, cfg: MonitorConfig, gap_window: int = 1000):
        self.cfg = cfg
        self.gap_window = gap_window
        self.alarms: list[Alarm] = []
        self._chains: list[_Chain] = []
        self._max_seq_seen = 0
        self._ooo_times: deque[float] = deque()
        self._dual_active = False
        self._ooo_active = False

    def observe(self, seq: int, now_s: float) -> list[Alarm]:
        horizon = now_s - self.WINDOW_S
        for chain in self._chains:
            while chain.times and chain.times[0] <= horizon:
                chain.times.popleft()
        self._chains = [c for c in self._chains if c.times]
        while self._ooo_times and self._ooo_times[0] <= horizon:
            self._ooo_times.popleft()

        if seq <= self._max_seq_seen:
            self._ooo_times.append(now_s)
        else:
            self._max_seq_seen = seq

        best = None
        for chain in self._chains:
            if chain.tail < seq and seq - chain.tail <= self.gap_window:
                if best is None or chain.tail > best.tail:
                    best = chain
        if best is not None:
            best.tail = seq
            best.times.append(now_s)
        else:
            self._chains.append(_Chain(seq, now_s))

        new_alarms = []
        busy = sum(1 for c in self._chains if len(c.times) >= self.cfg.chain_min)
        if busy >= 2:
            if not self._dual_active:
                self._dual_active = True
                new_alarms.append(Alarm(ALARM_DUAL_STREAM, now_s,
                                        f"{busy} concurrent sequence streams"))
        else:
            self._dual_active = False

        if len(self._ooo_times) > self.cfg.ooo_threshold:
            if not self._ooo_active:
                self._ooo_active = True
                new_alarms.append(Alarm(ALARM_OUT_OF_ORDER, now_s,
                                        f"{len(self._ooo_times)} out-of-order arrivals in window"))
        else:
            self._ooo_active = False

        self.alarms.extend(new_alarms)
        return new_alarms
