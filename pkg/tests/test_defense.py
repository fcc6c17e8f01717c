from __future__ import annotations

import random

import pytest

from telesim import attacks as atk
from telesim import defense as dfs
from telesim import wire

KEY = bytes(range(32))


def seal_pair(mode=dfs.AUTH_AEAD):
    return (dfs.Sealer(KEY, dfs.OPERATOR_SENDER, mode), dfs.Opener(KEY, mode))


@pytest.mark.parametrize("mode", [dfs.AUTH_AEAD, dfs.AUTH_MAC])
def test_seal_open_roundtrip(mode):
    sealer, opener = seal_pair(mode)
    rng = random.Random(1)
    for _ in range(100):
        payload = rng.randbytes(76)
        env = sealer.seal(payload)
        assert opener.open(env) == payload


def test_distinct_nonces_and_ciphertexts():
    sealer, _ = seal_pair()
    payload = b"x" * 76
    e1, e2 = sealer.seal(payload), sealer.seal(payload)
    assert e1.nonce != e2.nonce
    assert e1.ciphertext != e2.ciphertext


def test_wrong_key_fails():
    sealer, _ = seal_pair()
    env = sealer.seal(b"payload")
    other = dfs.Opener(bytes(32), dfs.AUTH_AEAD)
    with pytest.raises(dfs.AuthFailure):
        other.open(env)


@pytest.mark.parametrize("mode", [dfs.AUTH_AEAD, dfs.AUTH_MAC])
def test_any_bit_flip_fails(mode):
    sealer, opener = seal_pair(mode)
    env = sealer.seal(b"q" * 40)
    raw = wire.encode_envelope(env)
    rng = random.Random(2)
    for _ in range(64):
        bit = rng.randrange(len(raw) * 8)
        mutated = bytearray(raw)
        mutated[bit // 8] ^= 1 << (bit % 8)
        try:
            tampered = wire.decode_envelope(bytes(mutated))
        except wire.MalformedPacket:
            continue
        with pytest.raises(dfs.AuthFailure):
            opener.open(tampered)


def test_replay_detected():
    sealer, opener = seal_pair()
    env = sealer.seal(b"cmd")
    assert opener.open(env) == b"cmd"
    with pytest.raises(dfs.ReplayedNonce):
        opener.open(env)


def test_replay_tracking_is_per_sender():
    s1 = dfs.Sealer(KEY, dfs.OPERATOR_SENDER)
    s2 = dfs.Sealer(KEY, dfs.ROBOT_SENDER)
    opener = dfs.Opener(KEY)
    opener.open(s1.seal(b"a"))
    opener.open(s2.seal(b"b"))  # same counter value, different sender id


def test_nonce_exhaustion():
    sealer, _ = seal_pair()
    sealer.counter = 2**64
    with pytest.raises(dfs.NonceExhausted):
        sealer.seal(b"x")


def test_modify_attack_on_sealed_traffic_never_verifies():
    sealer, opener = seal_pair()
    interceptor = atk.Interceptor(atk.Modify((atk.NegatePos(),)), random.Random(3))
    accepted = 0
    failures = 0
    for seq in range(1, 201):
        pkt = wire.CommandPacket(seq=seq)
        sealed = wire.encode_envelope(sealer.seal(wire.encode_command(pkt)))
        [(_, tampered)] = interceptor.intercept_command(sealed, now_us=seq * 1000)
        try:
            opener.open(wire.decode_envelope(tampered))
            accepted += 1
        except (dfs.AuthFailure, wire.MalformedPacket):
            failures += 1
    assert accepted == 0
    assert failures == 200


def test_sequence_gate_boundaries():
    gate = dfs.SequenceGate(window=1000)
    gate.last_accepted = 100
    assert gate.check(101) == dfs.SEQ_ACCEPT
    assert gate.check(101) == dfs.SEQ_REPLAY
    assert gate.check(100) == dfs.SEQ_REPLAY
    gate.last_accepted = 100
    assert gate.check(1101) == dfs.SEQ_JUMP_TOO_LARGE
    assert gate.last_accepted == 100  # rejection never advances the gate
    assert gate.check(1100) == dfs.SEQ_ACCEPT


def test_rate_limiter_steady_rate_clean():
    rl = dfs.RateLimiter(rate=1100.0)
    for tick in range(5_000):  # 1000 packets/s for 5 s
        assert rl.allow(tick / 1000.0)
    assert rl.dropped == 0 and rl.alarms == []


def test_rate_limiter_burst_drops_and_alarms():
    rl = dfs.RateLimiter(rate=1100.0)
    allowed = sum(rl.allow(0.0) for _ in range(5_000))
    assert allowed == 1100
    assert rl.dropped == 3900
    assert len(rl.alarms) == 1
    assert rl.alarms[0].kind == dfs.ALARM_RATE


def test_rate_limiter_empty_stream_no_alarms():
    rl = dfs.RateLimiter(rate=1100.0)
    assert rl.alarms == []


def test_monitor_benign_loss_no_alarms():
    for seed in range(5):
        rng = random.Random(seed)
        mon = dfs.Monitor(dfs.MonitorConfig())
        seq = 0
        for tick in range(60_000):  # 60 s at 1 kHz with 5% loss
            seq += 1
            if rng.random() < 0.05:
                continue
            mon.observe(seq, tick / 1000.0)
        assert mon.alarms == []


def test_monitor_dual_stream_alarm_within_a_second():
    mon = dfs.Monitor(dfs.MonitorConfig())
    t = 0.0
    for seq in range(1, 2001):  # 2 s of benign traffic
        t = seq / 1000.0
        mon.observe(seq, t)
    assert mon.alarms == []
    onset = t
    op_seq, attacker_seq = 2000, 2250
    fired_at = None
    for i in range(2000):
        t += 0.0005
        op_seq += 1 if i % 2 == 0 else 0
        attacker_seq += 0 if i % 2 == 0 else 1
        seq = op_seq if i % 2 == 0 else attacker_seq
        for alarm in mon.observe(seq, t):
            if alarm.kind == dfs.ALARM_DUAL_STREAM and fired_at is None:
                fired_at = alarm.t_s
        if fired_at:
            break
    assert fired_at is not None and fired_at - onset <= 1.0


def test_monitor_out_of_order_alarm_under_reorder():
    rng = random.Random(4)
    interceptor = atk.Interceptor(atk.Reorder(queue_len=32), rng)
    mon = dfs.Monitor(dfs.MonitorConfig())
    fired = False
    for seq in range(1, 4001):  # 4 s of shuffled traffic
        now_us = seq * 1000
        for _, data in interceptor.intercept_command(
                wire.encode_command(wire.CommandPacket(seq=seq)), now_us):
            out = mon.observe(wire.decode_command(data).seq, now_us / 1e6)
            fired = fired or any(a.kind == dfs.ALARM_OUT_OF_ORDER for a in out)
    assert fired
    first = min(a.t_s for a in mon.alarms if a.kind == dfs.ALARM_OUT_OF_ORDER)
    assert first <= 2.0


def test_config_validation():
    from telesim.robot import SafetyLimits
    dfs.DefenseConfig().validate(SafetyLimits())
    with pytest.raises(ValueError):
        dfs.DefenseConfig(auth_mode="rot13").validate()
    with pytest.raises(ValueError):
        dfs.DefenseConfig(auth_mode=dfs.AUTH_AEAD, key=bytes(16)).validate()
    with pytest.raises(ValueError):
        dfs.DefenseConfig(key_bits=64).validate()
    with pytest.raises(ValueError):
        dfs.DefenseConfig(seq_window=2000).validate(SafetyLimits())
    with pytest.raises(ValueError):
        dfs.DefenseConfig(rate_limiting=True, rate_limit=900.0).validate(SafetyLimits())
