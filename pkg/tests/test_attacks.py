from __future__ import annotations

import math
import random
from collections import Counter

import pytest

from telesim import attacks as atk
from telesim import robot as rb
from telesim import wire
from telesim.wire import ArmCommand, CommandPacket


def enc(seq, dpos=(0, 0, 0), drot=(0, 0, 0), grasp=0, flags=0):
    return wire.encode_command(CommandPacket(
        seq=seq, arms=(ArmCommand(dpos=dpos, drot=drot, grasp_delta=grasp, flags=flags),
                       ArmCommand())))


def drain(interceptor, n, start_seq=1):
    out = []
    for i in range(n):
        out.extend(interceptor.intercept_command(enc(start_seq + i), now_us=i * 1000))
    return out


def test_reorder_k1_is_passthrough():
    it = atk.Interceptor(atk.Reorder(queue_len=1), random.Random(1))
    deliveries = drain(it, 100)
    assert len(deliveries) == 100
    assert [wire.decode_command(d).seq for _, d in deliveries] == list(range(1, 101))
    assert it.pending == 0


def test_reorder_conserves_multiset():
    it = atk.Interceptor(atk.Reorder(queue_len=32), random.Random(2))
    deliveries = drain(it, 500)
    deliveries.extend(it.flush(now_us=10**6))
    seqs = [wire.decode_command(d).seq for _, d in deliveries]
    assert Counter(seqs) == Counter(range(1, 501))
    assert seqs != sorted(seqs)  # it actually reordered something


def test_drop_eta_zero_delivers_everything():
    it = atk.Interceptor(atk.Drop(eta=0.0), random.Random(3))
    deliveries = drain(it, 200)
    assert len(deliveries) == 200
    assert it.dropped == 0


def test_drop_fraction_within_binomial_bound():
    n, eta = 10_000, 0.55
    it = atk.Interceptor(atk.Drop(eta=eta), random.Random(4))
    delivered = len(drain(it, n))
    expected = n * (1 - eta)
    sigma = math.sqrt(n * eta * (1 - eta))
    assert abs(delivered - expected) <= 3 * sigma
    assert it.dropped == n - delivered


def test_group_drop_acts_on_whole_groups():
    it = atk.Interceptor(atk.Drop(eta=0.5, mode=atk.GROUP, group_size=100), random.Random(5))
    outcomes = []
    for i in range(1000):
        outcomes.append(len(it.intercept_command(enc(i + 1), now_us=i)) == 1)
    for g in range(10):
        chunk = outcomes[g * 100:(g + 1) * 100]
        assert all(chunk) or not any(chunk)
    assert any(outcomes) and not all(outcomes)


def test_constant_delay_exact():
    it = atk.Interceptor(atk.Delay(atk.ConstantDelay(0.3)), random.Random(6))
    for i in range(50):
        now = i * 1000
        [(at, _)] = it.intercept_command(enc(i + 1), now_us=now)
        assert at == now + 300_000


def test_uniform_delay_mean_and_bounds():
    model = atk.UniformDelay(0.1, 0.5)
    rng = random.Random(7)
    samples = [model.sample(rng) for _ in range(10_000)]
    assert all(0.1 <= s <= 0.5 for s in samples)
    assert abs(sum(samples) / len(samples) - model.mean()) <= 0.05 * model.mean()


def test_gaussian_delay_truncated_to_range():
    model = atk.GaussianDelay.from_range(0.1, 0.25)
    rng = random.Random(8)
    samples = [model.sample(rng) for _ in range(10_000)]
    assert all(0.1 <= s <= 0.25 for s in samples)
    assert abs(sum(samples) / len(samples) - model.mean()) <= 0.05 * model.mean()


def test_delay_conserves_every_packet():
    it = atk.Interceptor(atk.Delay(atk.UniformDelay(0.0, 0.2)), random.Random(9))
    deliveries = drain(it, 300)
    assert len(deliveries) == 300


def test_negate_pos_mutation():
    it = atk.Interceptor(atk.Modify((atk.NegatePos(),)), random.Random(10))
    [(_, data)] = it.intercept_command(enc(7, dpos=(100, -200, 300)), now_us=0)
    pkt = wire.decode_command(data)  # checksum must have been recomputed
    assert pkt.arms[0].dpos == (-100, 200, -300)
    assert pkt.seq == 7


def test_invert_grasp_mutation():
    it = atk.Interceptor(atk.Modify((atk.InvertGrasp(),)), random.Random(11))
    [(_, data)] = it.intercept_command(enc(3, grasp=-500, flags=wire.FLAG_GRASP_CLOSE), now_us=0)
    pkt = wire.decode_command(data)
    assert pkt.arms[0].grasp_delta == 500
    assert pkt.arms[0].flags & wire.FLAG_GRASP_CLOSE == 0


def test_swap_arms_mutation():
    it = atk.Interceptor(atk.Modify((atk.SwapArms(),)), random.Random(12))
    [(_, data)] = it.intercept_command(enc(3, dpos=(5, 6, 7)), now_us=0)
    pkt = wire.decode_command(data)
    assert pkt.arms[0].dpos == (0, 0, 0)
    assert pkt.arms[1].dpos == (5, 6, 7)


def test_scale_pos_fixed_factor():
    it = atk.Interceptor(atk.Modify((atk.ScalePos(factor=2.5),)), random.Random(13))
    [(_, data)] = it.intercept_command(enc(3, dpos=(100, -3, 0)), now_us=0)
    pkt = wire.decode_command(data)
    assert pkt.arms[0].dpos == (250, -8, 0)


def test_scale_pos_random_range_seeded():
    out = []
    for _ in range(2):
        it = atk.Interceptor(atk.Modify((atk.ScalePos(lo=0.5, hi=2.0),)), random.Random(14))
        [(_, data)] = it.intercept_command(enc(3, dpos=(1000, 0, 0)), now_us=0)
        out.append(wire.decode_command(data).arms[0].dpos[0])
    assert out[0] == out[1]
    assert 500 <= out[0] <= 2000


def test_modify_on_sealed_bytes_flips_one_bit():
    it = atk.Interceptor(atk.Modify((atk.NegatePos(),)), random.Random(15))
    blob = bytes(range(100))
    [(_, data)] = it.intercept_command(blob, now_us=0)
    assert len(data) == len(blob)
    diff = sum((a ^ b).bit_count() for a, b in zip(data, blob))
    assert diff == 1


def test_feedback_spoof_offset_and_mask():
    spoof = atk.FeedbackSpoof(pos_offset_um=(10_000, 0, 0), mask_status=True)
    it = atk.Interceptor(spoof, random.Random(16))
    fb = wire.FeedbackPacket(seq=9, arms=(wire.ArmPose(pos=(1, 2, 3)), wire.ArmPose()),
                             status=wire.STATUS_SOFT_ESTOP)
    [(_, data)] = it.intercept_feedback(wire.encode_feedback(fb), now_us=0)
    out = wire.decode_feedback(data)
    assert out.arms[0].pos == (10_001, 2, 3)
    assert out.status == wire.STATUS_RUNNING
    # Command stream passes through untouched for a feedback-only attack.
    cmd = enc(1)
    assert it.intercept_command(cmd, now_us=0) == [(0, cmd)]


def test_inject_hijack_takes_over_robot():
    bot = rb.Robot()
    for seq in range(1, 5001):
        bot.handle_packet(CommandPacket(seq=seq))
    lead = atk.inject_hijack(observed_seq=5000, offset=250)
    assert lead.seq == 5250
    assert bot.handle_packet(lead)[0].kind == rb.APPLIED
    skips = sum(bot.handle_packet(CommandPacket(seq=s))[0].kind == rb.SKIPPED
                for s in range(5001, 5251))
    assert skips == 250
    assert bot.handle_packet(CommandPacket(seq=5251))[0].kind == rb.APPLIED


def test_inject_hijack_offset_at_gap_limit_fails():
    bot = rb.Robot()
    bot.handle_packet(CommandPacket(seq=100))
    lead = atk.inject_hijack(observed_seq=100, offset=999)
    assert [e.kind for e in bot.handle_packet(lead)] == [rb.APPLIED]
    bot2 = rb.Robot()
    bot2.handle_packet(CommandPacket(seq=100))
    events = bot2.handle_packet(atk.inject_hijack(observed_seq=100, offset=1000))
    assert [e.kind for e in events] == [rb.COMM_LOSS_HALT]


def test_hijack_driver_leads_at_full_rate():
    driver = atk.HijackDriver(atk.Hijack(offset=300), random.Random(17))
    assert driver.tick(0) == []  # no reconnaissance yet
    driver.observe(enc(4000))
    first = driver.tick(1000)[0]
    assert first.seq == 4300
    second = driver.tick(2000)[0]
    assert second.seq == 4301


def test_force_reset_driver_period_and_lead():
    driver = atk.ForceResetDriver(atk.ForceReset(period_s=0.5, delta_um=50_000), random.Random(18))
    driver.observe(enc(1000))
    out = []
    for tick in range(2001):  # two simulated seconds
        out.extend(driver.tick(tick * 1000))
    assert len(out) == 5  # t = 0, .5, 1, 1.5, 2
    seqs = [p.seq for p in out]
    assert all(b > a for a, b in zip(seqs, seqs[1:]))
    assert all(p.arms[0].dpos == (50_000, 0, 0) for p in out)
    assert all(1 <= seqs[0] - 1000 <= 999 for p in out[:1])


def test_seeded_determinism_of_schedules():
    def schedule(seed):
        it = atk.Interceptor(atk.Delay(atk.GaussianDelay.from_range(0.1, 0.25)),
                             random.Random(seed))
        return [at for at, _ in drain(it, 200)]
    assert schedule(42) == schedule(42)
    assert schedule(42) != schedule(43)


def test_channel_config_role_pairing():
    atk.ChannelConfig(attacker_role="intermediary", attack=atk.Drop(eta=0.5)).validate()
    atk.ChannelConfig(attacker_role="observer", attack=atk.Hijack(offset=5)).validate()
    with pytest.raises(atk.ConfigError):
        atk.ChannelConfig(attacker_role="observer", attack=atk.Drop(eta=0.5)).validate()
    with pytest.raises(atk.ConfigError):
        atk.ChannelConfig(attacker_role="none", attack=atk.Hijack()).validate()
    with pytest.raises(atk.ConfigError):
        atk.ChannelConfig(attacker_role="intermediary", attack=atk.Drop(eta=1.5)).validate()
    with pytest.raises(atk.ConfigError):
        atk.ChannelConfig(attacker_role="intermediary", attack=atk.Drop(eta=0.1),
                          window_start_s=5.0, window_stop_s=2.0).validate()


def test_window_gating():
    cfg = atk.ChannelConfig(attacker_role="intermediary", attack=atk.Drop(eta=1.0),
                            window_start_s=1.0, window_stop_s=2.0)
    assert not cfg.window_active(0.5)
    assert cfg.window_active(1.0)
    assert cfg.window_active(1.999)
    assert not cfg.window_active(2.0)
