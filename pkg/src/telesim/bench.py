"""Cryptographic overhead benchmark for the sealed transport.

Seals and opens representative command-sized packets under each supported
key length, reporting per-packet latency, sustained throughput, and the
process memory delta. The control loop needs 1000 packets per second per
direction, so the interesting question is whether seal+open stays well
under a millisecond; memory numbers are reported for reference only.
"""

from __future__ import annotations

import gc
import json
import time
from array import array
from dataclasses import asdict, dataclass, field
from statistics import median

import psutil

from . import defense as dfs
from . import wire

KEY_LENGTHS = (128, 192, 256)
PACKET_SIZE = wire.COMMAND_SIZE


@dataclass
class KeyBenchRow:
    key_bits: int
    seal_median_us: float
    open_median_us: float
    roundtrip_median_us: float
    roundtrip_p99_us: float
    throughput_pkts_per_s: float
    memory_delta_kb: float


@dataclass
class BenchReport:
    auth_mode: str
    packet_size: int
    count: int
    rows: list[KeyBenchRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def row(self, key_bits: int) -> KeyBenchRow:
        for r in self.rows:
            if r.key_bits == key_bits:
                return r
        raise KeyError(f"no bench row for {key_bits}-bit key")


def _p99(sorted_us: list[float]) -> float:
    idx = min(len(sorted_us) - 1, int(0.99 * len(sorted_us)))
    return sorted_us[idx]


def crypto_bench(cfg: dfs.DefenseConfig, count: int,
                 key_lengths: tuple[int, ...] = KEY_LENGTHS) -> BenchReport:
    """Benchmark seal+open cycles of 76-byte packets per key length."""
    if not cfg.auth_on:
        raise ValueError("crypto_bench requires auth_mode mac or aead")
    report = BenchReport(auth_mode=cfg.auth_mode, packet_size=PACKET_SIZE, count=count)
    if count == 0:
        return report

    payload = wire.encode_command(wire.CommandPacket(
        seq=123456, timestamp_us=789,
        arms=(wire.ArmCommand(dpos=(120, -80, 40), drot=(5, 0, -5), grasp_delta=-100,
                              flags=1), wire.ArmCommand())))
    proc = psutil.Process()

    for bits in key_lengths:
        key = cfg.key[: bits // 8]
        seal_ns = array("q", bytes(8 * count))
        open_ns = array("q", bytes(8 * count))
        gc.collect()
        rss_before = proc.memory_info().rss

        sealer = dfs.Sealer(key, dfs.OPERATOR_SENDER, cfg.auth_mode)
        opener = dfs.Opener(key, cfg.auth_mode)
        clock = time.perf_counter_ns
        for i in range(count):
            t0 = clock()
            env = sealer.seal(payload)
            t1 = clock()
            out = opener.open(env)
            t2 = clock()
            seal_ns[i] = t1 - t0
            open_ns[i] = t2 - t1
        if out != payload:
            raise RuntimeError("bench roundtrip corrupted the payload")

        gc.collect()
        rss_after = proc.memory_info().rss
        seal_us = sorted(v / 1000.0 for v in seal_ns)
        open_us = sorted(v / 1000.0 for v in open_ns)
        round_us = sorted(s + o for s, o in zip(seal_ns, open_ns))
        round_us = [v / 1000.0 for v in round_us]
        total_s = (sum(seal_ns) + sum(open_ns)) / 1e9
        report.rows.append(KeyBenchRow(
            key_bits=bits,
            seal_median_us=median(seal_us),
            open_median_us=median(open_us),
            roundtrip_median_us=median(round_us),
            roundtrip_p99_us=_p99(round_us),
            throughput_pkts_per_s=count / total_s if total_s > 0 else float("inf"),
            memory_delta_kb=(rss_after - rss_before) / 1024.0,
        ))
    return report
