from __future__ import annotations

import pytest

from telesim import defense as dfs
from telesim.bench import crypto_bench


def cfg(mode=dfs.AUTH_AEAD):
    return dfs.DefenseConfig(auth_mode=mode, key=bytes(range(32)))


def test_zero_count_gives_empty_report():
    rep = crypto_bench(cfg(), 0)
    assert rep.rows == []
    assert rep.count == 0


def test_requires_auth_mode():
    with pytest.raises(ValueError):
        crypto_bench(dfs.DefenseConfig(), 100)


def test_reports_all_key_lengths():
    rep = crypto_bench(cfg(), 2_000)
    assert [r.key_bits for r in rep.rows] == [128, 192, 256]
    for row in rep.rows:
        assert row.roundtrip_median_us > 0
        assert row.roundtrip_p99_us >= row.roundtrip_median_us
        assert row.throughput_pkts_per_s > 1_000


def test_mac_mode_benches_too():
    rep = crypto_bench(cfg(dfs.AUTH_MAC), 1_000)
    assert rep.auth_mode == "mac"
    assert len(rep.rows) == 3


def test_report_serializes():
    rep = crypto_bench(cfg(), 500)
    d = rep.to_dict()
    assert d["packet_size"] == 76
    assert len(d["rows"]) == 3
    rep.to_json()
