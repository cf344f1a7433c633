import pytest

from rantelemetry.report import benchmark_processing, percentiles, report_accuracy, synthetic_ttis, throughput_errors
from rantelemetry.sim import SimConfig, UeSpec, run


def test_percentiles():
    p = percentiles(range(1, 102))
    assert p == {"p50": 51.0, "p75": 76.0, "p90": 91.0}
    assert percentiles([]) == {"p50": 0.0, "p75": 0.0, "p90": 0.0}
    assert percentiles([7]) == {"p50": 7.0, "p75": 7.0, "p90": 7.0}


def test_throughput_errors():
    truth = [
        {"kind": "dci", "dir": "dl", "is_retransmission": False, "tti": 5, "rnti": 1, "tbs": 1000},
        {"kind": "dci", "dir": "dl", "is_retransmission": True, "tti": 6, "rnti": 1, "tbs": 1000},
        {"kind": "dci", "dir": "ul", "is_retransmission": False, "tti": 7, "rnti": 1, "tbs": 9999},
        {"kind": "msg4", "tti": 0, "rnti": 1},
    ]
    # window of 10 TTIs lasting 5 ms; 1100 bits over 5 ms is 220 kbit/s
    assert throughput_errors([(9, 1, 220_000)], truth, 10, 0.005) == [pytest.approx(0.1)]
    # windows with no truth are skipped
    assert throughput_errors([(19, 1, 5)], truth, 10, 0.005) == []


def test_lossless_run_is_exact(tmp_path):
    res = run(SimConfig(seed=2, duration_tti=4000, ues=(UeSpec(0x4601), UeSpec(0x4602, dl_demand_bps=5e6))))
    res.write(tmp_path)
    rep = report_accuracy(tmp_path)
    d = rep.to_dict()
    assert d["miss_rate"] == {"dl": 0.0, "ul": 0.0}
    assert d["prb_error_mean"] == 0
    assert d["throughput_error"]["windows"] > 0
    assert d["throughput_error"]["p90"] == 0
    assert rep.decode_stats["rejected_crc"] == 0


def test_synthetic_ttis_fit_carrier():
    _, ttis = synthetic_ttis(50, 4, seed=1)
    assert all(len(t) == 4 for t in ttis)
    assert len({r.envelope.payload for t in ttis for r in t}) > 1


def test_benchmark_smoke():
    out = benchmark_processing(200, (1, 4))
    assert set(out) == {1, 4}
    assert all(v["mean"] > 0 and v["ttis"] == 200 for v in out.values())
