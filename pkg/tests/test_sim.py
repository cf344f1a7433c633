from collections import defaultdict

import pytest

from rantelemetry.dci import Dci, dci_to_grant
from rantelemetry.errors import InvalidConfig, MismatchedRuns
from rantelemetry.nr import DciFormat, Direction, McsTable
from rantelemetry.report import observe, report_accuracy, report_from_pipeline
from rantelemetry.rrc import parse_msg4
from rantelemetry.sim import (
    SimConfig,
    Simulator,
    UeSpec,
    load_mcs_trace,
    match_traces,
    read_ground_truth,
    read_trace,
    run,
    sim_cell,
)

UES = (UeSpec(0x4601, dl_demand_bps=20e6, ul_demand_bps=2e6), UeSpec(0x4602), UeSpec(0x4603, mcs_trace=((0, 5), (500, 22))))
BASE = SimConfig(seed=3, duration_tti=1500, ues=UES, retransmission_probability=0.1)


def dci_entries(result):
    return [e for e in result.ground_truth if e["kind"] == "dci"]


def observe_result(result):
    return observe(result.trace, sim_cell(result.config), result.docs.__getitem__, result.config.tdd_pattern,
                   end_tti=result.config.duration_tti)  # fmt: skip


@pytest.fixture(scope="module")
def base_run():
    return run(BASE)


class TestConfig:
    @pytest.mark.parametrize(
        "change",
        [
            {"retransmission_probability": 1.5},
            {"dci_loss_probability": -0.1},
            {"ul_dci_loss_probability": 2.0},
            {"tdd_pattern": "DDDDDDDSU"},
            {"tdd_pattern": "DDDDDDDSUX"},
            {"ues": (UeSpec(0x4601), UeSpec(0x4601))},
            {"ues": (UeSpec(0),)},
            {"ues": (UeSpec(0x4601, mcs_trace=((0, 28),)),)},
            {"subcarrier_spacing_khz": 45},
            {"carrier_bandwidth_prb": 0},
        ],
    )
    def test_invalid(self, change):
        with pytest.raises(InvalidConfig):
            Simulator(SimConfig(**change))

    def test_from_dict_unknown_key(self):
        with pytest.raises(InvalidConfig):
            SimConfig.from_dict({"seed": 1, "bogus": 2})

    def test_from_dict_round_trip(self):
        assert SimConfig.from_dict(BASE.to_dict()) == BASE

    def test_mcs_trace_csv(self, tmp_path):
        (tmp_path / "m.csv").write_text("tti,mcs\n100,9\n0,3\n")
        assert load_mcs_trace(tmp_path / "m.csv") == ((0, 3), (100, 9))
        cfg = SimConfig.from_dict({"ues": [{"rnti": "0x4601", "mcs_trace": "m.csv"}]}, base_dir=tmp_path)
        assert cfg.ues[0].mcs_trace == ((0, 3), (100, 9))
        (tmp_path / "e.csv").write_text("tti,mcs\n")
        with pytest.raises(InvalidConfig):
            load_mcs_trace(tmp_path / "e.csv")


class TestDeterminism:
    def test_same_seed(self, base_run):
        again = run(BASE)
        assert again.trace_text() == base_run.trace_text()
        assert again.ground_truth_text() == base_run.ground_truth_text()

    def test_other_seed(self, base_run):
        other = run(SimConfig(**{**vars(BASE), "seed": 4}))
        assert other.trace_text() != base_run.trace_text()

    def test_loss_does_not_move_truth(self, base_run):
        lossy = run(SimConfig(**{**vars(BASE), "dci_loss_probability": 0.3}))
        strip = lambda gt: [{k: v for k, v in e.items() if k != "observer_dropped"} for e in gt]  # noqa: E731
        assert strip(lossy.ground_truth) == strip(base_run.ground_truth)
        assert len(lossy.trace) < len(base_run.trace)

    def test_files_round_trip(self, base_run, tmp_path):
        paths = base_run.write(tmp_path)
        trace = read_trace(paths["trace"].read_text().splitlines())
        header, truth = read_ground_truth(paths["ground_truth"].read_text().splitlines())
        assert trace.records == base_run.trace
        assert truth == base_run.ground_truth
        assert trace.header["run_id"] == header["run_id"] == base_run.run_id
        assert (tmp_path / "msg4_ue.json").exists()


class TestInvariants:
    def test_prb_budget_and_slot_direction(self, base_run):
        used = defaultdict(int)
        for e in base_run.ground_truth:
            used[e["tti"]] += e["num_prb"]
            slot = BASE.tdd_pattern[e["tti"] % 10]
            assert slot != "S"
            assert e["dir"] == ("dl" if slot == "D" else "ul")
        assert max(used.values()) <= BASE.carrier_bandwidth_prb

    def test_no_overlap(self, base_run):
        by_tti = defaultdict(list)
        for e in base_run.ground_truth:
            by_tti[e["tti"]].append((e["start_prb"], e["start_prb"] + e["num_prb"]))
        for spans in by_tti.values():
            spans.sort()
            assert all(a[1] <= b[0] for a, b in zip(spans, spans[1:]))

    def test_ndi_toggles_on_new_blocks(self, base_run):
        last = {}
        for e in dci_entries(base_run):
            key = (e["rnti"], e["dir"], e["harq_id"])
            if key in last:
                assert (e["ndi"] != last[key]) == (not e["is_retransmission"])
            else:
                assert not e["is_retransmission"]
            last[key] = e["ndi"]

    def test_retransmission_repeats_grant(self, base_run):
        prev = {}
        for e in dci_entries(base_run):
            key = (e["rnti"], e["dir"], e["harq_id"])
            if e["is_retransmission"]:
                p = prev[key]
                assert (e["num_prb"], e["mcs"], e["tbs"], e["time_index"]) == (p["num_prb"], p["mcs"], p["tbs"], p["time_index"])
            prev[key] = e

    def test_truth_tbs_recomputes(self, base_run):
        cell = sim_cell(BASE)
        ue = parse_msg4(base_run.docs["msg4_ue.json"])
        for e in dci_entries(base_run):
            fmt = DciFormat(e["format"])
            dci = Dci(fmt, freq_riv=e["freq_riv"], time_index=e["time_index"], mcs=e["mcs"], harq_id=e["harq_id"])
            g = dci_to_grant(dci, cell, ue, e["rnti"])
            assert (g.tbs_bits, g.num_prb, g.start_prb) == (e["tbs"], e["num_prb"], e["start_prb"])

    def test_msg4_first(self, base_run):
        first = {}
        for e in base_run.ground_truth:
            first.setdefault(e["rnti"], e["kind"])
        assert set(first.values()) == {"msg4"}


class TestMatching:
    def test_zero_loss(self, base_run):
        pipe = observe_result(base_run)
        rep = report_from_pipeline(pipe, base_run.ground_truth)
        assert rep.miss.miss_rate == {"dl": 0.0, "ul": 0.0}
        assert rep.miss.prb_errors and max(rep.miss.prb_errors) == 0

    def test_full_buffer_volume_exact(self):
        res = run(SimConfig(seed=5, duration_tti=3000, ues=(UeSpec(0x4601),)))
        pipe = observe_result(res)
        dl_truth = sum(e["tbs"] for e in dci_entries(res) if e["dir"] == "dl")
        dl_seen = sum(d.classification.effective_tbs for d in pipe.decoded if d.grant.direction is Direction.DOWNLINK)
        assert dl_seen == dl_truth > 0

    def test_always_retransmit(self):
        res = run(SimConfig(seed=5, duration_tti=2000, ues=(UeSpec(0x4601),), retransmission_probability=1.0))
        pipe = observe_result(res)
        fresh = [e for e in dci_entries(res) if e["dir"] == "dl" and not e["is_retransmission"]]
        assert len(fresh) == 16
        seen = [d for d in pipe.decoded if d.grant.direction is Direction.DOWNLINK and d.classification.effective_tbs]
        assert len(seen) == 16
        # the window has long since slid past the first blocks
        assert pipe.estimator.allocated_rate(0x4601) == 0

    def test_injected_loss(self):
        cfg = SimConfig(seed=11, duration_tti=20000, ues=UES, dci_loss_probability=0.05, ul_dci_loss_probability=0.1)
        res = run(cfg)
        rep = report_from_pipeline(observe_result(res), res.ground_truth)
        n = rep.miss.counts
        assert n["dl_total"] > 10_000
        assert abs(rep.miss.miss_rate["dl"] - 0.05) < 0.01
        assert abs(rep.miss.miss_rate["ul"] - 0.1) < 0.02
        assert rep.miss.prb_error_mean > 0

    def test_mismatched_ids(self):
        with pytest.raises(MismatchedRuns):
            match_traces([], [], "a", "b")

    def test_mismatched_run_dirs(self, tmp_path):
        a = run(SimConfig(seed=1, duration_tti=200))
        b = run(SimConfig(seed=2, duration_tti=200))
        a.write(tmp_path)
        (tmp_path / "ground_truth.jsonl").write_text(b.ground_truth_text())
        with pytest.raises(MismatchedRuns):
            report_accuracy(tmp_path)


class TestClosedLoop:
    def test_offer_and_backlog(self):
        sim = Simulator(SimConfig(duration_tti=0, ues=(UeSpec(0x4601, driven=True, ul_demand_bps=0),)))
        trace, truth = [], []
        sim.step(0, trace, truth)
        sim.offer(0x4601, Direction.DOWNLINK, 5000)
        assert sim.backlog(0x4601) == 5000
        sim.step(1, trace, truth)
        served = sum(e["tbs"] for e in truth if e["kind"] == "dci")
        assert served >= 5000 and sim.backlog(0x4601) == 0
        sim.step(2, trace, truth)
        assert sum(e["tbs"] for e in truth if e["kind"] == "dci") == served

    def test_offer_unknown(self):
        with pytest.raises(InvalidConfig):
            Simulator(SimConfig()).offer(0x1234, Direction.DOWNLINK, 1)


def test_qam64_table_run():
    res = run(SimConfig(duration_tti=300, mcs_table=McsTable.QAM64, ues=(UeSpec(0x4601, mcs_trace=((0, 28),)),)))
    assert res.ground_truth
