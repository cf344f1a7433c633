import csv
import threading
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rantelemetry.capacity import (
    U32_MAX,
    CapacityEstimator,
    TtiRecord,
    UeTtiGrant,
    default_efficiency,
    saturate_u32,
    write_csv,
)
from rantelemetry.errors import NonMonotonicTti, UnknownRnti
from rantelemetry.tracker import UeRegistry

A, B = 0x4296, 0x4297


@pytest.fixture
def est(cell, ue):
    reg = UeRegistry()
    reg.register(A, ue)
    reg.register(B, ue)
    return CapacityEstimator(cell, reg)


def feed(est, ttis, grants_for):
    for t in ttis:
        est.record_tti(TtiRecord(t, 51, tuple(grants_for(t))))


class TestRecord:
    def test_window_size(self, est):
        assert est.window_tti == 200

    def test_empty_tti(self, est):
        rec = TtiRecord(0, 51)
        est.record_tti(rec)
        assert rec.spare_prb == 51
        assert est.allocated_rate(A) == 0

    def test_one_grant(self):
        assert TtiRecord(0, 51, (UeTtiGrant(A, 3240, 2),)).spare_prb == 49

    def test_repeated_tti(self, est):
        est.record_tti(TtiRecord(5, 51))
        with pytest.raises(NonMonotonicTti):
            est.record_tti(TtiRecord(5, 51))

    def test_retransmission_uses_prbs(self):
        rec = TtiRecord(0, 51, (UeTtiGrant(A, 0, 10), UeTtiGrant(B, 500, 5)))
        assert rec.used_prb_total == 15


class TestAllocated:
    def test_full_window(self, est):
        feed(est, range(200), lambda t: [UeTtiGrant(A, 3240, 2)])
        assert est.allocated_rate(A) == 6_480_000

    def test_half_window(self, est):
        feed(est, range(200), lambda t: [UeTtiGrant(A, 3240, 2)] if t >= 100 else [])
        assert est.allocated_rate(A) == 3_240_000

    def test_slides(self, est):
        feed(est, range(400), lambda t: [UeTtiGrant(A, 3240, 2)] if t < 200 else [])
        assert est.allocated_rate(A) == 0

    def test_unknown(self, est):
        with pytest.raises(UnknownRnti):
            est.allocated_rate(0x1111)

    def test_past_window_query(self, est):
        feed(est, range(150), lambda t: [UeTtiGrant(A, 100, 1)] if t < 100 else [])
        # the window ending at 50 holds TTIs 0..50
        assert est.allocated_rate(A, now_tti=50) == 51 * 100 / Fraction(1, 10)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 4000), st.integers(0, 4000)), min_size=1, max_size=50))
    def test_order_invariant(self, cell, ue, rows):
        def run(flip):
            reg = UeRegistry()
            reg.register(A, ue)
            reg.register(B, ue)
            e = CapacityEstimator(cell, reg)
            for t, (a, b) in enumerate(rows):
                g = [UeTtiGrant(A, a, 1), UeTtiGrant(B, b, 1)]
                e.record_tti(TtiRecord(t, 51, tuple(reversed(g) if flip else g)))
            return e.allocated_rate(A), e.allocated_rate(B)

        assert run(False) == run(True)


class TestSpare:
    def test_two_ues(self, est):
        est.registry.get(A).last_grant_efficiency = Fraction(1620)
        rec = TtiRecord(0, 51, (UeTtiGrant(A, 3240, 2), UeTtiGrant(B, 0, 29)))
        est.record_tti(rec)
        assert rec.spare_prb == 20
        assert est.spare_rate(A) == 32_400_000

    def test_no_spare(self, est):
        rec = TtiRecord(0, 51, (UeTtiGrant(A, 3240, 51),))
        est.record_tti(rec)
        assert est.spare_rate(A) == 0

    def test_different_mcs(self, est):
        est.registry.get(A).last_grant_efficiency = Fraction(1620)
        est.registry.get(B).last_grant_efficiency = Fraction(400)
        est.record_tti(TtiRecord(0, 51, (UeTtiGrant(A, 3240, 2), UeTtiGrant(B, 800, 2))))
        assert est.spare_rate(A) != est.spare_rate(B)

    def test_default_efficiency(self, est, cell, ue):
        est.record_tti(TtiRecord(0, 51))
        assert default_efficiency(cell, ue) == 48
        # 51 spare PRBs split two ways, MCS-0 floor
        assert est.spare_rate(A) == 25 * 48 * 2000

    def test_fair_share_conserves(self, est):
        rec = TtiRecord(0, 51, (UeTtiGrant(A, 10, 4),))
        total = 2 * est.fair_prb(rec, 2)
        assert total <= rec.spare_prb

    def test_connected_mode(self, cell, ue):
        reg = UeRegistry()
        reg.register(A, ue, tti=0)
        reg.register(B, ue, tti=0)
        active = CapacityEstimator(cell, reg, fair_share="active")
        connected = CapacityEstimator(cell, reg, fair_share="connected")
        for e in (active, connected):
            feed(e, range(1000), lambda t: [UeTtiGrant(A, 100, 1)])
        # B went idle long ago: only the connected mode still counts it
        assert active.active_ues() == [A]
        assert sorted(connected.active_ues()) == [A, B]

    def test_bad_mode(self, cell):
        with pytest.raises(ValueError):
            CapacityEstimator(cell, UeRegistry(), fair_share="all")


class TestSample:
    def test_passthrough(self, est):
        feed(est, range(200), lambda t: [UeTtiGrant(A, 3240, 2), UeTtiGrant(B, 0, 49)])
        s = est.sample(A)
        assert (s.tti_index, s.b_alloc, s.b_spare) == (199, 6_480_000, 0)

    def test_saturation(self):
        assert saturate_u32(2**40) == U32_MAX == 4_294_967_295
        assert saturate_u32(-3) == 0

    def test_no_history(self, est):
        est.record_tti(TtiRecord(0, 51))
        s = est.sample(B)
        assert s.b_alloc == 0 and s.b_spare == 25 * 48 * 2000

    def test_concurrent_reader(self, est):
        stop = threading.Event()
        seen = []

        def reader():
            while not stop.is_set():
                seen.append(est.sample(A).b_alloc)

        th = threading.Thread(target=reader)
        th.start()
        feed(est, range(2000), lambda t: [UeTtiGrant(A, 3240, 2)])
        stop.set()
        th.join()
        assert all(0 <= b <= 6_480_000 for b in seen)


def test_csv(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, [(0, A, 1, 2, 3, 48)])
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["tti", "rnti", "b_alloc", "b_spare", "used_prb", "spare_prb"]
    assert rows[1] == ["0", str(A), "1", "2", "3", "48"]
