from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import f_res_oracle
from rantelemetry.abr import (
    AbrConfig,
    BottleneckVerdict,
    ReinitEvent,
    ReinitMailbox,
    VideoParams,
    VideoScheduler,
    adapt,
    classify_bottleneck,
    decide,
    f_bw,
    f_fps,
    f_res,
    target_alloc,
)
from rantelemetry.capacity import TelemetrySample

M = 1_000_000
CFG = AbrConfig()
FLOOR_BITS = f_bw(2, 2, min(CFG.fps_ladder))


def frame(h, r):
    return VideoParams(int(Fraction(16 * h, 9)) // 2 * 2, h, r)


def states():
    heights = st.integers(1, 540).map(lambda x: 2 * x)
    rates = st.one_of(st.sampled_from(CFG.fps_ladder), st.integers(min(CFG.fps_ladder), CFG.r_cap))
    return st.builds(frame, heights, rates)


samples = st.builds(TelemetrySample, st.just(0), st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))


class TestModel:
    def test_f_bw(self):
        assert f_bw(1920, 1080, 60) == 19_906_560
        assert f_bw(0, 1080, 60) == 0
        assert f_bw(640, 360, 60) == 2 * f_bw(640, 360, 30)

    def test_f_fps(self):
        assert f_fps(19_906_560, 1920, 1080) == 60
        assert f_fps(10, 1920, 1080) == 1
        assert f_fps(10**12, 1920, 1080) == 120
        for r in CFG.fps_ladder:
            assert f_fps(f_bw(1280, 720, r), 1280, 720) == r

    def test_f_res(self):
        assert f_res(2 * M, 45) == (700, 394)
        assert f_res(f_bw(1920, 1080, 60), 60) == (1920, 1080)
        assert f_res(1, 60) == (2, 2)

    @settings(max_examples=300, deadline=None)
    @given(st.integers(100_000, 60 * M), st.sampled_from([15, 30, 45, 60, 90, 120]))
    def test_f_res_oracle(self, b, r):
        assert f_res(b, r) == f_res_oracle(b, r)

    @settings(max_examples=10_000, deadline=None)
    @given(st.integers(1, 2**33), st.integers(1, 120))
    def test_f_res_within_budget(self, b, r):
        w, h = f_res(b, r)
        assert w % 2 == 0 and h % 2 == 0
        assert f_bw(w, h, r) <= b or (w, h) == (2, 2)


class TestEquations:
    def test_bottleneck(self):
        assert classify_bottleneck(10 * M, 4 * M, 2 * M) is BottleneckVerdict.CORE_OR_WAN
        assert classify_bottleneck(4 * M, 4 * M, 2 * M) is BottleneckVerdict.NONE
        assert classify_bottleneck(10 * M, 4 * M, 0) is BottleneckVerdict.RAN

    def test_alpha_boundary(self):
        # equal to alpha * b_alloc is not "above"
        assert classify_bottleneck(7 * M, 4 * M, 1) is BottleneckVerdict.NONE
        assert classify_bottleneck(7 * M + 1, 4 * M, 1) is BottleneckVerdict.CORE_OR_WAN

    def test_target(self):
        assert target_alloc(10 * M, 4 * M, 2 * M) == 4 * M
        assert target_alloc(4 * M, 4 * M, 2 * M) == Fraction(11, 2) * M
        assert target_alloc(99 * M, 4 * M, 0) == 4 * M
        assert target_alloc(1, 4 * M, 0) == 4 * M


class TestAdapt:
    def test_frame_rate_growth_at_cap(self):
        cur = VideoParams(1920, 1080, 60)
        b = f_bw(1920, 1080, 60) * Fraction(3, 2)
        new, ev = adapt(cur, TelemetrySample(1, int(b), 0))
        assert new == VideoParams(1920, 1080, 90)
        assert ev == ReinitEvent(new, 1)

    def test_shrink_below_floor_steps_ladder(self):
        new, ev = adapt(VideoParams(1920, 1080, 60), TelemetrySample(0, 2 * M, 0))
        assert new == VideoParams(700, 394, 45)
        assert ev is not None

    def test_fixed_point(self):
        cur = VideoParams(1280, 720, 60)
        new, ev = adapt(cur, TelemetrySample(0, int(f_bw(1280, 720, 60)), 0))
        assert new == cur and ev is None

    def test_growth_is_stepped(self):
        cur = VideoParams(640, 360, 60)
        new, _ = adapt(cur, TelemetrySample(0, 50 * M, 0))
        assert new.frame_rate == 60
        assert 360 < new.height <= 396

    def test_steady_abundance_reaches_caps(self):
        p = VideoParams(640, 360, 60)
        for _ in range(200):
            p, _ = adapt(p, TelemetrySample(0, 10**9, 10**9))
        assert p == VideoParams(1920, 1080, 120)

    def test_ladder_floor(self):
        new, _ = adapt(VideoParams(1920, 1080, 60), TelemetrySample(0, 1000, 0))
        assert new.frame_rate == 15

    def test_config_validation(self):
        for bad in ({"alpha": 1}, {"spare_fraction": 0}, {"fps_ladder": (30, 60)}, {"k": 0}):
            with pytest.raises(ValueError):
                AbrConfig(**bad)

    def test_config_from_dict(self):
        cfg = AbrConfig.from_dict({"alpha": "1.5", "fps_ladder": [60, 30], "w_cap": 1280})
        assert cfg.alpha == Fraction(3, 2) and cfg.fps_ladder == (60, 30) and cfg.w_cap == 1280

    @settings(max_examples=2000, deadline=None)
    @given(states(), samples)
    def test_properties(self, cur, sample):
        new, target = decide(cur, sample.b_alloc, sample.b_spare)
        # safety, save for targets below what the smallest frame costs
        assert f_bw(new.width, new.height, new.frame_rate) <= max(target, FLOOR_BITS)
        assert new.width <= CFG.w_cap and new.height <= CFG.h_cap and new.frame_rate <= CFG.r_cap
        assert new.width >= 2 and new.height >= 2 and new.frame_rate >= min(CFG.fps_ladder)
        if target > f_bw(cur.width, cur.height, cur.frame_rate) and cur.width < CFG.w_cap:
            assert new.frame_rate == cur.frame_rate
        assert decide(cur, sample.b_alloc, sample.b_spare) == (new, target)


class TestScheduler:
    def test_mailbox_last_write_wins(self):
        box = ReinitMailbox()
        a, b = ReinitEvent(VideoParams(2, 2, 15)), ReinitEvent(VideoParams(4, 2, 15))
        box.post(a)
        box.post(b)
        assert box.take() == b
        assert box.take() is None

    def test_rate_limited_to_one_per_frame(self):
        sched = VideoScheduler(VideoParams(1280, 720, 60))
        first = sched.on_sample(TelemetrySample(0, 2 * M, 0), now_ms=0)
        assert first is not None
        # the new frame rate is 45 fps: 22.2 ms between changes
        assert sched.on_sample(TelemetrySample(1, 100 * M, 0), now_ms=10) is None
        assert sched.on_sample(TelemetrySample(2, 100 * M, 0), now_ms=Fraction(200, 9)) is not None

    def test_log(self):
        sched = VideoScheduler(VideoParams(640, 360, 60), log=[])
        sched.on_sample(TelemetrySample(5, 4 * M, 2 * M), now_ms=0)
        assert sched.log[0][:4] == (5, 4 * M, 2 * M, "none")
