"""Bitrate adaptation: map (b_alloc, b_spare) telemetry to video parameters.

The bitrate model is linear in pixel rate, ``f_bw = k * w * h * r`` with
``k = 0.16`` bits per pixel, so 1080p60 is about 20 Mbit/s. ``f_fps`` and
``f_res`` invert it for a fixed resolution or frame rate. All arithmetic is
exact so that the safety bound ``f_bw(output) <= target`` holds without
floating-point slack.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction

from .capacity import TelemetrySample

DEFAULT_K = Fraction(4, 25)


class BottleneckVerdict(str, enum.Enum):
    RAN = "ran"
    CORE_OR_WAN = "core_or_wan"
    NONE = "none"


@dataclass(frozen=True)
class VideoParams:
    width: int
    height: int
    frame_rate: int

    def __post_init__(self):
        if self.width < 0 or self.height < 0 or self.frame_rate < 1:
            raise ValueError(f"invalid video parameters {self}")

    @property
    def frame_duration_ms(self) -> Fraction:
        return Fraction(1000, self.frame_rate)


@dataclass(frozen=True)
class AbrConfig:
    alpha: Fraction = Fraction(7, 4)
    spare_fraction: Fraction = Fraction(3, 4)
    fps_ladder: tuple[int, ...] = (90, 60, 45, 30, 15)
    w_cap: int = 1920
    h_cap: int = 1080
    r_cap: int = 120
    w_bad: int = 640
    h_bad: int = 360
    k: Fraction = DEFAULT_K
    step_fraction: Fraction = Fraction(1, 10)

    def __post_init__(self):
        if Fraction(self.alpha) <= 1:
            raise ValueError("alpha must exceed 1")
        if not 0 < Fraction(self.spare_fraction) <= 1:
            raise ValueError("spare_fraction must be in (0, 1]")
        if any(a <= b for a, b in zip(self.fps_ladder, self.fps_ladder[1:])):
            raise ValueError("fps ladder must be strictly decreasing")
        if Fraction(self.k) <= 0:
            raise ValueError("k must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "AbrConfig":
        conv = {}
        for key, val in data.items():
            if key in ("alpha", "spare_fraction", "k", "step_fraction"):
                conv[key] = Fraction(str(val))
            elif key == "fps_ladder":
                conv[key] = tuple(int(v) for v in val)
            else:
                conv[key] = int(val)
        return cls(**conv)


def f_bw(w: int, h: int, r: int, k: Fraction = DEFAULT_K) -> Fraction:
    return k * w * h * r


def f_fps(b, w: int, h: int, r_cap: int = 120, k: Fraction = DEFAULT_K) -> int:
    pixels = k * w * h
    if pixels <= 0:
        return r_cap
    return max(1, min(r_cap, math.floor(Fraction(b) / pixels)))


def _even_floor(x) -> int:
    v = math.floor(x)
    return v - (v % 2)


def f_res(b, r: int, k: Fraction = DEFAULT_K) -> tuple[int, int]:
    """Largest even 16:9 frame whose bitrate at ``r`` fps stays within ``b``."""
    budget = Fraction(b) / (k * r)
    h = math.isqrt(math.floor(budget * 9 / 16))
    h -= h % 2
    w = _even_floor(Fraction(16 * h, 9))
    if w < 2 or h < 2:
        return 2, 2
    return w, h


def classify_bottleneck(b_video, b_alloc, b_spare, config: AbrConfig = AbrConfig()) -> BottleneckVerdict:
    if Fraction(b_video) > config.alpha * Fraction(b_alloc):
        return BottleneckVerdict.CORE_OR_WAN if b_spare > 0 else BottleneckVerdict.RAN
    return BottleneckVerdict.NONE


def target_alloc(b_video, b_alloc, b_spare, config: AbrConfig = AbrConfig()) -> Fraction:
    """Hold at b_alloc when the bottleneck is past the RAN, else add a share of spare."""
    b_alloc = Fraction(b_alloc)
    if classify_bottleneck(b_video, b_alloc, b_spare, config) is BottleneckVerdict.CORE_OR_WAN:
        return b_alloc
    return b_alloc + config.spare_fraction * Fraction(b_spare)


def _ladder_position(r: int, ladder: tuple[int, ...]) -> int:
    # a rate off the ladder sits just before the first lower entry
    if r in ladder:
        return ladder.index(r)
    return sum(1 for x in ladder if x > r) - 1


def _grow_resolution(current: VideoParams, target: tuple[int, int], config: AbrConfig) -> tuple[int, int]:
    tw, th = min(target[0], config.w_cap), min(target[1], config.h_cap)
    limit_h = max(_even_floor(current.height * (1 + config.step_fraction)), current.height + 2)
    h = min(th, limit_h)
    w = min(tw, _even_floor(Fraction(16 * h, 9)), config.w_cap)
    # never move backwards on a growth step
    if w * h < current.width * current.height:
        return current.width, current.height
    return max(w, 2), max(h, 2)


def adapt(current: VideoParams, sample: TelemetrySample, config: AbrConfig = AbrConfig()) -> tuple[VideoParams, "ReinitEvent | None"]:
    """One decision step. Returns the new parameters and a reinit event when they changed."""
    params, _ = decide(current, sample.b_alloc, sample.b_spare, config)
    if params == current:
        return current, None
    return params, ReinitEvent(params, sample.tti_index)


def decide(current: VideoParams, b_alloc, b_spare, config: AbrConfig = AbrConfig()) -> tuple[VideoParams, Fraction]:
    k = config.k
    w, h, r = current.width, current.height, current.frame_rate
    b_video = f_bw(w, h, r, k)
    target = target_alloc(b_video, b_alloc, b_spare, config)
    if target > b_video:
        if w < config.w_cap and h < config.h_cap:
            nw, nh = _grow_resolution(current, f_res(target, r, k), config)
            return VideoParams(nw, nh, r), target
        if r < config.r_cap:
            return VideoParams(w, h, min(f_fps(target, w, h, config.r_cap, k), config.r_cap)), target
        return current, target
    if target == b_video:
        return current, target
    ladder = config.fps_ladder
    step = _ladder_position(r, ladder)
    nr = r
    nw, nh = f_res(target, nr, k)
    while nw < config.w_bad and nh < config.h_bad and step < len(ladder) - 1:
        step += 1
        nr = ladder[step]
        nw, nh = f_res(target, nr, k)
    nw, nh = min(nw, w, config.w_cap), min(nh, h, config.h_cap)
    return VideoParams(max(nw, 2), max(nh, 2), min(nr, config.r_cap)), target


@dataclass(frozen=True)
class ReinitEvent:
    params: VideoParams
    raised_at_tti: int = 0


class ReinitMailbox:
    """Single-slot, last-write-wins handoff from the scheduler to the frame loop."""

    def __init__(self):
        self._lock = threading.Lock()
        self._event: ReinitEvent | None = None

    def post(self, event: ReinitEvent):
        with self._lock:
            self._event = event

    def take(self) -> ReinitEvent | None:
        with self._lock:
            event, self._event = self._event, None
            return event


@dataclass
class VideoScheduler:
    """Runs a decision per sample; at most one parameter change per frame."""

    params: VideoParams
    config: AbrConfig = field(default_factory=AbrConfig)
    mailbox: ReinitMailbox = field(default_factory=ReinitMailbox)
    log: list[tuple] | None = None
    _last_change_ms: Fraction | None = None

    def on_sample(self, sample: TelemetrySample, now_ms) -> ReinitEvent | None:
        now_ms = Fraction(now_ms)
        new, target = decide(self.params, sample.b_alloc, sample.b_spare, self.config)
        verdict = classify_bottleneck(
            f_bw(self.params.width, self.params.height, self.params.frame_rate, self.config.k),
            sample.b_alloc,
            sample.b_spare,
            self.config,
        )
        event = None
        if new != self.params:
            if self._last_change_ms is None or now_ms - self._last_change_ms >= self.params.frame_duration_ms:
                event = ReinitEvent(new, sample.tti_index)
                self.mailbox.post(event)
                self.params = new
                self._last_change_ms = now_ms
        if self.log is not None:
            p = self.params
            self.log.append((sample.tti_index, sample.b_alloc, sample.b_spare, verdict.value, p.width, p.height, p.frame_rate))
        return event


DECISION_LOG_COLUMNS = ("tti", "b_alloc", "b_spare", "verdict", "w", "h", "r")
