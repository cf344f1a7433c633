"""Closed-loop gameplay runs: simulated RAN, observer, telemetry, ABR, video source.

One gaming UE streams video on the downlink of the simulated cell. Each TTI
the gNB serves part of the UE's queue, the observer decodes the TTI's DCIs,
the resulting telemetry sample crosses the wire codec and drives the video
scheduler, and the frame loop applies any pending reinit at the next frame
boundary. Latency is a queue-delay proxy: queued bits over the current cell
capacity for the UE.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction

from .abr import AbrConfig, ReinitMailbox, VideoParams, VideoScheduler, f_bw
from .errors import InvalidScenario
from .nr import Direction, McsTable
from .pipeline import ObserverPipeline
from .qoe import QoeWeights, RawQoe, score_runs
from .sim import SimConfig, Simulator, UeSpec
from .wire import decode_sample, encode_sample

FIXED_POLICIES = {
    "fixed-1080p60": VideoParams(1920, 1080, 60),
    "fixed-720p60": VideoParams(1280, 720, 60),
    "fixed-360p60": VideoParams(640, 360, 60),
}
POLICIES = ("adaptive",) + tuple(FIXED_POLICIES)
GAMING_RNTI = 0x4296
TICK_COLUMNS = ("tti", "b_alloc", "b_spare", "video_bps", "queue_delay_ms", "w", "h", "r")


@dataclass(frozen=True)
class Scenario:
    policy: str = "adaptive"
    seed: int = 1
    duration_s: float = 40.0
    # capacity step: MCS before and after ``drop_at_s`` (None keeps it steady)
    drop_at_s: float | None = 30.0
    mcs_before: int = 15
    mcs_after: int = 7
    carrier_bandwidth_prb: int = 51
    tdd_pattern: str = "DDDDDDDSUU"
    initial: VideoParams = VideoParams(1280, 720, 60)
    threshold_ms: float = 100.0
    late_ms: float = 250.0
    recovery_s: float = 1.0
    abr: AbrConfig = field(default_factory=AbrConfig)

    def validate(self):
        if self.policy not in POLICIES:
            raise InvalidScenario(f"unknown policy {self.policy!r}; expected one of {', '.join(POLICIES)}")
        if self.duration_s <= 0:
            raise InvalidScenario("duration must be positive")
        if self.drop_at_s is not None and not 0 <= self.drop_at_s < self.duration_s:
            raise InvalidScenario("drop time must fall inside the run")
        if self.threshold_ms <= 0 or self.late_ms <= 0:
            raise InvalidScenario("thresholds must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        data = dict(data)
        if "initial" in data:
            w, h, r = data["initial"]
            data["initial"] = VideoParams(int(w), int(h), int(r))
        if "abr" in data:
            data["abr"] = AbrConfig.from_dict(data["abr"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise InvalidScenario(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "seed": self.seed,
            "duration_s": self.duration_s,
            "drop_at_s": self.drop_at_s,
            "mcs_before": self.mcs_before,
            "mcs_after": self.mcs_after,
            "carrier_bandwidth_prb": self.carrier_bandwidth_prb,
            "tdd_pattern": self.tdd_pattern,
            "initial": [self.initial.width, self.initial.height, self.initial.frame_rate],
            "threshold_ms": self.threshold_ms,
            "late_ms": self.late_ms,
            "recovery_s": self.recovery_s,
        }


@dataclass
class _Frame:
    created_ms: Fraction
    remaining: Fraction
    height: int


@dataclass
class RunReport:
    scenario: Scenario
    # one row per TTI, see TICK_COLUMNS
    ticks: list[tuple]
    frame_latency_ms: list[float]
    late_frames: int
    frames: int
    mean_height: float
    mean_fps: float
    reinit_count: int
    drop_tti: int | None
    tti_ms: float
    qoe: float | None = None

    @property
    def loss(self) -> float:
        return self.late_frames / self.frames if self.frames else 0.0

    @property
    def mean_latency_ms(self) -> float:
        return sum(self.frame_latency_ms) / len(self.frame_latency_ms) if self.frame_latency_ms else 0.0

    @property
    def final_params(self) -> VideoParams:
        _, _, _, _, _, w, h, r = self.ticks[-1]
        return VideoParams(w, h, r)

    def queue_delays(self) -> list[float]:
        return [t[4] for t in self.ticks]

    def recovery_time_s(self) -> float | None:
        """Seconds after the drop until the queue delay is under threshold for good."""
        if self.drop_tti is None:
            return None
        delays = self.queue_delays()
        last_above = None
        for i in range(len(delays) - 1, self.drop_tti - 1, -1):
            if delays[i] >= self.scenario.threshold_ms:
                last_above = i
                break
        if last_above is None:
            return 0.0
        if last_above == len(delays) - 1:
            return None
        return (last_above + 1 - self.drop_tti) * self.tti_ms / 1000

    def diverged(self) -> bool:
        """Queue delay over ten thresholds at the end and still rising over the last second."""
        delays = self.queue_delays()
        span = int(1000 / self.tti_ms)
        if len(delays) <= span:
            return False
        return delays[-1] > 10 * self.scenario.threshold_ms and delays[-1] > delays[-1 - span]

    def raw_qoe(self) -> RawQoe:
        return RawQoe(self.mean_height, self.mean_fps, self.mean_latency_ms, self.loss)

    def summary(self) -> dict:
        rec = self.recovery_time_s()
        fp = self.final_params
        delays = self.queue_delays()
        return {
            "policy": self.scenario.policy,
            "frames": self.frames,
            "late_frames": self.late_frames,
            "loss": self.loss,
            "mean_latency_ms": self.mean_latency_ms,
            "max_queue_delay_ms": max(delays) if delays else 0.0,
            "final_queue_delay_ms": delays[-1] if delays else 0.0,
            "mean_height": self.mean_height,
            "mean_fps": self.mean_fps,
            "reinit_count": self.reinit_count,
            "recovery_s": rec,
            "diverged": self.diverged(),
            "final_params": [fp.width, fp.height, fp.frame_rate],
            "qoe": self.qoe,
        }


def _sim_config(scenario: Scenario) -> SimConfig:
    tti_ms = Fraction(1, 2)
    duration_tti = int(Fraction(scenario.duration_s) * 1000 / tti_ms)
    trace = ((0, scenario.mcs_before),)
    if scenario.drop_at_s is not None:
        trace += ((int(Fraction(scenario.drop_at_s) * 1000 / tti_ms), scenario.mcs_after),)
    return SimConfig(
        seed=scenario.seed,
        duration_tti=duration_tti,
        ues=(UeSpec(GAMING_RNTI, ul_demand_bps=0, mcs_trace=trace, driven=True),),
        carrier_bandwidth_prb=scenario.carrier_bandwidth_prb,
        subcarrier_spacing_khz=30,
        tdd_pattern=scenario.tdd_pattern,
        mcs_table=McsTable.QAM256,
        max_mimo_layers=1,
    )


def cell_rate_bps(sim: Simulator, mcs: int) -> Fraction:
    """Downlink bits/s one UE gets with the whole carrier at ``mcs``."""
    cfg = sim.config
    n_td = len(sim.ue_config.pdsch_time_domain_list or sim.cell.pdsch_time_domain_list)
    per_tti = Fraction(sum(sim.tbs(Direction.DOWNLINK, cfg.carrier_bandwidth_prb, mcs, i) for i in range(n_td)), n_td)
    dl_share = Fraction(cfg.tdd_pattern.count("D"), len(cfg.tdd_pattern))
    return per_tti * dl_share / sim.tti_s


def run_endtoend(scenario: Scenario) -> RunReport:
    scenario.validate()
    sim_cfg = _sim_config(scenario)
    sim = Simulator(sim_cfg)
    pipeline = ObserverPipeline(
        sim.cell,
        doc_loader={sim.doc_name: sim.doc_text}.__getitem__,
        tdd_pattern=sim_cfg.tdd_pattern,
        keep_decoded=False,
    )
    tti_ms = Fraction(sim.cell.tti_duration_ms)
    drop_tti = None if scenario.drop_at_s is None else int(Fraction(scenario.drop_at_s) * 1000 / tti_ms)
    capacity = {m: cell_rate_bps(sim, m) for m in {scenario.mcs_before, scenario.mcs_after}}

    adaptive = scenario.policy == "adaptive"
    params = scenario.initial if adaptive else FIXED_POLICIES[scenario.policy]
    mailbox = ReinitMailbox()
    scheduler = VideoScheduler(params, scenario.abr, mailbox) if adaptive else None
    k = scenario.abr.k

    queue: deque[_Frame] = deque()
    latencies: list[float] = []
    late = frames = reinits = 0
    height_sum = 0
    next_frame_ms = Fraction(0)
    ticks = []
    trace: list = []
    truth: list = []
    late_ms = Fraction(scenario.late_ms)

    for tti in range(sim_cfg.duration_tti):
        now = tti * tti_ms
        # frame loop: apply a pending reinit, then emit the frame due now
        if now >= next_frame_ms:
            event = mailbox.take()
            if event is not None and event.params != params:
                params = event.params
                reinits += 1
            bits = f_bw(params.width, params.height, params.frame_rate, k) / params.frame_rate
            if bits > 0:
                sim.offer(GAMING_RNTI, Direction.DOWNLINK, bits)
                queue.append(_Frame(now, bits, params.height))
            frames += 1
            height_sum += params.height
            next_frame_ms += Fraction(1000, params.frame_rate)

        before = sim.backlog(GAMING_RNTI)
        trace.clear()
        sim.step(tti, trace, truth)
        truth.clear()
        served = before - sim.backlog(GAMING_RNTI)
        done_ms = now + tti_ms
        while served > 0 and queue:
            head = queue[0]
            take = min(served, head.remaining)
            head.remaining -= take
            served -= take
            if head.remaining == 0:
                queue.popleft()
                lat = done_ms - head.created_ms
                latencies.append(float(lat))
                late += lat > late_ms

        pipeline.process_tti(tti, trace)
        sample = None
        if GAMING_RNTI in pipeline.registry:
            sample = decode_sample(encode_sample(pipeline.sample(GAMING_RNTI)))
            if scheduler is not None:
                scheduler.on_sample(sample, now)

        mcs = scenario.mcs_before if drop_tti is None or tti < drop_tti else scenario.mcs_after
        delay_ms = float(sim.backlog(GAMING_RNTI) / capacity[mcs] * 1000)
        ticks.append(
            (
                tti,
                sample.b_alloc if sample else 0,
                sample.b_spare if sample else 0,
                float(f_bw(params.width, params.height, params.frame_rate, k)),
                delay_ms,
                params.width,
                params.height,
                params.frame_rate,
            )
        )

    # frames still queued at the end count with their age so far
    end_ms = sim_cfg.duration_tti * tti_ms
    for fr in queue:
        lat = end_ms - fr.created_ms
        latencies.append(float(lat))
        late += lat > late_ms
    duration_s = float(end_ms) / 1000
    return RunReport(
        scenario=scenario,
        ticks=ticks,
        frame_latency_ms=latencies,
        late_frames=late,
        frames=frames,
        mean_height=height_sum / frames if frames else 0.0,
        mean_fps=frames / duration_s,
        reinit_count=reinits,
        drop_tti=drop_tti,
        tti_ms=float(tti_ms),
    )


def compare_policies(base: Scenario, policies=POLICIES, weights: QoeWeights = QoeWeights()) -> dict[str, RunReport]:
    """Run every policy on the same scenario and score QoE across them."""
    reports = {p: run_endtoend(replace(base, policy=p)) for p in policies}
    scores = score_runs([r.raw_qoe() for r in reports.values()], weights)
    for rep, score in zip(reports.values(), scores):
        rep.qoe = score
    return reports


def is_finite_report(report: RunReport) -> bool:
    return all(math.isfinite(t[4]) for t in report.ticks)
