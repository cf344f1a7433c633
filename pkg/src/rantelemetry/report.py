"""Accuracy reports over simulated runs and the per-TTI processing benchmark."""

from __future__ import annotations

import random
import statistics
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .allocation import riv_encode
from .dci import Dci, TraceRecord, build_envelope
from .nr import DciFormat, Direction
from .pipeline import ObserverPipeline, time_tti
from .rrc import CellCommonConfig, parse_msg4
from .sim import MissReport, SimConfig, match_traces, read_ground_truth, read_trace, sim_cell, sim_ue_document

PERCENTILES = (50, 75, 90)


def percentiles(values: Iterable[float], ps=PERCENTILES) -> dict[str, float]:
    data = sorted(values)
    if not data:
        return {f"p{p}": 0.0 for p in ps}
    if len(data) == 1:
        return {f"p{p}": float(data[0]) for p in ps}
    cuts = statistics.quantiles(data, n=100, method="inclusive")
    return {f"p{p}": float(cuts[p - 1]) for p in ps}


def throughput_errors(rate_log, ground_truth: Iterable[dict], window_tti: int, window_s: float) -> list[float]:
    """Relative error of each window's estimated downlink volume against ground truth.

    ``rate_log`` rows are ``(last_tti_of_window, rnti, bits_per_second)``, one
    per tumbling window; truth counts new-data downlink TBS only.
    """
    truth: dict[tuple[int, int], int] = defaultdict(int)
    for e in ground_truth:
        if e.get("kind") == "dci" and e["dir"] == "dl" and not e["is_retransmission"]:
            truth[(e["tti"] // window_tti, e["rnti"])] += e["tbs"]
    errs = []
    for tti, rnti, rate in rate_log:
        expected = truth.get((tti // window_tti, rnti), 0)
        if expected:
            errs.append(abs(float(rate) * window_s - expected) / expected)
    return errs


@dataclass
class AccuracyReport:
    miss: MissReport
    throughput_errors: list[float]
    decode_stats: dict
    processing_us: dict[int, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        errs = self.throughput_errors
        return {
            **self.miss.to_dict(),
            "throughput_error": {
                **percentiles(errs),
                "mean": sum(errs) / len(errs) if errs else 0.0,
                "windows": len(errs),
            },
            "decode_stats": self.decode_stats,
            "processing_us": {str(k): v for k, v in self.processing_us.items()},
        }


def observe(
    records: list[TraceRecord],
    cell: CellCommonConfig,
    doc_loader,
    tdd_pattern: str | None,
    end_tti: int | None = None,
    window_ms: float = 100,
) -> ObserverPipeline:
    pipeline = ObserverPipeline(cell, doc_loader=doc_loader, tdd_pattern=tdd_pattern, window_ms=window_ms)
    # one rate snapshot per tumbling window
    pipeline.rate_every_tti = pipeline.estimator.window_tti
    pipeline.run(records, end_tti=end_tti)
    return pipeline


def report_from_pipeline(pipeline: ObserverPipeline, ground_truth: list[dict], observer_run_id=None, truth_run_id=None) -> AccuracyReport:
    miss = match_traces((d.observed() for d in pipeline.decoded), ground_truth, observer_run_id, truth_run_id)
    est = pipeline.estimator
    errs = throughput_errors(pipeline.rate_log, ground_truth, est.window_tti, float(est.window_s))
    return AccuracyReport(miss, errs, vars(pipeline.stats).copy())


def report_accuracy(run_dir, benchmark_ttis: int = 0) -> AccuracyReport:
    """Replay ``trace.txt`` from a simulate run directory and score it against ground truth."""
    run_dir = Path(run_dir)
    with open(run_dir / "trace.txt") as fh:
        trace = read_trace(fh)
    with open(run_dir / "ground_truth.jsonl") as fh:
        header, truth = read_ground_truth(fh)
    config = SimConfig.from_dict(header["config"])
    pipeline = observe(
        trace.records,
        sim_cell(config),
        lambda name: (run_dir / name).read_text(),
        trace.header.get("tdd", config.tdd_pattern),
        end_tti=config.duration_tti,
    )
    rep = report_from_pipeline(pipeline, truth, trace.header.get("run_id"), header.get("run_id"))
    if benchmark_ttis:
        rep.processing_us = benchmark_processing(benchmark_ttis)
    return rep


# --- processing-time microbenchmark ---------------------------------------------


def synthetic_ttis(n_ttis: int, dcis_per_tti: int, seed: int = 0, bw: int = 51, n_ues: int = 4):
    """Downlink TTIs with ``dcis_per_tti`` grants for distinct UEs, fields randomized."""
    rng = random.Random(seed)
    rntis = [0x4601 + i for i in range(max(n_ues, dcis_per_tti))]
    ndi = {r: [0] * 16 for r in rntis}
    ttis = []
    for tti in range(n_ttis):
        chosen = rng.sample(rntis, dcis_per_tti)
        start = 0
        share = bw // dcis_per_tti
        recs = []
        for rnti in chosen:
            nprb = rng.randint(1, share)
            harq = rng.randrange(16)
            if rng.random() < 0.9:
                ndi[rnti][harq] ^= 1
            dci = Dci(
                format=DciFormat.F1_1,
                freq_riv=riv_encode(start, nprb, bw),
                time_index=rng.randrange(2),
                mcs=rng.randrange(28),
                ndi=ndi[rnti][harq],
                rv=rng.randrange(4),
                harq_id=harq,
            )
            recs.append(TraceRecord(tti, Direction.DOWNLINK, build_envelope(dci, rnti)))
            start += share
        ttis.append(recs)
    return rntis, ttis


def benchmark_pipeline(rntis) -> ObserverPipeline:
    """Observer over the simulator's cell with ``rntis`` already attached."""
    config = SimConfig()
    ue = parse_msg4(sim_ue_document(config))
    pipeline = ObserverPipeline(sim_cell(config), keep_decoded=False)
    for rnti in rntis:
        pipeline.registry.register(rnti, ue, tti=0)
    return pipeline


def benchmark_processing(n_ttis: int = 10_000, dci_counts=(1, 2, 3, 4), seed: int = 0) -> dict[int, dict[str, float]]:
    """Mean and spread of wall time per TTI (microseconds) for each DCI count."""
    out = {}
    for count in dci_counts:
        rntis, ttis = synthetic_ttis(n_ttis, count, seed)
        pipeline = benchmark_pipeline(rntis)
        times = [time_tti(pipeline, tti, recs) / 1000 for tti, recs in enumerate(ttis)]
        out[count] = {
            "mean": statistics.fmean(times),
            "stdev": statistics.pstdev(times),
            **percentiles(times),
            "ttis": n_ttis,
        }
    return out
