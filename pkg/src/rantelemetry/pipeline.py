"""Observer side: decode a DCI trace TTI by TTI into grants and telemetry.

Per TTI the observer recovers each envelope's RNTI, drops envelopes that do
not belong to a registered UE, translates the rest into grants, classifies
them against the HARQ state and feeds the downlink ones to the estimator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable

from .capacity import CapacityEstimator, TelemetrySample, TtiRecord, UeTtiGrant
from .dci import Grant, TraceRecord, dci_to_grant, recover_rnti, unpack_dci
from .errors import CodecError, DuplicateRnti, HarqIdOutOfRange, TbsError
from .nr import Direction
from .rrc import CellCommonConfig
from .sim import ObservedDci
from .tracker import DciClassification, DciKind, UeRegistry, classify_dci


@dataclass(frozen=True)
class DecodedDci:
    tti: int
    grant: Grant
    classification: DciClassification

    def observed(self) -> ObservedDci:
        return ObservedDci(
            self.tti, self.grant.rnti, self.grant.direction, self.grant.num_prb, self.classification.effective_tbs
        )


@dataclass
class PipelineStats:
    decoded: int = 0
    rejected_crc: int = 0
    unknown_rnti: int = 0
    undecodable: int = 0
    registrations: int = 0


class ObserverPipeline:
    def __init__(
        self,
        cell: CellCommonConfig,
        doc_loader: Callable[[str], str] | None = None,
        tdd_pattern: str | None = None,
        window_ms: float = 100,
        fair_share: str = "active",
        legacy_divisor: bool = False,
        keep_decoded: bool = True,
        rate_every_tti: int | None = None,
    ):
        self.cell = cell
        self.registry = UeRegistry()
        self.estimator = CapacityEstimator(cell, self.registry, window_ms, fair_share)
        self.doc_loader = doc_loader or (lambda name: Path(name).read_text())
        self.tdd_pattern = tdd_pattern
        self.legacy_divisor = legacy_divisor
        self.keep_decoded = keep_decoded
        self.decoded: list[DecodedDci] = []
        self.stats = PipelineStats()
        # allocated-rate snapshots: (tti, rnti, bits/s) every ``rate_every_tti``
        self.rate_every_tti = rate_every_tti
        self.rate_log: list[tuple[int, int, Fraction]] = []
        self._doc_cache: dict[str, str] = {}

    def _capacity(self, tti: int) -> int:
        if self.tdd_pattern is None:
            return self.cell.carrier_bandwidth_prb
        slot = self.tdd_pattern[tti % len(self.tdd_pattern)]
        return self.cell.carrier_bandwidth_prb if slot == "D" else 0

    def _doc(self, name: str) -> str:
        if name not in self._doc_cache:
            self._doc_cache[name] = self.doc_loader(name)
        return self._doc_cache[name]

    def process_tti(self, tti: int, records: Iterable[TraceRecord] = ()) -> list[DecodedDci]:
        out = []
        grants = []
        for rec in records:
            if rec.kind == "msg4":
                self._register(rec)
                continue
            try:
                rnti = recover_rnti(rec.envelope)
            except CodecError:
                self.stats.rejected_crc += 1
                continue
            if rnti not in self.registry:
                self.stats.unknown_rnti += 1
                continue
            state = self.registry.get(rnti)
            try:
                dci = unpack_dci(rec.envelope.payload)
                grant = dci_to_grant(dci, self.cell, state.config, rnti, legacy_divisor=self.legacy_divisor)
            except (CodecError, TbsError):
                self.stats.undecodable += 1
                continue
            try:
                cls = classify_dci(state, dci, grant.tbs_bits, grant.num_prb, tti)
            except HarqIdOutOfRange:
                self.stats.undecodable += 1
                continue
            decoded = DecodedDci(tti, grant, cls)
            out.append(decoded)
            if grant.direction is Direction.DOWNLINK:
                grants.append(UeTtiGrant(rnti, cls.effective_tbs, grant.num_prb))
        self.stats.decoded += len(out)
        self.estimator.record_tti(TtiRecord(tti, self._capacity(tti), tuple(grants)))
        if self.rate_every_tti and (tti + 1) % self.rate_every_tti == 0:
            for rnti in self.registry.rntis():
                self.rate_log.append((tti, rnti, self.estimator.allocated_rate(rnti)))
        if self.keep_decoded:
            self.decoded.extend(out)
        return out

    def _register(self, rec: TraceRecord):
        doc = self._doc(rec.doc) if rec.doc else None
        if doc is None:
            return
        rnti = recover_rnti(rec.envelope)
        if rnti in self.registry:
            # a fresh MSG4 for a known RNTI means the UE re-attached
            self.registry.release(rnti)
        try:
            self.registry.register_from_msg4(rec.envelope, doc, tti=rec.tti)
        except DuplicateRnti:
            return
        self.stats.registrations += 1

    def run(self, records: Iterable[TraceRecord], end_tti: int | None = None, on_tti: Callable | None = None):
        """Feed a whole trace, including the empty TTIs between records."""
        pending: list[TraceRecord] = []
        current = None
        for rec in records:
            if current is None:
                current = rec.tti
            if rec.tti != current:
                self._advance(current, rec.tti, pending, on_tti)
                pending = []
                current = rec.tti
            pending.append(rec)
        if current is not None:
            last = current if end_tti is None else max(current, end_tti - 1)
            self._advance(current, last + 1, pending, on_tti)

    def _advance(self, tti: int, next_tti: int, pending: list, on_tti: Callable | None):
        self.process_tti(tti, pending)
        if on_tti:
            on_tti(tti)
        for t in range(tti + 1, next_tti):
            self.process_tti(t)
            if on_tti:
                on_tti(t)

    def sample(self, rnti: int) -> TelemetrySample:
        return self.estimator.sample(rnti)


def time_tti(pipeline: ObserverPipeline, tti: int, records: list[TraceRecord]) -> int:
    """Wall-clock nanoseconds to process one TTI."""
    t0 = time.perf_counter_ns()
    pipeline.process_tti(tti, records)
    return time.perf_counter_ns() - t0
