"""Per-UE allocated bitrate over a sliding window and fair-share spare bitrate.

Each TTI the estimator receives the effective TBS and PRB count of every
decoded downlink grant. A telemetry sample for a UE is the pair
``(b_alloc, b_spare)``: bits delivered in the last window per second, and
what the UE would get if the unused PRBs were split evenly and run at the
UE's most recent bits-per-PRB.
"""

from __future__ import annotations

import csv
import math
import threading
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .dci import dmrs_pattern, time_domain_list
from .errors import NonMonotonicTti, UnknownRnti
from .nr import Direction
from .rrc import CellCommonConfig, UeDedicatedConfig
from .tables import mcs_lookup
from .tbs import ReCountInputs, dmrs_re_per_prb, grant_tbs
from .tracker import UeRegistry

U32_MAX = 2**32 - 1
DEFAULT_WINDOW_MS = 100
CSV_COLUMNS = ("tti", "rnti", "b_alloc", "b_spare", "used_prb", "spare_prb")


@dataclass(frozen=True)
class UeTtiGrant:
    rnti: int
    effective_tbs: int
    num_prb: int


@dataclass(frozen=True)
class TtiRecord:
    tti_index: int
    # PRBs that could carry downlink data this TTI (0 in uplink/special slots)
    capacity_prb: int
    grants: tuple[UeTtiGrant, ...] = ()

    def __post_init__(self):
        if not 0 <= self.tti_index < 2**64:
            raise ValueError(f"TTI index {self.tti_index} is not a u64")

    @property
    def used_prb_total(self) -> int:
        return sum(g.num_prb for g in self.grants)

    @property
    def spare_prb(self) -> int:
        return max(0, self.capacity_prb - self.used_prb_total)


@dataclass(frozen=True)
class TelemetrySample:
    tti_index: int
    b_alloc: int
    b_spare: int


def saturate_u32(value) -> int:
    return min(U32_MAX, max(0, math.floor(value)))


def default_efficiency(cell: CellCommonConfig, ue: UeDedicatedConfig) -> Fraction:
    """Bits per PRB per TTI at MCS 0 on one PRB: the no-history floor."""
    tdra = time_domain_list(Direction.DOWNLINK, cell, ue)
    start, length = tdra[0].start_and_length if tdra else (0, 14)
    dmrs = dmrs_re_per_prb(dmrs_pattern(Direction.DOWNLINK, ue, start, length), start, length)
    tbs = grant_tbs(ReCountInputs(1, length, dmrs, ue.xoverhead), mcs_lookup(0, ue.mcs_table), ue.max_mimo_layers)
    return Fraction(tbs)


@dataclass
class _Window:
    entries: deque = field(default_factory=deque)
    total: int = 0


class CapacityEstimator:
    """Sliding-window rate tracker. ``record_tti`` is the single writer."""

    def __init__(
        self,
        cell: CellCommonConfig,
        registry: UeRegistry,
        window_ms: float = DEFAULT_WINDOW_MS,
        fair_share: str = "active",
    ):
        if fair_share not in ("active", "connected"):
            raise ValueError(f"fair_share must be 'active' or 'connected', got {fair_share!r}")
        self.cell = cell
        self.registry = registry
        self.tti_ms = cell.tti_duration_ms
        self.window_tti = int(Fraction(window_ms) / self.tti_ms)
        if self.window_tti < 1:
            raise ValueError(f"window {window_ms} ms is shorter than one TTI")
        self.window_s = self.window_tti * self.tti_ms / 1000
        self.fair_share = fair_share
        self._windows: dict[int, _Window] = {}
        self._last_seen: dict[int, int] = {}
        self._efficiency_floor: dict[int, Fraction] = {}
        self._last_tti: int | None = None
        self._last_record: TtiRecord | None = None
        self._last_dl_record: TtiRecord | None = None
        self._lock = threading.Lock()

    @property
    def last_record(self) -> TtiRecord | None:
        return self._last_record

    def _check_registered(self, rnti: int):
        if rnti not in self.registry:
            raise UnknownRnti(f"RNTI {rnti:#06x} is not registered")

    def record_tti(self, record: TtiRecord):
        with self._lock:
            if self._last_tti is not None and record.tti_index <= self._last_tti:
                raise NonMonotonicTti(f"TTI {record.tti_index} after {self._last_tti}")
            now = record.tti_index
            for g in record.grants:
                win = self._windows.setdefault(g.rnti, _Window())
                if g.effective_tbs:
                    win.entries.append((now, g.effective_tbs))
                    win.total += g.effective_tbs
                self._last_seen[g.rnti] = now
            horizon = now - self.window_tti
            for win in self._windows.values():
                while win.entries and win.entries[0][0] <= horizon:
                    win.total -= win.entries.popleft()[1]
            self._last_tti = now
            self._last_record = record
            if record.capacity_prb > 0:
                self._last_dl_record = record

    def allocated_rate(self, rnti: int, now_tti: int | None = None) -> Fraction:
        self._check_registered(rnti)
        with self._lock:
            win = self._windows.get(rnti)
            if win is None:
                return Fraction(0)
            if now_tti is None or now_tti == self._last_tti:
                bits = win.total
            else:
                lo = now_tti - self.window_tti
                bits = sum(b for t, b in win.entries if lo < t <= now_tti)
            return bits / self.window_s

    def active_ues(self, now_tti: int | None = None) -> list[int]:
        live = self.registry.rntis()
        if self.fair_share == "connected":
            return live
        now = self._last_tti if now_tti is None else now_tti
        if now is None:
            return live
        out = []
        for rnti in live:
            state = self.registry.get(rnti)
            seen = max(
                (t for t in (self._last_seen.get(rnti), state.registered_tti, state.last_activity_tti) if t is not None),
                default=None,
            )
            # UEs registered without a TTI stamp count as active
            if seen is None or seen > now - self.window_tti:
                out.append(rnti)
        return out

    def efficiency(self, rnti: int) -> Fraction:
        state = self.registry.get(rnti)
        if state.last_grant_efficiency is not None:
            return state.last_grant_efficiency
        floor = self._efficiency_floor.get(rnti)
        if floor is None:
            floor = self._efficiency_floor[rnti] = default_efficiency(self.cell, state.config)
        return floor

    def fair_prb(self, record: TtiRecord, num_active: int) -> int:
        return record.spare_prb // num_active if num_active else 0

    def spare_rate(self, rnti: int, tti_record: TtiRecord | None = None) -> Fraction:
        self._check_registered(rnti)
        # between downlink slots the last downlink-capable TTI stands
        record = tti_record or self._last_dl_record or self._last_record
        if record is None:
            return Fraction(0)
        active = self.active_ues(record.tti_index)
        n = max(1, len(active) + (rnti not in active))
        fair = self.fair_prb(record, n)
        return fair * self.efficiency(rnti) * 1000 / self.tti_ms

    def sample(self, rnti: int, now_tti: int | None = None) -> TelemetrySample:
        now = self._last_tti if now_tti is None else now_tti
        return TelemetrySample(
            tti_index=now or 0,
            b_alloc=saturate_u32(self.allocated_rate(rnti, now_tti)),
            b_spare=saturate_u32(self.spare_rate(rnti)),
        )


def write_csv(path, rows: Iterable[tuple]):
    """Rows are ``(tti, rnti, b_alloc, b_spare, used_prb, spare_prb)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow(row)
