"""Deterministic simulated gNB: emits DCI envelopes per TTI plus ground truth.

The scheduler is plain round robin with demand caps. Each TTI follows the TDD
pattern: ``D`` slots carry downlink grants, ``U`` slots uplink grants and
``S`` slots nothing. Every UE attaches with a MSG4 DCI scrambled by its
TC-RNTI, which the observer promotes to the C-RNTI.

Loss injection draws from its own RNG stream, so the ground truth of a run
does not depend on the loss probabilities.
"""

from __future__ import annotations

import bisect
import csv
import hashlib
import json
import random
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .allocation import riv_encode
from .dci import (
    Dci,
    TraceRecord,
    cached_grant_tbs,
    build_envelope,
    dmrs_pattern,
    format_trace_line,
    parse_trace_header,
    parse_trace_line,
    time_domain_list,
)
from .errors import InvalidConfig, MismatchedRuns, ReservedMcs
from .nr import DciFormat, Direction, McsTable, is_valid_c_rnti
from .rrc import CellCommonConfig, UeDedicatedConfig, msg4_document, parse_msg4, parse_sib1
from .tables import mcs_lookup, sample_text
from .tbs import dmrs_re_per_prb

_LOSS_STREAM = 0x5EED_1055
_RV_SEQUENCE = (0, 2, 3, 1)
_SLOT_KINDS = set("DSU")


@dataclass(frozen=True)
class UeSpec:
    rnti: int
    # offered load in bits/s; None means a full buffer
    dl_demand_bps: float | None = None
    ul_demand_bps: float | None = None
    # staircase of (tti, mcs): the MCS holds from its tti until the next step
    mcs_trace: tuple[tuple[int, int], ...] = ((0, 20),)
    ul_mcs_trace: tuple[tuple[int, int], ...] | None = None
    attach_tti: int = 0
    # backlog comes only from Simulator.offer (closed-loop runs)
    driven: bool = False


@dataclass(frozen=True)
class SimConfig:
    seed: int = 1
    duration_tti: int = 2000
    ues: tuple[UeSpec, ...] = (UeSpec(0x4296),)
    carrier_bandwidth_prb: int = 51
    subcarrier_spacing_khz: int = 30
    tdd_pattern: str = "DDDDDDDSUU"
    retransmission_probability: float = 0.0
    dci_loss_probability: float = 0.0
    # defaults to the downlink value
    ul_dci_loss_probability: float | None = None
    mcs_table: McsTable = McsTable.QAM256
    max_mimo_layers: int = 2

    @property
    def ul_loss(self) -> float:
        return self.dci_loss_probability if self.ul_dci_loss_probability is None else self.ul_dci_loss_probability

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mcs_table"] = self.mcs_table.value
        return d

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "SimConfig":
        data = dict(data)
        ues = []
        for u in data.pop("ues", []):
            u = dict(u)
            for key in ("mcs_trace", "ul_mcs_trace"):
                val = u.get(key)
                if isinstance(val, str):
                    path = Path(val) if base_dir is None else Path(base_dir) / val
                    u[key] = load_mcs_trace(path)
                elif val is not None:
                    u[key] = tuple((int(t), int(m)) for t, m in val)
            if isinstance(u.get("rnti"), str):
                u["rnti"] = int(u["rnti"], 0)
            ues.append(UeSpec(**u))
        if "mcs_table" in data:
            data["mcs_table"] = McsTable(data["mcs_table"])
        try:
            return cls(ues=tuple(ues), **data)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from None


def load_mcs_trace(path) -> tuple[tuple[int, int], ...]:
    """Read a ``tti,mcs`` CSV (header optional) into a sorted staircase."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip().lstrip("-").isdigit():
                continue
            rows.append((int(row[0]), int(row[1])))
    if not rows:
        raise InvalidConfig(f"{path}: empty MCS trace")
    return tuple(sorted(rows))


def validate(config: SimConfig):
    for name in ("retransmission_probability", "dci_loss_probability"):
        p = getattr(config, name)
        if not 0.0 <= p <= 1.0:
            raise InvalidConfig(f"{name} {p} outside [0, 1]")
    if not 0.0 <= config.ul_loss <= 1.0:
        raise InvalidConfig(f"ul_dci_loss_probability {config.ul_loss} outside [0, 1]")
    if len(config.tdd_pattern) != 10 or set(config.tdd_pattern) - _SLOT_KINDS:
        raise InvalidConfig(f"TDD pattern {config.tdd_pattern!r} must be 10 slots over D/S/U")
    if config.carrier_bandwidth_prb < 1 or config.carrier_bandwidth_prb > 275:
        raise InvalidConfig(f"carrier bandwidth {config.carrier_bandwidth_prb} PRBs")
    if config.subcarrier_spacing_khz not in (15, 30, 60):
        raise InvalidConfig(f"subcarrier spacing {config.subcarrier_spacing_khz} kHz")
    if config.duration_tti < 0:
        raise InvalidConfig("negative duration")
    if config.max_mimo_layers < 1:
        raise InvalidConfig("max_mimo_layers must be >= 1")
    seen = set()
    for ue in config.ues:
        if not is_valid_c_rnti(ue.rnti):
            raise InvalidConfig(f"RNTI {ue.rnti:#06x} outside the C-RNTI range")
        if ue.rnti in seen:
            raise InvalidConfig(f"duplicate RNTI {ue.rnti:#06x}")
        seen.add(ue.rnti)
        if ue.attach_tti < 0:
            raise InvalidConfig("negative attach_tti")
        for trace in (ue.mcs_trace, ue.ul_mcs_trace or ()):
            if not trace and trace is ue.mcs_trace:
                raise InvalidConfig(f"UE {ue.rnti:#06x} has an empty MCS trace")
            for _, mcs in trace:
                try:
                    mcs_lookup(mcs, config.mcs_table)
                except (ValueError, ReservedMcs) as exc:
                    raise InvalidConfig(f"UE {ue.rnti:#06x}: {exc}") from None
        for rate in (ue.dl_demand_bps, ue.ul_demand_bps):
            if rate is not None and rate < 0:
                raise InvalidConfig("negative demand")


def run_id_for(config: SimConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def sim_cell(config: SimConfig) -> CellCommonConfig:
    return replace(
        parse_sib1(sample_text("sib1")),
        carrier_bandwidth_prb=config.carrier_bandwidth_prb,
        subcarrier_spacing_khz=config.subcarrier_spacing_khz,
    )


def sim_ue_document(config: SimConfig) -> str:
    """MSG4 document every simulated UE receives (JSON text)."""
    base = parse_msg4(sample_text("msg4"), sample_text("grant"))
    # the bitmap override has no RRC field; the table position reproduces it
    base = base.replace(dmrs_symbol_pattern=None, mcs_table=config.mcs_table, max_mimo_layers=config.max_mimo_layers)
    return json.dumps(msg4_document(base), indent=1, sort_keys=True)


@dataclass
class _Process:
    ndi: int = 0
    pending: bool = False
    num_prb: int = 0
    mcs: int = 0
    time_index: int = 0
    tbs: int = 0
    tx_count: int = 0


@dataclass
class _UeRun:
    spec: UeSpec
    procs: dict = field(default_factory=dict)
    pointer: dict = field(default_factory=dict)
    backlog: dict = field(default_factory=dict)
    msg4_tti: int | None = None


@dataclass
class SimResult:
    config: SimConfig
    run_id: str
    trace: list[TraceRecord]
    ground_truth: list[dict]
    docs: dict[str, str]

    @property
    def header(self) -> dict[str, str]:
        c = self.config
        return {
            "run_id": self.run_id,
            "seed": str(c.seed),
            "tdd": c.tdd_pattern,
            "bw": str(c.carrier_bandwidth_prb),
            "scs": str(c.subcarrier_spacing_khz),
        }

    def trace_text(self) -> str:
        head = "# " + " ".join(f"{k}={v}" for k, v in self.header.items())
        return "\n".join([head] + [format_trace_line(r) for r in self.trace]) + "\n"

    def ground_truth_text(self) -> str:
        meta = json.dumps({"type": "header", **self.header, "config": self.config.to_dict()}, sort_keys=True)
        lines = [meta] + [json.dumps(e, sort_keys=True) for e in self.ground_truth]
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"trace": out / "trace.txt", "ground_truth": out / "ground_truth.jsonl"}
        paths["trace"].write_text(self.trace_text())
        paths["ground_truth"].write_text(self.ground_truth_text())
        for name, text in self.docs.items():
            (out / name).write_text(text)
        return paths


class Simulator:
    def __init__(self, config: SimConfig):
        validate(config)
        self.config = config
        self.cell = sim_cell(config)
        self.doc_name = "msg4_ue.json"
        self.doc_text = sim_ue_document(config)
        self.ue_config: UeDedicatedConfig = parse_msg4(self.doc_text)
        self.rng = random.Random(config.seed)
        self.loss_rng = random.Random(config.seed ^ _LOSS_STREAM)
        self.tti_s = Fraction(self.cell.tti_duration_ms) / 1000
        self.ues = [_UeRun(spec) for spec in sorted(config.ues, key=lambda u: u.rnti)]
        for ue in self.ues:
            for d in Direction:
                ue.procs[d] = [_Process(ndi=1) for _ in range(self.ue_config.num_harq_processes)]
                ue.pointer[d] = 0
                ue.backlog[d] = Fraction(0)
        self._rr = 0
        self._dmrs_cache: dict = {}

    # --- helpers --------------------------------------------------------------

    def _mcs(self, ue: _UeRun, direction: Direction, tti: int) -> int:
        trace = ue.spec.mcs_trace
        if direction is Direction.UPLINK and ue.spec.ul_mcs_trace:
            trace = ue.spec.ul_mcs_trace
        i = bisect.bisect_right(trace, (tti, 99)) - 1
        return trace[max(i, 0)][1]

    def _demand(self, ue: _UeRun, direction: Direction) -> float | None:
        return ue.spec.dl_demand_bps if direction is Direction.DOWNLINK else ue.spec.ul_demand_bps

    def _full_buffer(self, ue: _UeRun, direction: Direction) -> bool:
        return not ue.spec.driven and self._demand(ue, direction) is None

    def tbs(self, direction: Direction, num_prb: int, mcs: int, time_index: int) -> int:
        key = (direction, time_index)
        if key not in self._dmrs_cache:
            s, l = time_domain_list(direction, self.cell, self.ue_config)[time_index].start_and_length
            pat = dmrs_pattern(direction, self.ue_config, s, l)
            self._dmrs_cache[key] = (l, dmrs_re_per_prb(pat, s, l))
        length, dmrs = self._dmrs_cache[key]
        layers = self.ue_config.max_mimo_layers if direction is Direction.DOWNLINK else 1
        return cached_grant_tbs(num_prb, length, dmrs, self.ue_config.xoverhead, mcs, self.ue_config.mcs_table, layers, False)

    def _prbs_needed(self, direction, backlog, mcs, time_index, limit) -> int:
        lo, hi = 1, limit
        if self.tbs(direction, hi, mcs, time_index) <= backlog:
            return hi
        while lo < hi:
            mid = (lo + hi) // 2
            if self.tbs(direction, mid, mcs, time_index) >= backlog:
                hi = mid
            else:
                lo = mid + 1
        return lo

    # --- main loop -----------------------------------------------------------

    def run(self) -> SimResult:
        trace: list[TraceRecord] = []
        truth: list[dict] = []
        for tti in range(self.config.duration_tti):
            self.step(tti, trace, truth)
        return SimResult(self.config, run_id_for(self.config), trace, truth, {self.doc_name: self.doc_text})

    def offer(self, rnti: int, direction: Direction, bits) -> None:
        for ue in self.ues:
            if ue.spec.rnti == rnti:
                ue.backlog[direction] += Fraction(bits)
                return
        raise InvalidConfig(f"no simulated UE {rnti:#06x}")

    def backlog(self, rnti: int, direction: Direction = Direction.DOWNLINK) -> Fraction:
        for ue in self.ues:
            if ue.spec.rnti == rnti:
                return ue.backlog[direction]
        raise InvalidConfig(f"no simulated UE {rnti:#06x}")

    def step(self, tti: int, trace: list, truth: list):
        """Schedule one TTI, appending observer records and ground truth."""
        cfg = self.config
        slot = cfg.tdd_pattern[tti % len(cfg.tdd_pattern)]
        for ue in self.ues:
            if ue.msg4_tti is not None and not ue.spec.driven:
                for d in Direction:
                    rate = self._demand(ue, d)
                    if rate is not None:
                        ue.backlog[d] += Fraction(rate) * self.tti_s
        if slot == "S":
            return
        direction = Direction.DOWNLINK if slot == "D" else Direction.UPLINK
        pool = cfg.carrier_bandwidth_prb
        if direction is Direction.DOWNLINK:
            pool -= self._attach(tti, trace, truth)
        self._schedule(tti, direction, pool, trace, truth)

    def _attach(self, tti: int, trace: list, truth: list) -> int:
        """Send MSG4 to UEs due to attach; returns PRBs the MSG4 grants use."""
        used = 0
        for ue in self.ues:
            if ue.msg4_tti is not None or ue.spec.attach_tti > tti:
                continue
            num_prb = 4
            if used + num_prb > self.config.carrier_bandwidth_prb:
                break
            dci = Dci(format=DciFormat.F1_0, freq_riv=riv_encode(used, num_prb, self.config.carrier_bandwidth_prb))
            env = build_envelope(dci, ue.spec.rnti)
            trace.append(TraceRecord(tti, Direction.DOWNLINK, env, kind="msg4", doc=self.doc_name))
            truth.append(
                {
                    "tti": tti,
                    "rnti": ue.spec.rnti,
                    "dir": "dl",
                    "kind": "msg4",
                    "start_prb": used,
                    "num_prb": num_prb,
                }
            )
            ue.msg4_tti = tti
            used += num_prb
        return used

    def _schedule(self, tti: int, direction: Direction, pool: int, trace: list, truth: list):
        cfg = self.config
        ready = [u for u in self.ues if u.msg4_tti is not None and u.msg4_tti < tti]
        if not ready:
            return
        k = self._rr % len(ready)
        order = ready[k:] + ready[:k]
        self._rr += 1
        tdra_len = len(time_domain_list(direction, self.cell, self.ue_config))

        allocations = []  # (ue, proc_id, num_prb, is_retx)
        candidates = []
        for ue in order:
            pid = ue.pointer[direction]
            proc = ue.procs[direction][pid]
            if proc.pending:
                if proc.num_prb <= pool:
                    allocations.append((ue, pid, proc.num_prb, True))
                    pool -= proc.num_prb
                continue
            if not self._full_buffer(ue, direction) and ue.backlog[direction] <= 0:
                continue
            mcs = self._mcs(ue, direction, tti)
            time_index = self.rng.randrange(tdra_len)
            candidates.append((ue, pid, mcs, time_index))

        needs = []
        for ue, pid, mcs, ti in candidates:
            if self._full_buffer(ue, direction) or pool == 0:
                need = pool
            else:
                need = self._prbs_needed(direction, ue.backlog[direction], mcs, ti, pool)
            needs.append(need)
        ranked = sorted(range(len(candidates)), key=lambda i: needs[i])
        remaining = pool
        for n_left, i in zip(range(len(ranked), 0, -1), ranked):
            give = min(needs[i], remaining // n_left)
            if give < 1:
                continue
            ue, pid, mcs, ti = candidates[i]
            proc = ue.procs[direction][pid]
            proc.ndi ^= 1
            proc.num_prb, proc.mcs, proc.time_index = give, mcs, ti
            proc.tbs = self.tbs(direction, give, mcs, ti)
            proc.tx_count = 0
            ue.backlog[direction] = max(Fraction(0), ue.backlog[direction] - proc.tbs)
            allocations.append((ue, pid, give, False))
            remaining -= give

        # contiguous placement in the scheduling order
        allocations.sort(key=lambda a: order.index(a[0]))
        start = 0
        fmt = DciFormat.F1_1 if direction is Direction.DOWNLINK else DciFormat.F0_1
        candidates_by_level = [lvl for lvl, n in self.ue_config.aggregation_level_candidates if n > 0] or [1]
        for ue, pid, num_prb, is_retx in allocations:
            proc = ue.procs[direction][pid]
            dci = Dci(
                format=fmt,
                freq_riv=riv_encode(start, num_prb, cfg.carrier_bandwidth_prb),
                time_index=proc.time_index,
                mcs=proc.mcs,
                ndi=proc.ndi,
                rv=_RV_SEQUENCE[proc.tx_count % 4],
                harq_id=pid,
                dai=self.rng.randrange(4),
                tpc=1,
                harq_feedback=self.rng.randrange(8),
                ports=self.rng.randrange(16),
                srs_request=0,
                dmrs_id=self.rng.randrange(2),
                aggregation_level=self.rng.choice(candidates_by_level),
            )
            env = build_envelope(dci, ue.spec.rnti)
            loss_p = cfg.dci_loss_probability if direction is Direction.DOWNLINK else cfg.ul_loss
            lost = self.loss_rng.random() < loss_p
            if not lost:
                trace.append(TraceRecord(tti, direction, env))
            truth.append(
                {
                    "tti": tti,
                    "rnti": ue.spec.rnti,
                    "dir": direction.value,
                    "kind": "dci",
                    "format": fmt.value,
                    "freq_riv": dci.freq_riv,
                    "time_index": dci.time_index,
                    "mcs": dci.mcs,
                    "ndi": dci.ndi,
                    "rv": dci.rv,
                    "harq_id": pid,
                    "start_prb": start,
                    "num_prb": num_prb,
                    "tbs": proc.tbs,
                    "is_retransmission": is_retx,
                    "observer_dropped": lost,
                }
            )
            start += num_prb
            proc.tx_count += 1
            proc.pending = self.rng.random() < cfg.retransmission_probability
            ue.pointer[direction] = (pid + 1) % len(ue.procs[direction])


def run(config: SimConfig) -> SimResult:
    return Simulator(config).run()


# --- reading artifacts back ----------------------------------------------------


@dataclass
class TraceFile:
    header: dict[str, str]
    records: list[TraceRecord]


def read_trace(lines: Iterable[str]) -> TraceFile:
    header: dict[str, str] = {}
    records = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            header.update(parse_trace_header(line))
            continue
        records.append(parse_trace_line(line))
    return TraceFile(header, records)


def read_ground_truth(lines: Iterable[str]) -> tuple[dict, list[dict]]:
    header: dict = {}
    entries = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        if obj.get("type") == "header":
            header = obj
        else:
            entries.append(obj)
    return header, entries


# --- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class ObservedDci:
    tti: int
    rnti: int
    direction: Direction
    num_prb: int
    effective_tbs: int = 0


@dataclass
class MissReport:
    per_ue: dict[int, dict[str, float]]
    miss_rate: dict[str, float]
    counts: dict[str, int]
    # one absolute error per ground-truth or observed (tti, ue, direction) entry
    prb_errors: list[int]

    @property
    def prb_error_mean(self) -> float:
        return sum(self.prb_errors) / len(self.prb_errors) if self.prb_errors else 0.0

    def to_dict(self) -> dict:
        return {
            "miss_rate": self.miss_rate,
            "counts": self.counts,
            "prb_error_mean": self.prb_error_mean,
            "prb_error_max": max(self.prb_errors, default=0),
            "per_ue": {f"{r:#06x}": v for r, v in self.per_ue.items()},
        }


def match_traces(
    observed: Iterable[ObservedDci],
    ground_truth: Iterable[dict],
    observer_run_id: str | None = None,
    truth_run_id: str | None = None,
) -> MissReport:
    """Match decoded DCIs to ground truth by (tti, rnti, direction)."""
    if observer_run_id is not None and truth_run_id is not None and observer_run_id != truth_run_id:
        raise MismatchedRuns(f"observer run {observer_run_id} vs ground truth {truth_run_id}")
    seen = {(o.tti, o.rnti, o.direction.value): o for o in observed}
    per_ue: dict[int, dict[str, list[int]]] = {}
    prb_errors = []
    matched = set()
    for e in ground_truth:
        if e.get("kind", "dci") != "dci":
            continue
        key = (e["tti"], e["rnti"], e["dir"])
        stats = per_ue.setdefault(e["rnti"], {"dl": [0, 0], "ul": [0, 0]})[e["dir"]]
        stats[0] += 1
        obs = seen.get(key)
        if obs is None:
            stats[1] += 1
            prb_errors.append(e["num_prb"])
        else:
            matched.add(key)
            prb_errors.append(abs(obs.num_prb - e["num_prb"]))
    for key, obs in seen.items():
        if key not in matched:
            prb_errors.append(obs.num_prb)
    totals = {"dl": [0, 0], "ul": [0, 0]}
    rates = {}
    for rnti, dirs in per_ue.items():
        rates[rnti] = {}
        for d, (n, miss) in dirs.items():
            totals[d][0] += n
            totals[d][1] += miss
            rates[rnti][d] = miss / n if n else 0.0
    return MissReport(
        per_ue=rates,
        miss_rate={d: (m / n if n else 0.0) for d, (n, m) in totals.items()},
        counts={f"{d}_total": n for d, (n, _) in totals.items()} | {f"{d}_missed": m for d, (_, m) in totals.items()},
        prb_errors=prb_errors,
    )
