"""Canonical DCI record, bit packing, RNTI-scrambled CRC and grant translation.

Packing is a fixed field order, MSB first, zero-padded to whole bytes::

    format(4) freq_riv(16) time_index(4) mcs(5) ndi(1) rv(2) harq_id(4)
    dai(2) tpc(2) harq_feedback(3) ports(4) srs_request(2) dmrs_id(1) pad(6)

The CRC is CRC-24C (generator 0xB2B117, init 0, unreflected, no final XOR)
over the 56 packed bits, with the RNTI XORed into its 16 low bits.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from fractions import Fraction
from functools import lru_cache

from .allocation import riv_decode, sliv_decode
from .errors import BadLength, EmptyInput, FieldOverflow, NotRntiScrambled, TimeIndexOutOfRange
from .nr import SYMBOLS_PER_SLOT, DciFormat, Direction, McsTable, RntiType
from .rrc import CellCommonConfig, TimeDomainAlloc, UeDedicatedConfig
from .tables import mcs_lookup
from .tbs import ReCountInputs, dmrs_pattern_type_a, dmrs_re_per_prb, grant_tbs

FIELD_WIDTHS = (
    ("format", 4),
    ("freq_riv", 16),
    ("time_index", 4),
    ("mcs", 5),
    ("ndi", 1),
    ("rv", 2),
    ("harq_id", 4),
    ("dai", 2),
    ("tpc", 2),
    ("harq_feedback", 3),
    ("ports", 4),
    ("srs_request", 2),
    ("dmrs_id", 1),
)
PAYLOAD_BITS = sum(w for _, w in FIELD_WIDTHS)  # 50
PACKED_BITS = -(-PAYLOAD_BITS // 8) * 8  # 56
PACKED_BYTES = PACKED_BITS // 8
CRC_BYTES = 3
ENVELOPE_BYTES = PACKED_BYTES + CRC_BYTES

CRC24C_POLY = 0xB2B117
_CRC_MASK = 0xFFFFFF


def _crc_table() -> tuple[int, ...]:
    table = []
    for byte in range(256):
        reg = byte << 16
        for _ in range(8):
            reg = ((reg << 1) ^ CRC24C_POLY) if reg & 0x800000 else (reg << 1)
        table.append(reg & _CRC_MASK)
    return tuple(table)


_CRC_TABLE = _crc_table()


def crc24(data: bytes) -> int:
    """CRC-24C remainder of a byte string."""
    if not data:
        raise EmptyInput("CRC of an empty bit string")
    reg = 0
    for b in data:
        reg = ((reg << 8) & _CRC_MASK) ^ _CRC_TABLE[(reg >> 16) ^ b]
    return reg


@dataclass(frozen=True)
class Dci:
    format: DciFormat
    freq_riv: int = 0
    time_index: int = 0
    mcs: int = 0
    ndi: int = 0
    rv: int = 0
    harq_id: int = 0
    dai: int = 0
    tpc: int = 0
    harq_feedback: int = 0
    ports: int = 0
    srs_request: int = 0
    dmrs_id: int = 0
    # read from the search-space config, not carried in the payload
    aggregation_level: int = field(default=1, compare=False)

    @property
    def direction(self) -> Direction:
        return self.format.direction


def pack_dci(dci: Dci) -> bytes:
    word = 0
    for name, width in FIELD_WIDTHS:
        value = dci.format.code if name == "format" else getattr(dci, name)
        if not 0 <= value < (1 << width):
            raise FieldOverflow(f"{name}={value} does not fit in {width} bits")
        word = (word << width) | value
    word <<= PACKED_BITS - PAYLOAD_BITS
    return word.to_bytes(PACKED_BYTES, "big")


def unpack_dci(bits: bytes, aggregation_level: int = 1) -> Dci:
    if len(bits) != PACKED_BYTES:
        raise BadLength(f"packed DCI is {PACKED_BYTES} bytes, got {len(bits)}")
    word = int.from_bytes(bits, "big") >> (PACKED_BITS - PAYLOAD_BITS)
    values = {}
    for name, width in reversed(FIELD_WIDTHS):
        values[name] = word & ((1 << width) - 1)
        word >>= width
    try:
        fmt = DciFormat.from_code(values.pop("format"))
    except ValueError as exc:
        raise FieldOverflow(str(exc)) from None
    return Dci(format=fmt, aggregation_level=aggregation_level, **values)


@dataclass(frozen=True)
class DciEnvelope:
    payload: bytes
    scrambled_crc: int

    def __post_init__(self):
        if len(self.payload) != PACKED_BYTES:
            raise BadLength(f"envelope payload is {PACKED_BYTES} bytes, got {len(self.payload)}")
        if not 0 <= self.scrambled_crc <= _CRC_MASK:
            raise FieldOverflow(f"scrambled CRC {self.scrambled_crc:#x} exceeds 24 bits")

    def to_bytes(self) -> bytes:
        return self.payload + self.scrambled_crc.to_bytes(CRC_BYTES, "big")

    def hex(self) -> str:
        return self.to_bytes().hex()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "DciEnvelope":
        if len(raw) != ENVELOPE_BYTES:
            raise BadLength(f"envelope is {ENVELOPE_BYTES} bytes, got {len(raw)}")
        return cls(raw[:PACKED_BYTES], int.from_bytes(raw[PACKED_BYTES:], "big"))

    @classmethod
    def from_hex(cls, text: str) -> "DciEnvelope":
        try:
            raw = bytes.fromhex(text)
        except ValueError:
            raise BadLength(f"envelope hex {text!r} is not valid hex") from None
        return cls.from_bytes(raw)


def _check_rnti(rnti: int):
    if not 0 <= rnti <= 0xFFFF:
        raise FieldOverflow(f"RNTI {rnti:#x} exceeds 16 bits")


def build_envelope(dci: Dci | bytes, rnti: int) -> DciEnvelope:
    _check_rnti(rnti)
    payload = pack_dci(dci) if isinstance(dci, Dci) else bytes(dci)
    return DciEnvelope(payload, crc24(payload) ^ rnti)


def recover_rnti(envelope: DciEnvelope) -> int:
    """XOR the recomputed CRC with the received one to expose the RNTI."""
    x = crc24(envelope.payload) ^ envelope.scrambled_crc
    if x >> 16:
        raise NotRntiScrambled(f"CRC residue {x:#08x} has nonzero upper byte")
    return x


def verify_dci(envelope: DciEnvelope, rnti: int) -> bool:
    return (crc24(envelope.payload) ^ rnti) == envelope.scrambled_crc


@dataclass(frozen=True)
class Grant:
    rnti: int
    rnti_type: RntiType
    direction: Direction
    start_prb: int
    num_prb: int
    start_symbol: int
    num_symbols: int
    modulation_order: int
    code_rate: Fraction
    num_layers: int
    tbs_bits: int
    harq_id: int
    ndi: int
    mcs: int
    is_new_data: bool = True

    def __post_init__(self):
        if self.start_symbol + self.num_symbols > SYMBOLS_PER_SLOT:
            raise ValueError(f"symbols {self.start_symbol}+{self.num_symbols} exceed the slot")
        if self.tbs_bits < 0:
            raise ValueError(f"negative TBS {self.tbs_bits}")


def time_domain_list(direction: Direction, cell: CellCommonConfig, ue: UeDedicatedConfig) -> tuple[TimeDomainAlloc, ...]:
    """Dedicated list when configured, else the cell-common one (downlink only)."""
    if direction is Direction.UPLINK:
        return ue.pusch_time_domain_list
    return ue.pdsch_time_domain_list or cell.pdsch_time_domain_list


def dmrs_pattern(direction: Direction, ue: UeDedicatedConfig, start_symbol: int, num_symbols: int) -> str:
    if direction is Direction.DOWNLINK:
        if ue.dmrs_symbol_pattern is not None:
            return ue.dmrs_symbol_pattern
        return dmrs_pattern_type_a(ue.dmrs_typea_position, ue.dmrs_additional_position, start_symbol, num_symbols)
    return dmrs_pattern_type_a(ue.dmrs_typea_position, ue.ul_dmrs_additional_position, start_symbol, num_symbols)


@lru_cache(maxsize=1 << 16)
def cached_grant_tbs(num_prb: int, num_symbols: int, dmrs_re: int, xoh: int, mcs: int, table: McsTable, layers: int, legacy: bool) -> int:
    return grant_tbs(ReCountInputs(num_prb, num_symbols, dmrs_re, xoh), mcs_lookup(mcs, table), layers, legacy)


def dci_to_grant(
    dci: Dci,
    cell: CellCommonConfig,
    ue: UeDedicatedConfig,
    rnti: int,
    rnti_type: RntiType = RntiType.C_RNTI,
    legacy_divisor: bool = False,
) -> Grant:
    """Translate a verified DCI into resources, modulation, rate and TBS.

    Uplink grants use one layer; ``max_mimo_layers`` describes the PDSCH.
    """
    direction = dci.direction
    tdra = time_domain_list(direction, cell, ue)
    if not 0 <= dci.time_index < len(tdra):
        raise TimeIndexOutOfRange(f"time index {dci.time_index} outside a {len(tdra)}-entry list")
    start_symbol, num_symbols = sliv_decode(tdra[dci.time_index].sliv)
    start_prb, num_prb = riv_decode(dci.freq_riv, cell.carrier_bandwidth_prb)
    entry = mcs_lookup(dci.mcs, ue.mcs_table)
    layers = ue.max_mimo_layers if direction is Direction.DOWNLINK else 1
    dmrs_re = dmrs_re_per_prb(dmrs_pattern(direction, ue, start_symbol, num_symbols), start_symbol, num_symbols)
    tbs = cached_grant_tbs(num_prb, num_symbols, dmrs_re, ue.xoverhead, dci.mcs, ue.mcs_table, layers, legacy_divisor)
    return Grant(
        rnti=rnti,
        rnti_type=rnti_type,
        direction=direction,
        start_prb=start_prb,
        num_prb=num_prb,
        start_symbol=start_symbol,
        num_symbols=num_symbols,
        modulation_order=entry.modulation_order,
        code_rate=entry.code_rate,
        num_layers=layers,
        tbs_bits=tbs,
        harq_id=dci.harq_id,
        ndi=dci.ndi,
        mcs=dci.mcs,
    )


def dci_from_listing(sections: dict) -> tuple[Dci, int]:
    """Build a Dci and its RNTI from the ``DCI:`` block of a decoder printout."""
    block = sections.get("DCI", sections)
    ints = {f.name: int(block[f.name], 0) for f in fields(Dci) if f.name not in ("format", "aggregation_level") and f.name in block}
    if "f_alloc" in block:
        ints["freq_riv"] = int(block["f_alloc"], 0)
    if "t_alloc" in block:
        ints["time_index"] = int(block["t_alloc"], 0)
    level = 1 << int(block.get("L", "0"))
    rnti = int(block.get("c-rnti", block.get("rnti", "0")), 0)
    return Dci(format=DciFormat(block["dci"]), aggregation_level=level, **ints), rnti


# --- trace file --------------------------------------------------------------
#
#   # run_id=<hex> seed=<int> [key=value ...]     header, optional
#   tti=<u64> dir=<dl|ul> <20 hex digits> [kind=msg4 doc=<path>]


@dataclass(frozen=True)
class TraceRecord:
    tti: int
    direction: Direction
    envelope: DciEnvelope
    kind: str = "dci"
    doc: str | None = None


def format_trace_line(rec: TraceRecord) -> str:
    line = f"tti={rec.tti} dir={rec.direction.value} {rec.envelope.hex()}"
    if rec.kind != "dci":
        line += f" kind={rec.kind}"
    if rec.doc is not None:
        line += f" doc={rec.doc}"
    return line


def parse_trace_header(line: str) -> dict[str, str]:
    body = line.lstrip("#").split()
    return dict(item.split("=", 1) for item in body if "=" in item)


def parse_trace_line(line: str) -> TraceRecord:
    parts = line.split()
    if len(parts) < 3 or not parts[0].startswith("tti=") or not parts[1].startswith("dir="):
        raise BadLength(f"malformed trace line {line!r}")
    tti = int(parts[0][4:])
    if not 0 <= tti < 1 << 64:
        raise BadLength(f"TTI {tti} is not a u64")
    extra = dict(p.split("=", 1) for p in parts[3:] if "=" in p)
    return TraceRecord(
        tti=tti,
        direction=Direction(parts[1][4:]),
        envelope=DciEnvelope.from_hex(parts[2]),
        kind=extra.get("kind", "dci"),
        doc=extra.get("doc"),
    )
