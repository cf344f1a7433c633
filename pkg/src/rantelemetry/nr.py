"""NR enumerations and constants shared across modules."""

from __future__ import annotations

from enum import Enum
from fractions import Fraction

SUBCARRIERS_PER_RB = 12
SYMBOLS_PER_SLOT = 14
MAX_HARQ_PROCESSES = 16

SI_RNTI = 0xFFFF
MIN_C_RNTI = 0x0001
MAX_C_RNTI = 0xFFF2


class Direction(str, Enum):
    DOWNLINK = "dl"
    UPLINK = "ul"


class DciFormat(str, Enum):
    F0_0 = "0_0"
    F0_1 = "0_1"
    F1_0 = "1_0"
    F1_1 = "1_1"

    @property
    def code(self) -> int:
        return _FORMAT_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "DciFormat":
        for fmt, c in _FORMAT_CODES.items():
            if c == code:
                return fmt
        raise ValueError(f"unknown DCI format code {code}")

    @property
    def direction(self) -> Direction:
        return Direction.UPLINK if self.value.startswith("0") else Direction.DOWNLINK


_FORMAT_CODES = {DciFormat.F0_0: 0, DciFormat.F0_1: 1, DciFormat.F1_0: 2, DciFormat.F1_1: 3}


class McsTable(str, Enum):
    QAM64 = "qam64"
    QAM256 = "qam256"


class MappingType(str, Enum):
    A = "A"
    B = "B"


class RntiType(str, Enum):
    C_RNTI = "C-RNTI"
    TC_RNTI = "TC-RNTI"
    SI_RNTI = "SI-RNTI"


def tti_duration_ms(subcarrier_spacing_khz: int) -> Fraction:
    """Slot length: 1, 0.5 and 0.25 ms for 15, 30 and 60 kHz."""
    if subcarrier_spacing_khz not in (15, 30, 60):
        raise ValueError(f"unsupported subcarrier spacing {subcarrier_spacing_khz} kHz")
    return Fraction(15, subcarrier_spacing_khz)


def is_valid_c_rnti(value: int) -> bool:
    return MIN_C_RNTI <= value <= MAX_C_RNTI
