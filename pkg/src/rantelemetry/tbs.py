"""Transport block size from grant parameters (TS 38.214 5.1.3.2).

All intermediate values stay exact (``Fraction``); floors, ceilings and the
single rounding step are applied only where the procedure calls for them.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .errors import BadPattern, NegativePerPrbRe, NonPositiveNInfo
from .nr import SUBCARRIERS_PER_RB, SYMBOLS_PER_SLOT
from .tables import McsEntry, tbs_table

MAX_RE_PER_PRB = 156
TABLE_LIMIT = 3824
SEGMENT_LOW_RATE = 3816
LEGACY_SEGMENT_LOW_RATE = 3814
SEGMENT_SIZE = 8424


@dataclass(frozen=True)
class ReCountInputs:
    n_prb: int
    num_symbols: int
    dmrs_re_per_prb: int
    overhead: int = 0

    def __post_init__(self):
        if min(self.n_prb, self.num_symbols, self.dmrs_re_per_prb, self.overhead) < 0:
            raise ValueError(f"negative RE count input: {self}")
        if self.num_symbols > SYMBOLS_PER_SLOT:
            raise ValueError(f"num_symbols {self.num_symbols} exceeds {SYMBOLS_PER_SLOT}")


def count_re(inputs: ReCountInputs) -> int:
    """N_RE: per-PRB data REs, capped at 156, times the PRB count."""
    per_prb = SUBCARRIERS_PER_RB * inputs.num_symbols - inputs.dmrs_re_per_prb - inputs.overhead
    if per_prb < 0:
        raise NegativePerPrbRe(f"N'_RE = {per_prb} < 0 for {inputs}")
    return min(MAX_RE_PER_PRB, per_prb) * inputs.n_prb


def _check_pattern(pattern: str):
    if len(pattern) != SYMBOLS_PER_SLOT or set(pattern) - {"0", "1"}:
        raise BadPattern(f"DMRS pattern must be {SYMBOLS_PER_SLOT} binary characters, got {pattern!r}")


def dmrs_re_per_prb(pattern: str, start_symbol: int, num_symbols: int) -> int:
    _check_pattern(pattern)
    return SUBCARRIERS_PER_RB * pattern[start_symbol : start_symbol + num_symbols].count("1")


# single-symbol DMRS positions for mapping type A (TS 38.211 Table 7.4.1.1.2-3),
# keyed by the last symbol of the allocation; l0 is the typeA position
_TYPE_A_POSITIONS = {
    # ld: (pos0, pos1, pos2, pos3) extra symbols after l0
    3: ((), (), (), ()),
    4: ((), (), (), ()),
    5: ((), (), (), ()),
    6: ((), (), (), ()),
    7: ((), (), (), ()),
    8: ((), (7,), (7,), (7,)),
    9: ((), (7,), (7,), (7,)),
    10: ((), (9,), (6, 9), (6, 9)),
    11: ((), (9,), (6, 9), (6, 9)),
    12: ((), (9,), (6, 9), (5, 8, 11)),
    13: ((), (11,), (7, 11), (5, 8, 11)),
    14: ((), (11,), (7, 11), (5, 8, 11)),
}


def dmrs_pattern_type_a(typea_position: int, additional_position: int, start_symbol: int, num_symbols: int) -> str:
    """DMRS symbol bitmap for a mapping-type-A allocation."""
    if typea_position not in (2, 3) or additional_position not in (0, 1, 2, 3):
        raise BadPattern(f"unsupported DMRS config typeA={typea_position} add_pos={additional_position}")
    ld = start_symbol + num_symbols
    if ld not in _TYPE_A_POSITIONS:
        raise BadPattern(f"allocation ending at symbol {ld} has no type A DMRS entry")
    symbols = {typea_position, *_TYPE_A_POSITIONS[ld][additional_position]}
    return "".join("1" if i in symbols else "0" for i in range(SYMBOLS_PER_SLOT))


def compute_n_info(n_re: int, code_rate: Fraction, modulation_order: int, num_layers: int) -> Fraction:
    return Fraction(n_re) * Fraction(code_rate) * modulation_order * num_layers


def _ceil_div(a, b) -> int:
    return -((-a) // b)


def _floor_log2(x: Fraction) -> int:
    k = x.numerator.bit_length() - x.denominator.bit_length()
    return k - 1 if Fraction(2) ** k > x else k


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


@lru_cache(maxsize=65536)
def compute_tbs(n_info: Fraction, code_rate: Fraction, legacy_divisor: bool = False) -> int:
    """Quantize N_info and map it to a TBS.

    ``legacy_divisor`` swaps the low-rate segmentation divisor 3816 for 3814.
    """
    n_info = Fraction(n_info)
    if n_info <= 0:
        raise NonPositiveNInfo(f"N_info must be positive, got {n_info}")
    if n_info <= TABLE_LIMIT:
        n = max(3, _floor_log2(n_info) - 6)
        n_prime = max(24, (2**n) * math.floor(n_info / 2**n))
        table = tbs_table()
        return table[bisect.bisect_left(table, n_prime)]
    x = n_info - 24
    n = _floor_log2(x) - 5
    n_prime = max(3840, (2**n) * _round_half_up(x / 2**n))
    if Fraction(code_rate) <= Fraction(1, 4):
        c = _ceil_div(n_prime + 24, LEGACY_SEGMENT_LOW_RATE if legacy_divisor else SEGMENT_LOW_RATE)
    elif n_prime > SEGMENT_SIZE:
        c = _ceil_div(n_prime + 24, SEGMENT_SIZE)
    else:
        c = 1
    return 8 * c * _ceil_div(n_prime + 24, 8 * c) - 24


def grant_tbs(
    inputs: ReCountInputs,
    mcs: McsEntry,
    num_layers: int = 1,
    legacy_divisor: bool = False,
) -> int:
    """Full chain from a grant to its TBS; an empty grant carries 0 bits."""
    n_re = count_re(inputs)
    if n_re == 0:
        return 0
    n_info = compute_n_info(n_re, mcs.code_rate, mcs.modulation_order, num_layers)
    return compute_tbs(n_info, mcs.code_rate, legacy_divisor)
