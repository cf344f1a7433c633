"""Resource indication values: RIV for frequency, SLIV for time."""

from __future__ import annotations

from .errors import NoValidDecode, RivOutOfRange, SlivOutOfRange
from .nr import SYMBOLS_PER_SLOT


def riv_encode(start: int, length: int, bwp_size_prb: int) -> int:
    if length < 1 or start < 0 or start + length > bwp_size_prb:
        raise ValueError(f"({start}, {length}) does not fit a {bwp_size_prb}-PRB BWP")
    if length - 1 <= bwp_size_prb // 2:
        return bwp_size_prb * (length - 1) + start
    return bwp_size_prb * (bwp_size_prb - length + 1) + (bwp_size_prb - 1 - start)


def riv_decode(riv: int, bwp_size_prb: int) -> tuple[int, int]:
    """Return ``(start_prb, num_prb)`` for resource allocation type 1."""
    n = bwp_size_prb
    if n < 1 or not 0 <= riv < n * (n + 1) // 2:
        raise RivOutOfRange(f"RIV {riv} outside [0, {n * (n + 1) // 2}) for a {n}-PRB BWP")
    length, start = divmod(riv, n)
    length += 1
    if start + length > n:
        length = n - length + 2
        start = n - 1 - start
    return start, length


def sliv_encode(start: int, length: int) -> int:
    n = SYMBOLS_PER_SLOT
    if length < 1 or start < 0 or start + length > n:
        raise ValueError(f"({start}, {length}) does not fit a {n}-symbol slot")
    if length - 1 <= 7:
        return n * (length - 1) + start
    return n * (n - length + 1) + (n - 1 - start)


def sliv_decode(sliv: int) -> tuple[int, int]:
    """Return ``(start_symbol, num_symbols)`` for a startSymbolAndLength value."""
    n = SYMBOLS_PER_SLOT
    if not 0 <= sliv < n * n:
        raise SlivOutOfRange(f"SLIV {sliv} outside [0, {n * n})")
    length, start = divmod(sliv, n)
    length += 1
    if start + length > n:
        length = n - length + 2
        start = n - 1 - start
    if length < 1 or start < 0 or start + length > n or sliv_encode(start, length) != sliv:
        raise NoValidDecode(f"SLIV {sliv} encodes no (start, length) pair")
    return start, length
