"""Loaders for the embedded MCS and TBS tables.

Both tables ship as JSON data assets. Each file is pinned by its SHA-256 so a
silently edited table fails loudly instead of skewing every TBS downstream.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from importlib import resources

from .errors import ReservedMcs
from .nr import McsTable

MCS_TABLES_SHA256 = "a6ed38df69a646450f836c270870611edc694bc6ab992cd62f716d8c98950395"
TBS_TABLE_SHA256 = "65a2c544163bef01abdbc680d808f4e09dff3acf5294eb967a687889d3907fe4"


class AssetChecksumError(RuntimeError):
    pass


def _load_asset(name: str, expected_sha256: str) -> dict:
    raw = resources.files(__package__).joinpath("data", name).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != expected_sha256:
        raise AssetChecksumError(f"{name}: sha256 {digest} does not match pinned {expected_sha256}")
    return json.loads(raw)


@dataclass(frozen=True)
class McsEntry:
    modulation_order: int
    # x1024 is fractional for two 256QAM rows (682.5, 916.5), so keep it exact
    code_rate_x1024: Fraction

    @property
    def code_rate(self) -> Fraction:
        return self.code_rate_x1024 / 1024


@lru_cache(maxsize=None)
def mcs_tables() -> dict[McsTable, tuple[McsEntry | None, ...]]:
    data = _load_asset("mcs_tables.json", MCS_TABLES_SHA256)
    out = {}
    for table in McsTable:
        rows = []
        for qm, rate in data[table.value]:
            rows.append(None if rate is None else McsEntry(qm, Fraction(rate).limit_denominator(2)))
        out[table] = tuple(rows)
    return out


@lru_cache(maxsize=None)
def tbs_table() -> tuple[int, ...]:
    return tuple(_load_asset("tbs_table.json", TBS_TABLE_SHA256)["tbs"])


def mcs_lookup(mcs: int, table: McsTable | str) -> McsEntry:
    """Modulation order and target code rate for an MCS index."""
    table = McsTable(table)
    if not 0 <= mcs <= 31:
        raise ValueError(f"MCS index {mcs} outside 0..31")
    entry = mcs_tables()[table][mcs]
    if entry is None:
        raise ReservedMcs(f"MCS {mcs} is reserved in the {table.value} table")
    return entry


def sample_text(name: str) -> str:
    """Bundled RRC / grant printouts: ``sib1``, ``msg4`` or ``grant``."""
    return resources.files(__package__).joinpath("data", f"{name}_sample.txt").read_text()
