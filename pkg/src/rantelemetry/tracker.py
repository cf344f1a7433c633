"""Per-UE state learned from MSG4 and HARQ new-data classification."""

from __future__ import annotations

import copy
import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction

from .dci import Dci, DciEnvelope, recover_rnti
from .errors import DuplicateRnti, HarqIdOutOfRange, UnknownRnti
from .nr import MAX_HARQ_PROCESSES, Direction
from .rrc import UeDedicatedConfig, parse_msg4, summary


class DciKind(str, enum.Enum):
    NEW_DATA = "new_data"
    RETRANSMISSION = "retransmission"


@dataclass(frozen=True)
class DciClassification:
    kind: DciKind
    effective_tbs: int


def _unknown_ndi() -> list:
    return [None] * MAX_HARQ_PROCESSES


@dataclass
class UeState:
    crnti: int
    config: UeDedicatedConfig
    # None marks a HARQ process never seen
    harq_ndi: dict[Direction, list] = field(
        default_factory=lambda: {Direction.DOWNLINK: _unknown_ndi(), Direction.UPLINK: _unknown_ndi()}
    )
    last_grant_efficiency: Fraction | None = None
    registered_tti: int | None = None
    last_activity_tti: int | None = None

    def to_dict(self) -> dict:
        return {
            "crnti": f"{self.crnti:#06x}",
            "config": summary(self.config),
            "harq_ndi": {d.value: arr for d, arr in self.harq_ndi.items()},
            "last_grant_efficiency": None if self.last_grant_efficiency is None else float(self.last_grant_efficiency),
            "registered_tti": self.registered_tti,
            "last_activity_tti": self.last_activity_tti,
        }


def classify_dci(
    state: UeState,
    dci: Dci,
    grant_tbs: int,
    num_prb: int | None = None,
    tti: int | None = None,
) -> DciClassification:
    """New data when the NDI toggled or was never seen, else retransmission."""
    if not 0 <= dci.harq_id < min(MAX_HARQ_PROCESSES, state.config.num_harq_processes):
        raise HarqIdOutOfRange(
            f"HARQ id {dci.harq_id} outside the {state.config.num_harq_processes} configured processes"
        )
    slots = state.harq_ndi[dci.direction]
    previous = slots[dci.harq_id]
    slots[dci.harq_id] = dci.ndi
    if tti is not None:
        state.last_activity_tti = tti
    if previous is not None and previous == dci.ndi:
        return DciClassification(DciKind.RETRANSMISSION, 0)
    if dci.direction is Direction.DOWNLINK and num_prb and grant_tbs > 0:
        state.last_grant_efficiency = Fraction(grant_tbs, num_prb)
    return DciClassification(DciKind.NEW_DATA, grant_tbs)


class UeRegistry:
    """Live UEs keyed by C-RNTI. One ingest thread writes; readers take snapshots."""

    def __init__(self):
        self._live: dict[int, UeState] = {}
        self.archived: list[UeState] = []

    def __contains__(self, rnti: int) -> bool:
        return rnti in self._live

    def __len__(self) -> int:
        return len(self._live)

    def get(self, rnti: int) -> UeState:
        try:
            return self._live[rnti]
        except KeyError:
            raise UnknownRnti(f"RNTI {rnti:#06x} is not registered") from None

    def rntis(self) -> list[int]:
        return list(self._live)

    def register(self, rnti: int, config: UeDedicatedConfig, tti: int | None = None) -> UeState:
        if rnti in self._live:
            raise DuplicateRnti(f"RNTI {rnti:#06x} already belongs to a live UE")
        state = UeState(crnti=rnti, config=config, registered_tti=tti, last_activity_tti=tti)
        self._live[rnti] = state
        return state

    def register_from_msg4(
        self,
        envelope: DciEnvelope,
        msg4_doc: str | dict,
        listing: str | dict | None = None,
        tti: int | None = None,
    ) -> UeState:
        """Recover the TC-RNTI from the MSG4 DCI and promote it to C-RNTI."""
        rnti = recover_rnti(envelope)
        config = parse_msg4(msg4_doc, listing)
        return self.register(rnti, config, tti)

    def release(self, rnti: int):
        state = self._live.pop(rnti, None)
        if state is None:
            raise UnknownRnti(f"RNTI {rnti:#06x} is not registered")
        self.archived.append(state)

    def snapshot(self) -> dict[int, UeState]:
        return {r: copy.deepcopy(s) for r, s in list(self._live.items())}

    def dumps(self) -> str:
        return json.dumps([s.to_dict() for s in self.snapshot().values()], indent=2)
