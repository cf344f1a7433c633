"""Typed cell-common (SIB1) and UE-dedicated (MSG4 / RRCSetup) configuration.

Parsers take the JSON-like dump text printed by RRC decoders and return frozen
records. Keys the toolkit never consumes are kept verbatim in ``extras``,
addressed by their ``/``-joined path, so :func:`sib1_document` and
:func:`msg4_document` can write an equivalent document back out.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable

from . import docparse
from .allocation import sliv_decode
from .errors import InvalidValue, MalformedDocument, MissingField, NoValidDecode, SlivOutOfRange
from .nr import DciFormat, MappingType, McsTable, tti_duration_ms

AGGREGATION_LEVELS = (1, 2, 4, 8, 16)

_SCS_TOKENS = {"kHz15": 15, "kHz30": 30, "kHz60": 60}
_HARQ_TOKENS = {"n2": 2, "n4": 4, "n6": 6, "n8": 8, "n10": 10, "n12": 12, "n16": 16}
_DMRS_POS_TOKENS = {"pos0": 0, "pos1": 1, "pos2": 2, "pos3": 3}
_MAPPING_TOKENS = {"typeA": MappingType.A, "typeB": MappingType.B}
_MCS_TABLE_TOKENS = {"qam64": McsTable.QAM64, "qam256": McsTable.QAM256}
_XOH_TOKENS = {"xOh0": 0, "xOh6": 6, "xOh12": 12, "xOh18": 18}
_CANDIDATE_TOKENS = {f"n{i}": i for i in range(9)}
_DCI_FORMAT_TOKENS = {
    "formats0-0-And-1-0": (DciFormat.F0_0, DciFormat.F1_0),
    "formats0-1-And-1-1": (DciFormat.F0_1, DciFormat.F1_1),
}

# defaults 38.331 applies when the optional field is absent
DEFAULT_DMRS_ADDITIONAL_POSITION = 2
DEFAULT_DMRS_TYPEA_POSITION = 2
DEFAULT_NUM_HARQ = 8


def _token(table: dict, value: Any, what: str):
    try:
        return table[value]
    except (KeyError, TypeError):
        raise InvalidValue(f"unknown {what} token {value!r}") from None


def _reverse(table: dict, value: Any):
    for k, v in table.items():
        if v == value:
            return k
    raise InvalidValue(f"no token for {value!r}")


@dataclass(frozen=True)
class TimeDomainAlloc:
    k0_or_k2: int
    mapping_type: MappingType
    sliv: int

    def __post_init__(self):
        try:
            sliv_decode(self.sliv)
        except (SlivOutOfRange, NoValidDecode) as exc:
            raise InvalidValue(str(exc)) from None

    @property
    def start_and_length(self) -> tuple[int, int]:
        return sliv_decode(self.sliv)


@dataclass(frozen=True)
class SearchSpaceConfig:
    id: int
    coreset_id: int
    monitoring_symbols: str
    aggregation_candidates: tuple[tuple[int, int], ...]
    search_space_type: str
    dci_formats: tuple[DciFormat, ...] = ()

    def __post_init__(self):
        pat = self.monitoring_symbols
        if len(pat) != 14 or set(pat) - {"0", "1"}:
            raise InvalidValue(f"monitoring pattern {pat!r} is not a 14-symbol bitmap")

    @property
    def candidates(self) -> dict[int, int]:
        return dict(self.aggregation_candidates)


@dataclass(frozen=True)
class CellCommonConfig:
    band: int
    carrier_bandwidth_prb: int
    subcarrier_spacing_khz: int
    coreset0_index: int | None = None
    common_search_spaces: tuple[SearchSpaceConfig, ...] = ()
    pdsch_time_domain_list: tuple[TimeDomainAlloc, ...] = ()
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.carrier_bandwidth_prb <= 0:
            raise InvalidValue(f"carrier bandwidth must be positive, got {self.carrier_bandwidth_prb}")
        if self.subcarrier_spacing_khz not in (15, 30, 60):
            raise InvalidValue(f"unsupported subcarrier spacing {self.subcarrier_spacing_khz} kHz")

    @property
    def tti_duration_ms(self) -> Fraction:
        return tti_duration_ms(self.subcarrier_spacing_khz)


@dataclass(frozen=True)
class UeDedicatedConfig:
    coreset_id: int = 1
    coreset_duration_symbols: int = 1
    aggregation_level_candidates: tuple[tuple[int, int], ...] = tuple((lvl, 0) for lvl in AGGREGATION_LEVELS)
    dci_formats: tuple[DciFormat, ...] = (DciFormat.F0_1, DciFormat.F1_1)
    dmrs_additional_position: int = DEFAULT_DMRS_ADDITIONAL_POSITION
    dmrs_typea_position: int = DEFAULT_DMRS_TYPEA_POSITION
    # reserved-RE symbol bitmap reported by the decoder, overrides the table lookup
    dmrs_symbol_pattern: str | None = None
    pdsch_time_domain_list: tuple[TimeDomainAlloc, ...] = ()
    pusch_time_domain_list: tuple[TimeDomainAlloc, ...] = ()
    ul_dmrs_additional_position: int = DEFAULT_DMRS_ADDITIONAL_POSITION
    max_mimo_layers: int = 1
    num_harq_processes: int = DEFAULT_NUM_HARQ
    mcs_table: McsTable = McsTable.QAM64
    xoverhead: int = 0
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= self.num_harq_processes <= 16:
            raise InvalidValue(f"num_harq_processes {self.num_harq_processes} outside [1, 16]")
        if self.max_mimo_layers < 1:
            raise InvalidValue(f"max_mimo_layers must be >= 1, got {self.max_mimo_layers}")
        if self.xoverhead < 0:
            raise InvalidValue(f"xoverhead must be >= 0, got {self.xoverhead}")
        pat = self.dmrs_symbol_pattern
        if pat is not None and (len(pat) != 14 or set(pat) - {"0", "1"}):
            raise InvalidValue(f"DMRS symbol pattern {pat!r} is not a 14-symbol bitmap")

    @property
    def candidates(self) -> dict[int, int]:
        return dict(self.aggregation_level_candidates)

    def replace(self, **changes) -> "UeDedicatedConfig":
        return dataclasses.replace(self, **changes)


class _Node:
    """A dict from the document tree plus the keys consumed from it."""

    def __init__(self, value: Any, path: tuple[str, ...], extras: dict[str, Any] | None):
        if not isinstance(value, dict):
            raise InvalidValue(f"{'/'.join(path) or 'document'} must be an object")
        self.value = value
        self.path = path
        self.extras = extras
        self.used: set[str] = set()

    def get(self, key: str, default: Any = None) -> Any:
        self.used.add(key)
        return self.value.get(key, default)

    def require(self, key: str) -> Any:
        self.used.add(key)
        if key not in self.value:
            raise MissingField("/".join(self.path + (key,)))
        return self.value[key]

    def child(self, key: str, required: bool = True) -> "_Node | None":
        val = self.require(key) if required else self.get(key)
        if val is None:
            return None
        return _Node(val, self.path + (key,), self.extras)

    def done(self):
        if self.extras is None:
            return
        for k, v in self.value.items():
            if k not in self.used:
                self.extras["/".join(self.path + (k,))] = v


def _int(value: Any, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidValue(f"{what} must be an integer, got {value!r}")
    return value


def _first(value: Any, what: str) -> Any:
    if not isinstance(value, list) or not value:
        raise InvalidValue(f"{what} must be a non-empty list")
    return value[0]


def _load(document: str | dict) -> Any:
    if isinstance(document, (dict, list)):
        return document
    if not isinstance(document, str):
        raise MalformedDocument(f"expected document text, got {type(document).__name__}")
    return docparse.loads(document)


def _time_domain_list(items: Any, delay_key: str, what: str) -> tuple[TimeDomainAlloc, ...]:
    if not isinstance(items, list):
        raise InvalidValue(f"{what} must be a list")
    out = []
    for item in items:
        if not isinstance(item, dict):
            raise InvalidValue(f"{what} entries must be objects")
        if "startSymbolAndLength" not in item:
            raise MissingField(f"{what}/startSymbolAndLength")
        out.append(
            TimeDomainAlloc(
                k0_or_k2=_int(item.get(delay_key, 0), delay_key),
                mapping_type=_token(_MAPPING_TOKENS, item.get("mappingType", "typeA"), "mappingType"),
                sliv=_int(item["startSymbolAndLength"], "startSymbolAndLength"),
            )
        )
    return tuple(out)


def _search_space(item: Any) -> SearchSpaceConfig:
    if not isinstance(item, dict):
        raise InvalidValue("search space entries must be objects")
    for key in ("searchSpaceId", "controlResourceSetId", "nrofCandidates", "searchSpaceType"):
        if key not in item:
            raise MissingField(f"searchSpace/{key}")
    cand = item["nrofCandidates"]
    if not isinstance(cand, dict):
        raise InvalidValue("nrofCandidates must be an object")
    candidates = tuple(
        (lvl, _token(_CANDIDATE_TOKENS, cand.get(f"aggregationLevel{lvl}", "n0"), "nrofCandidates"))
        for lvl in AGGREGATION_LEVELS
    )
    sst = item["searchSpaceType"]
    if not isinstance(sst, dict) or len(sst) != 1:
        raise InvalidValue("searchSpaceType must hold exactly one of common / ue-Specific")
    kind, body = next(iter(sst.items()))
    if kind == "common":
        formats = (DciFormat.F0_0, DciFormat.F1_0) if "dci-Format0-0-AndFormat1-0" in (body or {}) else ()
    elif kind == "ue-Specific":
        formats = _token(_DCI_FORMAT_TOKENS, (body or {}).get("dci-Formats"), "dci-Formats")
    else:
        raise InvalidValue(f"unknown searchSpaceType {kind!r}")
    return SearchSpaceConfig(
        id=_int(item["searchSpaceId"], "searchSpaceId"),
        coreset_id=_int(item["controlResourceSetId"], "controlResourceSetId"),
        monitoring_symbols=str(item.get("monitoringSymbolsWithinSlot", "10000000000000")),
        aggregation_candidates=candidates,
        search_space_type=kind,
        dci_formats=formats,
    )


def parse_sib1(document: str | dict) -> CellCommonConfig:
    """Extract cell-common parameters from a SIB1 dump."""
    tree = _load(document)
    dl_common = docparse.find_key(tree, "downlinkConfigCommon")
    if dl_common is None:
        dl_common = tree
    extras: dict[str, Any] = {}
    dl = _Node(dl_common, (), extras)

    freq = dl.child("frequencyInfoDL")
    band_list = freq.require("frequencyBandList")
    band = _int(_first(band_list, "frequencyBandList").get("freqBandIndicatorNR"), "freqBandIndicatorNR")
    carrier = _first(freq.require("scs-SpecificCarrierList"), "scs-SpecificCarrierList")
    if "carrierBandwidth" not in carrier:
        raise MissingField("frequencyInfoDL/scs-SpecificCarrierList/carrierBandwidth")
    if "subcarrierSpacing" not in carrier:
        raise MissingField("frequencyInfoDL/scs-SpecificCarrierList/subcarrierSpacing")
    scs = _token(_SCS_TOKENS, carrier["subcarrierSpacing"], "subcarrierSpacing")
    bandwidth = _int(carrier["carrierBandwidth"], "carrierBandwidth")
    freq.done()

    coreset0 = None
    search_spaces: tuple[SearchSpaceConfig, ...] = ()
    tdra: tuple[TimeDomainAlloc, ...] = ()
    bwp = dl.child("initialDownlinkBWP", required=False)
    if bwp is not None:
        pdcch = bwp.child("pdcch-ConfigCommon", required=False)
        if pdcch is not None:
            cs0 = pdcch.get("controlResourceSetZero")
            coreset0 = None if cs0 is None else _int(cs0, "controlResourceSetZero")
            search_spaces = tuple(_search_space(s) for s in pdcch.get("commonSearchSpaceList", []))
            pdcch.done()
        pdsch = bwp.child("pdsch-ConfigCommon", required=False)
        if pdsch is not None:
            tdra = _time_domain_list(
                pdsch.get("pdsch-TimeDomainAllocationList", []), "k0", "pdsch-TimeDomainAllocationList"
            )
            pdsch.done()
        bwp.done()
    dl.done()

    return CellCommonConfig(
        band=band,
        carrier_bandwidth_prb=bandwidth,
        subcarrier_spacing_khz=scs,
        coreset0_index=coreset0,
        common_search_spaces=search_spaces,
        pdsch_time_domain_list=tdra,
        extras=extras,
    )


def parse_msg4(document: str | dict, listing: str | dict | None = None) -> UeDedicatedConfig:
    """Extract UE-dedicated parameters from an RRCSetup (MSG4) dump.

    ``listing`` optionally carries a decoder's DMRS/SCH printout (``key=value``
    lines as in a grant dump); its ``mcs_table``, ``xoverhead`` and reserved
    DMRS symbol bitmap override what the RRC message implies.
    """
    tree = _load(document)
    dedicated = docparse.find_key(tree, "spCellConfigDedicated")
    if dedicated is None:
        raise MissingField("spCellConfigDedicated")
    extras: dict[str, Any] = {}
    ded = _Node(dedicated, (), extras)

    dl_bwp = ded.child("initialDownlinkBWP")
    pdcch = dl_bwp.child("pdcch-Config")
    coreset = _first(pdcch.require("controlResourceSetToAddModList"), "controlResourceSetToAddModList")
    for key in ("controlResourceSetId", "duration"):
        if key not in coreset:
            raise MissingField(f"controlResourceSetToAddModList/{key}")
    # the CORESET entry is kept whole; only id and duration are typed
    extras["initialDownlinkBWP/pdcch-Config/controlResourceSetToAddModList"] = pdcch.value[
        "controlResourceSetToAddModList"
    ]
    spaces = pdcch.require("searchSpacesToAddModList")
    ue_space = _search_space(_first(spaces, "searchSpacesToAddModList"))
    extras["initialDownlinkBWP/pdcch-Config/searchSpacesToAddModList"] = spaces
    pdcch.done()

    pdsch = dl_bwp.child("pdsch-Config")
    dmrs_node = pdsch.get("dmrs-DownlinkForPDSCH-MappingTypeA") or {}
    dmrs_pos = _token(
        _DMRS_POS_TOKENS, dmrs_node.get("dmrs-AdditionalPosition", "pos2"), "dmrs-AdditionalPosition"
    )
    if set(dmrs_node) - {"dmrs-AdditionalPosition"}:
        extras["initialDownlinkBWP/pdsch-Config/dmrs-DownlinkForPDSCH-MappingTypeA"] = dmrs_node
    pdsch_tdra = _time_domain_list(
        pdsch.get("pdsch-TimeDomainAllocationList", []), "k0", "pdsch-TimeDomainAllocationList"
    )
    mcs_table = _token(_MCS_TABLE_TOKENS, pdsch.get("mcs-Table", "qam64"), "mcs-Table")
    pdsch.done()
    dl_bwp.done()

    ul_dmrs_pos = DEFAULT_DMRS_ADDITIONAL_POSITION
    pusch_tdra: tuple[TimeDomainAlloc, ...] = ()
    ul = ded.child("uplinkConfig", required=False)
    if ul is not None:
        ul_bwp = ul.child("initialUplinkBWP", required=False)
        if ul_bwp is not None:
            pusch = ul_bwp.child("pusch-Config", required=False)
            if pusch is not None:
                ul_dmrs = pusch.get("dmrs-UplinkForPUSCH-MappingTypeA") or {}
                ul_dmrs_pos = _token(
                    _DMRS_POS_TOKENS, ul_dmrs.get("dmrs-AdditionalPosition", "pos2"), "dmrs-AdditionalPosition"
                )
                if set(ul_dmrs) - {"dmrs-AdditionalPosition"}:
                    extras["uplinkConfig/initialUplinkBWP/pusch-Config/dmrs-UplinkForPUSCH-MappingTypeA"] = ul_dmrs
                pusch_tdra = _time_domain_list(
                    pusch.get("pusch-TimeDomainAllocationList", []), "k2", "pusch-TimeDomainAllocationList"
                )
                pusch.done()
            ul_bwp.done()
        ul.done()

    serving = ded.child("pdsch-ServingCellConfig", required=False)
    num_harq, layers, xoh = DEFAULT_NUM_HARQ, 1, 0
    if serving is not None:
        harq_tok = serving.get("nrofHARQ-ProcessesForPDSCH")
        if harq_tok is not None:
            num_harq = _token(_HARQ_TOKENS, harq_tok, "nrofHARQ-ProcessesForPDSCH")
        layers = _int(serving.get("maxMIMO-Layers", 1), "maxMIMO-Layers")
        xoh_tok = serving.get("xOverhead")
        if xoh_tok is not None:
            xoh = _token(_XOH_TOKENS, xoh_tok, "xOverhead")
        serving.done()
    ded.done()

    config = UeDedicatedConfig(
        coreset_id=_int(coreset["controlResourceSetId"], "controlResourceSetId"),
        coreset_duration_symbols=_int(coreset["duration"], "duration"),
        aggregation_level_candidates=ue_space.aggregation_candidates,
        dci_formats=ue_space.dci_formats,
        dmrs_additional_position=dmrs_pos,
        pdsch_time_domain_list=pdsch_tdra,
        pusch_time_domain_list=pusch_tdra,
        ul_dmrs_additional_position=ul_dmrs_pos,
        max_mimo_layers=layers,
        num_harq_processes=num_harq,
        mcs_table=mcs_table,
        xoverhead=xoh,
        extras=extras,
    )
    if listing is not None:
        config = apply_listing(config, listing)
    return config


def apply_listing(config: UeDedicatedConfig, listing: str | dict) -> UeDedicatedConfig:
    """Overlay the DMRS/SCH blocks of a decoder grant printout onto ``config``."""
    sections = docparse.parse_listing(listing) if isinstance(listing, str) else listing
    changes: dict[str, Any] = {}
    sch = sections.get("SCH", {})
    if "mcs_table" in sch:
        changes["mcs_table"] = _token({"256qam": McsTable.QAM256, "64qam": McsTable.QAM64}, sch["mcs_table"], "mcs_table")
    if "xoverhead" in sch:
        try:
            changes["xoverhead"] = int(sch["xoverhead"])
        except ValueError:
            raise InvalidValue(f"unknown xoverhead token {sch['xoverhead']!r}") from None
    dmrs = sections.get("DMRS", {})
    if "add_pos" in dmrs:
        changes["dmrs_additional_position"] = _token({str(i): i for i in range(4)}, dmrs["add_pos"], "add_pos")
    if "typeA_pos" in dmrs:
        changes["dmrs_typea_position"] = _token({"2": 2, "3": 3}, dmrs["typeA_pos"], "typeA_pos")
    symb = dmrs.get("rvd_pattern", {}).get("symb") if isinstance(dmrs.get("rvd_pattern"), dict) else None
    if symb is not None:
        changes["dmrs_symbol_pattern"] = symb
    return config.replace(**changes)


# --- serialization -----------------------------------------------------------


def _put(doc: dict, path: Iterable[str], value: Any):
    keys = list(path)
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def _tdra_doc(items: tuple[TimeDomainAlloc, ...], delay_key: str) -> list[dict]:
    return [
        {delay_key: t.k0_or_k2, "mappingType": _reverse(_MAPPING_TOKENS, t.mapping_type), "startSymbolAndLength": t.sliv}
        for t in items
    ]


def _search_space_doc(ss: SearchSpaceConfig) -> dict:
    if ss.search_space_type == "common":
        body = {"dci-Format0-0-AndFormat1-0": {}} if ss.dci_formats else {}
    else:
        body = {"dci-Formats": _reverse(_DCI_FORMAT_TOKENS, ss.dci_formats)}
    return {
        "searchSpaceId": ss.id,
        "controlResourceSetId": ss.coreset_id,
        "monitoringSymbolsWithinSlot": ss.monitoring_symbols,
        "nrofCandidates": {f"aggregationLevel{lvl}": f"n{n}" for lvl, n in ss.aggregation_candidates},
        "searchSpaceType": {ss.search_space_type: body},
    }


def sib1_document(cfg: CellCommonConfig) -> dict:
    """Rebuild a SIB1-shaped document tree from a parsed config."""
    dl: dict = {}
    for path, value in cfg.extras.items():
        _put(dl, path.split("/"), value)
    _put(dl, ["frequencyInfoDL", "frequencyBandList"], [{"freqBandIndicatorNR": cfg.band}])
    _put(
        dl,
        ["frequencyInfoDL", "scs-SpecificCarrierList"],
        [
            {
                "subcarrierSpacing": _reverse(_SCS_TOKENS, cfg.subcarrier_spacing_khz),
                "carrierBandwidth": cfg.carrier_bandwidth_prb,
            }
        ],
    )
    if cfg.coreset0_index is not None:
        _put(dl, ["initialDownlinkBWP", "pdcch-ConfigCommon", "controlResourceSetZero"], cfg.coreset0_index)
    if cfg.common_search_spaces:
        _put(
            dl,
            ["initialDownlinkBWP", "pdcch-ConfigCommon", "commonSearchSpaceList"],
            [_search_space_doc(s) for s in cfg.common_search_spaces],
        )
    if cfg.pdsch_time_domain_list:
        _put(
            dl,
            ["initialDownlinkBWP", "pdsch-ConfigCommon", "pdsch-TimeDomainAllocationList"],
            _tdra_doc(cfg.pdsch_time_domain_list, "k0"),
        )
    return {"SIB1": {"servingCellConfigCommon": {"downlinkConfigCommon": dl}}}


def msg4_document(cfg: UeDedicatedConfig) -> dict:
    """Rebuild an RRCSetup-shaped document tree from a parsed config.

    Listing overrides (DMRS symbol bitmap, typeA position) have no RRC field
    and are not written.
    """
    ded: dict = {}
    for path, value in cfg.extras.items():
        _put(ded, path.split("/"), value)
    pdsch = ["initialDownlinkBWP", "pdsch-Config"]
    _put(ded, pdsch + ["dmrs-DownlinkForPDSCH-MappingTypeA", "dmrs-AdditionalPosition"],
         _reverse(_DMRS_POS_TOKENS, cfg.dmrs_additional_position))
    if cfg.pdsch_time_domain_list:
        _put(ded, pdsch + ["pdsch-TimeDomainAllocationList"], _tdra_doc(cfg.pdsch_time_domain_list, "k0"))
    if cfg.mcs_table is not McsTable.QAM64:
        _put(ded, pdsch + ["mcs-Table"], _reverse(_MCS_TABLE_TOKENS, cfg.mcs_table))
    pusch = ["uplinkConfig", "initialUplinkBWP", "pusch-Config"]
    _put(ded, pusch + ["dmrs-UplinkForPUSCH-MappingTypeA", "dmrs-AdditionalPosition"],
         _reverse(_DMRS_POS_TOKENS, cfg.ul_dmrs_additional_position))
    if cfg.pusch_time_domain_list:
        _put(ded, pusch + ["pusch-TimeDomainAllocationList"], _tdra_doc(cfg.pusch_time_domain_list, "k2"))
    serving = {
        "nrofHARQ-ProcessesForPDSCH": _reverse(_HARQ_TOKENS, cfg.num_harq_processes),
        "maxMIMO-Layers": cfg.max_mimo_layers,
    }
    if cfg.xoverhead:
        serving["xOverhead"] = _reverse(_XOH_TOKENS, cfg.xoverhead)
    ded["pdsch-ServingCellConfig"] = serving

    pdcch = ded.setdefault("initialDownlinkBWP", {}).setdefault("pdcch-Config", {})
    coresets = pdcch.get("controlResourceSetToAddModList") or [{}]
    coresets = [dict(coresets[0], controlResourceSetId=cfg.coreset_id, duration=cfg.coreset_duration_symbols)] + list(
        coresets[1:]
    )
    pdcch["controlResourceSetToAddModList"] = coresets
    if "searchSpacesToAddModList" not in pdcch:
        pdcch["searchSpacesToAddModList"] = [
            _search_space_doc(
                SearchSpaceConfig(
                    id=2,
                    coreset_id=cfg.coreset_id,
                    monitoring_symbols="10000000000000",
                    aggregation_candidates=cfg.aggregation_level_candidates,
                    search_space_type="ue-Specific",
                    dci_formats=cfg.dci_formats,
                )
            )
        ]
    return {"RRCSetup": {"masterCellGroup": {"spCellConfig": {"spCellConfigDedicated": ded}}}}


def summary(cfg: CellCommonConfig | UeDedicatedConfig) -> dict[str, Any]:
    """Flat, JSON-friendly view of the typed fields (extras omitted)."""
    out: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        if f.name == "extras":
            continue
        v = getattr(cfg, f.name)
        out[f.name] = _plain(v)
    if isinstance(cfg, CellCommonConfig):
        out["tti_duration_ms"] = float(cfg.tti_duration_ms)
    return out


def _plain(v: Any) -> Any:
    if isinstance(v, (DciFormat, McsTable, MappingType)):
        return v.value
    if isinstance(v, TimeDomainAlloc):
        s, l = v.start_and_length
        return {"k": v.k0_or_k2, "mapping": v.mapping_type.value, "sliv": v.sliv, "start": s, "length": l}
    if isinstance(v, SearchSpaceConfig):
        return {f.name: _plain(getattr(v, f.name)) for f in dataclasses.fields(v)}
    if isinstance(v, tuple):
        if v and all(isinstance(x, tuple) and len(x) == 2 and isinstance(x[0], int) for x in v):
            return {str(a): b for a, b in v}
        return [_plain(x) for x in v]
    return v
