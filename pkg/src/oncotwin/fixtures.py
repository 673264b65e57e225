"""Cohort fixtures: builds the packaged 21-case cohort (and the synthetic
matcher candidates) from raw source strings via the domain parsers.

Keeping the fixture in raw string form means every load exercises the same
parsing path production records take, and the parsed fields can never drift
from the strings they came from.
"""
from __future__ import annotations

import json
from importlib import resources
from typing import Any

from . import parsers
from .model import (
    Adjudication,
    BiomarkerPanel,
    DigitalTwin,
    OtherMarker,
    Source,
    errors_of,
    tmb_class,
    validate_twin,
)

_DATA_PACKAGE = "oncotwin.data"


def _read_data(name: str) -> str:
    return resources.files(_DATA_PACKAGE).joinpath(name).read_text(encoding="utf-8")


def build_twin(raw: dict[str, Any]) -> DigitalTwin:
    """Build one twin from a raw fixture row, running every string field
    through its parser. Raises if the result does not validate cleanly."""
    age = parsers.parse_age(raw.get("age") or "")
    pdl1 = parsers.parse_pdl1(raw.get("pdl1") or "")
    tmb = parsers.parse_tmb(raw.get("tmb") or "")
    mmr = parsers.parse_mmr(raw.get("mmr") or "")
    response = parsers.parse_response(raw.get("response") or "")
    pfs = parsers.parse_duration(raw.get("pfs") or "")
    os_ = parsers.parse_duration(raw.get("os") or "")

    panel = BiomarkerPanel(
        pdl1=pdl1.value if pdl1.ok else None,
        tmb=tmb.value if tmb.ok else None,
        tmb_class=tmb_class(tmb.value) if tmb.ok and tmb.value is not None else None,
        tmb_raw=raw.get("tmb") or "",
        mmr=mmr.value.mmr if mmr.ok and mmr.value else None,
        msi_fraction=mmr.value.msi_fraction if mmr.ok and mmr.value else None,
        mmr_raw=raw.get("mmr") or "",
        others=tuple(OtherMarker(name=m["name"], detail=m.get("detail", "")) for m in raw.get("others", ())),
    )
    twin = DigitalTwin(
        id=raw["id"],
        source=Source(raw["source"]),
        source_ref=raw.get("source_ref", ""),
        sample_size=raw.get("n"),
        age=age.value if age.ok and age.value is not None else parsers.parse_age("n/a").value,
        gender=raw.get("gender"),
        race=raw.get("race"),
        diagnosis=raw.get("diagnosis", ""),
        biomarkers=panel,
        study_treatment=raw.get("study_treatment", ""),
        treatment_line=raw.get("treatment_line"),
        study_response=response.value if response.ok and response.value else parsers.parse_response("n/a").value,
        pfs=pfs.value if pfs.ok and pfs.value else _unparsed_duration(raw.get("pfs") or ""),
        os=os_.value if os_.ok and os_.value else _unparsed_duration(raw.get("os") or ""),
        main_recommendation=raw.get("main_recommendation"),
        similarity=tuple(raw.get("similarity", ())),
        adjudication=Adjudication.confirmed,
    )
    issues = errors_of(validate_twin(twin))
    if issues:
        details = "; ".join(f"{i.field}: {i.message}" for i in issues)
        raise ValueError(f"fixture twin {twin.id} failed validation: {details}")
    return twin


def _unparsed_duration(raw: str):
    # Prose the duration grammar rejects is kept verbatim with no months value.
    from .model import CensoredDuration

    return CensoredDuration(months=None, censored=False, raw=raw)


def _load_raw() -> dict[str, Any]:
    return json.loads(_read_data("cases_raw.json"))


def load_fixture_twins() -> list[DigitalTwin]:
    """The 21-case cohort (7 institutional + 14 literature)."""
    return [build_twin(row) for row in _load_raw()["cases"]]


def load_synthetic_candidates() -> list[DigitalTwin]:
    """Two eligible-profile institutional candidates that never received
    checkpoint-inhibitor therapy; used by the matching funnel, not stored."""
    return [build_twin(row) for row in _load_raw()["synthetic_candidates"]]


def load_raw_fixture_rows() -> list[dict[str, Any]]:
    """Raw string rows backing the cohort fixture (for oracle recomputation)."""
    return list(_load_raw()["cases"])


def load_table1_rows() -> list[dict[str, Any]]:
    """The imported extraction-quality table (printed tallies and metrics)."""
    return list(json.loads(_read_data("table1.json"))["rows"])


def load_aggregate_trials() -> list[dict[str, Any]]:
    """Reference-only fixture: the seven aggregate-level trials. No digital
    twins derive from these; none reported patient-level data."""
    return list(json.loads(_read_data("aggregate_trials.json"))["studies"])
