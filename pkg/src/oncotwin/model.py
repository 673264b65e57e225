"""Domain types for patient digital twins and the record-level validators.

Every other module works in terms of these values. They are immutable and
carry the raw source strings next to the parsed fields so records stay
auditable: nothing that came out of a document is ever thrown away, and
unknown values are first-class (``None``), never sentinel numbers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable


class Source(str, Enum):
    institutional = "institutional"
    literature = "literature"


class Adjudication(str, Enum):
    unreviewed = "unreviewed"
    confirmed = "confirmed"
    corrected = "corrected"


class TmbClass(str, Enum):
    low = "low"
    intermediate = "intermediate"
    high = "high"


class MmrStatus(str, Enum):
    pMMR = "pMMR"
    dMMR = "dMMR"


class PdL1Qualitative(str, Enum):
    positive = "positive"
    negative = "negative"


class ResponseCategory(str, Enum):
    CR = "CR"
    PR = "PR"
    SD = "SD"
    MR = "MR"
    PD = "PD"


TMB_INTERMEDIATE_LOWER = 5.0
TMB_HIGH_LOWER = 15.0


def tmb_class(tmb: float) -> TmbClass:
    """Classify a tumor mutational burden in mutations/megabase.

    Boundaries are closed-open: [0, 5) low, [5, 15) intermediate,
    [15, inf) high.
    """
    if not math.isfinite(tmb):
        raise ValueError(f"TMB must be finite, got {tmb!r}")
    if tmb < 0:
        raise ValueError(f"TMB must be >= 0, got {tmb!r}")
    if tmb < TMB_INTERMEDIATE_LOWER:
        return TmbClass.low
    if tmb < TMB_HIGH_LOWER:
        return TmbClass.intermediate
    return TmbClass.high


@dataclass(frozen=True, slots=True)
class AgeValue:
    """Age as reported: an exact value (low == high), a range, or unknown."""

    low: int | None = None
    high: int | None = None
    raw: str = ""

    @property
    def is_exact(self) -> bool:
        return self.low is not None and self.low == self.high

    @property
    def known(self) -> bool:
        return self.low is not None


@dataclass(frozen=True, slots=True)
class PdL1Score:
    """PD-L1 expression: CPS (absolute score), TPS/IC (fractions), qualitative."""

    cps: float | None = None
    tps: float | None = None
    ic: float | None = None
    qualitative: PdL1Qualitative | None = None
    raw: str = ""

    @property
    def empty(self) -> bool:
        return (
            self.cps is None
            and self.tps is None
            and self.ic is None
            and self.qualitative is None
        )


@dataclass(frozen=True, slots=True)
class OtherMarker:
    """Free-form biomarker finding outside the structured panel fields."""

    name: str
    detail: str = ""


@dataclass(frozen=True, slots=True)
class BiomarkerPanel:
    pdl1: PdL1Score | None = None
    tmb: float | None = None
    tmb_class: TmbClass | None = None
    tmb_raw: str = ""
    mmr: MmrStatus | None = None
    msi_fraction: float | None = None
    mmr_raw: str = ""
    others: tuple[OtherMarker, ...] = ()

    @property
    def empty(self) -> bool:
        return (
            (self.pdl1 is None or self.pdl1.empty)
            and self.tmb is None
            and self.mmr is None
            and not self.others
        )


@dataclass(frozen=True, slots=True)
class CensoredDuration:
    """PFS/OS in months with right-censoring flag; raw keeps the source string."""

    months: float | None = None
    censored: bool = False
    raw: str = ""

    @property
    def known(self) -> bool:
        return self.months is not None


# Raw strings we accept as an explicit "value not available" marker.
UNKNOWN_DURATION_FORMS = frozenset({"n/a", "na", "-", "- (ongoing)", "not available", ""})


@dataclass(frozen=True, slots=True)
class ResponseRecord:
    """Treatment response trajectory, e.g. "PR, PD" is two ordered entries."""

    categories: tuple[ResponseCategory, ...] = ()
    adverse_effects: str | None = None
    raw: str = ""

    @property
    def best_first(self) -> ResponseCategory | None:
        return self.categories[0] if self.categories else None


@dataclass(frozen=True, slots=True)
class TreatmentEvent:
    line: int | None
    description: str
    response: ResponseRecord | None = None


@dataclass(frozen=True, slots=True)
class DigitalTwin:
    """One patient record plus provenance and adjudication state."""

    id: str
    source: Source
    source_ref: str = ""
    sample_size: int | None = None
    age: AgeValue = field(default_factory=AgeValue)
    gender: str | None = None
    race: str | None = None
    diagnosis: str = ""
    biomarkers: BiomarkerPanel = field(default_factory=BiomarkerPanel)
    previous_treatments: tuple[TreatmentEvent, ...] = ()
    study_treatment: str = ""
    treatment_line: int | None = None
    study_response: ResponseRecord = field(default_factory=ResponseRecord)
    pfs: CensoredDuration = field(default_factory=CensoredDuration)
    os: CensoredDuration = field(default_factory=CensoredDuration)
    main_recommendation: str | None = None
    similarity: tuple[str, ...] = ()
    adjudication: Adjudication = Adjudication.unreviewed

    def with_updates(self, **changes: Any) -> "DigitalTwin":
        return replace(self, **changes)


# Similarity tags the matcher understands; set at ingestion, never inferred.
SIMILARITY_GYN = "gyn_oncology_discipline"
SIMILARITY_MORPHOLOGY = "carcinosarcoma_or_sarcomatoid_morphology"
KNOWN_SIMILARITY_TAGS = frozenset({SIMILARITY_GYN, SIMILARITY_MORPHOLOGY})


@dataclass(frozen=True, slots=True)
class ValidationIssue:
    field: str
    severity: str  # "error" | "warning"
    message: str


# The ten record attributes of the extraction schema; a twin missing one of
# these gets a warning (sparse record), never an error.
RECORD_ATTRIBUTES = (
    "age",
    "gender",
    "race",
    "diagnosis",
    "biomarkers",
    "previous treatments",
    "study treatment",
    "study treatment response",
    "PFS",
    "OS",
)


def _duration_issues(name: str, d: CensoredDuration) -> list[ValidationIssue]:
    issues: list[ValidationIssue] = []
    if d.months is not None and (not math.isfinite(d.months) or d.months < 0):
        issues.append(ValidationIssue(name, "error", f"months must be finite and >= 0, got {d.months}"))
    lowered = d.raw.lower()
    if (">" in d.raw or "(ongoing)" in lowered) and not d.censored:
        issues.append(ValidationIssue(name, "error", f"raw {d.raw!r} indicates censoring but censored is false"))
    if d.months is None and d.raw and lowered.strip() not in UNKNOWN_DURATION_FORMS:
        issues.append(ValidationIssue(name, "warning", f"unparsed duration kept as raw text: {d.raw!r}"))
    return issues


def _fraction_issue(name: str, value: float | None) -> ValidationIssue | None:
    if value is not None and not (0.0 <= value <= 1.0):
        return ValidationIssue(name, "error", f"fraction out of [0,1]: {value}")
    return None


def validate_twin(twin: DigitalTwin) -> list[ValidationIssue]:
    """Validate a twin against the record schema contract.

    Returns a deterministic issue list; an empty *error* subset means the
    twin is admissible to the store. Warnings never block storage.
    """
    issues: list[ValidationIssue] = []

    if not twin.id:
        issues.append(ValidationIssue("id", "error", "id must be non-empty"))
    if not twin.diagnosis.strip():
        issues.append(ValidationIssue("diagnosis", "error", "diagnosis must be non-empty"))

    if twin.source is Source.institutional and twin.sample_size is not None:
        issues.append(ValidationIssue("sample_size", "error", "institutional records carry no sample size"))
    if twin.source is Source.literature and twin.sample_size is not None and twin.sample_size < 1:
        issues.append(ValidationIssue("sample_size", "error", f"sample size must be >= 1, got {twin.sample_size}"))

    age = twin.age
    if age.low is not None and age.low < 0:
        issues.append(ValidationIssue("age", "error", f"age low must be >= 0, got {age.low}"))
    if age.low is not None and age.high is not None and age.high < age.low:
        issues.append(ValidationIssue("age", "error", f"age range inverted: [{age.low}, {age.high}]"))

    panel = twin.biomarkers
    if panel.pdl1 is not None:
        score = panel.pdl1
        if score.empty:
            issues.append(ValidationIssue("biomarkers.pd-l1", "error", "PD-L1 score present but carries no fields"))
        if score.cps is not None and score.cps < 0:
            issues.append(ValidationIssue("biomarkers.pd-l1", "error", f"CPS must be >= 0, got {score.cps}"))
        for label, frac in (("tps", score.tps), ("ic", score.ic)):
            issue = _fraction_issue(f"biomarkers.pd-l1.{label}", frac)
            if issue:
                issues.append(issue)
        if score.qualitative is PdL1Qualitative.negative and score.cps is not None and score.cps > 0:
            issues.append(
                ValidationIssue(
                    "biomarkers.pd-l1",
                    "error",
                    f"qualitative negative contradicts CPS {score.cps} > 0",
                )
            )
    if panel.tmb is not None:
        if not math.isfinite(panel.tmb) or panel.tmb < 0:
            issues.append(ValidationIssue("biomarkers.tmb/mb", "error", f"TMB must be finite and >= 0, got {panel.tmb}"))
        elif panel.tmb_class is not None and panel.tmb_class is not tmb_class(panel.tmb):
            issues.append(
                ValidationIssue(
                    "biomarkers.tmb/mb",
                    "error",
                    f"tmb_class {panel.tmb_class.value} does not match TMB {panel.tmb} "
                    f"(expected {tmb_class(panel.tmb).value})",
                )
            )
    issue = _fraction_issue("biomarkers.msi/mss", panel.msi_fraction)
    if issue:
        issues.append(issue)

    lines_seen: list[int] = []
    for i, event in enumerate(twin.previous_treatments):
        if not event.description.strip():
            issues.append(ValidationIssue(f"previous_treatments[{i}]", "error", "treatment description must be non-empty"))
        if event.line is not None:
            if lines_seen and event.line <= lines_seen[-1]:
                issues.append(
                    ValidationIssue(
                        f"previous_treatments[{i}]",
                        "error",
                        f"treatment lines must be strictly increasing, got {event.line} after {lines_seen[-1]}",
                    )
                )
            lines_seen.append(event.line)

    if twin.treatment_line is not None:
        if twin.treatment_line < 1:
            issues.append(ValidationIssue("treatment_line", "error", f"treatment line must be >= 1, got {twin.treatment_line}"))
        elif lines_seen and twin.treatment_line != lines_seen[-1] + 1:
            # Derivable prior lines disagree; the value may still be explicitly
            # sourced, so this surfaces as a warning, not a rejection.
            issues.append(
                ValidationIssue(
                    "treatment_line",
                    "warning",
                    f"treatment line {twin.treatment_line} != 1 + last prior line {lines_seen[-1]}",
                )
            )

    for tag in twin.similarity:
        if tag not in KNOWN_SIMILARITY_TAGS:
            issues.append(ValidationIssue("similarity", "error", f"unknown similarity tag {tag!r}"))

    issues.extend(_duration_issues("PFS", twin.pfs))
    issues.extend(_duration_issues("OS", twin.os))

    for name, absent in _absent_attributes(twin):
        if absent:
            issues.append(ValidationIssue(name, "warning", "attribute absent from record"))

    return issues


def _absent_attributes(twin: DigitalTwin) -> Iterable[tuple[str, bool]]:
    yield "age", not twin.age.known and not twin.age.raw
    yield "gender", twin.gender is None
    yield "race", twin.race is None
    yield "diagnosis", not twin.diagnosis.strip()
    yield "biomarkers", twin.biomarkers.empty
    yield "previous treatments", not twin.previous_treatments
    yield "study treatment", not twin.study_treatment.strip()
    yield "study treatment response", not twin.study_response.categories and not twin.study_response.raw
    yield "PFS", not twin.pfs.known and not twin.pfs.raw
    yield "OS", not twin.os.known and not twin.os.raw


def errors_of(issues: Iterable[ValidationIssue]) -> list[ValidationIssue]:
    return [i for i in issues if i.severity == "error"]


# ---------------------------------------------------------------------------
# Canonical serialization. Key names mirror the extraction schema exactly
# ("n", "age", ..., "PFS", "OS"); values are object trees so raw strings and
# parsed fields round-trip bit for bit.
# ---------------------------------------------------------------------------


def _encode_duration(d: CensoredDuration) -> dict[str, Any]:
    return {"months": d.months, "censored": d.censored, "raw": d.raw}


def _decode_duration(obj: dict[str, Any]) -> CensoredDuration:
    return CensoredDuration(months=obj.get("months"), censored=bool(obj.get("censored", False)), raw=obj.get("raw", ""))


def _encode_response(r: ResponseRecord) -> dict[str, Any]:
    return {"categories": [c.value for c in r.categories], "raw": r.raw}


def _decode_response(obj: dict[str, Any]) -> ResponseRecord:
    return ResponseRecord(
        categories=tuple(ResponseCategory(c) for c in obj.get("categories", ())),
        adverse_effects=None,
        raw=obj.get("raw", ""),
    )


def encode_twin(twin: DigitalTwin) -> dict[str, Any]:
    """Encode a twin to its canonical JSON-compatible object tree."""
    panel = twin.biomarkers
    pdl1 = None
    if panel.pdl1 is not None:
        pdl1 = {
            "cps": panel.pdl1.cps,
            "tps": panel.pdl1.tps,
            "ic": panel.pdl1.ic,
            "qualitative": panel.pdl1.qualitative.value if panel.pdl1.qualitative else None,
            "raw": panel.pdl1.raw,
        }
    tmb = None
    if panel.tmb is not None or panel.tmb_raw:
        tmb = {
            "value": panel.tmb,
            "class": panel.tmb_class.value if panel.tmb_class else None,
            "raw": panel.tmb_raw,
        }
    mmr = None
    if panel.mmr is not None or panel.mmr_raw:
        mmr = {
            "status": panel.mmr.value if panel.mmr else None,
            "fraction": panel.msi_fraction,
            "raw": panel.mmr_raw,
        }
    response = twin.study_response
    return {
        "id": twin.id,
        "source": twin.source.value,
        "source_ref": twin.source_ref,
        "n": twin.sample_size,
        "age": {"low": twin.age.low, "high": twin.age.high, "raw": twin.age.raw},
        "gender": twin.gender,
        "race": twin.race,
        "diagnosis": twin.diagnosis,
        "biomarkers": {
            "pd-l1": pdl1,
            "tmb/mb": tmb,
            "msi/mss": mmr,
            "others": [{"name": m.name, "detail": m.detail} for m in panel.others],
        },
        "previous treatments": [
            {
                "line": e.line,
                "description": e.description,
                "response": (
                    {**_encode_response(e.response), "adverse effects": e.response.adverse_effects}
                    if e.response
                    else None
                ),
            }
            for e in twin.previous_treatments
        ],
        "study treatment": twin.study_treatment,
        "treatment line": twin.treatment_line,
        "study treatment response": {
            "treatment response": _encode_response(response),
            "adverse effects": response.adverse_effects,
        },
        "PFS": _encode_duration(twin.pfs),
        "OS": _encode_duration(twin.os),
        "main recommendation": twin.main_recommendation,
        "similarity": list(twin.similarity),
        "adjudication": twin.adjudication.value,
    }


def decode_twin(obj: dict[str, Any]) -> DigitalTwin:
    """Decode the canonical object tree back to a twin. Inverse of encode_twin."""
    bm = obj.get("biomarkers") or {}
    pdl1_obj = bm.get("pd-l1")
    pdl1 = None
    if pdl1_obj is not None:
        pdl1 = PdL1Score(
            cps=pdl1_obj.get("cps"),
            tps=pdl1_obj.get("tps"),
            ic=pdl1_obj.get("ic"),
            qualitative=PdL1Qualitative(pdl1_obj["qualitative"]) if pdl1_obj.get("qualitative") else None,
            raw=pdl1_obj.get("raw", ""),
        )
    tmb_obj = bm.get("tmb/mb")
    mmr_obj = bm.get("msi/mss")
    panel = BiomarkerPanel(
        pdl1=pdl1,
        tmb=tmb_obj.get("value") if tmb_obj else None,
        tmb_class=TmbClass(tmb_obj["class"]) if tmb_obj and tmb_obj.get("class") else None,
        tmb_raw=tmb_obj.get("raw", "") if tmb_obj else "",
        mmr=MmrStatus(mmr_obj["status"]) if mmr_obj and mmr_obj.get("status") else None,
        msi_fraction=mmr_obj.get("fraction") if mmr_obj else None,
        mmr_raw=mmr_obj.get("raw", "") if mmr_obj else "",
        others=tuple(OtherMarker(name=m["name"], detail=m.get("detail", "")) for m in bm.get("others", ())),
    )
    resp_obj = obj.get("study treatment response") or {}
    response = _decode_response(resp_obj.get("treatment response") or {})
    response = replace(response, adverse_effects=resp_obj.get("adverse effects"))
    age_obj = obj.get("age") or {}
    return DigitalTwin(
        id=obj["id"],
        source=Source(obj["source"]),
        source_ref=obj.get("source_ref", ""),
        sample_size=obj.get("n"),
        age=AgeValue(low=age_obj.get("low"), high=age_obj.get("high"), raw=age_obj.get("raw", "")),
        gender=obj.get("gender"),
        race=obj.get("race"),
        diagnosis=obj.get("diagnosis", ""),
        biomarkers=panel,
        previous_treatments=tuple(
            TreatmentEvent(
                line=e.get("line"),
                description=e.get("description", ""),
                response=(
                    replace(_decode_response(e["response"]), adverse_effects=e["response"].get("adverse effects"))
                    if e.get("response")
                    else None
                ),
            )
            for e in obj.get("previous treatments", ())
        ),
        study_treatment=obj.get("study treatment", ""),
        treatment_line=obj.get("treatment line"),
        study_response=response,
        pfs=_decode_duration(obj.get("PFS") or {}),
        os=_decode_duration(obj.get("OS") or {}),
        main_recommendation=obj.get("main recommendation"),
        similarity=tuple(obj.get("similarity", ())),
        adjudication=Adjudication(obj.get("adjudication", "unreviewed")),
    )
