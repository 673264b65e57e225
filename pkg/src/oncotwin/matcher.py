"""Analog-case identification rules and the what-if overlay.

Eligibility semantics: a mandatory rule that cannot be evaluated (missing
marker, qualitative-only PD-L1) is "unknown", and unknown is not a pass:
screening required the statuses to be available, so absent values exclude.
Similarity is decided from metadata tags set at ingestion, never inferred
from text.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping, Sequence

from . import analytics
from .model import (
    KNOWN_SIMILARITY_TAGS,
    SIMILARITY_GYN,
    SIMILARITY_MORPHOLOGY,
    DigitalTwin,
    MmrStatus,
    OtherMarker,
    PdL1Qualitative,
    PdL1Score,
    tmb_class,
)

PASS = "pass"
FAIL = "fail"
UNKNOWN = "unknown"

# Checkpoint-inhibitor lexicon for the treated-with-ICI rule. Matching is a
# lowercase substring check against the study treatment description.
ICI_TERMS = (
    "pembrolizumab",
    "nivolumab",
    "ipilimumab",
    "atezolizumab",
    "avelumab",
    "durvalumab",
    "dostarlimab",
    "tremelimumab",
    "cemiplimab",
    "pd-1",
    "pd-l1",
    "ctla-4",
    "checkpoint inhibitor",
)


@dataclass(frozen=True, slots=True)
class EligibilitySpec:
    min_cps: float = 40.0
    max_tmb_exclusive: float = 15.0
    required_mmr: MmrStatus = MmrStatus.pMMR
    similarity: frozenset[str] = frozenset({SIMILARITY_GYN, SIMILARITY_MORPHOLOGY})
    require_ici_treatment: bool = True

    def __post_init__(self) -> None:
        if self.min_cps < 0 or self.max_tmb_exclusive <= 0:
            raise ValueError("eligibility thresholds must be positive")
        unknown_tags = set(self.similarity) - KNOWN_SIMILARITY_TAGS
        if unknown_tags:
            raise ValueError(f"unknown similarity tags: {sorted(unknown_tags)}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "min_cps": self.min_cps,
            "max_tmb_exclusive": self.max_tmb_exclusive,
            "required_mmr": self.required_mmr.value,
            "similarity": sorted(self.similarity),
            "require_ici_treatment": self.require_ici_treatment,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "EligibilitySpec":
        kwargs: dict[str, Any] = {}
        if "min_cps" in obj:
            kwargs["min_cps"] = float(obj["min_cps"])
        if "max_tmb_exclusive" in obj:
            kwargs["max_tmb_exclusive"] = float(obj["max_tmb_exclusive"])
        if "required_mmr" in obj:
            kwargs["required_mmr"] = MmrStatus(obj["required_mmr"])
        if "similarity" in obj:
            kwargs["similarity"] = frozenset(obj["similarity"])
        if "require_ici_treatment" in obj:
            kwargs["require_ici_treatment"] = bool(obj["require_ici_treatment"])
        return cls(**kwargs)


@dataclass(frozen=True, slots=True)
class MatchResult:
    twin_id: str
    passed: bool
    per_rule: dict[str, str]
    reasons: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "twin_id": self.twin_id,
            "passed": self.passed,
            "per_rule": dict(self.per_rule),
            "reasons": list(self.reasons),
        }


def is_ici_treatment(description: str) -> bool:
    lowered = description.lower()
    return any(term in lowered for term in ICI_TERMS)


def _cps_rule(twin: DigitalTwin, spec: EligibilitySpec) -> tuple[str, str | None]:
    score = twin.biomarkers.pdl1
    if score is None or score.cps is None:
        return UNKNOWN, "cps: no numeric CPS available"
    if score.cps >= spec.min_cps:
        return PASS, None
    return FAIL, f"cps: {score.cps:g} < {spec.min_cps:g}"


def _tmb_rule(twin: DigitalTwin, spec: EligibilitySpec) -> tuple[str, str | None]:
    tmb = twin.biomarkers.tmb
    if tmb is None:
        return UNKNOWN, "tmb: no TMB available"
    if tmb < spec.max_tmb_exclusive:
        return PASS, None
    return FAIL, f"tmb: {tmb:g} >= {spec.max_tmb_exclusive:g}"


def _mmr_rule(twin: DigitalTwin, spec: EligibilitySpec) -> tuple[str, str | None]:
    mmr = twin.biomarkers.mmr
    if mmr is None:
        return UNKNOWN, "mmr: no MMR status available"
    if mmr is spec.required_mmr:
        return PASS, None
    return FAIL, f"mmr: {mmr.value} != {spec.required_mmr.value}"


def _similarity_rule(twin: DigitalTwin, spec: EligibilitySpec) -> tuple[str, str | None]:
    if not spec.similarity:
        return PASS, None
    if not twin.similarity:
        return UNKNOWN, "similarity: no similarity tags recorded"
    if set(twin.similarity) & spec.similarity:
        return PASS, None
    return FAIL, "similarity: no enabled criterion matched"


def _ici_rule(twin: DigitalTwin, spec: EligibilitySpec) -> tuple[str, str | None]:
    if not spec.require_ici_treatment:
        return PASS, None
    if not twin.study_treatment.strip():
        return UNKNOWN, "ici: no study treatment recorded"
    if is_ici_treatment(twin.study_treatment):
        return PASS, None
    return FAIL, "ici: study treatment contains no checkpoint inhibitor"


_RULES = (
    ("cps", _cps_rule),
    ("tmb", _tmb_rule),
    ("mmr", _mmr_rule),
    ("similarity", _similarity_rule),
    ("ici", _ici_rule),
)


def evaluate_eligibility(twin: DigitalTwin, spec: EligibilitySpec | None = None) -> MatchResult:
    """Evaluate every rule; passed only when all mandatory rules pass."""
    spec = spec or EligibilitySpec()
    per_rule: dict[str, str] = {}
    reasons: list[str] = []
    for name, rule in _RULES:
        outcome, reason = rule(twin, spec)
        per_rule[name] = outcome
        if reason and outcome is not PASS:
            reasons.append(reason)
    passed = all(v == PASS for v in per_rule.values())
    return MatchResult(twin_id=twin.id, passed=passed, per_rule=per_rule, reasons=tuple(reasons))


@dataclass(frozen=True, slots=True)
class FunnelStage:
    name: str
    ids: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"stage": self.name, "count": len(self.ids), "ids": list(self.ids)}


def cohort_funnel(twins: Sequence[DigitalTwin], spec: EligibilitySpec | None = None) -> list[FunnelStage]:
    """Stage-by-stage screening funnel; each stage is a subset of the previous."""
    spec = spec or EligibilitySpec()
    results = {t.id: evaluate_eligibility(t, spec) for t in twins}
    ordered = [t.id for t in twins]

    def surviving(rules: Sequence[str], prev: Sequence[str]) -> tuple[str, ...]:
        return tuple(i for i in prev if all(results[i].per_rule[r] == PASS for r in rules))

    stages = [FunnelStage("all", tuple(ordered))]
    stages.append(FunnelStage("cps", surviving(["cps"], stages[-1].ids)))
    stages.append(FunnelStage("tmb_mmr", surviving(["tmb", "mmr"], stages[-1].ids)))
    stages.append(FunnelStage("similarity", surviving(["similarity"], stages[-1].ids)))
    if spec.require_ici_treatment:
        stages.append(FunnelStage("ici", surviving(["ici"], stages[-1].ids)))
    return stages


# Biomarker/treatment fields the what-if overlay may touch.
OVERRIDABLE_FIELDS = frozenset(
    {"cps", "tps", "ic", "qualitative", "tmb", "mmr", "others", "study_treatment", "treatment_line"}
)


class OverrideError(ValueError):
    """An override addressed a field outside the modeled set."""


def apply_overrides(twin: DigitalTwin, overrides: Mapping[str, Any]) -> DigitalTwin:
    """Non-destructively apply biomarker/treatment overrides to a twin."""
    unknown = set(overrides) - OVERRIDABLE_FIELDS
    if unknown:
        raise OverrideError(f"unsupported override fields: {sorted(unknown)}")

    panel = twin.biomarkers
    score = panel.pdl1 or PdL1Score()
    score_changed = False
    for key in ("cps", "tps", "ic"):
        if key in overrides:
            score = replace(score, **{key: None if overrides[key] is None else float(overrides[key])})
            score_changed = True
    if "qualitative" in overrides:
        value = overrides["qualitative"]
        score = replace(score, qualitative=PdL1Qualitative(value) if value else None)
        score_changed = True
    if score_changed:
        panel = replace(panel, pdl1=None if score.empty else score)

    if "tmb" in overrides:
        value = overrides["tmb"]
        tmb = None if value is None else float(value)
        panel = replace(panel, tmb=tmb, tmb_class=tmb_class(tmb) if tmb is not None else None)
    if "mmr" in overrides:
        value = overrides["mmr"]
        panel = replace(panel, mmr=MmrStatus(value) if value else None)
    if "others" in overrides:
        # Map of marker name -> replacement detail string; None removes the
        # marker so it reads as not determined downstream.
        markers = {m.name: m for m in panel.others}
        for name, detail in overrides["others"].items():
            if detail is None:
                markers.pop(name, None)
            else:
                markers[name] = OtherMarker(name=name, detail=str(detail))
        panel = replace(panel, others=tuple(markers.values()))

    changes: dict[str, Any] = {"biomarkers": panel}
    if "study_treatment" in overrides:
        changes["study_treatment"] = str(overrides["study_treatment"])
    if "treatment_line" in overrides:
        value = overrides["treatment_line"]
        changes["treatment_line"] = None if value is None else int(value)
    return twin.with_updates(**changes)


@dataclass(frozen=True, slots=True)
class WhatIfResult:
    twin: DigitalTwin
    evaluation: MatchResult
    analogs: tuple[DigitalTwin, ...]
    summary: analytics.CohortSummary

    def to_dict(self) -> dict[str, Any]:
        from .model import encode_twin

        return {
            "twin": encode_twin(self.twin),
            "evaluation": self.evaluation.to_dict(),
            "analogs": [encode_twin(t) for t in self.analogs],
            "summary": self.summary.to_dict(),
        }


def whatif(
    twin: DigitalTwin,
    overrides: Mapping[str, Any],
    spec: EligibilitySpec | None = None,
    candidates: Iterable[DigitalTwin] = (),
    subject_spec: EligibilitySpec | None = None,
) -> WhatIfResult:
    """Model a modified twin against analog cases.

    Two specs are in play: `subject_spec` (the standard clinical inclusion
    profile by default, minus the treated-with-ICI rule, which describes the
    analogs' histories rather than the index patient) gates whether the
    modified twin fits the profile the analog evidence was assembled for;
    `spec` drives analog matching and is what threshold sliders tighten.
    They are separate so that exploring stricter analog criteria does not
    spuriously disqualify the index patient, while overriding the patient
    out of profile (e.g. CPS 10) empties the cohort with a reason.

    The subject is always excluded from its own analog cohort and the
    candidate store is never modified.
    """
    spec = spec or EligibilitySpec()
    if subject_spec is None:
        subject_spec = EligibilitySpec(require_ici_treatment=False)
    modified = apply_overrides(twin, overrides) if overrides else twin
    evaluation = evaluate_eligibility(modified, subject_spec)

    analogs: tuple[DigitalTwin, ...] = ()
    if evaluation.passed:
        analogs = tuple(
            c for c in candidates if c.id != modified.id and evaluate_eligibility(c, spec).passed
        )
    return WhatIfResult(
        twin=modified,
        evaluation=evaluation,
        analogs=analogs,
        summary=analytics.summarize(analogs),
    )
