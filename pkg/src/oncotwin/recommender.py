"""Rule engine mapping a twin's biomarker state to knowledge-base actions:
treatments, confirmatory tests, trial referrals, and monitoring, plus the
cost-coverage letter.

The knowledge base is data, not code: it ships as a line-oriented file so
clinical review can amend rules without rebuilds.

Firing semantics
----------------
Marker state is derived from the twin's panel (with a curated synonym table,
e.g. ESR1 ≡ estrogen-receptor axis) as positive / negative / elevated /
not_determined. An entry conditioned on `positive` fires on a determined
positive or elevated state and never against a contradicting one; an entry
conditioned on `not_determined` fires only when the marker is absent from
the panel; treatment-like entries then demote to a confirmatory-test
recommendation naming the follow-on therapy, while trial referrals stay
referrals (the trial screens the marker itself). Trial referrals are
dropped on region mismatch and on non-recruiting trials unless
`allow_off_label` promotes the regimen to an off-label advisory; with no
region configured they carry a "location unverified" note instead of being
dropped. Stale tissue findings (older than the staleness horizon) gate
treatment recommendations with a re-biopsy note.
"""
from __future__ import annotations

import datetime as dt
import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from .analytics import CohortSummary
from .model import BiomarkerPanel, DigitalTwin


class Condition(str, Enum):
    positive = "positive"
    negative = "negative"
    elevated = "elevated"
    not_determined = "not_determined"
    any = "any"


class ActionKind(str, Enum):
    treatment = "treatment"
    confirmatory_test = "confirmatory_test"
    trial_referral = "trial_referral"
    monitoring = "monitoring"


class EvidenceLevel(str, Enum):
    phase_3 = "phase_3"
    phase_2 = "phase_2"
    phase_1 = "phase_1"
    case_report = "case_report"
    retrospective = "retrospective"
    preclinical = "preclinical"


_EVIDENCE_RANK = {level: i for i, level in enumerate(EvidenceLevel)}
_KIND_RANK = {kind: i for i, kind in enumerate(ActionKind)}


@dataclass(frozen=True, slots=True)
class KnowledgeEntry:
    biomarker: str
    condition: Condition
    action_kind: ActionKind
    action: str
    evidence_level: EvidenceLevel
    expected_response: str
    reference: str
    region: str | None = None
    trial_id: str | None = None
    recruiting: bool | None = None
    note: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "biomarker": self.biomarker,
            "condition": self.condition.value,
            "action_kind": self.action_kind.value,
            "action": self.action,
            "evidence_level": self.evidence_level.value,
            "expected_response": self.expected_response,
            "reference": self.reference,
            "region": self.region,
            "trial_id": self.trial_id,
            "recruiting": self.recruiting,
            "note": self.note,
        }


class KnowledgeBaseError(ValueError):
    pass


def load_kb(path: str | Path | None = None) -> list[KnowledgeEntry]:
    """Load knowledge entries from a line-oriented file (default: packaged).

    Rejects malformed rows (with line number), entries missing a reference,
    trial referrals without a trial id, and duplicate (biomarker, action)
    pairs.
    """
    if path is None:
        text = resources.files("oncotwin.data").joinpath("kb.jsonl").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    entries: list[KnowledgeEntry] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            entry = KnowledgeEntry(
                biomarker=obj["biomarker"],
                condition=Condition(obj["condition"]),
                action_kind=ActionKind(obj["action_kind"]),
                action=obj["action"],
                evidence_level=EvidenceLevel(obj["evidence_level"]),
                expected_response=obj.get("expected_response", ""),
                reference=obj["reference"],
                region=obj.get("region"),
                trial_id=obj.get("trial_id"),
                recruiting=obj.get("recruiting"),
                note=obj.get("note"),
            )
        except (KeyError, ValueError) as exc:
            raise KnowledgeBaseError(f"malformed knowledge entry at line {lineno}: {exc}") from exc
        if not entry.reference.strip():
            raise KnowledgeBaseError(f"knowledge entry at line {lineno} carries no reference")
        if entry.action_kind is ActionKind.trial_referral and not entry.trial_id:
            raise KnowledgeBaseError(f"trial referral at line {lineno} lacks a trial id")
        key = (entry.biomarker, entry.action)
        if key in seen:
            raise KnowledgeBaseError(f"duplicate (biomarker, action) pair at line {lineno}: {key}")
        seen.add(key)
        entries.append(entry)
    return entries


# Curated synonym table: KB marker name -> names it may appear under in a
# panel. ESR1 maps to the estrogen-receptor axis (ESR1 encodes ER).
_SYNONYMS: dict[str, tuple[str, ...]] = {
    "her2": ("her2", "erbb2", "her2/neu"),
    "er": ("er", "estrogen receptor"),
    "esr1": ("esr1", "er", "estrogen receptor"),
    "fr-alpha": ("fr-alpha", "fralpha", "folate receptor alpha", "folr1"),
    "ca-125": ("ca-125", "ca125"),
    "trop2": ("trop2", "tacstd2"),
}


def _aliases(biomarker: str) -> tuple[str, ...]:
    key = biomarker.lower()
    return _SYNONYMS.get(key, (key,))


_PERCENT = re.compile(r"(\d+(?:\.\d+)?)\s*%")
_SCORE_ZERO = re.compile(r"\bscore\s*0\b", re.IGNORECASE)
_YEAR = re.compile(r"\b(19|20)\d{2}\b")


@dataclass(frozen=True, slots=True)
class MarkerReading:
    state: Condition
    detail: str = ""
    year: int | None = None


def marker_state(panel: BiomarkerPanel, biomarker: str) -> MarkerReading:
    """Derive a marker's state from the panel's free-form findings."""
    names = _aliases(biomarker)
    for marker in panel.others:
        if marker.name.lower() not in names:
            continue
        detail = marker.detail
        lowered = detail.lower()
        years = [int(m.group(0)) for m in _YEAR.finditer(detail)]
        year = max(years) if years else None
        percents = [float(m.group(1)) for m in _PERCENT.finditer(detail)]
        if "not determined" in lowered or "unknown" in lowered or lowered.strip() in {"n/a", "na"}:
            return MarkerReading(Condition.not_determined, detail, year)
        if "negative" in lowered or _SCORE_ZERO.search(detail) or (percents and all(p == 0 for p in percents)):
            return MarkerReading(Condition.negative, detail, year)
        if "elevated" in lowered:
            return MarkerReading(Condition.elevated, detail, year)
        if "positive" in lowered:
            return MarkerReading(Condition.positive, detail, year)
        if any(p > 0 for p in percents):
            return MarkerReading(Condition.elevated, detail, year)
        # A listed marker with free-form detail (e.g. a variant) is a finding.
        return MarkerReading(Condition.positive, detail, year)
    return MarkerReading(Condition.not_determined)


_DETERMINED = {Condition.positive, Condition.negative, Condition.elevated}
_ACTIVE = {Condition.positive, Condition.elevated}


def _condition_matches(condition: Condition, state: Condition) -> bool:
    if condition is Condition.any:
        return state in _DETERMINED
    if condition in (Condition.positive, Condition.elevated):
        return state in _ACTIVE
    if condition is Condition.negative:
        return state is Condition.negative
    # not_determined entries advise testing while unknown and carry the
    # follow-on action once the marker comes back positive/elevated; a
    # determined-negative marker silences them.
    return state is Condition.not_determined or state in _ACTIVE


@dataclass(frozen=True, slots=True)
class RecommendContext:
    region: str | None = None
    allow_off_label: bool = False
    as_of: dt.date | None = None
    stale_after_months: int = 24


@dataclass(frozen=True, slots=True)
class Recommendation:
    entry: KnowledgeEntry
    action_kind: ActionKind  # emitted kind; may demote the entry's own kind
    rationale: str
    gating_notes: tuple[str, ...] = ()

    @property
    def rank_key(self) -> tuple[int, int]:
        return (_EVIDENCE_RANK[self.entry.evidence_level], _KIND_RANK[self.action_kind])

    def to_dict(self) -> dict[str, Any]:
        return {
            "biomarker": self.entry.biomarker,
            "action_kind": self.action_kind.value,
            "action": self.entry.action,
            "evidence_level": self.entry.evidence_level.value,
            "expected_response": self.entry.expected_response,
            "reference": self.entry.reference,
            "trial_id": self.entry.trial_id,
            "region": self.entry.region,
            "rationale": self.rationale,
            "gating_notes": list(self.gating_notes),
        }


def recommend(
    twin: DigitalTwin,
    kb: Sequence[KnowledgeEntry],
    context: RecommendContext | None = None,
) -> list[Recommendation]:
    """Match every knowledge entry against the twin's biomarker state.

    Ordering: evidence level (study phase first), then action kind; entries
    at the same rank keep knowledge-file order.
    """
    context = context or RecommendContext()
    recommendations: list[Recommendation] = []
    for entry in kb:
        reading = marker_state(twin.biomarkers, entry.biomarker)
        if not _condition_matches(entry.condition, reading.state):
            continue

        notes: list[str] = []
        if reading.state in _DETERMINED:
            kind = entry.action_kind
            rationale = f"{entry.biomarker} is {reading.state.value} in this patient ({reading.detail})"
            if (
                kind is ActionKind.treatment
                and reading.year is not None
                and context.as_of is not None
                and (context.as_of.year - reading.year) * 12 > context.stale_after_months
            ):
                notes.append(
                    f"finding dates from {reading.year}; confirm via a new biopsy before targeting {entry.biomarker}"
                )
        else:
            rationale = f"{entry.biomarker} status is not determined in this patient"
            if entry.action_kind is ActionKind.trial_referral:
                kind = ActionKind.trial_referral
                notes.append(f"{entry.biomarker} testing is part of trial screening")
            else:
                kind = ActionKind.confirmatory_test
                notes.append(f"if {entry.biomarker} is confirmed: {entry.action}")

        if entry.trial_id:
            if entry.recruiting is False:
                if context.allow_off_label:
                    notes.append(
                        f"trial {entry.trial_id} is no longer recruiting; consider off-label use of {entry.action}"
                    )
                elif kind is ActionKind.trial_referral:
                    continue
                else:
                    notes.append(f"supporting trial {entry.trial_id} is no longer recruiting")
            if kind is ActionKind.trial_referral:
                if context.region is None:
                    notes.append("trial location unverified: no region configured")
                elif entry.region is not None and entry.region.lower() != context.region.lower():
                    if entry.recruiting is False and context.allow_off_label:
                        pass  # already surfaced as an off-label advisory
                    else:
                        continue

        recommendations.append(
            Recommendation(entry=entry, action_kind=kind, rationale=rationale, gating_notes=tuple(notes))
        )

    return sorted(recommendations, key=lambda r: r.rank_key)


def coverage_letter(
    twin: DigitalTwin,
    recommendation: Recommendation,
    analog_summary: CohortSummary | None = None,
    date: dt.date | None = None,
) -> str:
    """Render a deterministic cost-coverage request letter.

    The patient summary is de-identified (twin id only); the biomarker
    evidence cites the concrete panel values and the knowledge reference.
    """
    entry = recommendation.entry
    rec_id = f"{entry.biomarker}/{entry.action}".lower().replace(" ", "-")
    lines = [
        "---",
        f"twin: {twin.id}",
        f"date: {date.isoformat() if date else 'unspecified'}",
        f"recommendation: {rec_id}",
        "---",
        "",
        "Cost coverage request",
        "=====================",
        "",
        f"Patient record {twin.id} ({twin.source.value}): {twin.diagnosis}, "
        f"treatment line {twin.treatment_line if twin.treatment_line is not None else 'n/a'}.",
        "",
        "Biomarker evidence:",
        f"  - {recommendation.rationale}",
    ]
    panel = twin.biomarkers
    if panel.pdl1 is not None and panel.pdl1.raw:
        lines.append(f"  - PD-L1: {panel.pdl1.raw}")
    if panel.tmb_raw:
        lines.append(f"  - TMB: {panel.tmb_raw} mutations/megabase")
    if panel.mmr_raw:
        lines.append(f"  - MMR: {panel.mmr_raw}")
    lines += [
        "",
        f"Requested measure ({recommendation.action_kind.value}): {entry.action}",
        f"Expected response: {entry.expected_response}",
        f"Evidence level: {entry.evidence_level.value}",
        f"Reference: {entry.reference}",
    ]
    if recommendation.gating_notes:
        lines.append("")
        lines.append("Notes:")
        lines.extend(f"  - {note}" for note in recommendation.gating_notes)
    if analog_summary is not None and analog_summary.n > 0:
        lines += [
            "",
            f"Analog cohort outcomes (n={analog_summary.n}):",
            f"  - median PFS: {analog_summary.median_pfs} months"
            + (f" (range {analog_summary.pfs.range[0]:g}-{analog_summary.pfs.range[1]:g})" if analog_summary.pfs.range else ""),
            f"  - median OS: {analog_summary.median_os} months"
            + (f" (range {analog_summary.os.range[0]:g}-{analog_summary.os.range[1]:g})" if analog_summary.os.range else ""),
            f"  - responses: {dict(sorted(analog_summary.response_counts.items()))}",
        ]
    lines.append("")
    return "\n".join(lines)
