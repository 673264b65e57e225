"""Deterministic grammars for the messy clinical strings found in EHRs and
publications.

Every parser is total: arbitrary input yields a ParseOutcome with confidence
exact, inferred, or failed, never an exception. Raw input is always preserved
on the outcome (and inside duration/age values) so nothing is lost on the way
into a record.

Grammar notes
-------------
* Whitespace- and case-insensitive throughout; decimal commas accepted
  (German source documents), but only between digits so list separators
  survive.
* Durations accept a plain decimal, a ">" prefix (right-censored), a
  parenthesized annotation from a small whitelist ("ongoing" marks
  censoring; "deceased"/"alive ..." are vital-status notes), and the
  explicit unknown forms "n/a", "-", "- (ongoing)". Anything else fails
  with a note; prose like "Deceased, 72 days post ..." is deliberately not
  converted to months.
* Scalar parsers (TMB, PD-L1) have no in-value slot for "unknown", so a
  recognized "n/a" reports confidence=failed with note "recognized unknown
  form"; callers treat that as an absent marker, distinct from garbage.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Generic, TypeVar

from .model import (
    AgeValue,
    CensoredDuration,
    MmrStatus,
    PdL1Qualitative,
    PdL1Score,
    ResponseCategory,
    ResponseRecord,
)

T = TypeVar("T")


class Confidence(str, Enum):
    exact = "exact"
    inferred = "inferred"
    failed = "failed"


NOTE_UNKNOWN_FORM = "recognized unknown form"


@dataclass(frozen=True, slots=True)
class ParseOutcome(Generic[T]):
    value: T | None
    confidence: Confidence
    raw: str
    note: str | None = None

    @property
    def ok(self) -> bool:
        return self.confidence is not Confidence.failed


def _exact(value: T, raw: str, note: str | None = None) -> ParseOutcome[T]:
    return ParseOutcome(value, Confidence.exact, raw, note)


def _inferred(value: T, raw: str, note: str | None = None) -> ParseOutcome[T]:
    return ParseOutcome(value, Confidence.inferred, raw, note)


def _failed(raw: str, note: str) -> ParseOutcome[T]:
    return ParseOutcome(None, Confidence.failed, raw, note)


_DECIMAL_COMMA = re.compile(r"(?<=\d),(?=\d)")


def _normalize(s: str) -> str:
    return _DECIMAL_COMMA.sub(".", s.strip())


_NUMBER = r"\d+(?:\.\d+)?"
_ANNOTATION = re.compile(
    r"\(\s*(ongoing|deceased|alive(?:\s+at\s+data\s+cut-?\s*off)?)\s*\)",
    re.IGNORECASE,
)
_DURATION = re.compile(rf"^(?P<gt>>\s*)?(?P<months>{_NUMBER})$")
_UNKNOWN_FORMS = {"n/a", "na", "-", "not available", "not reported"}


def parse_duration(s: str) -> ParseOutcome[CensoredDuration]:
    """Parse a PFS/OS string into months + right-censoring flag."""
    raw = s
    text = _normalize(s)

    censored = False
    notes: list[str] = []
    # Peel parenthesized annotations off the tail; "ongoing" implies censoring.
    while True:
        m = _ANNOTATION.search(text)
        if not m:
            break
        word = m.group(1).lower()
        if word == "ongoing":
            censored = True
        else:
            notes.append(word)
        text = (text[: m.start()] + text[m.end() :]).strip(" ,")

    lowered = text.lower()
    if lowered in _UNKNOWN_FORMS or not text:
        return _exact(CensoredDuration(months=None, censored=censored, raw=raw), raw)

    m = _DURATION.match(text)
    if not m:
        return _failed(raw, f"not a duration: {text!r}")
    months = float(m.group("months"))
    if m.group("gt"):
        censored = True
    value = CensoredDuration(months=months, censored=censored, raw=raw)
    return _exact(value, raw, "; ".join(notes) or None)


_PDL1_COMPONENT = re.compile(
    rf"(?P<key>cps|tps|ic)\s*:\s*(?P<lt><\s*)?(?P<num>{_NUMBER})\s*(?P<pct>%)?",
    re.IGNORECASE,
)


def parse_pdl1(s: str) -> ParseOutcome[PdL1Score]:
    """Parse a PD-L1 status string: "CPS: 41, TPS: 3%, IC: 40%" or qualitative."""
    raw = s
    text = _normalize(s)
    lowered = text.lower()
    if lowered in _UNKNOWN_FORMS or not text:
        return _failed(raw, NOTE_UNKNOWN_FORM)

    cps = tps = ic = None
    inferred = False
    for m in _PDL1_COMPONENT.finditer(text):
        num = float(m.group("num"))
        if m.group("lt"):
            # "<1%" has no numeric convention in the sources; map to a value
            # strictly below the bound so thresholds at that bound hold.
            num = num * 0.9
            inferred = True
        key = m.group("key").lower()
        if key == "cps":
            cps = num
        elif key == "tps":
            tps = num / 100.0
        else:
            ic = num / 100.0

    qualitative = None
    if "negative" in lowered:
        qualitative = PdL1Qualitative.negative
    elif "positive" in lowered:
        qualitative = PdL1Qualitative.positive

    if cps is None and tps is None and ic is None and qualitative is None:
        return _failed(raw, f"no PD-L1 components recognized in {text!r}")

    value = PdL1Score(cps=cps, tps=tps, ic=ic, qualitative=qualitative, raw=raw)
    if inferred:
        return _inferred(value, raw, "bounded value '<x%' mapped just below the bound")
    return _exact(value, raw)


@dataclass(frozen=True, slots=True)
class MmrReading:
    mmr: MmrStatus
    msi_fraction: float | None = None


_MMR_FRACTION = re.compile(rf"\(\s*({_NUMBER})\s*%\s*\)")


def parse_mmr(s: str) -> ParseOutcome[MmrReading]:
    """Parse an MMR/MSI status string: "pMMR (3.6%)", "dMMR/MSI-H", "MSS"."""
    raw = s
    text = _normalize(s)
    lowered = text.lower()
    if lowered in _UNKNOWN_FORMS or not text:
        return _failed(raw, NOTE_UNKNOWN_FORM)

    status = None
    if "dmmr" in lowered or "msi-h" in lowered or "msi high" in lowered:
        status = MmrStatus.dMMR
    elif "pmmr" in lowered or "mss" in lowered:
        status = MmrStatus.pMMR
    if status is None:
        return _failed(raw, f"no MMR status recognized in {text!r}")

    fraction = None
    m = _MMR_FRACTION.search(text)
    if m:
        fraction = float(m.group(1)) / 100.0
    return _exact(MmrReading(mmr=status, msi_fraction=fraction), raw)


_AGE_EXACT = re.compile(r"^(\d{1,3})$")
_AGE_RANGE = re.compile(r"^(?:range\s*:\s*)?(\d{1,3})\s*-\s*(\d{1,3})$", re.IGNORECASE)


def parse_age(s: str) -> ParseOutcome[AgeValue]:
    """Parse an age string: exact ("77"), range ("55-68"), or unknown."""
    raw = s
    text = _normalize(s)
    lowered = text.lower()
    if lowered in _UNKNOWN_FORMS or not text:
        return _exact(AgeValue(low=None, high=None, raw=raw), raw)
    m = _AGE_EXACT.match(text)
    if m:
        years = int(m.group(1))
        return _exact(AgeValue(low=years, high=years, raw=raw), raw)
    m = _AGE_RANGE.match(text)
    if m:
        low, high = int(m.group(1)), int(m.group(2))
        if high < low:
            return _failed(raw, f"inverted age range {text!r}")
        return _exact(AgeValue(low=low, high=high, raw=raw), raw)
    return _failed(raw, f"not an age: {text!r}")


_TMB_VALUE = re.compile(rf"^({_NUMBER})\s*(?:mut(?:ations)?\s*/\s*mb|/\s*mb|mut/mb)?$", re.IGNORECASE)


def parse_tmb(s: str) -> ParseOutcome[float]:
    """Parse a TMB string in mutations/megabase; unit suffixes stripped."""
    raw = s
    text = _normalize(s)
    lowered = text.lower()
    if lowered in _UNKNOWN_FORMS or not text:
        return _failed(raw, NOTE_UNKNOWN_FORM)
    m = _TMB_VALUE.match(text)
    if not m:
        return _failed(raw, f"not a TMB value: {text!r}")
    return _exact(float(m.group(1)), raw)


_RESPONSE_TOKENS = {
    "cr": ResponseCategory.CR,
    "complete response": ResponseCategory.CR,
    "pr": ResponseCategory.PR,
    "partial response": ResponseCategory.PR,
    "sd": ResponseCategory.SD,
    "stable disease": ResponseCategory.SD,
    "mr": ResponseCategory.MR,
    "mixed response": ResponseCategory.MR,
    "pd": ResponseCategory.PD,
    "progressive disease": ResponseCategory.PD,
}


def parse_response(s: str) -> ParseOutcome[ResponseRecord]:
    """Parse a treatment-response trajectory like "PR, PD" (order preserved)."""
    raw = s
    text = _normalize(s)
    lowered = text.lower()
    if lowered in _UNKNOWN_FORMS or not text:
        return _exact(ResponseRecord(categories=(), raw=raw), raw)
    categories: list[ResponseCategory] = []
    unknown: list[str] = []
    for token in re.split(r"[,/;]|\s*->\s*", text):
        token = token.strip().lower()
        if not token:
            continue
        if token in _RESPONSE_TOKENS:
            categories.append(_RESPONSE_TOKENS[token])
        else:
            unknown.append(token)
    if not categories:
        return _failed(raw, f"no response categories recognized in {text!r}")
    value = ResponseRecord(categories=tuple(categories), raw=raw)
    if unknown:
        return _inferred(value, raw, f"unrecognized tokens dropped: {unknown}")
    return _exact(value, raw)


def render_duration(d: CensoredDuration) -> str:
    """Render a duration back to its grammar form (used for round-trip checks)."""
    if d.months is None:
        return "- (ongoing)" if d.censored else "n/a"
    num = f"{d.months:g}"
    return f">{num}" if d.censored else num
