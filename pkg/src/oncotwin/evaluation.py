"""Human-in-the-loop extraction-quality harness.

Adjudication records are scored into per-attribute confusion tallies; the
four metrics are always recomputed from the tallies, never transcribed from
an imported table: published tables can carry internally inconsistent rows,
and `lint_metrics_table` exists to flag exactly that. Undefined metrics
(zero denominators) are absent, not 0 or 1.
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

from . import parsers

VERDICTS = ("tp", "tn", "fp", "fn")


def round_half_up(value: float, places: int = 2) -> float:
    """Display rounding: half away from zero, e.g. 0.125 -> 0.13."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def canonicalize(attribute: str, value: Any) -> str | None:
    """Normalize a value for verdict comparison.

    Duration-like attributes are canonicalized through the duration grammar
    so "4" and " 4.0 " agree; everything else is case/whitespace folded.
    Non-string scalars (counts, flags) compare by their literal rendering.
    """
    if value is None:
        return None
    if not isinstance(value, str):
        value = json.dumps(value, sort_keys=True)
    text = " ".join(value.split()).strip()
    if not text or text.lower() in {"n/a", "na"}:
        return None
    if attribute.lower().startswith(("pfs", "os")):
        outcome = parsers.parse_duration(text)
        if outcome.ok and outcome.value is not None:
            return parsers.render_duration(outcome.value)
    return text.casefold()


def score(extracted: str | None, gold: str | None, attribute: str = "") -> str:
    """Verdict for one (extracted, gold) pair under normalized equality."""
    e = canonicalize(attribute, extracted)
    g = canonicalize(attribute, gold)
    if g is not None and e is not None and e == g:
        return "tp"
    if g is None and e is None:
        return "tn"
    if g is None and e is not None:
        return "fp"
    return "fn"


@dataclass(frozen=True, slots=True)
class ConfusionTally:
    attribute: str
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def observations(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def add(self, verdict: str) -> "ConfusionTally":
        if verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {verdict!r}")
        counts = {v: getattr(self, v) for v in VERDICTS}
        counts[verdict] += 1
        return ConfusionTally(attribute=self.attribute, **counts)

    def merged(self, other: "ConfusionTally") -> "ConfusionTally":
        return ConfusionTally(
            attribute=self.attribute,
            tp=self.tp + other.tp,
            tn=self.tn + other.tn,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
        )


@dataclass(frozen=True, slots=True)
class Metrics:
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None

    def rounded(self, places: int = 2) -> "Metrics":
        return Metrics(
            *(None if v is None else round_half_up(v, places) for v in (self.accuracy, self.precision, self.recall, self.f1))
        )

    def to_dict(self) -> dict[str, float | None]:
        return {"accuracy": self.accuracy, "precision": self.precision, "recall": self.recall, "f1": self.f1}


def metrics(tally: ConfusionTally) -> Metrics:
    """Accuracy/precision/recall/F1 from a tally; undefined values are None."""
    obs = tally.observations
    if obs <= 0:
        raise ValueError("metrics require at least one observation")
    accuracy = (tally.tp + tally.tn) / obs
    precision = tally.tp / (tally.tp + tally.fp) if (tally.tp + tally.fp) > 0 else None
    recall = tally.tp / (tally.tp + tally.fn) if (tally.tp + tally.fn) > 0 else None
    f1 = None
    if precision is not None and recall is not None and (precision + recall) > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return Metrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1)


def sample_size(z: float, population: int, margin: float, proportion: float) -> int:
    """Cochran sample size with finite-population correction.

    n0 = Z^2 * P(1-P) / e^2;  n = ceil(n0 / (1 + (n0 - 1) / N)).
    Computed in exact rational arithmetic so boundary cases (N=1) do not
    wobble on floating-point noise.
    """
    if z <= 0:
        raise ValueError(f"Z must be > 0, got {z}")
    if population < 1:
        raise ValueError(f"N must be >= 1, got {population}")
    if not (0 < margin < 1):
        raise ValueError(f"e must be in (0, 1), got {margin}")
    if not (0 < proportion < 1):
        raise ValueError(f"P must be in (0, 1), got {proportion}")
    zf = Fraction(repr(z))
    ef = Fraction(repr(margin))
    pf = Fraction(repr(proportion))
    n0 = zf * zf * pf * (1 - pf) / (ef * ef)
    n = n0 / (1 + (n0 - 1) / population)
    return math.ceil(n)


def draw_sample(population: Iterable[str], n: int, seed: int) -> list[str]:
    """Uniform sample without replacement; deterministic for a fixed seed and
    independent of the input ordering (the population is sorted first)."""
    pool = sorted(set(population))
    if n > len(pool):
        raise ValueError(f"sample size {n} exceeds population {len(pool)}")
    return random.Random(seed).sample(pool, n)


@dataclass(frozen=True, slots=True)
class AdjudicationRecord:
    subject: str
    attribute: str
    extracted: str | None
    gold: str | None
    verdict: str
    reviewer: str = ""
    note: str = ""
    source: str | None = None  # ehr | literature; optional extension

    def to_dict(self) -> dict[str, Any]:
        obj: dict[str, Any] = {
            "subject": self.subject,
            "attribute": self.attribute,
            "extracted": self.extracted,
            "gold": self.gold,
            "verdict": self.verdict,
            "reviewer": self.reviewer,
            "note": self.note,
        }
        if self.source is not None:
            obj["source"] = self.source
        return obj

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "AdjudicationRecord":
        return cls(
            subject=obj["subject"],
            attribute=obj["attribute"],
            extracted=obj.get("extracted"),
            gold=obj.get("gold"),
            verdict=obj["verdict"],
            reviewer=obj.get("reviewer", ""),
            note=obj.get("note", ""),
            source=obj.get("source"),
        )


class AdjudicationConflict(ValueError):
    """Same (subject, attribute) adjudicated with differing verdicts."""


@dataclass(frozen=True, slots=True)
class EvaluationRow:
    source: str
    attribute: str
    tally: ConfusionTally
    metrics: Metrics

    def to_dict(self) -> dict[str, Any]:
        rounded = self.metrics.rounded()
        return {
            "source": self.source,
            "attribute": self.attribute,
            "observations": self.tally.observations,
            "tp": self.tally.tp,
            "tn": self.tally.tn,
            "fp": self.tally.fp,
            "fn": self.tally.fn,
            **{k: rounded.to_dict()[k] for k in ("accuracy", "precision", "recall", "f1")},
            "raw_metrics": self.metrics.to_dict(),
        }


def evaluate_run(adjudications: Sequence[AdjudicationRecord]) -> list[EvaluationRow]:
    """Group by (source, attribute), tally, compute metrics, append TOTALs.

    Raises AdjudicationConflict when one (subject, attribute) carries
    different verdicts.
    """
    conflicts: dict[tuple[str, str], set[str]] = {}
    for rec in adjudications:
        conflicts.setdefault((rec.subject, rec.attribute), set()).add(rec.verdict)
    bad = sorted(k for k, v in conflicts.items() if len(v) > 1)
    if bad:
        raise AdjudicationConflict(f"conflicting verdicts for {bad}")

    groups: dict[tuple[str, str], ConfusionTally] = {}
    order: list[tuple[str, str]] = []
    for rec in adjudications:
        key = (rec.source or "", rec.attribute)
        if key not in groups:
            groups[key] = ConfusionTally(attribute=rec.attribute)
            order.append(key)
        groups[key] = groups[key].add(rec.verdict)

    rows: list[EvaluationRow] = []
    by_source: dict[str, ConfusionTally] = {}
    source_order: list[str] = []
    for source, attribute in order:
        tally = groups[(source, attribute)]
        rows.append(EvaluationRow(source=source, attribute=attribute, tally=tally, metrics=metrics(tally)))
        if source not in by_source:
            by_source[source] = ConfusionTally(attribute="TOTAL")
            source_order.append(source)
        by_source[source] = by_source[source].merged(tally)
    for source in source_order:
        total = by_source[source]
        rows.append(EvaluationRow(source=source, attribute="TOTAL", tally=total, metrics=metrics(total)))
    return rows


@dataclass(frozen=True, slots=True)
class LintFinding:
    source: str
    attribute: str
    field: str
    printed: float | None
    computed: float | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "source": self.source,
            "attribute": self.attribute,
            "field": self.field,
            "printed": self.printed,
            "computed": self.computed,
        }


def lint_metrics_table(rows: Sequence[Mapping[str, Any]]) -> list[LintFinding]:
    """Flag imported table rows whose printed metrics or observation counts
    disagree with their own confusion counts (at 2-dp half-up rounding)."""
    findings: list[LintFinding] = []
    for row in rows:
        tally = ConfusionTally(
            attribute=row["attribute"],
            tp=int(row["tp"]),
            tn=int(row["tn"]),
            fp=int(row["fp"]),
            fn=int(row["fn"]),
        )
        source = str(row.get("source", ""))
        if int(row["observations"]) != tally.observations:
            findings.append(
                LintFinding(source, row["attribute"], "observations", float(row["observations"]), float(tally.observations))
            )
        if tally.observations == 0:
            continue
        computed = metrics(tally).rounded()
        for name in ("accuracy", "precision", "recall", "f1"):
            printed = row.get(name)
            expected = getattr(computed, name)
            if printed is None and expected is None:
                continue
            if printed is None or expected is None or round_half_up(float(printed)) != expected:
                findings.append(
                    LintFinding(source, row["attribute"], name, None if printed is None else float(printed), expected)
                )
    return findings


def synthesize_adjudications(
    rows: Sequence[Mapping[str, Any]], subjects: Sequence[str] | None = None
) -> list[AdjudicationRecord]:
    """Expand per-attribute confusion tallies into adjudication records.

    Each verdict becomes a record whose (extracted, gold) pair reproduces
    that verdict under `score`; subjects cycle per attribute so no
    (subject, attribute) pair collides.
    """
    records: list[AdjudicationRecord] = []
    for row in rows:
        if row["attribute"] == "TOTAL":
            continue
        source = str(row.get("source", ""))
        attribute = str(row["attribute"])
        counter = 0
        for verdict, n in (("tp", row["tp"]), ("tn", row["tn"]), ("fp", row["fp"]), ("fn", row["fn"])):
            for _ in range(int(n)):
                subject = (
                    subjects[counter % len(subjects)]
                    if subjects
                    else f"{source or 'subject'}-{counter + 1}"
                )
                counter += 1
                value = f"value-{counter}"
                extracted, gold = {
                    "tp": (value, value),
                    "tn": (None, None),
                    "fp": (value, None),
                    "fn": (None, value),
                }[verdict]
                records.append(
                    AdjudicationRecord(
                        subject=subject,
                        attribute=attribute,
                        extracted=extracted,
                        gold=gold,
                        verdict=verdict,
                        reviewer="synthetic",
                        source=source or None,
                    )
                )
    return records
