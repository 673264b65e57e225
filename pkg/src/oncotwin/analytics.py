"""Cohort outcome statistics with explicit censoring rules.

The default censoring policy is "observed-bound": a right-censored
observation contributes the bound it was observed past (so ">30 (ongoing)"
enters the numeric set as 30), and unknown durations are excluded. Medians
use the even-count midpoint rule. Kaplan-Meier style estimation is a
non-goal here; there are no risk tables in the source data.
"""
from __future__ import annotations

import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .model import CensoredDuration, DigitalTwin

OBSERVED_BOUND = "observed-bound"


def median(values: Sequence[float]) -> float:
    """Midpoint median: odd n -> middle element, even n -> mean of the two."""
    if not values:
        raise ValueError("median of empty input")
    return float(statistics.median(values))


@dataclass(frozen=True, slots=True)
class DurationSummary:
    median: float | None
    range: tuple[float, float] | None
    n_known: int
    n_censored: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "median": self.median,
            "range": list(self.range) if self.range else None,
            "n_known": self.n_known,
            "n_censored": self.n_censored,
        }


def censored_summary(
    durations: Iterable[CensoredDuration], policy: str = OBSERVED_BOUND
) -> DurationSummary:
    """Summarize durations under the given censoring policy."""
    if policy != OBSERVED_BOUND:
        raise ValueError(f"unknown censoring policy {policy!r}")
    known = [d for d in durations if d.months is not None]
    values = [float(d.months) for d in known]  # type: ignore[arg-type]
    n_censored = sum(1 for d in known if d.censored)
    if not values:
        return DurationSummary(median=None, range=None, n_known=0, n_censored=n_censored)
    return DurationSummary(
        median=median(values),
        range=(min(values), max(values)),
        n_known=len(values),
        n_censored=n_censored,
    )


@dataclass(frozen=True, slots=True)
class LineStats:
    mean: float | None
    median: float | None
    range: tuple[int, int] | None
    n: int
    n_missing: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean": self.mean,
            "median": self.median,
            "range": list(self.range) if self.range else None,
            "n": self.n,
            "n_missing": self.n_missing,
        }


def line_stats(twins: Iterable[DigitalTwin]) -> LineStats:
    """Treatment-line statistics; twins without a line are excluded but counted."""
    lines = []
    missing = 0
    for t in twins:
        if t.treatment_line is None:
            missing += 1
        else:
            lines.append(t.treatment_line)
    if not lines:
        return LineStats(mean=None, median=None, range=None, n=0, n_missing=missing)
    return LineStats(
        mean=sum(lines) / len(lines),
        median=median(lines),
        range=(min(lines), max(lines)),
        n=len(lines),
        n_missing=missing,
    )


def classify_vital_status(os_duration: CensoredDuration) -> str:
    """Derive alive/deceased/unknown from the overall-survival source string."""
    lowered = os_duration.raw.lower()
    if "deceased" in lowered or "died" in lowered:
        return "deceased"
    if "alive" in lowered or "ongoing" in lowered:
        return "alive"
    return "unknown"


@dataclass(frozen=True, slots=True)
class CohortSummary:
    n: int
    pfs: DurationSummary
    os: DurationSummary
    lines: LineStats
    response_counts: dict[str, int] = field(default_factory=dict)
    trajectory_counts: dict[str, int] = field(default_factory=dict)
    vital_status_counts: dict[str, int] = field(default_factory=dict)

    @property
    def median_pfs(self) -> float | None:
        return self.pfs.median

    @property
    def median_os(self) -> float | None:
        return self.os.median

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "median_pfs": self.pfs.median,
            "pfs_range": list(self.pfs.range) if self.pfs.range else None,
            "median_os": self.os.median,
            "os_range": list(self.os.range) if self.os.range else None,
            "median_line": self.lines.median,
            "line_range": list(self.lines.range) if self.lines.range else None,
            "mean_line": self.lines.mean,
            "response_counts": dict(sorted(self.response_counts.items())),
            "trajectory_counts": dict(sorted(self.trajectory_counts.items())),
            "vital_status_counts": dict(sorted(self.vital_status_counts.items())),
        }


def summarize(twins: Sequence[DigitalTwin]) -> CohortSummary:
    """Compose the cohort summary.

    Best-response tallies use the first category of each response record;
    trajectory tallies keep the full ordered sequence (e.g. "PR>PD").
    """
    responses = Counter()
    trajectories = Counter()
    vitals = Counter()
    for t in twins:
        first = t.study_response.best_first
        if first is not None:
            responses[first.value] += 1
        if t.study_response.categories:
            trajectories[">".join(c.value for c in t.study_response.categories)] += 1
        vitals[classify_vital_status(t.os)] += 1
    return CohortSummary(
        n=len(twins),
        pfs=censored_summary(t.pfs for t in twins),
        os=censored_summary(t.os for t in twins),
        lines=line_stats(twins),
        response_counts=dict(responses),
        trajectory_counts=dict(trajectories),
        vital_status_counts=dict(vitals),
    )
