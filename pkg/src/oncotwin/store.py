"""Durable, queryable repository of digital twins.

Layout: an append-only line-oriented log (twins.log, one serialized record
per line), a rebuildable id -> byte-offset index (twins.idx, last entry per
id wins), and an audit log for the outcome feedback loop. Records are never
rewritten; putting an existing id appends a new version and every prior
version stays retrievable. On open, a torn final line (crash mid-append) is
discarded; any earlier unparseable line is corruption and raises.

Concurrency: one writer at a time via an advisory lock file; readers work
over immutable snapshots and never block the writer.
"""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from filelock import FileLock

from .model import DigitalTwin, decode_twin, encode_twin, errors_of, validate_twin

SCHEMA_VERSION = "twin-record-v1"

LOG_NAME = "twins.log"
INDEX_NAME = "twins.idx"
AUDIT_NAME = "audit.log"
LOCK_NAME = "twins.lock"

# Fields record_outcome may touch; everything else is immutable history.
OUTCOME_FIELDS = frozenset({"PFS", "OS", "study treatment response", "previous treatments"})


class StoreError(Exception):
    pass


class NotFoundError(StoreError):
    pass


class ValidationRejected(StoreError):
    def __init__(self, issues):
        self.issues = issues
        details = "; ".join(f"{i.field}: {i.message}" for i in issues)
        super().__init__(f"twin failed validation: {details}")


class CorruptLogError(StoreError):
    pass


class QueryError(StoreError):
    pass


@dataclass(frozen=True, slots=True)
class StoredRecord:
    twin: DigitalTwin
    version: int
    offset: int


class TwinStore:
    """Single-directory twin repository."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self._log = self.path / LOG_NAME
        self._idx = self.path / INDEX_NAME
        self._audit = self.path / AUDIT_NAME
        self._lock = FileLock(str(self.path / LOCK_NAME))
        if not self._log.exists():
            self._log.touch()
        self._records: dict[str, list[StoredRecord]] = {}
        self._recover()

    # -- recovery ---------------------------------------------------------

    def _recover(self) -> None:
        """Scan the log; tolerate exactly one torn trailing record."""
        records: dict[str, list[StoredRecord]] = {}
        data = self._log.read_bytes()
        offset = 0
        entries: list[tuple[int, bytes]] = []
        torn = False
        while offset < len(data):
            newline = data.find(b"\n", offset)
            if newline < 0:
                torn = True  # incomplete final line: discarded
                break
            entries.append((offset, data[offset:newline]))
            offset = newline + 1
        for i, (entry_offset, line) in enumerate(entries):
            if not line.strip():
                continue
            try:
                obj = json.loads(line.decode("utf-8"))
                twin = decode_twin(obj)
            except (ValueError, KeyError) as exc:
                if i == len(entries) - 1 and not torn:
                    # Torn write that still got its newline out; drop it.
                    break
                raise CorruptLogError(f"unreadable record at byte {entry_offset}: {exc}") from exc
            versions = records.setdefault(twin.id, [])
            versions.append(StoredRecord(twin=twin, version=len(versions) + 1, offset=entry_offset))
        self._records = records

    # -- core operations --------------------------------------------------

    @property
    def count(self) -> int:
        """Live (non-superseded) record count."""
        return len(self._records)

    @property
    def schema_version(self) -> str:
        return SCHEMA_VERSION

    def ids(self) -> list[str]:
        return sorted(self._records)

    def put(self, twin: DigitalTwin) -> str:
        """Validate and append; an existing id is superseded, not replaced."""
        issues = errors_of(validate_twin(twin))
        if issues:
            raise ValidationRejected(issues)
        line = (json.dumps(encode_twin(twin), sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")
        with self._lock:
            with self._log.open("ab") as f:
                offset = f.tell()
                f.write(line)
                f.flush()
                os.fsync(f.fileno())
            # Copy-on-write swap: concurrent readers keep iterating their
            # snapshot; they see the store before or after this put, never a
            # half-applied state.
            records = dict(self._records)
            versions = list(records.get(twin.id, ()))
            versions.append(StoredRecord(twin=twin, version=len(versions) + 1, offset=offset))
            records[twin.id] = versions
            self._records = records
            self._append_index(twin.id, offset)
        return twin.id

    def get(self, twin_id: str) -> DigitalTwin:
        """Latest version of a twin."""
        try:
            return self._records[twin_id][-1].twin
        except KeyError:
            raise NotFoundError(f"no twin with id {twin_id!r}") from None

    def versions(self, twin_id: str) -> list[DigitalTwin]:
        """Full history, oldest first."""
        if twin_id not in self._records:
            raise NotFoundError(f"no twin with id {twin_id!r}")
        return [r.twin for r in self._records[twin_id]]

    def all_twins(self) -> list[DigitalTwin]:
        """Latest versions, stable order by id."""
        return [self._records[i][-1].twin for i in self.ids()]

    def record_outcome(self, twin_id: str, update: dict[str, Any]) -> str:
        """Append a new version touching only outcome fields, with an audit entry."""
        outside = set(update) - OUTCOME_FIELDS
        if outside:
            raise StoreError(f"outcome update may not touch fields: {sorted(outside)}")
        current = self.get(twin_id)
        encoded = encode_twin(current)
        encoded.update(update)
        updated = decode_twin(encoded)
        self.put(updated)
        with self._audit.open("a", encoding="utf-8") as f:
            f.write(
                json.dumps(
                    {
                        "ts": datetime.now(timezone.utc).isoformat(),
                        "id": twin_id,
                        "fields": sorted(update),
                        "version": len(self._records[twin_id]),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
        return twin_id

    def _append_index(self, twin_id: str, offset: int) -> None:
        with self._idx.open("a", encoding="utf-8") as f:
            f.write(json.dumps({"id": twin_id, "offset": offset}) + "\n")

    # -- queries ----------------------------------------------------------

    def query(self, predicate: "Predicate | str | None" = None) -> list[DigitalTwin]:
        if predicate is None:
            return self.all_twins()
        if isinstance(predicate, str):
            predicate = parse_query(predicate)
        return [t for t in self.all_twins() if predicate(t)]


# -- predicate language ----------------------------------------------------
#
# Triples `field cmp value` joined by `and` / `or` (AND binds tighter).
# Example: source == literature and mmr == pMMR

Predicate = Callable[[DigitalTwin], bool]

_FIELD_GETTERS: dict[str, Callable[[DigitalTwin], Any]] = {
    "id": lambda t: t.id,
    "source": lambda t: t.source.value,
    "source_ref": lambda t: t.source_ref,
    "diagnosis": lambda t: t.diagnosis,
    "gender": lambda t: t.gender,
    "race": lambda t: t.race,
    "age": lambda t: t.age.low if t.age.is_exact else None,
    "cps": lambda t: t.biomarkers.pdl1.cps if t.biomarkers.pdl1 else None,
    "tps": lambda t: t.biomarkers.pdl1.tps if t.biomarkers.pdl1 else None,
    "ic": lambda t: t.biomarkers.pdl1.ic if t.biomarkers.pdl1 else None,
    "tmb": lambda t: t.biomarkers.tmb,
    "tmb_class": lambda t: t.biomarkers.tmb_class.value if t.biomarkers.tmb_class else None,
    "mmr": lambda t: t.biomarkers.mmr.value if t.biomarkers.mmr else None,
    "msi_fraction": lambda t: t.biomarkers.msi_fraction,
    "treatment_line": lambda t: t.treatment_line,
    "study_treatment": lambda t: t.study_treatment,
    "sample_size": lambda t: t.sample_size,
    "adjudication": lambda t: t.adjudication.value,
}

_COMPARATORS: dict[str, Callable[[Any, Any], bool]] = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    "contains": lambda a, b: isinstance(a, str) and str(b).lower() in a.lower(),
}

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<and>and\b) |
        (?P<or>or\b) |
        (?P<cmp>==|!=|>=|<=|>|<|contains\b) |
        (?P<quoted>"[^"]*"|'[^']*') |
        (?P<word>[^\s=!<>]+)
    )""",
    re.IGNORECASE | re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise QueryError(f"cannot tokenize query at: {text[pos:]!r}")
        pos = m.end()
        for kind in ("and", "or", "cmp", "quoted", "word"):
            value = m.group(kind)
            if value is not None:
                tokens.append((kind, value))
                break
    return tokens


def _coerce(value: str) -> Any:
    if value.startswith(("'", '"')):
        return value[1:-1]
    lowered = value.lower()
    if lowered in {"null", "none"}:
        return None
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    try:
        return float(value) if "." in value else int(value)
    except ValueError:
        return value


def _triple(field_name: str, cmp: str, value: Any) -> Predicate:
    if field_name not in _FIELD_GETTERS:
        raise QueryError(f"unknown field {field_name!r}; known: {sorted(_FIELD_GETTERS)}")
    cmp = cmp.lower()
    getter = _FIELD_GETTERS[field_name]
    op = _COMPARATORS[cmp]

    def check(twin: DigitalTwin) -> bool:
        actual = getter(twin)
        if cmp in ("==", "!="):
            if actual is None or value is None:
                return op(actual, value)
            if isinstance(value, (int, float)) and isinstance(actual, (int, float)):
                return op(float(actual), float(value))
            return op(str(actual).lower(), str(value).lower())
        if actual is None:
            return False  # absent never satisfies an ordering comparison
        if cmp == "contains":
            return op(actual, value)
        try:
            return op(float(actual), float(value))
        except (TypeError, ValueError):
            return op(str(actual), str(value))

    return check


def parse_query(text: str) -> Predicate:
    """Parse the predicate mini-language; empty input matches everything."""
    tokens = _tokenize(text)
    if not tokens:
        return lambda twin: True
    pos = 0

    def parse_atom() -> Predicate:
        nonlocal pos
        if len(tokens) - pos < 3:
            raise QueryError("dangling predicate; expected `field cmp value`")
        kind_f, field_name = tokens[pos]
        kind_c, cmp = tokens[pos + 1]
        kind_v, raw_value = tokens[pos + 2]
        if kind_f not in ("word", "quoted") or kind_c != "cmp" or kind_v not in ("word", "quoted"):
            raise QueryError(f"malformed triple near {field_name!r} {cmp!r} {raw_value!r}")
        pos += 3
        return _triple(field_name.strip("'\""), cmp, _coerce(raw_value))

    def parse_and() -> Predicate:
        nonlocal pos
        parts = [parse_atom()]
        while pos < len(tokens) and tokens[pos][0] == "and":
            pos += 1
            parts.append(parse_atom())
        return lambda twin: all(p(twin) for p in parts)

    def parse_or() -> Predicate:
        nonlocal pos
        parts = [parse_and()]
        while pos < len(tokens) and tokens[pos][0] == "or":
            pos += 1
            parts.append(parse_and())
        return lambda twin: any(p(twin) for p in parts)

    predicate = parse_or()
    if pos != len(tokens):
        raise QueryError(f"unexpected trailing tokens: {tokens[pos:]}")
    return predicate
