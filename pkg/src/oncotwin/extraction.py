"""Schema-constrained record extraction: prompt assembly with in-context
examples, backend invocation, JSON-contract enforcement and repair, and twin
construction from per-document payloads.

The privacy guard is the load-bearing invariant here: a document of EHR
origin is never handed to a backend that is not cleared for protected health
information, and the check runs before any transport is touched.

Contract enforcement is strict-parse first, then at most three mechanical
repair passes (code fences, trailing commas, single quotes); anything still
unparseable is quarantined with a reason rather than "best-effort" parsed,
so a malformed model reply can never invent record content.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import httpx

from . import parsers
from .ingestion import ORIGIN_EHR, SourceDocument
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

SCHEMA_V1 = "twin-record-v1"

# Attribute keys of the extraction schema, in canonical order. Literature
# documents carry all twelve; EHR documents omit "n" and the study-level
# "main recommendation".
SCHEMA_KEYS = (
    "n",
    "age",
    "gender",
    "race",
    "diagnosis",
    "biomarkers",
    "previous treatments",
    "study treatment",
    "treatment line",
    "study treatment response",
    "PFS",
    "OS",
    "main recommendation",
)
ATTRIBUTE_KEYS = tuple(k for k in SCHEMA_KEYS if k != "treatment line")

DOC_START = "--- DOCUMENT ---"
DOC_END = "--- END DOCUMENT ---"


class ExtractionError(Exception):
    pass


class PrivacyError(ExtractionError):
    """Fatal configuration error: EHR content routed at a public backend."""


class TransportError(ExtractionError):
    """Retryable backend failure (network, timeout, non-success status)."""


class PromptOverflowError(ExtractionError):
    pass


PRIVACY_PHI = "phi_allowed"
PRIVACY_PUBLIC = "public_only"
BACKEND_KINDS = ("local", "cloud", "mock")


@dataclass(frozen=True, slots=True)
class LlmBackendSpec:
    kind: str
    endpoint: str = ""
    model_name: str = ""
    max_context_chars: int = 1_000_000
    privacy_tier: str = PRIVACY_PUBLIC

    def __post_init__(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.privacy_tier not in (PRIVACY_PHI, PRIVACY_PUBLIC):
            raise ValueError(f"unknown privacy tier {self.privacy_tier!r}")
        if self.max_context_chars < 1:
            raise ValueError("max_context_chars must be positive")


def check_privacy(origin: str, spec: LlmBackendSpec) -> None:
    """EHR documents may only reach backends cleared for PHI."""
    if origin == ORIGIN_EHR and spec.privacy_tier != PRIVACY_PHI:
        raise PrivacyError(
            f"refusing to send ehr-origin content to backend kind={spec.kind} "
            f"privacy_tier={spec.privacy_tier}; phi_allowed is required"
        )


def load_template(template_id: str = "extract-v1") -> str:
    return resources.files("oncotwin.data").joinpath(f"templates/{template_id}.txt").read_text(encoding="utf-8")


def load_default_examples() -> list[dict[str, Any]]:
    text = resources.files("oncotwin.data").joinpath("incontext_examples.json").read_text(encoding="utf-8")
    return list(json.loads(text)["examples"])


def render_examples(examples: Sequence[Mapping[str, Any]]) -> str:
    if not examples:
        return ""
    blocks = []
    for i, example in enumerate(examples, start=1):
        blocks.append(
            f"Example {i} input:\n{example['input']}\n"
            f"Example {i} output:\n{json.dumps(example['output'], sort_keys=True)}"
        )
    return "Examples:\n\n" + "\n\n".join(blocks)


def build_prompt(
    doc: SourceDocument,
    backend: LlmBackendSpec,
    template: str | None = None,
    examples: Sequence[Mapping[str, Any]] | None = None,
) -> str:
    """Render the extraction prompt; deterministic for identical inputs."""
    if not doc.text.strip():
        raise ExtractionError(f"document {doc.doc_id} has no text")
    template = template if template is not None else load_template()
    examples = examples if examples is not None else load_default_examples()
    prompt = template.format(
        schema_keys=json.dumps(list(SCHEMA_KEYS)),
        examples=render_examples(examples),
        document=doc.text,
    )
    if len(prompt) > backend.max_context_chars:
        overflow = len(prompt) - backend.max_context_chars
        raise PromptOverflowError(
            f"prompt for document {doc.doc_id} exceeds backend context by {overflow} chars"
        )
    return prompt


def document_text_of_prompt(prompt: str) -> str:
    """Recover the document section from a rendered prompt (mock keying)."""
    start = prompt.find(DOC_START)
    end = prompt.rfind(DOC_END)
    if start < 0 or end < 0 or end <= start:
        return prompt
    return prompt[start + len(DOC_START) : end].strip("\n")


def reply_key(document_text: str) -> str:
    return hashlib.sha256(document_text.encode("utf-8")).hexdigest()


class Backend:
    """Wire adapter: prompt in, raw model text out."""

    spec: LlmBackendSpec

    def invoke(self, prompt: str) -> str:  # pragma: no cover - interface
        raise NotImplementedError


class MockBackend(Backend):
    """Deterministic test backend: canned replies keyed by the sha256 of the
    document text, read from a directory of {content-hash}.json files, each
    holding {"output": "..."}."""

    def __init__(self, replies_dir: str | Path, spec: LlmBackendSpec | None = None):
        self.replies_dir = Path(replies_dir)
        self.spec = spec or LlmBackendSpec(kind="mock", privacy_tier=PRIVACY_PHI)

    def invoke(self, prompt: str) -> str:
        key = reply_key(document_text_of_prompt(prompt))
        path = self.replies_dir / f"{key}.json"
        if not path.exists():
            raise TransportError(f"no canned reply for content hash {key}")
        return json.loads(path.read_text(encoding="utf-8"))["output"]


class HttpBackend(Backend):
    """POSTs {model, input, response_format} to the configured endpoint and
    expects {"output": "..."} back."""

    def __init__(
        self,
        spec: LlmBackendSpec,
        retries: int = 2,
        timeout_seconds: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.spec = spec
        self.retries = retries
        self.timeout_seconds = timeout_seconds
        self._transport = transport

    def invoke(self, prompt: str) -> str:
        request = {
            "model": self.spec.model_name,
            "input": prompt,
            "response_format": "json_object",
        }
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                with httpx.Client(transport=self._transport, timeout=self.timeout_seconds) as client:
                    response = client.post(self.spec.endpoint, json=request)
                if response.status_code != 200:
                    last_error = TransportError(
                        f"backend {self.spec.endpoint} returned status {response.status_code}"
                    )
                    continue
                return response.json()["output"]
            except (httpx.HTTPError, KeyError, json.JSONDecodeError) as exc:
                last_error = exc
        raise TransportError(f"backend {self.spec.endpoint} failed after {self.retries + 1} attempts: {last_error}")


def make_backend(spec: LlmBackendSpec, replies_dir: str | Path | None = None) -> Backend:
    if spec.kind == "mock":
        if replies_dir is None:
            raise ExtractionError("mock backend requires a canned-replies directory")
        return MockBackend(replies_dir, spec)
    return HttpBackend(spec)


# --- JSON contract enforcement -------------------------------------------------

@dataclass(frozen=True, slots=True)
class RawExtraction:
    doc_id: str
    payload: str
    parsed: dict[str, Any] | None = None
    repair_applied: bool = False
    quarantine_reason: str | None = None

    @property
    def quarantined(self) -> bool:
        return self.parsed is None


_CODE_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)
_TRAILING_COMMA = re.compile(r",\s*([}\]])")


def _repair_code_fence(payload: str) -> str:
    m = _CODE_FENCE.search(payload)
    if m:
        return m.group(1).strip()
    start, end = payload.find("{"), payload.rfind("}")
    if start >= 0 and end > start:
        return payload[start : end + 1]
    return payload


def _repair_trailing_commas(payload: str) -> str:
    return _TRAILING_COMMA.sub(r"\1", payload)


def _repair_single_quotes(payload: str) -> str:
    # Last resort for single-quoted pseudo-JSON; only applied when earlier
    # passes failed, and the result must still survive a strict parse.
    if '"' in payload:
        return payload
    return payload.replace("'", '"')


_REPAIRS: tuple[Callable[[str], str], ...] = (
    _repair_code_fence,
    _repair_trailing_commas,
    _repair_single_quotes,
)


def enforce_contract(payload: str, doc_id: str = "", schema_version: str = SCHEMA_V1) -> RawExtraction:
    """Strict parse, then bounded mechanical repairs, then quarantine.

    Unknown top-level keys are preserved under "others" rather than dropped.
    """
    if schema_version != SCHEMA_V1:
        raise ExtractionError(f"unknown schema version {schema_version!r}")

    def try_parse(text: str) -> dict[str, Any] | None:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            return None
        return obj if isinstance(obj, dict) else None

    parsed = try_parse(payload)
    repaired = payload
    repair_applied = False
    if parsed is None:
        for repair in _REPAIRS:
            candidate = repair(repaired)
            if candidate != repaired:
                repaired = candidate
                parsed = try_parse(repaired)
                if parsed is not None:
                    repair_applied = True
                    break
        else:
            parsed = None

    if parsed is None:
        reason = "no object found" if "{" not in payload else "unparseable json after repairs"
        return RawExtraction(doc_id=doc_id, payload=payload, quarantine_reason=reason)

    known = set(SCHEMA_KEYS)
    unknown = {k: v for k, v in parsed.items() if k not in known}
    if unknown:
        kept = {k: v for k, v in parsed.items() if k in known}
        others = kept.get("others")
        bucket = dict(others) if isinstance(others, dict) else {}
        bucket.update(unknown)
        kept["others"] = bucket
        parsed = kept
    return RawExtraction(doc_id=doc_id, payload=payload, parsed=parsed, repair_applied=repair_applied)


def count_attributes(extraction: RawExtraction) -> int:
    """Number of schema attributes present in a parsed payload."""
    if extraction.parsed is None:
        return 0
    return sum(1 for k in ATTRIBUTE_KEYS if k in extraction.parsed)


# --- Twin assembly -------------------------------------------------------------

def _as_text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return json.dumps(value, sort_keys=True)


@dataclass(frozen=True, slots=True)
class AttributeProvenance:
    """Per-attribute source tracking: attribute -> (doc_id, raw value)."""

    values: dict[str, tuple[str, str]] = field(default_factory=dict)
    conflicts: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "values": {k: {"doc_id": d, "raw": r} for k, (d, r) in sorted(self.values.items())},
            "conflicts": list(self.conflicts),
        }


def merge_extractions(
    extractions: Sequence[RawExtraction],
) -> tuple[dict[str, Any], AttributeProvenance]:
    """Merge per-document payloads attribute-wise.

    Later documents win for conflicting scalars (recency is the clinical
    default), and the conflict is surfaced, never hidden; list-like
    "previous treatments" values are unioned in document order.
    """
    merged: dict[str, Any] = {}
    provenance: dict[str, tuple[str, str]] = {}
    conflicts: list[str] = []
    for extraction in extractions:
        if extraction.parsed is None:
            continue
        for key, value in extraction.parsed.items():
            if value is None or (isinstance(value, str) and value.strip().lower() in {"", "n/a", "na"}):
                continue
            if key == "previous treatments" and key in merged:
                existing = merged[key]
                combined = existing if isinstance(existing, list) else [existing]
                new_items = value if isinstance(value, list) else [value]
                merged[key] = combined + [v for v in new_items if v not in combined]
                provenance[key] = (extraction.doc_id, _as_text(merged[key]))
                continue
            if key in merged and merged[key] != value:
                conflicts.append(
                    f"{key}: {_as_text(merged[key])!r} (doc {provenance[key][0]}) "
                    f"superseded by {_as_text(value)!r} (doc {extraction.doc_id})"
                )
            merged[key] = value
            provenance[key] = (extraction.doc_id, _as_text(value))
    return merged, AttributeProvenance(values=provenance, conflicts=tuple(conflicts))


def _biomarkers_from_payload(obj: Any) -> BiomarkerPanel:
    if not isinstance(obj, dict):
        return BiomarkerPanel()
    pdl1_raw = _as_text(obj.get("pd-l1")) if obj.get("pd-l1") is not None else ""
    tmb_raw = _as_text(obj.get("tmb/mb")) if obj.get("tmb/mb") is not None else ""
    mmr_raw = _as_text(obj.get("msi/mss")) if obj.get("msi/mss") is not None else ""
    pdl1 = parsers.parse_pdl1(pdl1_raw) if pdl1_raw else None
    tmb = parsers.parse_tmb(tmb_raw) if tmb_raw else None
    mmr = parsers.parse_mmr(mmr_raw) if mmr_raw else None

    others_value = obj.get("others")
    others: list[OtherMarker] = []
    if isinstance(others_value, dict):
        others = [OtherMarker(name=str(k), detail=_as_text(v)) for k, v in others_value.items()]
    elif isinstance(others_value, list):
        for item in others_value:
            if isinstance(item, dict) and "name" in item:
                others.append(OtherMarker(name=str(item["name"]), detail=_as_text(item.get("detail", ""))))
            else:
                others.append(OtherMarker(name=_as_text(item)))
    elif isinstance(others_value, str) and others_value.strip().lower() not in {"", "n/a", "na"}:
        others = [
            OtherMarker(name=part.strip()) for part in re.split(r"[;,]", others_value) if part.strip()
        ]

    tmb_value = tmb.value if tmb is not None and tmb.ok else None
    return BiomarkerPanel(
        pdl1=pdl1.value if pdl1 is not None and pdl1.ok else None,
        tmb=tmb_value,
        tmb_class=tmb_class(tmb_value) if tmb_value is not None else None,
        tmb_raw=tmb_raw,
        mmr=mmr.value.mmr if mmr is not None and mmr.ok and mmr.value else None,
        msi_fraction=mmr.value.msi_fraction if mmr is not None and mmr.ok and mmr.value else None,
        mmr_raw=mmr_raw,
        others=tuple(others),
    )


def _previous_treatments_from_payload(value: Any):
    from .model import TreatmentEvent

    if value is None:
        return ()
    items = value if isinstance(value, list) else re.split(r"[;]", _as_text(value))
    events = []
    for item in items:
        text = _as_text(item).strip()
        if text and text.lower() not in {"n/a", "na"}:
            events.append(TreatmentEvent(line=None, description=text))
    return tuple(events)


def assemble_twin(
    subject_id: str,
    source: Source,
    source_ref: str,
    merged: Mapping[str, Any],
) -> DigitalTwin:
    """Build a twin from a merged payload, running the domain parsers over
    every string field. Values never originate outside the payload."""
    age = parsers.parse_age(_as_text(merged.get("age")))
    response_obj = merged.get("study treatment response")
    response_raw = ""
    adverse = None
    if isinstance(response_obj, dict):
        response_raw = _as_text(response_obj.get("treatment response"))
        ae_text = _as_text(response_obj.get("adverse effects")).strip()
        adverse = ae_text if ae_text.lower() not in {"", "n/a", "na"} else None
    elif response_obj is not None:
        response_raw = _as_text(response_obj)
    response = parsers.parse_response(response_raw)
    pfs = parsers.parse_duration(_as_text(merged.get("PFS")))
    os_ = parsers.parse_duration(_as_text(merged.get("OS")))

    from .model import CensoredDuration, ResponseRecord
    from dataclasses import replace as dc_replace

    sample_size = None
    if source is Source.literature:
        n = merged.get("n")
        if isinstance(n, (int, float)) and int(n) >= 1:
            sample_size = int(n)

    line = merged.get("treatment line")
    treatment_line = int(line) if isinstance(line, (int, float)) and int(line) >= 1 else None

    main_rec = None
    if source is Source.literature:
        rec_text = _as_text(merged.get("main recommendation")).strip()
        main_rec = rec_text if rec_text.lower() not in {"", "n/a", "na"} else None

    gender = _as_text(merged.get("gender")).strip() or None
    if gender and gender.lower() in {"n/a", "na"}:
        gender = None
    race = _as_text(merged.get("race")).strip() or None
    if race and race.lower() in {"n/a", "na"}:
        race = None

    study_response = response.value if response.ok and response.value else ResponseRecord(raw=response_raw)
    study_response = dc_replace(study_response, adverse_effects=adverse)

    return DigitalTwin(
        id=subject_id,
        source=source,
        source_ref=source_ref,
        sample_size=sample_size,
        age=age.value if age.ok and age.value else parsers.parse_age("").value,
        gender=gender,
        race=race,
        diagnosis=_as_text(merged.get("diagnosis")).strip(),
        biomarkers=_biomarkers_from_payload(merged.get("biomarkers")),
        previous_treatments=_previous_treatments_from_payload(merged.get("previous treatments")),
        study_treatment=_as_text(merged.get("study treatment")).strip(),
        treatment_line=treatment_line,
        study_response=study_response,
        pfs=pfs.value if pfs.ok and pfs.value else CensoredDuration(raw=_as_text(merged.get("PFS"))),
        os=os_.value if os_.ok and os_.value else CensoredDuration(raw=_as_text(merged.get("OS"))),
        main_recommendation=main_rec,
        adjudication=Adjudication.unreviewed,
    )


# --- Job runner ----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class ExtractionJob:
    doc_ids: tuple[str, ...]
    backend: LlmBackendSpec
    prompt_template_id: str = "extract-v1"
    schema_version: str = SCHEMA_V1
    seed: int = 0


@dataclass(frozen=True, slots=True)
class SubjectResult:
    subject_id: str
    twin: DigitalTwin | None
    provenance: AttributeProvenance
    extractions: tuple[RawExtraction, ...] = ()
    quarantines: tuple[RawExtraction, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def extracted(self) -> bool:
        return self.twin is not None


@dataclass(frozen=True, slots=True)
class JobReport:
    subjects: int
    extracted: int
    quarantined: int
    repairs: int
    attributes_extracted: int
    seed: int
    backend_kind: str
    schema_version: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "subjects": self.subjects,
            "extracted": self.extracted,
            "quarantined": self.quarantined,
            "repairs": self.repairs,
            "attributes_extracted": self.attributes_extracted,
            "seed": self.seed,
            "backend_kind": self.backend_kind,
            "schema_version": self.schema_version,
        }


def extract_record(
    subject_id: str,
    docs: Sequence[SourceDocument],
    backend: Backend,
    template: str | None = None,
    examples: Sequence[Mapping[str, Any]] | None = None,
) -> SubjectResult:
    """Extract one subject (one patient's documents, or one publication).

    All documents must share the subject; each is prompted in order, the
    payloads are contract-checked, merged attribute-wise, parsed, and
    validated. Failure of every document quarantines the subject.
    """
    extractions: list[RawExtraction] = []
    quarantines: list[RawExtraction] = []
    warnings: list[str] = []
    for doc in docs:
        check_privacy(doc.origin, backend.spec)
        prompt = build_prompt(doc, backend.spec, template=template, examples=examples)
        try:
            payload = backend.invoke(prompt)
        except TransportError as exc:
            quarantines.append(
                RawExtraction(doc_id=doc.doc_id, payload="", quarantine_reason=f"transport: {exc}")
            )
            continue
        extraction = enforce_contract(payload, doc_id=doc.doc_id)
        if extraction.quarantined:
            quarantines.append(extraction)
        else:
            extractions.append(extraction)

    if not extractions:
        return SubjectResult(
            subject_id=subject_id,
            twin=None,
            provenance=AttributeProvenance(),
            quarantines=tuple(quarantines),
            warnings=("all documents quarantined",),
        )

    source = Source.institutional if docs[0].origin == ORIGIN_EHR else Source.literature
    merged, provenance = merge_extractions(extractions)
    twin = assemble_twin(subject_id, source, docs[0].path or docs[0].doc_id, merged)
    warnings.extend(provenance.conflicts)
    issues = validate_twin(twin)
    if errors_of(issues):
        details = "; ".join(f"{i.field}: {i.message}" for i in errors_of(issues))
        return SubjectResult(
            subject_id=subject_id,
            twin=None,
            provenance=provenance,
            extractions=tuple(extractions),
            quarantines=tuple(
                quarantines
                + [RawExtraction(doc_id=subject_id, payload="", quarantine_reason=f"validation: {details}")]
            ),
            warnings=tuple(warnings),
        )
    return SubjectResult(
        subject_id=subject_id,
        twin=twin,
        provenance=provenance,
        extractions=tuple(extractions),
        quarantines=tuple(quarantines),
        warnings=tuple(warnings),
    )


def group_subjects(docs: Sequence[SourceDocument]) -> list[tuple[str, list[SourceDocument]]]:
    """Group documents into subjects, preserving manifest order.

    EHR documents group by patient hint (required; the sources give no rule
    for splitting multi-patient exports, so the operator supplies one);
    literature documents are one subject per document.
    """
    subjects: dict[str, list[SourceDocument]] = {}
    order: list[str] = []
    for doc in docs:
        if doc.origin == ORIGIN_EHR:
            if not doc.patient_hint:
                raise ExtractionError(f"ehr document {doc.doc_id} lacks a patient hint")
            key = f"ehr:{doc.patient_hint}"
        else:
            key = f"lit:{doc.doc_id}"
        if key not in subjects:
            subjects[key] = []
            order.append(key)
        subjects[key].append(doc)
    return [(key, subjects[key]) for key in order]


class _RateLimitedBackend(Backend):
    """Caps concurrent invocations against one backend (its rate limit is
    independent of how wide the job runner fans out over subjects)."""

    def __init__(self, inner: Backend, max_in_flight: int):
        import threading

        self._inner = inner
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self.spec = inner.spec

    def invoke(self, prompt: str) -> str:
        with self._gate:
            return self._inner.invoke(prompt)


def run_job(
    job: ExtractionJob,
    docs: Sequence[SourceDocument],
    backend: Backend,
    template: str | None = None,
    examples: Sequence[Mapping[str, Any]] | None = None,
    width: int = 1,
    backend_rate_limit: int | None = None,
) -> tuple[list[SubjectResult], JobReport]:
    """Run extraction over a corpus, subject by subject, in manifest order.

    Per-subject failures quarantine that subject and never abort the job;
    privacy violations are fatal. With the mock backend and a fixed seed the
    whole run is deterministic. `width` > 1 processes subjects concurrently
    while preserving result order; per-subject document order is untouched,
    and backend invocations stay within the per-backend rate limit
    (default: the job width).
    """
    wanted = set(job.doc_ids)
    selected = [d for d in docs if d.doc_id in wanted] if wanted else list(docs)
    for doc in selected:
        check_privacy(doc.origin, backend.spec)

    grouped = group_subjects(selected)
    template = template if template is not None else load_template(job.prompt_template_id)
    if width > 1:
        backend = _RateLimitedBackend(backend, backend_rate_limit or width)

    def work(item: tuple[str, list[SourceDocument]]) -> SubjectResult:
        subject_id, subject_docs = item
        return extract_record(subject_id, subject_docs, backend, template=template, examples=examples)

    if width <= 1:
        results = [work(item) for item in grouped]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=width) as pool:
            results = list(pool.map(work, grouped))

    repairs = 0
    attributes = 0
    quarantined = 0
    extracted = 0
    for result in results:
        quarantined += len(result.quarantines)
        if result.twin is not None:
            extracted += 1
        for extraction in result.extractions:
            repairs += int(extraction.repair_applied)
            attributes += count_attributes(extraction)
    report = JobReport(
        subjects=len(grouped),
        extracted=extracted,
        quarantined=quarantined,
        repairs=repairs,
        attributes_extracted=attributes,
        seed=job.seed,
        backend_kind=backend.spec.kind,
        schema_version=job.schema_version,
    )
    return results, report
