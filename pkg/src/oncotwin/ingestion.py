"""Document intake: normalizes source files (EHR exports, publication full
texts) into a corpus of text documents with per-document statistics.

OCR is an injected external-command adapter, not an embedded engine; tests
stay hermetic with the passthrough stub and the privacy boundary stays with
the operator's configured tool. Document ids are content hashes, so
re-ingesting the same bytes is idempotent and never mutates the source.
"""
from __future__ import annotations

import hashlib
import json
import shlex
import statistics
import subprocess
import tempfile
import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence


class IngestionError(Exception):
    pass


class OcrError(IngestionError):
    pass


TEXT_MEDIA = "text"
PDF_MEDIA = "pdf"
IMAGE_MEDIA = "image"
MEDIA_KINDS = (TEXT_MEDIA, PDF_MEDIA, IMAGE_MEDIA)

ORIGIN_EHR = "ehr"
ORIGIN_LITERATURE = "literature"


@dataclass(frozen=True, slots=True)
class SourceDocument:
    doc_id: str
    origin: str
    media: str
    text: str
    pages: int
    chars: int
    patient_hint: str | None = None
    path: str | None = None

    def manifest_entry(self) -> dict[str, Any]:
        entry: dict[str, Any] = {
            "doc_id": self.doc_id,
            "origin": self.origin,
            "media": self.media,
            "pages": self.pages,
            "chars": self.chars,
            "path": self.path,
        }
        if self.patient_hint is not None:
            entry["patient_hint"] = self.patient_hint
        return entry


def normalize_text(text: str) -> str:
    """Stable normalization: NFC unicode, unix line endings. De-hyphenation
    is deliberately off; it changes token content."""
    return unicodedata.normalize("NFC", text.replace("\r\n", "\n").replace("\r", "\n"))


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class OcrAdapter:
    """Contract for turning pdf/image bytes into UTF-8 text."""

    def run(self, data: bytes, media: str) -> str:  # pragma: no cover - interface
        raise NotImplementedError


class PassthroughOcr(OcrAdapter):
    """Test stub: decodes the bytes as UTF-8 text unchanged."""

    def run(self, data: bytes, media: str) -> str:
        return data.decode("utf-8")


class CommandOcr(OcrAdapter):
    """Runs the configured OCR command (argv template with an {input}
    placeholder) on a temp file holding the input bytes."""

    def __init__(self, command: str, timeout_seconds: float = 120.0):
        if "{input}" not in command:
            raise OcrError(f"ocr command template lacks {{input}} placeholder: {command!r}")
        self.command = command
        self.timeout_seconds = timeout_seconds

    def run(self, data: bytes, media: str) -> str:
        suffix = {PDF_MEDIA: ".pdf", IMAGE_MEDIA: ".png"}.get(media, ".bin")
        with tempfile.NamedTemporaryFile(suffix=suffix, delete=True) as tmp:
            tmp.write(data)
            tmp.flush()
            argv = [part.format(input=tmp.name) for part in shlex.split(self.command)]
            try:
                proc = subprocess.run(
                    argv, capture_output=True, timeout=self.timeout_seconds, check=False
                )
            except FileNotFoundError as exc:
                raise OcrError(f"ocr command not found: {argv[0]}") from exc
            except subprocess.TimeoutExpired as exc:
                raise OcrError(f"ocr command timed out after {self.timeout_seconds}s: {argv[0]}") from exc
        if proc.returncode != 0:
            raise OcrError(
                f"ocr command {argv[0]} exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace').strip()}"
            )
        return proc.stdout.decode("utf-8")


def page_count(text: str) -> int:
    # OCR engines emit form feeds between pages; plain text is one page.
    return text.count("\f") + 1 if text else 0


def ingest(
    source: str | Path,
    origin: str,
    media: str = TEXT_MEDIA,
    ocr: OcrAdapter | None = None,
    patient_hint: str | None = None,
) -> SourceDocument:
    """Bring one source file into the corpus."""
    if origin not in (ORIGIN_EHR, ORIGIN_LITERATURE):
        raise IngestionError(f"unknown origin {origin!r}")
    if media not in MEDIA_KINDS:
        raise IngestionError(f"unknown media {media!r}")
    path = Path(source)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IngestionError(f"unreadable source {path}: {exc}") from exc

    if media == TEXT_MEDIA:
        text = data.decode("utf-8")
    else:
        if ocr is None:
            raise OcrError(f"no OCR adapter configured for {media} document {path}")
        try:
            text = ocr.run(data, media)
        except OcrError as exc:
            raise OcrError(f"{exc} (document {path})") from exc
    text = normalize_text(text)
    if not text.strip():
        raise IngestionError(f"document {path} produced no text")
    return SourceDocument(
        doc_id=content_hash(text),
        origin=origin,
        media=media,
        text=text,
        pages=page_count(text),
        chars=len(text),
        patient_hint=patient_hint,
        path=str(path),
    )


@dataclass(frozen=True, slots=True)
class CorpusStats:
    count: int
    median_pages: float
    median_chars: float
    max_chars: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "count": self.count,
            "median_pages": self.median_pages,
            "median_chars": self.median_chars,
            "max_chars": self.max_chars,
        }


def corpus_stats(docs: Sequence[SourceDocument] | Sequence[dict[str, Any]]) -> CorpusStats:
    """Corpus-level statistics; medians use the even-count midpoint rule."""
    if not docs:
        raise IngestionError("corpus_stats of empty corpus")
    pages = [d["pages"] if isinstance(d, dict) else d.pages for d in docs]
    chars = [d["chars"] if isinstance(d, dict) else d.chars for d in docs]
    return CorpusStats(
        count=len(docs),
        median_pages=float(statistics.median(pages)),
        median_chars=float(statistics.median(chars)),
        max_chars=max(chars),
    )


def docs_per_patient(docs: Iterable[SourceDocument]) -> dict[str, int]:
    """Document counts per patient hint; unhinted docs group under ""."""
    counts = Counter((d.patient_hint or "") for d in docs)
    return dict(sorted(counts.items()))


def write_manifest(docs: Iterable[SourceDocument], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps(doc.manifest_entry(), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[dict[str, Any]]:
    entries = []
    with Path(path).open("r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                entries.append(json.loads(line))
    return entries
