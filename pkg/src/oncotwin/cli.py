"""Command-line surface for the digital-twin pipeline.

Every subcommand supports --format json|table; json output is stable-keyed
and machine-diffable for fixed seeds. Usage errors exit 2, data errors 1.
"""
from __future__ import annotations

import datetime as dt
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import click

from . import analytics, evaluation, extraction, fixtures, ingestion, matcher, recommender
from .config import load_config
from .model import decode_twin, encode_twin, errors_of, validate_twin
from .store import StoreError, TwinStore


def emit(data: Any, fmt: str, table_rows: Sequence[dict[str, Any]] | None = None) -> None:
    """Print as stable-keyed JSON or as an aligned table (advisory only)."""
    if fmt == "json":
        click.echo(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False))
        return
    rows = table_rows if table_rows is not None else _tabulate(data)
    if not rows:
        click.echo("(empty)")
        return
    headers = list(rows[0].keys())
    widths = {h: max(len(h), *(len(str(r.get(h, ""))) for r in rows)) for h in headers}
    click.echo("  ".join(h.ljust(widths[h]) for h in headers))
    click.echo("  ".join("-" * widths[h] for h in headers))
    for row in rows:
        click.echo("  ".join(str(row.get(h, "")).ljust(widths[h]) for h in headers))


def _tabulate(data: Any) -> list[dict[str, Any]]:
    if isinstance(data, list):
        return [d if isinstance(d, dict) else {"value": d} for d in data]
    if isinstance(data, dict):
        return [{"key": k, "value": json.dumps(v, sort_keys=True) if isinstance(v, (dict, list)) else v} for k, v in data.items()]
    return [{"value": data}]


def fail(message: str) -> "click.ClickException":
    return click.ClickException(message)


format_option = click.option(
    "--format", "fmt", type=click.Choice(["json", "table"]), default="json", show_default=True
)
store_option = click.option("--store", "store_path", default="./twins", show_default=True, help="Store directory")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="YAML config file")
@click.pass_context
def main(ctx: click.Context, config_path: str | None) -> None:
    """Digital-twin pipeline: ingest, extract, store, match, summarize,
    evaluate, recommend, serve."""
    ctx.obj = load_config(config_path)


@main.command()
@click.argument("sources", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--origin", type=click.Choice(["ehr", "literature"]), required=True)
@click.option("--media", type=click.Choice(["text", "pdf", "image"]), default="text", show_default=True)
@click.option("--patient-hint", default=None, help="Subject grouping key for EHR documents")
@click.option("--manifest", "manifest_path", default=None, help="Write/extend a corpus manifest file")
@click.option("--text-cache", "text_cache", default=None, help="Directory to cache normalized text")
@format_option
@click.pass_context
def ingest(ctx, sources, origin, media, patient_hint, manifest_path, text_cache, fmt) -> None:
    """Ingest source documents into a normalized text corpus."""
    ocr = None
    command = ctx.obj["ocr"]["command"]
    if media != "text":
        if not command:
            raise fail("pdf/image ingestion needs ocr.command configured")
        ocr = ingestion.CommandOcr(command, float(ctx.obj["ocr"]["timeout_seconds"]))
    docs = []
    try:
        for source in sources:
            docs.append(ingestion.ingest(source, origin, media=media, ocr=ocr, patient_hint=patient_hint))
    except ingestion.IngestionError as exc:
        raise fail(str(exc))
    if text_cache:
        cache = Path(text_cache)
        cache.mkdir(parents=True, exist_ok=True)
        for doc in docs:
            (cache / f"{doc.doc_id}.txt").write_text(doc.text, encoding="utf-8")
    if manifest_path:
        existing = ingestion.read_manifest(manifest_path) if Path(manifest_path).exists() else []
        with Path(manifest_path).open("a", encoding="utf-8") as f:
            known = {e["doc_id"] for e in existing}
            for doc in docs:
                if doc.doc_id not in known:
                    f.write(json.dumps(doc.manifest_entry(), sort_keys=True) + "\n")
    stats = ingestion.corpus_stats(docs)
    emit(
        {"ingested": [d.manifest_entry() for d in docs], "stats": stats.to_dict()},
        fmt,
        table_rows=[d.manifest_entry() for d in docs],
    )


@main.command()
@click.option("--backend", "backend_name", type=click.Choice(["local", "cloud", "mock"]), default="mock", show_default=True)
@click.option("--origin", type=click.Choice(["ehr", "literature"]), default="literature", show_default=True)
# paths are checked in-command: the privacy guard must fire before any IO
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--text-cache", "text_cache", required=True, type=click.Path())
@click.option("--replies-dir", default=None, help="Canned replies for the mock backend")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--width", type=int, default=None, help="Concurrent subjects (default: extraction.width config, 1)")
@store_option
@click.option("--report", "report_path", default=None, help="Write the job report to a file")
@format_option
@click.pass_context
def extract(ctx, backend_name, origin, manifest_path, text_cache, replies_dir, seed, width, store_path, report_path, fmt) -> None:
    """Run schema-constrained extraction over an ingested corpus."""
    backend_conf = ctx.obj["backends"][backend_name]
    spec = extraction.LlmBackendSpec(
        kind=backend_conf.get("kind", backend_name),
        endpoint=backend_conf.get("endpoint", ""),
        model_name=backend_conf.get("model", ""),
        max_context_chars=int(backend_conf.get("max_context_chars", 1_000_000)),
        privacy_tier=backend_conf.get("privacy_tier", "public_only"),
    )
    # Privacy guard fires before any manifest read or network use.
    try:
        extraction.check_privacy(origin, spec)
    except extraction.PrivacyError as exc:
        raise fail(str(exc))

    if not Path(manifest_path).exists():
        raise fail(f"manifest not found: {manifest_path}")
    if not Path(text_cache).is_dir():
        raise fail(f"text cache directory not found: {text_cache}")
    entries = ingestion.read_manifest(manifest_path)
    docs = []
    cache = Path(text_cache)
    for entry in entries:
        text_path = cache / f"{entry['doc_id']}.txt"
        if not text_path.exists():
            raise fail(f"no cached text for document {entry['doc_id']}")
        docs.append(
            ingestion.SourceDocument(
                doc_id=entry["doc_id"],
                origin=entry["origin"],
                media=entry["media"],
                text=text_path.read_text(encoding="utf-8"),
                pages=entry["pages"],
                chars=entry["chars"],
                patient_hint=entry.get("patient_hint"),
                path=entry.get("path"),
            )
        )
    replies = replies_dir or ctx.obj["backends"]["mock"].get("replies_dir")
    if spec.kind == "mock" and not replies:
        raise fail("mock backend needs --replies-dir")
    if width is None:
        width = int(ctx.obj["extraction"]["width"])
    try:
        backend = extraction.make_backend(spec, replies)
        job = extraction.ExtractionJob(doc_ids=tuple(d.doc_id for d in docs), backend=spec, seed=seed)
        results, report = extraction.run_job(job, docs, backend, width=width)
    except extraction.ExtractionError as exc:
        raise fail(str(exc))

    twin_store = TwinStore(store_path)
    stored = []
    for result in results:
        if result.twin is not None:
            twin_store.put(result.twin)
            stored.append(result.twin.id)
    if report_path:
        Path(report_path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    quarantined = [
        {"subject": r.subject_id, "reasons": [q.quarantine_reason for q in r.quarantines]}
        for r in results
        if r.quarantines
    ]
    emit({"report": report.to_dict(), "stored": stored, "quarantined": quarantined}, fmt)
    if report.extracted == 0 and report.subjects > 0:
        sys.exit(1)


@main.command()
@click.argument("twin_file", type=click.Path(exists=True))
@format_option
def validate(twin_file: str, fmt: str) -> None:
    """Validate a twin record file against the schema contract."""
    try:
        twin = decode_twin(json.loads(Path(twin_file).read_text(encoding="utf-8")))
    except (ValueError, KeyError) as exc:
        raise fail(f"cannot decode twin: {exc}")
    issues = validate_twin(twin)
    report = [{"field": i.field, "severity": i.severity, "message": i.message} for i in issues]
    emit({"id": twin.id, "errors": sum(1 for i in issues if i.severity == "error"), "issues": report}, fmt, table_rows=report)
    if errors_of(issues):
        sys.exit(1)


@main.group()
def store() -> None:
    """Twin store operations."""


@store.command("put")
@click.argument("twin_file", type=click.Path(exists=True))
@store_option
@format_option
def store_put(twin_file: str, store_path: str, fmt: str) -> None:
    try:
        twin = decode_twin(json.loads(Path(twin_file).read_text(encoding="utf-8")))
        twin_store = TwinStore(store_path)
        twin_store.put(twin)
    except (StoreError, ValueError, KeyError) as exc:
        raise fail(str(exc))
    emit({"id": twin.id, "count": twin_store.count}, fmt)


@store.command("get")
@click.argument("twin_id")
@store_option
@format_option
def store_get(twin_id: str, store_path: str, fmt: str) -> None:
    try:
        twin = TwinStore(store_path).get(twin_id)
    except StoreError as exc:
        raise fail(str(exc))
    emit(encode_twin(twin), fmt)


@store.command("query")
@click.argument("expression", default="")
@store_option
@format_option
def store_query(expression: str, store_path: str, fmt: str) -> None:
    """Query twins: `field cmp value` triples joined by and/or."""
    try:
        twins = TwinStore(store_path).query(expression or None)
    except StoreError as exc:
        raise fail(str(exc))
    rows = [
        {
            "id": t.id,
            "source": t.source.value,
            "diagnosis": t.diagnosis,
            "cps": t.biomarkers.pdl1.cps if t.biomarkers.pdl1 else None,
            "tmb": t.biomarkers.tmb,
            "mmr": t.biomarkers.mmr.value if t.biomarkers.mmr else None,
            "line": t.treatment_line,
            "pfs": t.pfs.raw,
            "os": t.os.raw,
        }
        for t in twins
    ]
    emit({"count": len(twins), "twins": [encode_twin(t) for t in twins]}, fmt, table_rows=rows)


@main.command("seed-fixtures")
@store_option
@format_option
def seed_fixtures(store_path: str, fmt: str) -> None:
    """Seed the store with the packaged 21-case cohort fixture."""
    twin_store = TwinStore(store_path)
    for twin in fixtures.load_fixture_twins():
        twin_store.put(twin)
    emit({"count": twin_store.count, "ids": twin_store.ids()}, fmt)


def _spec_from_options(min_cps, max_tmb, mmr, no_similarity, no_ici) -> matcher.EligibilitySpec:
    kwargs: dict[str, Any] = {}
    if min_cps is not None:
        kwargs["min_cps"] = min_cps
    if max_tmb is not None:
        kwargs["max_tmb_exclusive"] = max_tmb
    if mmr is not None:
        kwargs["required_mmr"] = matcher.MmrStatus(mmr)
    if no_similarity:
        kwargs["similarity"] = frozenset()
    if no_ici:
        kwargs["require_ici_treatment"] = False
    return matcher.EligibilitySpec(**kwargs)


@main.command()
@store_option
@click.option("--min-cps", type=float, default=None)
@click.option("--max-tmb", type=float, default=None)
@click.option("--mmr", type=click.Choice(["pMMR", "dMMR"]), default=None)
@click.option("--no-similarity", is_flag=True, help="Disable the similarity stage")
@click.option("--no-ici", is_flag=True, help="Disable the treated-with-ICI stage")
@click.option("--include-synthetic", is_flag=True, help="Add the packaged synthetic non-ICI candidates")
@format_option
def match(store_path, min_cps, max_tmb, mmr, no_similarity, no_ici, include_synthetic, fmt) -> None:
    """Run the eligibility funnel over the store."""
    twins = TwinStore(store_path).all_twins()
    if include_synthetic:
        twins = twins + fixtures.load_synthetic_candidates()
    spec = _spec_from_options(min_cps, max_tmb, mmr, no_similarity, no_ici)
    stages = matcher.cohort_funnel(twins, spec)
    emit(
        {"spec": spec.to_dict(), "stages": [s.to_dict() for s in stages]},
        fmt,
        table_rows=[{"stage": s.name, "count": len(s.ids), "ids": ", ".join(s.ids)} for s in stages],
    )


@main.command()
@store_option
@click.option("--source", type=click.Choice(["institutional", "literature"]), default=None)
@click.option("--query", "expression", default=None, help="Predicate filter")
@format_option
def summarize(store_path, source, expression, fmt) -> None:
    """Cohort outcome summary (censoring policy: observed-bound)."""
    twin_store = TwinStore(store_path)
    twins = twin_store.query(expression) if expression else twin_store.all_twins()
    if source:
        twins = [t for t in twins if t.source.value == source]
    summary = analytics.summarize(twins)
    emit(summary.to_dict(), fmt)


@main.command()
@click.option("--adjudications", "adjudications_path", type=click.Path(exists=True), default=None)
@click.option("--lint-table", "table_path", type=click.Path(exists=True), default=None, help="Lint an imported metrics table")
@format_option
def evaluate(adjudications_path, table_path, fmt) -> None:
    """Score adjudication files into the metrics report; lint imported tables."""
    if adjudications_path is None and table_path is None:
        raise click.UsageError("need --adjudications and/or --lint-table")
    output: dict[str, Any] = {}
    if adjudications_path:
        records = []
        with Path(adjudications_path).open("r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    records.append(evaluation.AdjudicationRecord.from_dict(json.loads(line)))
        try:
            rows = evaluation.evaluate_run(records)
        except evaluation.AdjudicationConflict as exc:
            raise fail(str(exc))
        output["rows"] = [r.to_dict() for r in rows]
    if table_path:
        table = json.loads(Path(table_path).read_text(encoding="utf-8"))
        rows_obj = table["rows"] if isinstance(table, dict) else table
        output["lint"] = [f.to_dict() for f in evaluation.lint_metrics_table(rows_obj)]
    table_rows = output.get("rows") or output.get("lint") or []
    emit(output, fmt, table_rows=[{k: v for k, v in r.items() if k != "raw_metrics"} for r in table_rows])


@main.command("sample-size")
@click.option("--Z", "z", type=float, required=True, help="Confidence z-score")
@click.option("--N", "population", type=int, required=True, help="Population size")
@click.option("--e", "margin", type=float, required=True, help="Margin of error")
@click.option("--P", "proportion", type=float, required=True, help="Expected proportion")
@format_option
def sample_size(z, population, margin, proportion, fmt) -> None:
    """Cochran sample size with finite-population correction."""
    try:
        n = evaluation.sample_size(z, population, margin, proportion)
    except ValueError as exc:
        raise fail(str(exc))
    if fmt == "json":
        emit({"Z": z, "N": population, "e": margin, "P": proportion, "n": n}, fmt)
    else:
        click.echo(str(n))


def _recommend_for(store_path, twin_id, region, allow_off_label, as_of, kb_path):
    twin_store = TwinStore(store_path)
    try:
        twin = twin_store.get(twin_id)
    except StoreError as exc:
        raise fail(str(exc))
    kb = recommender.load_kb(kb_path)
    context = recommender.RecommendContext(
        region=region,
        allow_off_label=allow_off_label,
        as_of=dt.date.fromisoformat(as_of) if as_of else None,
    )
    return twin, twin_store, recommender.recommend(twin, kb, context)


@main.command()
@click.argument("twin_id")
@store_option
@click.option("--region", default=None)
@click.option("--allow-off-label", is_flag=True)
@click.option("--as-of", default=None, help="Reference date (ISO) for staleness checks")
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@format_option
def recommend(twin_id, store_path, region, allow_off_label, as_of, kb_path, fmt) -> None:
    """Biomarker-driven recommendations for a stored twin."""
    _, _, recs = _recommend_for(store_path, twin_id, region, allow_off_label, as_of, kb_path)
    rows = [
        {"biomarker": r.entry.biomarker, "kind": r.action_kind.value, "action": r.entry.action,
         "evidence": r.entry.evidence_level.value, "notes": "; ".join(r.gating_notes)}
        for r in recs
    ]
    emit({"twin_id": twin_id, "recommendations": [r.to_dict() for r in recs]}, fmt, table_rows=rows)


@main.command()
@click.argument("twin_id")
@click.option("--biomarker", required=True, help="Biomarker whose recommendation backs the request")
@store_option
@click.option("--region", default=None)
@click.option("--allow-off-label", is_flag=True)
@click.option("--as-of", default=None)
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@click.option("--with-analogs", is_flag=True, help="Include the analog-cohort outcome summary")
def letter(twin_id, biomarker, store_path, region, allow_off_label, as_of, kb_path, with_analogs) -> None:
    """Render a cost-coverage request letter for one recommendation."""
    twin, twin_store, recs = _recommend_for(store_path, twin_id, region, allow_off_label, as_of, kb_path)
    matching = [r for r in recs if r.entry.biomarker.lower() == biomarker.lower()]
    if not matching:
        raise fail(f"no recommendation for biomarker {biomarker!r} on twin {twin_id}")
    summary = None
    if with_analogs:
        result = matcher.whatif(twin, {}, None, twin_store.all_twins())
        summary = result.summary
    click.echo(
        recommender.coverage_letter(
            twin, matching[0], analog_summary=summary,
            date=dt.date.fromisoformat(as_of) if as_of else None,
        )
    )


@main.command()
@store_option
@click.option("--bind", default=None, help="host:port (default from config)")
@click.option("--kb", "kb_path", type=click.Path(exists=True), default=None)
@click.pass_context
def serve(ctx, store_path, bind, kb_path) -> None:
    """Run the HTTP service."""
    from .service import serve as run_service

    run_service(store_path, bind or ctx.obj["server"]["bind"], kb_path)


if __name__ == "__main__":
    main()
