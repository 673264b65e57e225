from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from oncotwin.evaluation import (
    AdjudicationConflict,
    AdjudicationRecord,
    ConfusionTally,
    draw_sample,
    evaluate_run,
    lint_metrics_table,
    metrics,
    round_half_up,
    sample_size,
    score,
    synthesize_adjudications,
)
from oncotwin.fixtures import load_table1_rows


class TestScore:
    def test_exact_match(self):
        assert score("UCS", "UCS") == "tp"

    def test_both_absent(self):
        assert score(None, None) == "tn"
        assert score("n/a", None) == "tn"

    def test_spurious_extraction(self):
        assert score("UCS", None) == "fp"

    def test_mismatch_counts_against_recall(self):
        assert score("6 months", "PFS 18", attribute="PFS") == "fn"

    def test_duration_canonicalization(self):
        assert score("4", "4.0", attribute="PFS [months]") == "tp"
        assert score(">30 (ongoing)", ">30", attribute="PFS") == "tp"

    def test_case_insensitive(self):
        assert score("Pembrolizumab", "pembrolizumab") == "tp"


class TestMetrics:
    def test_literature_total_row(self):
        tally = ConfusionTally("TOTAL", tp=225, tn=120, fp=0, fn=7)
        m = metrics(tally).rounded()
        assert (m.accuracy, m.precision, m.recall, m.f1) == (0.98, 1.00, 0.97, 0.98)

    def test_perfect_row(self):
        m = metrics(ConfusionTally("Diagnosis", tp=7)).rounded()
        assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)

    def test_low_recall_row(self):
        m = metrics(ConfusionTally("PFS", tp=1, fn=6)).rounded()
        assert m.recall == 0.14

    def test_undefined_metrics_are_absent(self):
        m = metrics(ConfusionTally("x", tn=5))
        assert m.precision is None and m.recall is None and m.f1 is None
        assert m.accuracy == 1.0

    def test_zero_observations_rejected(self):
        with pytest.raises(ValueError):
            metrics(ConfusionTally("x"))

    def test_rounding_is_half_up(self):
        assert round_half_up(0.125) == 0.13
        assert round_half_up(0.985) == 0.99

    @given(
        st.integers(min_value=0, max_value=500),
        st.integers(min_value=0, max_value=500),
        st.integers(min_value=0, max_value=500),
        st.integers(min_value=0, max_value=500),
    )
    def test_bounds_and_f1_below_max_component(self, tp, tn, fp, fn):
        tally = ConfusionTally("x", tp=tp, tn=tn, fp=fp, fn=fn)
        if tally.observations == 0:
            return
        m = metrics(tally)
        for value in (m.accuracy, m.precision, m.recall, m.f1):
            if value is not None:
                assert 0.0 <= value <= 1.0
        if m.f1 is not None:
            assert m.f1 <= max(m.precision, m.recall) + 1e-12
            assert m.f1 <= min(2 * m.precision, 2 * m.recall) + 1e-12


class TestSampleSize:
    def test_stated_parameters_give_367(self):
        assert sample_size(1.96, 7956, 0.05, 0.5) == 367

    def test_infinite_population_limit(self):
        assert sample_size(1.96, 10**9, 0.05, 0.5) == 385  # ceil(384.16)

    def test_population_of_one(self):
        assert sample_size(1.96, 1, 0.05, 0.5) == 1

    @pytest.mark.parametrize(
        "z,n,e,p", [(0, 10, 0.05, 0.5), (1.96, 0, 0.05, 0.5), (1.96, 10, 1.5, 0.5), (1.96, 10, 0.05, 0.0)]
    )
    def test_domain_violations(self, z, n, e, p):
        with pytest.raises(ValueError):
            sample_size(z, n, e, p)

    def test_monotonicity_over_grid(self):
        # 1,000-point grid: non-increasing in e, non-decreasing in N,
        # maximized at P=0.5
        es = [0.01 + 0.01 * i for i in range(10)]
        ns = [10, 50, 100, 500, 1000, 5000, 10000, 50000, 100000, 1000000]
        ps = [0.05 + 0.09 * i for i in range(10)]
        checked = 0
        for n in ns:
            for p in ps:
                values = [sample_size(1.96, n, e, p) for e in es]
                assert all(a >= b for a, b in zip(values, values[1:]))
                checked += len(es)
        for e in es:
            for p in ps:
                values = [sample_size(1.96, n, e, p) for n in ns]
                assert all(a <= b for a, b in zip(values, values[1:]))
        for n in ns[:5]:
            for e in es[:5]:
                peak = sample_size(1.96, n, e, 0.5)
                assert all(sample_size(1.96, n, e, p) <= peak for p in ps)
        assert checked >= 1000


class TestDrawSample:
    def test_draws_requested_count_distinct(self):
        ids = [f"attr-{i}" for i in range(7956)]
        sample = draw_sample(ids, 352, seed=1)
        assert len(sample) == 352
        assert len(set(sample)) == 352

    def test_whole_population(self):
        ids = ["a", "b", "c"]
        assert sorted(draw_sample(ids, 3, seed=9)) == ids

    def test_deterministic_and_order_independent(self):
        ids = [f"x-{i}" for i in range(100)]
        first = draw_sample(ids, 10, seed=5)
        second = draw_sample(list(reversed(ids)), 10, seed=5)
        assert first == second

    def test_oversized_sample_rejected(self):
        with pytest.raises(ValueError):
            draw_sample(["a"], 2, seed=0)


class TestEvaluateRun:
    def test_literature_fixture_reproduces_total_row(self):
        rows = [r for r in load_table1_rows() if r["source"] == "literature"]
        records = synthesize_adjudications(rows)
        assert len(records) == 352
        result = evaluate_run(records)
        total = next(r for r in result if r.attribute == "TOTAL")
        assert (total.tally.observations, total.tally.tp, total.tally.tn, total.tally.fp, total.tally.fn) == (
            352, 225, 120, 0, 7,
        )
        m = total.metrics.rounded()
        assert (m.accuracy, m.precision, m.recall, m.f1) == (0.98, 1.00, 0.97, 0.98)

    def test_ehr_fixture_accuracy(self):
        rows = [r for r in load_table1_rows() if r["source"] == "ehr"]
        subjects = [f"case-{i}" for i in range(1, 8)]
        records = synthesize_adjudications(rows, subjects=subjects)
        result = evaluate_run(records)
        total = next(r for r in result if r.attribute == "TOTAL")
        assert total.tally.observations == 70
        assert total.tally.tp == 53
        assert round_half_up(total.metrics.accuracy) == 0.76

    def test_totals_equal_sum_of_rows(self):
        records = synthesize_adjudications(load_table1_rows())
        result = evaluate_run(records)
        for source in ("ehr", "literature"):
            rows = [r for r in result if r.source == source and r.attribute != "TOTAL"]
            total = next(r for r in result if r.source == source and r.attribute == "TOTAL")
            assert sum(r.tally.tp for r in rows) == total.tally.tp
            assert sum(r.tally.observations for r in rows) == total.tally.observations

    def test_empty_set(self):
        assert evaluate_run([]) == []

    def test_conflicting_verdicts_rejected(self):
        records = [
            AdjudicationRecord("s1", "Age", "77", "77", "tp"),
            AdjudicationRecord("s1", "Age", None, "77", "fn"),
        ]
        with pytest.raises(AdjudicationConflict):
            evaluate_run(records)

    def test_verdicts_consistent_with_score(self):
        for record in synthesize_adjudications(load_table1_rows()):
            assert score(record.extracted, record.gold, record.attribute) == record.verdict


class TestTableLinter:
    def test_flags_known_inconsistent_rows(self):
        findings = lint_metrics_table(load_table1_rows())
        flagged = {(f.source, f.attribute) for f in findings}
        # the published table's self-inconsistent rows
        assert ("ehr", "Previous treatments") in flagged
        assert ("ehr", "Study treatment response") in flagged
        assert ("ehr", "TOTAL") in flagged
        assert len(flagged) >= 2

    def test_recomputation_details(self):
        findings = lint_metrics_table(load_table1_rows())
        prev = [f for f in findings if f.attribute == "Previous treatments" and f.field == "recall"]
        assert prev and prev[0].printed == 1.00 and prev[0].computed == 0.29
        total = [f for f in findings if f.attribute == "TOTAL" and f.source == "ehr" and f.field == "recall"]
        assert total and total[0].printed == 0.85 and total[0].computed == 0.78

    def test_consistent_rows_not_flagged(self):
        findings = lint_metrics_table(load_table1_rows())
        flagged = {(f.source, f.attribute) for f in findings}
        assert ("literature", "TOTAL") not in flagged
        assert ("ehr", "PFS [months]") not in flagged
        assert ("ehr", "Biomarkers") not in flagged
