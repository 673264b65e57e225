from __future__ import annotations

from oncotwin import fixtures
from oncotwin.model import Source


class TestCohortFixture:
    def test_twenty_one_cases_split_seven_fourteen(self, cohort):
        assert len(cohort) == 21
        assert sum(1 for t in cohort if t.source is Source.institutional) == 7
        assert sum(1 for t in cohort if t.source is Source.literature) == 14

    def test_ids_sequential(self, cohort):
        assert [t.id for t in cohort] == [f"case-{i}" for i in range(1, 22)]

    def test_institutional_records_carry_no_sample_size(self, institutional):
        assert all(t.sample_size is None for t in institutional)

    def test_literature_records_carry_study_n(self, literature):
        assert all(t.sample_size is not None and t.sample_size >= 1 for t in literature)
        multi = [t for t in literature if t.source_ref == "PMID: 34401435"]
        assert len(multi) == 7  # individually reported patients of one study
        assert all(t.sample_size == 7 for t in multi)

    def test_all_confirmed_by_adjudication(self, cohort):
        assert all(t.adjudication.value == "confirmed" for t in cohort)

    def test_synthetic_candidates_have_eligible_profiles_without_ici(self, synthetic_candidates):
        from oncotwin.matcher import evaluate_eligibility, EligibilitySpec

        spec = EligibilitySpec(require_ici_treatment=False)
        for twin in synthetic_candidates:
            assert evaluate_eligibility(twin, spec).passed
            assert evaluate_eligibility(twin).per_rule["ici"] == "fail"


class TestAggregateTrialsReference:
    def test_seven_studies_no_patient_level_rows(self):
        studies = fixtures.load_aggregate_trials()
        assert len(studies) == 7
        for study in studies:
            assert study["name"]
            assert "patients" not in study  # aggregate only, never twins
            assert isinstance(study["sample_size"], dict)

    def test_ucs_counts_present_where_reported(self):
        studies = {s["name"]: s for s in fixtures.load_aggregate_trials()}
        assert studies["RUBY trial"]["sample_size"]["ucs"] == 44
        assert studies["NCI-MATCH (EAY131)"]["sample_size"]["ucs"] == 4
