from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from oncotwin.model import (
    CensoredDuration,
    DigitalTwin,
    PdL1Qualitative,
    PdL1Score,
    Source,
    TmbClass,
    TreatmentEvent,
    decode_twin,
    encode_twin,
    errors_of,
    tmb_class,
    validate_twin,
)


class TestTmbClass:
    def test_case_values(self):
        assert tmb_class(6.3) is TmbClass.intermediate
        assert tmb_class(0) is TmbClass.low

    def test_boundaries(self):
        # closed-open intervals: [0,5) low, [5,15) intermediate, [15,inf) high
        assert tmb_class(4.999) is TmbClass.low
        assert tmb_class(5.0) is TmbClass.intermediate
        assert tmb_class(14.999) is TmbClass.intermediate
        assert tmb_class(15.0) is TmbClass.high
        assert tmb_class(169) is TmbClass.high

    @pytest.mark.parametrize("bad", [-0.1, -5, float("nan"), float("inf")])
    def test_rejects_bad_input(self, bad):
        with pytest.raises(ValueError):
            tmb_class(bad)

    @given(st.floats(min_value=0, max_value=1000, allow_nan=False))
    def test_total_and_partitioned(self, value):
        assert tmb_class(value) in (TmbClass.low, TmbClass.intermediate, TmbClass.high)

    @given(
        st.floats(min_value=0, max_value=1000, allow_nan=False),
        st.floats(min_value=0, max_value=1000, allow_nan=False),
    )
    def test_monotone(self, a, b):
        order = [TmbClass.low, TmbClass.intermediate, TmbClass.high]
        low, high = sorted((a, b))
        assert order.index(tmb_class(low)) <= order.index(tmb_class(high))


class TestValidateTwin:
    def test_case_1_fixture_has_no_errors(self, case_1):
        assert errors_of(validate_twin(case_1)) == []

    def test_all_fixture_twins_admissible(self, cohort):
        for twin in cohort:
            assert errors_of(validate_twin(twin)) == [], twin.id

    def test_empty_diagnosis_is_an_error(self, case_1):
        twin = case_1.with_updates(diagnosis="")
        errors = errors_of(validate_twin(twin))
        assert any(i.field == "diagnosis" for i in errors)

    def test_tmb_class_mismatch_is_an_error(self, case_1):
        # recompute via the classifier oracle: 6.3 must be intermediate
        assert tmb_class(6.3) is TmbClass.intermediate
        panel = case_1.biomarkers
        from dataclasses import replace

        twin = case_1.with_updates(biomarkers=replace(panel, tmb=6.3, tmb_class=TmbClass.low))
        errors = errors_of(validate_twin(twin))
        assert any("tmb_class" in i.message for i in errors)

    def test_institutional_sample_size_rejected(self, case_1):
        twin = case_1.with_updates(sample_size=5)
        assert any(i.field == "sample_size" for i in errors_of(validate_twin(twin)))

    def test_literature_sample_size_must_be_positive(self, cohort):
        lit = next(t for t in cohort if t.source is Source.literature)
        twin = lit.with_updates(sample_size=0)
        assert any(i.field == "sample_size" for i in errors_of(validate_twin(twin)))

    def test_pdl1_negative_contradicts_positive_cps(self, case_1):
        from dataclasses import replace

        score = PdL1Score(cps=41, qualitative=PdL1Qualitative.negative, raw="x")
        twin = case_1.with_updates(biomarkers=replace(case_1.biomarkers, pdl1=score))
        assert any("contradicts" in i.message for i in errors_of(validate_twin(twin)))

    def test_empty_pdl1_score_is_an_error(self, case_1):
        from dataclasses import replace

        twin = case_1.with_updates(biomarkers=replace(case_1.biomarkers, pdl1=PdL1Score()))
        assert errors_of(validate_twin(twin))

    def test_censoring_marker_requires_flag(self, case_1):
        twin = case_1.with_updates(pfs=CensoredDuration(months=30, censored=False, raw=">30 (ongoing)"))
        assert any(i.field == "PFS" for i in errors_of(validate_twin(twin)))

    def test_treatment_lines_strictly_increasing(self, case_1):
        events = (
            TreatmentEvent(line=1, description="carboplatin + paclitaxel"),
            TreatmentEvent(line=1, description="repeat chemotherapy"),
        )
        twin = case_1.with_updates(previous_treatments=events)
        assert any("strictly increasing" in i.message for i in errors_of(validate_twin(twin)))

    def test_sparse_record_warns_but_passes(self):
        twin = DigitalTwin(id="sparse-1", source=Source.institutional, diagnosis="UCS")
        issues = validate_twin(twin)
        assert errors_of(issues) == []
        warnings = [i for i in issues if i.severity == "warning"]
        assert len(warnings) == 9  # everything except diagnosis is absent

    def test_deterministic(self, cohort):
        for twin in cohort:
            assert validate_twin(twin) == validate_twin(twin)


class TestSerialization:
    def test_round_trip_preserves_every_fixture_twin(self, cohort):
        for twin in cohort:
            encoded = encode_twin(twin)
            assert decode_twin(encoded) == twin
            assert encode_twin(decode_twin(encoded)) == encoded

    def test_canonical_key_names(self, case_1):
        encoded = encode_twin(case_1)
        for key in (
            "n", "age", "gender", "race", "diagnosis", "biomarkers",
            "previous treatments", "study treatment", "study treatment response",
            "PFS", "OS", "id", "source", "source_ref", "adjudication",
        ):
            assert key in encoded
        assert set(encoded["biomarkers"]) == {"pd-l1", "tmb/mb", "msi/mss", "others"}
        assert set(encoded["study treatment response"]) == {"treatment response", "adverse effects"}

    def test_round_trip_with_event_responses(self, case_1):
        from oncotwin.parsers import parse_response

        events = (
            TreatmentEvent(line=1, description="carboplatin + paclitaxel", response=parse_response("PR").value),
            TreatmentEvent(line=2, description="doxorubicin"),
        )
        twin = case_1.with_updates(previous_treatments=events)
        assert decode_twin(encode_twin(twin)) == twin
