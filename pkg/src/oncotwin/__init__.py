"""oncotwin: digital-twin pipeline for rare-tumor precision oncology.

Extracts schema-constrained patient records from unstructured clinical and
literature documents via pluggable LLM backends, stores them as queryable
digital twins, matches analog cases by biomarker eligibility rules, computes
censored outcome statistics, scores extraction quality, and assembles
biomarker-driven treatment recommendations.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    Adjudication,
    AgeValue,
    BiomarkerPanel,
    CensoredDuration,
    DigitalTwin,
    MmrStatus,
    OtherMarker,
    PdL1Qualitative,
    PdL1Score,
    ResponseCategory,
    ResponseRecord,
    Source,
    TmbClass,
    TreatmentEvent,
    decode_twin,
    encode_twin,
    tmb_class,
    validate_twin,
)
