from __future__ import annotations

import pytest

from oncotwin import fixtures
from oncotwin.store import TwinStore


@pytest.fixture(scope="session")
def cohort():
    return fixtures.load_fixture_twins()


@pytest.fixture(scope="session")
def institutional(cohort):
    return [t for t in cohort if t.source.value == "institutional"]


@pytest.fixture(scope="session")
def literature(cohort):
    return [t for t in cohort if t.source.value == "literature"]


@pytest.fixture(scope="session")
def case_1(cohort):
    return next(t for t in cohort if t.id == "case-1")


@pytest.fixture(scope="session")
def synthetic_candidates():
    return fixtures.load_synthetic_candidates()


@pytest.fixture()
def seeded_store(tmp_path, cohort):
    store = TwinStore(tmp_path / "twins")
    for twin in cohort:
        store.put(twin)
    return store


@pytest.fixture(scope="session")
def raw_rows():
    return fixtures.load_raw_fixture_rows()
