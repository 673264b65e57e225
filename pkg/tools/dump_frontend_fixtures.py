"""Regenerate the frontend test fixtures from live service responses.

Run from the repository root after changing the service, the fixture cohort,
or the knowledge file:

    python tools/dump_frontend_fixtures.py
"""
from __future__ import annotations

import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from oncotwin import fixtures
from oncotwin.service import create_app
from oncotwin.store import TwinStore

OUT = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        store = TwinStore(Path(tmp) / "twins")
        for twin in fixtures.load_fixture_twins():
            store.put(twin)
        client = TestClient(create_app(store))

        def dump(name: str, response) -> None:
            assert response.status_code == 200, (name, response.status_code, response.text)
            OUT.joinpath(name).write_text(
                json.dumps(response.json(), indent=2, sort_keys=True), encoding="utf-8"
            )
            print("wrote", OUT / name)

        dump("twins.json", client.get("/v1/twins"))
        dump("twin_case1.json", client.get("/v1/twins/case-1"))
        dump("whatif_default.json", client.post("/v1/whatif", json={"id": "case-1"}))
        dump("whatif_mincps80.json", client.post("/v1/whatif", json={"id": "case-1", "spec": {"min_cps": 80}}))
        dump("whatif_dmmr.json", client.post("/v1/whatif", json={"id": "case-1", "overrides": {"mmr": "dMMR"}}))
        dump(
            "recommend_default.json",
            client.post(
                "/v1/recommend",
                json={"id": "case-1", "region": "Bavaria", "allow_off_label": True, "as_of": "2024-08-15"},
            ),
        )
        dump(
            "recommend_her2_negative.json",
            client.post(
                "/v1/recommend",
                json={
                    "id": "case-1",
                    "overrides": {"others": {"HER2": "negative"}},
                    "region": "Bavaria",
                    "allow_off_label": True,
                    "as_of": "2024-08-15",
                },
            ),
        )
        dump("kb.json", client.get("/v1/kb"))


if __name__ == "__main__":
    main()
