"""Configuration: YAML file with documented keys, overridable per-key via
environment variables with the ONCOTWIN_ prefix (dots become underscores,
e.g. ONCOTWIN_STORE_PATH, ONCOTWIN_OCR_COMMAND, ONCOTWIN_SERVER_BIND).
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Any, Mapping

import yaml

ENV_PREFIX = "ONCOTWIN_"

DEFAULTS: dict[str, Any] = {
    "store": {"path": "./twins"},
    "kb": {"path": None},  # None -> packaged default knowledge file
    "ocr": {"command": None, "timeout_seconds": 120},
    "server": {"bind": "127.0.0.1:8756"},
    "extraction": {"width": 1, "stale_after_months": 24},
    "backends": {
        "mock": {"kind": "mock", "privacy_tier": "phi_allowed", "replies_dir": None},
        "local": {
            "kind": "local",
            "endpoint": "http://127.0.0.1:8080/v1/generate",
            "model": "local-extractor",
            "privacy_tier": "phi_allowed",
            "max_context_chars": 1000000,
        },
        "cloud": {
            "kind": "cloud",
            "endpoint": "https://example.invalid/v1/generate",
            "model": "cloud-extractor",
            "privacy_tier": "public_only",
            "max_context_chars": 1000000,
        },
    },
}


def _deep_merge(base: dict[str, Any], extra: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _apply_env(config: dict[str, Any], environ: Mapping[str, str]) -> dict[str, Any]:
    for name, raw in environ.items():
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX) :].lower().split("_")
        node = config
        # Walk greedily: prefer the longest key match at each level so
        # STALE_AFTER_MONTHS style keys resolve.
        while len(path) > 1:
            for take in range(len(path) - 1, 0, -1):
                candidate = "_".join(path[:take])
                if candidate in node and isinstance(node[candidate], dict):
                    node = node[candidate]
                    path = path[take:]
                    break
            else:
                break
        key = "_".join(path)
        value: Any = raw
        if raw.lower() in {"true", "false"}:
            value = raw.lower() == "true"
        else:
            try:
                value = int(raw)
            except ValueError:
                try:
                    value = float(raw)
                except ValueError:
                    value = raw
        node[key] = value
    return config


def load_config(path: str | Path | None = None, environ: Mapping[str, str] | None = None) -> dict[str, Any]:
    config = dict(DEFAULTS)
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {path} must hold a mapping")
        config = _deep_merge(config, loaded)
    else:
        config = _deep_merge({}, config)
    return _apply_env(config, environ if environ is not None else os.environ)
