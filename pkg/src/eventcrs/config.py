"""Application configuration: JSON file with environment overrides.

Environment variables use the ``CRS_`` prefix and override file values
(e.g. ``CRS_OPERATOR_TOKEN``, ``CRS_PROVIDER``, ``CRS_CATALOG_PATH``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional


@dataclass
class AppConfig:
    catalog_path: Optional[str] = None
    provider: str = "mock"  # "mock" | "http"
    mock_script_path: Optional[str] = None
    llm_base_url: Optional[str] = None
    llm_model: str = "gpt-3.5-turbo"
    llm_api_key_env: str = "CRS_LLM_API_KEY"
    request_timeout_s: float = 30.0
    cost_rate_usd_per_1000: Decimal = Decimal("0.002")
    operator_token: str = ""
    bind_host: str = "127.0.0.1"
    bind_port: int = 8000
    store_dir: str = "./crs-store"
    default_language: str = "en"
    max_candidates: int = 30
    slate_size: int = 10
    dossier_budget: int = 2800
    embedding_dim: int = 512
    history_limit: int = 6
    per_ip_requests_per_minute: int = 240
    prompts_path: Optional[str] = None
    strings_path: Optional[str] = None
    category_map_path: Optional[str] = None
    fetch_user_agent: str = "eventcrs/0.1 (+event dossier fetcher)"
    static_dir: Optional[str] = None  # built web client, served under /app

    _ENV_FIELDS = {
        "CRS_CATALOG_PATH": ("catalog_path", str),
        "CRS_PROVIDER": ("provider", str),
        "CRS_MOCK_SCRIPT": ("mock_script_path", str),
        "CRS_LLM_BASE_URL": ("llm_base_url", str),
        "CRS_LLM_MODEL": ("llm_model", str),
        "CRS_OPERATOR_TOKEN": ("operator_token", str),
        "CRS_BIND_HOST": ("bind_host", str),
        "CRS_BIND_PORT": ("bind_port", int),
        "CRS_STORE_DIR": ("store_dir", str),
        "CRS_COST_RATE": ("cost_rate_usd_per_1000", Decimal),
        "CRS_DEFAULT_LANGUAGE": ("default_language", str),
    }

    @classmethod
    def load(cls, path: Optional[str] = None) -> "AppConfig":
        config = cls()
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
            for key, value in payload.items():
                if not hasattr(config, key):
                    raise ValueError(f"unknown config key: {key}")
                if key == "cost_rate_usd_per_1000":
                    value = Decimal(str(value))
                setattr(config, key, value)
        for env_name, (attr, caster) in cls._ENV_FIELDS.items():
            raw = os.environ.get(env_name)
            if raw is not None:
                setattr(config, attr, caster(raw))
        return config
