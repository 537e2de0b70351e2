import pytest

from riskalloc.services.indicator_service import streams
from utils.config_manager import ConfigManager


@pytest.fixture(autouse=True)
def stream_settings(monkeypatch, tmp_path):
    """Small chunks and two workers, so chunking and threading are exercised on short runs."""
    monkeypatch.setenv("RISKALLOC_CONFIG", str(tmp_path / "absent.json"))
    monkeypatch.setenv("RISKALLOC_CHUNK_SIZE", "4096")
    monkeypatch.setenv("RISKALLOC_THREADS", "2")
    monkeypatch.delenv("RISKALLOC_CACHE_BYTES", raising=False)
    streams.use_config(ConfigManager())
    yield
    streams.use_config(None)
