import io
import json
import urllib.error

import pytest

from cori.corpus import LanguageId
from cori.mt import (HttpBackend, MockBackend, MTClient, TranslationError,
                     TranslationResult, translate_text)


def test_mock_fixture_translation():
    backend = MockBackend(fixtures={"en|zh|scholar": "学者"})
    client = MTClient(backend)
    assert translate_text(client, "scholar", LanguageId.EN, LanguageId.ZH) == "学者"


def test_cache_hit_skips_backend(tmp_path):
    backend = MockBackend(fixtures={"en|zh|scholar": "学者"})
    client = MTClient(backend, cache_dir=tmp_path / "cache")
    first = client.translate("scholar", "en", "zh")
    assert backend.calls == 1
    second = client.translate("scholar", "en", "zh")
    assert backend.calls == 1  # served from cache, zero extra backend calls
    assert first == second == TranslationResult("学者", False)
    # a fresh client over the same cache directory also hits the cache
    client2 = MTClient(MockBackend(), cache_dir=tmp_path / "cache")
    assert client2.translate("scholar", "en", "zh").text == "学者"
    assert client2.backend.calls == 0


def test_cache_is_one_file_per_entry(tmp_path):
    client = MTClient(MockBackend(identity=True), cache_dir=tmp_path / "c")
    client.translate("a", "en", "zh")
    client.translate("b", "en", "zh")
    files = list((tmp_path / "c").glob("*.json"))
    assert len(files) == 2
    entry = json.loads(files[0].read_text(encoding="utf-8"))
    assert set(entry) == {"backend", "src", "tgt", "text", "translation", "flagged"}


def test_unfixtured_mock_tagged_passthrough():
    backend = MockBackend()
    out = backend.translate("no fixture here", "en", "ja")
    assert out == TranslationResult("⟪ja⟫no fixture here", flagged=True)
    # deterministic
    assert backend.translate("no fixture here", "en", "ja") == out


def test_strict_mock_raises_on_missing_fixture():
    backend = MockBackend(strict=True)
    with pytest.raises(TranslationError, match="no mock fixture"):
        backend.translate("missing", "en", "ko")


def test_identity_mock():
    client = MTClient(MockBackend(identity=True))
    assert client.translate("学者", "zh", "vi").text == "学者"


def test_translate_many_deduplicates():
    backend = MockBackend(identity=True)
    client = MTClient(backend, max_concurrent=4)
    items = [("x", "en", "zh"), ("y", "en", "zh"), ("x", "en", "zh")] * 3
    results = client.translate_many(items)
    assert [r.text for r in results] == ["x", "y", "x"] * 3
    assert backend.calls == 2


def test_http_backend_retries_then_succeeds(monkeypatch):
    attempts = []

    class FakeResponse(io.BytesIO):
        def __enter__(self):
            return self

        def __exit__(self, *a):
            return False

    def fake_urlopen(req, timeout=None):
        attempts.append(1)
        if len(attempts) < 3:
            raise urllib.error.URLError("boom")
        return FakeResponse(json.dumps({"translatedText": "학자"}).encode())

    monkeypatch.setattr("urllib.request.urlopen", fake_urlopen)
    monkeypatch.setattr("time.sleep", lambda s: None)
    backend = HttpBackend("http://mt.invalid/translate", api_key="k", backoff=0.0)
    assert backend.translate("scholar", "en", "ko").text == "학자"
    assert len(attempts) == 3


def test_http_backend_fails_after_bounded_retries(monkeypatch):
    def fake_urlopen(req, timeout=None):
        raise urllib.error.URLError("down")

    monkeypatch.setattr("urllib.request.urlopen", fake_urlopen)
    monkeypatch.setattr("time.sleep", lambda s: None)
    backend = HttpBackend("http://mt.invalid/translate", api_key="k",
                          max_retries=2, backoff=0.0)
    with pytest.raises(TranslationError, match="after 3 attempts"):
        backend.translate("scholar", "en", "ko")


def test_http_backend_reads_key_from_env(monkeypatch):
    monkeypatch.setenv("CORI_MT_KEY", "sekrit")
    backend = HttpBackend("http://mt.invalid/translate")
    assert backend.api_key == "sekrit"
