"""Machine-translation client: pluggable backends, on-disk response cache,
bounded retries, and concurrent batch translation with per-key deduplication.

The mock backend serves fixture translations for offline work; unfixtured
inputs pass through with a target-language tag and a flag (or raise, in
strict mode). HTTP credentials come from the CORI_MT_KEY environment variable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from .corpus import LanguageId

log = logging.getLogger(__name__)

API_KEY_ENV = "CORI_MT_KEY"


class TranslationError(Exception):
    pass


@dataclass(frozen=True)
class TranslationResult:
    text: str
    flagged: bool = False  # True for unfixtured mock passthrough


class MockBackend:
    """Fixture-driven backend. Fixtures map ``"src|tgt|text"`` to translations;
    ``identity=True`` echoes inputs (useful for round-trip tests); ``strict=True``
    raises on unfixtured input instead of tagged passthrough."""

    name = "mock"

    def __init__(self, fixtures: Optional[dict[str, str]] = None,
                 identity: bool = False, strict: bool = False):
        self.fixtures = dict(fixtures or {})
        self.identity = identity
        self.strict = strict
        self.calls = 0

    @classmethod
    def from_fixture_file(cls, path: Union[str, Path], **kwargs) -> "MockBackend":
        with Path(path).open(encoding="utf-8") as f:
            return cls(fixtures=json.load(f), **kwargs)

    def translate(self, text: str, src: str, tgt: str) -> TranslationResult:
        self.calls += 1
        if self.identity:
            return TranslationResult(text)
        key = f"{src}|{tgt}|{text}"
        if key in self.fixtures:
            return TranslationResult(self.fixtures[key])
        if self.strict:
            raise TranslationError(f"no mock fixture for {key!r}")
        return TranslationResult(f"⟪{tgt}⟫{text}", flagged=True)


class HttpBackend:
    """JSON-over-HTTP backend with exponential-backoff retries."""

    name = "http"

    def __init__(self, endpoint: str, api_key: Optional[str] = None,
                 max_retries: int = 4, backoff: float = 0.5, timeout: float = 15.0):
        self.endpoint = endpoint
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self.calls = 0

    def translate(self, text: str, src: str, tgt: str) -> TranslationResult:
        payload = json.dumps({"q": text, "source": src, "target": tgt}).encode("utf-8")
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self.calls += 1
            req = urllib.request.Request(
                self.endpoint, data=payload,
                headers={"Content-Type": "application/json",
                         "Authorization": f"Bearer {self.api_key}"})
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    body = json.loads(resp.read().decode("utf-8"))
                translated = body.get("translatedText") or body.get("translation")
                if not translated:
                    raise TranslationError(f"no translation in response: {body}")
                return TranslationResult(translated)
            except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as e:
                last_error = e
                log.warning("translation attempt %d failed: %s", attempt + 1, e)
        raise TranslationError(f"translation failed after {self.max_retries + 1} "
                               f"attempts: {last_error}")


def _lang_code(lang: Union[LanguageId, str]) -> str:
    return lang.value if isinstance(lang, LanguageId) else str(lang)


class MTClient:
    """Caching front end over a translation backend.

    Every (src, tgt, text) triple is cached on first success under a
    content-hash filename (one JSON file per entry, diff-friendly) and served
    verbatim thereafter with zero backend calls.
    """

    def __init__(self, backend, cache_dir: Optional[Union[str, Path]] = None,
                 max_concurrent: int = 1):
        if max_concurrent < 1:
            raise ValueError("max_concurrent must be positive")
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.max_concurrent = max_concurrent
        self._lock = threading.Lock()
        self._inflight: dict[str, threading.Event] = {}
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _cache_key(self, text: str, src: str, tgt: str) -> str:
        raw = "\x1f".join((self.backend.name, src, tgt, text))
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def _cache_path(self, key: str) -> Optional[Path]:
        return self.cache_dir / f"{key}.json" if self.cache_dir else None

    def _read_cache(self, key: str) -> Optional[TranslationResult]:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        obj = json.loads(path.read_text(encoding="utf-8"))
        return TranslationResult(obj["translation"], bool(obj.get("flagged", False)))

    def _write_cache(self, key: str, text: str, src: str, tgt: str,
                     result: TranslationResult) -> None:
        path = self._cache_path(key)
        if path is None:
            return
        obj = {"backend": self.backend.name, "src": src, "tgt": tgt, "text": text,
               "translation": result.text, "flagged": result.flagged}
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(obj, ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)

    def translate(self, text: str, src: Union[LanguageId, str],
                  tgt: Union[LanguageId, str]) -> TranslationResult:
        src_c, tgt_c = _lang_code(src), _lang_code(tgt)
        key = self._cache_key(text, src_c, tgt_c)
        cached = self._read_cache(key)
        if cached is not None:
            return cached
        result = self.backend.translate(text, src_c, tgt_c)
        self._write_cache(key, text, src_c, tgt_c, result)
        return result

    def translate_many(self, items: Sequence[tuple[str, Union[LanguageId, str],
                                                   Union[LanguageId, str]]]
                       ) -> list[TranslationResult]:
        """Translate a batch concurrently (bounded by max_concurrent); duplicate
        (text, src, tgt) triples are requested once."""
        unique: dict[tuple[str, str, str], int] = {}
        order: list[tuple[str, str, str]] = []
        for text, src, tgt in items:
            k = (text, _lang_code(src), _lang_code(tgt))
            if k not in unique:
                unique[k] = len(order)
                order.append(k)
        if self.max_concurrent == 1 or len(order) <= 1:
            results = [self.translate(*k) for k in order]
        else:
            with ThreadPoolExecutor(max_workers=self.max_concurrent) as pool:
                results = list(pool.map(lambda k: self.translate(*k), order))
        by_key = dict(zip(order, results))
        return [by_key[(text, _lang_code(src), _lang_code(tgt))]
                for text, src, tgt in items]


def translate_text(client: MTClient, text: str, src: Union[LanguageId, str],
                   tgt: Union[LanguageId, str]) -> str:
    """Translate one string; raises TranslationError on backend failure."""
    return client.translate(text, src, tgt).text
