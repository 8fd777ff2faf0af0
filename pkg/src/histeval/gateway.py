"""Uniform client for OpenAI-compatible chat-completion endpoints.

One wire protocol covers text-only and text+image requests. Every response is
stored in a content-addressed cache (one JSON file per entry); replay mode
serves exclusively from that cache and performs zero network operations, which
makes full pipeline runs deterministic and offline-testable.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from threading import Lock

from .errors import EndpointError, ReplayMissError

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class EndpointConfig:
    endpoint_id: str
    base_url: str
    model_name: str
    api_key_env: str | None = None
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3

    def __post_init__(self):
        if self.temperature < 0:
            raise EndpointError(f"{self.endpoint_id}: temperature must be >= 0")


def _image_bytes(image) -> bytes:
    if isinstance(image, (bytes, bytearray)):
        return bytes(image)
    return Path(image).read_bytes()


def canonical_request(endpoint: EndpointConfig, messages) -> dict:
    """Stable request form used for cache keying; images appear as digests."""
    canon_messages = []
    for m in messages:
        entry = {"role": m["role"], "text": m["text"]}
        if m.get("image") is not None:
            entry["image_sha256"] = hashlib.sha256(_image_bytes(m["image"])).hexdigest()
        canon_messages.append(entry)
    return {
        "endpoint_id": endpoint.endpoint_id,
        "model_name": endpoint.model_name,
        "temperature": endpoint.temperature,
        "messages": canon_messages,
    }


def cache_key(endpoint: EndpointConfig, messages) -> str:
    canon = canonical_request(endpoint, messages)
    blob = json.dumps(canon, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def wire_payload(endpoint: EndpointConfig, messages) -> dict:
    """OpenAI chat-completions request body; images ride as base64 data URLs."""
    wire_messages = []
    for m in messages:
        if m.get("image") is None:
            content = m["text"]
        else:
            data = base64.b64encode(_image_bytes(m["image"])).decode("ascii")
            content = [
                {"type": "text", "text": m["text"]},
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:image/png;base64,{data}"},
                },
            ]
        wire_messages.append({"role": m["role"], "content": content})
    return {
        "model": endpoint.model_name,
        "temperature": endpoint.temperature,
        "messages": wire_messages,
    }


def key_from_entry(entry: dict) -> str:
    """Recompute a cache key from a stored entry (round-trip check)."""
    blob = json.dumps(
        entry["canonical"], sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _default_transport(url: str, headers: dict, payload: dict, timeout: float):
    import requests

    resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    return resp.status_code, resp.text


class Gateway:
    """Shareable across threads; cache writes are atomic (temp + rename)."""

    def __init__(
        self,
        cache_dir,
        replay: bool = False,
        transport=None,
        max_in_flight: int = 4,
        backoff_base: float = 0.5,
    ):
        self.cache_dir = Path(cache_dir)
        self.replay = replay
        self.transport = transport or _default_transport
        if max_in_flight < 1:
            raise EndpointError("max_in_flight must be >= 1")
        self.max_in_flight = max_in_flight
        self.backoff_base = backoff_base
        self._write_lock = Lock()

    # -- cache -------------------------------------------------------------

    def _entry_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _load_cached(self, key: str):
        path = self._entry_path(key)
        if not path.is_file():
            return None
        entry = json.loads(path.read_text(encoding="utf-8"))
        return entry["response"]

    def _store(self, key: str, endpoint: EndpointConfig, messages, response: str) -> None:
        entry = {
            "key": key,
            "endpoint_id": endpoint.endpoint_id,
            "model_name": endpoint.model_name,
            "canonical": canonical_request(endpoint, messages),
            "request": wire_payload(endpoint, messages),
            "response": response,
            "timestamp": time.time(),
        }
        with self._write_lock:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            tmp = self._entry_path(key).with_suffix(".json.tmp")
            tmp.write_text(
                json.dumps(entry, ensure_ascii=False, sort_keys=True), encoding="utf-8"
            )
            os.replace(tmp, self._entry_path(key))

    # -- requests ----------------------------------------------------------

    def complete(self, endpoint: EndpointConfig, messages) -> str:
        """Reply text for one chat request; cached by content digest."""
        key = cache_key(endpoint, messages)
        cached = self._load_cached(key)
        if cached is not None:
            return cached
        if self.replay:
            raise ReplayMissError(
                f"replay cache has no entry {key} "
                f"(endpoint {endpoint.endpoint_id!r}, cache dir {self.cache_dir})"
            )
        response = self._request(endpoint, messages)
        self._store(key, endpoint, messages, response)
        return response

    def _request(self, endpoint: EndpointConfig, messages) -> str:
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key_env:
            api_key = os.environ.get(endpoint.api_key_env)
            if not api_key:
                raise EndpointError(
                    f"{endpoint.endpoint_id}: environment variable "
                    f"{endpoint.api_key_env} is not set"
                )
            headers["Authorization"] = f"Bearer {api_key}"
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        payload = wire_payload(endpoint, messages)
        last_error = None
        for attempt in range(endpoint.max_retries + 1):
            if attempt and self.backoff_base:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
            try:
                status, body = self.transport(url, headers, payload, endpoint.timeout)
            except Exception as exc:  # transport-level failure
                last_error = f"transport error: {exc}"
                continue
            if status == 200:
                return self._extract_text(endpoint, body)
            last_error = f"HTTP {status}: {body[:200]}"
            if status not in RETRYABLE_STATUS:
                raise EndpointError(f"{endpoint.endpoint_id}: {last_error}")
        raise EndpointError(
            f"{endpoint.endpoint_id}: giving up after {endpoint.max_retries + 1} "
            f"attempts ({last_error})"
        )

    @staticmethod
    def _extract_text(endpoint: EndpointConfig, body: str) -> str:
        try:
            doc = json.loads(body)
            return doc["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise EndpointError(
                f"{endpoint.endpoint_id}: malformed completion response ({exc})"
            ) from exc

    def batch(self, endpoint: EndpointConfig, requests_list, max_in_flight=None) -> list:
        """Completions aligned with the request order.

        Per-request failures surface positionally as exception objects instead
        of aborting the batch.
        """
        limit = max_in_flight if max_in_flight is not None else self.max_in_flight
        if limit < 1:
            raise EndpointError("max_in_flight must be >= 1")
        if not requests_list:
            return []

        def run(messages):
            try:
                return self.complete(endpoint, messages)
            except EndpointError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=limit) as pool:
            return list(pool.map(run, requests_list))


def load_endpoints_file(path) -> dict:
    """Endpoint-set config from JSON or TOML.

    Shape: ``{"endpoints": {id: {...}}, "proposal": id, "vqa": [ids], "baseline": id}``.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # py>=3.11
        except ImportError:
            import tomli as tomllib
        doc = tomllib.loads(text)
    else:
        doc = json.loads(text)
    endpoints = {}
    for endpoint_id, params in doc.get("endpoints", {}).items():
        endpoints[endpoint_id] = EndpointConfig(
            endpoint_id=endpoint_id,
            base_url=params["base_url"],
            model_name=params["model_name"],
            api_key_env=params.get("api_key_env"),
            temperature=float(params.get("temperature", 0.0)),
            timeout=float(params.get("timeout", 60.0)),
            max_retries=int(params.get("max_retries", 3)),
        )
    return {
        "endpoints": endpoints,
        "proposal": doc.get("proposal"),
        "vqa": doc.get("vqa", []),
        "baseline": doc.get("baseline"),
    }
