"""HTTP clients for the hosted embedding APIs.

Each backend sends one batch per call and classifies failures; batching,
retry and rate limiting live in :mod:`numembed.providers.pipeline`.
"""
from __future__ import annotations

import os
from typing import Any, Sequence

import httpx

from ..errors import ConfigError, DimensionMismatch, MissingCredentials, ProviderError
from .base import ModelRef, Provider

API_KEY_ENV = {
    Provider.OPENAI: "OPENAI_API_KEY",
    Provider.GEMINI: "GEMINI_API_KEY",
    Provider.VOYAGE: "VOYAGE_API_KEY",
}

DEFAULT_TIMEOUT = 60.0


class TransientHTTPError(Exception):
    """429 or 5xx: worth retrying after a pause."""

    def __init__(self, status: int, body: str = "", retry_after: float | None = None):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status
        self.body = body
        self.retry_after = retry_after


def _retry_after(resp: httpx.Response) -> float | None:
    value = resp.headers.get("retry-after")
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


class HttpBackend:
    provider: Provider
    endpoint: str

    def __init__(self, model: ModelRef, api_key: str | None = None, client: httpx.Client | None = None, timeout: float = DEFAULT_TIMEOUT):
        if model.provider is not self.provider:
            raise ConfigError(f"{model.model_name} is not a {self.provider.value} model")
        self.model = model
        env = API_KEY_ENV[self.provider]
        self.api_key = api_key if api_key is not None else os.environ.get(env, "")
        if not self.api_key:
            raise MissingCredentials(f"{env} is not set (needed for {model.model_name})")
        self._client = client or httpx.Client(timeout=timeout)

    @property
    def cache_namespace(self) -> str:
        ns = f"{self.provider.value}/{self.model.model_name}"
        if self.model.requested_dim is not None:
            ns += f"@{self.model.requested_dim}"
        return ns

    def request_params(self) -> dict[str, Any]:
        """Everything non-secret that shapes the request, for the run manifest."""
        return {"endpoint": self.endpoint, "template": "{text}", "dimensions": self.model.requested_dim}

    def build_request(self, texts: Sequence[str]) -> tuple[str, dict[str, str], dict[str, Any]]:
        raise NotImplementedError

    def parse_response(self, payload: Any) -> list[list[float]]:
        raise NotImplementedError

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        url, headers, body = self.build_request(texts)
        try:
            resp = self._client.post(url, headers=headers, json=body)
        except httpx.TransportError as exc:
            raise TransientHTTPError(0, str(exc)) from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientHTTPError(resp.status_code, resp.text, _retry_after(resp))
        if resp.status_code >= 400:
            raise ProviderError(f"{self.provider.value} returned HTTP {resp.status_code}", resp.status_code, resp.text)
        try:
            vectors = self.parse_response(resp.json())
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed {self.provider.value} response", resp.status_code, resp.text[:500]) from exc
        if len(vectors) != len(texts):
            raise DimensionMismatch(f"sent {len(texts)} texts, got {len(vectors)} embeddings")
        return vectors

    def close(self) -> None:
        self._client.close()


class OpenAIBackend(HttpBackend):
    provider = Provider.OPENAI
    endpoint = "https://api.openai.com/v1/embeddings"

    def request_params(self):
        return {**super().request_params(), "encoding_format": "float"}

    def build_request(self, texts):
        body: dict[str, Any] = {"model": self.model.model_name, "input": list(texts), "encoding_format": "float"}
        if self.model.requested_dim is not None:
            body["dimensions"] = self.model.requested_dim
        return self.endpoint, {"Authorization": f"Bearer {self.api_key}"}, body

    def parse_response(self, payload):
        data = sorted(payload["data"], key=lambda item: item["index"])
        return [list(map(float, item["embedding"])) for item in data]


class VoyageBackend(HttpBackend):
    provider = Provider.VOYAGE
    endpoint = "https://api.voyageai.com/v1/embeddings"

    def request_params(self):
        return {**super().request_params(), "input_type": None, "truncation": True}

    def build_request(self, texts):
        body: dict[str, Any] = {"model": self.model.model_name, "input": list(texts)}
        if self.model.requested_dim is not None:
            body["output_dimension"] = self.model.requested_dim
        return self.endpoint, {"Authorization": f"Bearer {self.api_key}"}, body

    def parse_response(self, payload):
        data = sorted(payload["data"], key=lambda item: item["index"])
        return [list(map(float, item["embedding"])) for item in data]


class GeminiBackend(HttpBackend):
    provider = Provider.GEMINI
    base_url = "https://generativelanguage.googleapis.com/v1beta/models"

    @property
    def endpoint(self) -> str:  # type: ignore[override]
        return f"{self.base_url}/{self.model.model_name}:batchEmbedContents"

    def request_params(self):
        return {**super().request_params(), "task_type": None}

    def build_request(self, texts):
        requests = []
        for t in texts:
            req: dict[str, Any] = {"model": f"models/{self.model.model_name}", "content": {"parts": [{"text": t}]}}
            if self.model.requested_dim is not None:
                req["outputDimensionality"] = self.model.requested_dim
            requests.append(req)
        return self.endpoint, {"x-goog-api-key": self.api_key}, {"requests": requests}

    def parse_response(self, payload):
        return [list(map(float, item["values"])) for item in payload["embeddings"]]


BACKENDS: dict[Provider, type[HttpBackend]] = {
    Provider.OPENAI: OpenAIBackend,
    Provider.GEMINI: GeminiBackend,
    Provider.VOYAGE: VoyageBackend,
}


def remote_backend(model: ModelRef, **kwargs) -> HttpBackend:
    return BACKENDS[model.provider](model, **kwargs)
