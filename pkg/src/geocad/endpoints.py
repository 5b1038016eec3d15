"""HTTP clients for the vision-language captioner/judge and the text generator.

Wire contracts (see docs/FORMATS.md):

* VLLM: OpenAI-style ``POST {base}/v1/chat/completions`` with one user message
  holding a text part and a base64 PNG ``image_url`` part; the reply text is
  ``choices[0].message.content``.
* LLM: ``POST {url}`` with ``{"prompt", "temperature", "top_p",
  "max_new_tokens", "seed"}``; the reply is ``{"text": ...}`` (an OpenAI
  completions body with ``choices[0].text`` is accepted too).
"""
from __future__ import annotations

import base64
import logging
import time

import httpx

log = logging.getLogger(__name__)


class EndpointError(RuntimeError):
    """Transport or HTTP failure that survived every retry."""


class MalformedReply(ValueError):
    pass


class _RetryingClient:
    def __init__(self, url: str, *, retries: int = 3, backoff: float = 0.5, timeout: float = 60.0,
                 api_key: str | None = None, transport: httpx.BaseTransport | None = None):
        self.url = url
        self.retries = retries
        self.backoff = backoff
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self.calls = 0

    def _post(self, url: str, body: dict) -> dict:
        last = None
        for attempt in range(self.retries):
            self.calls += 1
            try:
                resp = self._http.post(url, json=body)
                resp.raise_for_status()
                return resp.json()
            except (httpx.HTTPError, ValueError) as exc:
                last = exc
                log.warning("request to %s failed (attempt %d/%d): %s", url, attempt + 1, self.retries, exc)
                if attempt + 1 < self.retries and self.backoff > 0:
                    time.sleep(self.backoff * 2 ** attempt)
        raise EndpointError(f"{url}: {last}") from last

    def close(self):
        self._http.close()


class VLLMClient(_RetryingClient):
    def __init__(self, base_url: str, model: str = "default", **kw):
        super().__init__(base_url.rstrip("/"), **kw)
        self.model = model

    def ask(self, prompt: str, image_png: bytes) -> str:
        data_url = "data:image/png;base64," + base64.b64encode(image_png).decode("ascii")
        body = {
            "model": self.model,
            "temperature": 0,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": data_url}},
                ],
            }],
        }
        reply = self._post(self.url + "/v1/chat/completions", body)
        try:
            content = reply["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedReply(f"unexpected reply shape: {str(reply)[:200]}") from None
        if isinstance(content, list):
            content = "".join(p.get("text", "") for p in content if isinstance(p, dict))
        if not isinstance(content, str) or not content.strip():
            raise MalformedReply("empty or non-text reply")
        return content


class LLMClient(_RetryingClient):
    def complete(self, prompt: str, *, temperature: float, top_p: float, max_new_tokens: int,
                 seed: int | None = None) -> str:
        body = {"prompt": prompt, "temperature": temperature, "top_p": top_p,
                "max_new_tokens": max_new_tokens, "seed": seed}
        reply = self._post(self.url, body)
        if isinstance(reply, dict) and isinstance(reply.get("text"), str):
            return reply["text"]
        try:
            return reply["choices"][0]["text"]
        except (KeyError, IndexError, TypeError):
            raise MalformedReply(f"unexpected reply shape: {str(reply)[:200]}") from None
