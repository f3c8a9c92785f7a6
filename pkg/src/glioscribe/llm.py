"""Chat-completion client for report generation and factuality scoring.

Speaks the OpenAI-compatible /chat/completions protocol with bounded
retries and exponential backoff. Endpoints whose base URL starts with
"stub:" never touch the network; they are served by deterministic
in-process responders so the whole pipeline runs air-gapped.

Stub URL forms:
  stub:              metadata-aware responder (findings, claims, entailment)
  stub:echo=TEXT     always returns TEXT
  stub:fail          raises a transport error on every attempt
  stub:empty         returns an empty completion
  stub:contradict    entailment responder that contradicts every claim
"""

import re
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import requests

from .config import LLMSettings


class LLMError(RuntimeError):
    pass


class LLMTransportError(LLMError):
    """Connection failures and retryable HTTP statuses."""


class LLMResponseError(LLMError):
    """Malformed, empty, or non-retryable error responses."""


_RETRY_STATUS = frozenset({429, 500, 502, 503, 504})

_SYSTEM_DEFAULT = "You are a careful neuroradiology reporting assistant."


class LLMClient:
    def __init__(self, settings: LLMSettings = None, **overrides):
        settings = settings or LLMSettings()
        if overrides:
            settings = replace(settings, **overrides)
        self.settings = settings

    @property
    def is_stub(self):
        return self.settings.base_url.startswith("stub:")

    def complete(self, prompt: str, system: str = _SYSTEM_DEFAULT) -> str:
        """One completion with retries; raises LLMError subclasses."""
        s = self.settings
        last = None
        for attempt in range(max(1, s.attempts)):
            if attempt:
                time.sleep(s.backoff_s * 2 ** (attempt - 1))
            try:
                text = self._request(prompt, system)
            except LLMTransportError as e:
                last = e
                continue
            if not text.strip():
                raise LLMResponseError("empty completion")
            return text
        raise LLMTransportError(
            f"no completion after {s.attempts} attempts: {last}") from last

    def map_complete(self, prompts, system: str = _SYSTEM_DEFAULT):
        """Complete many prompts with bounded fan-out, preserving order."""
        workers = max(1, self.settings.max_in_flight)
        if len(prompts) <= 1 or workers == 1:
            return [self.complete(p, system) for p in prompts]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: self.complete(p, system), prompts))

    def _request(self, prompt, system):
        if self.is_stub:
            return _stub_response(self.settings.base_url, prompt)
        s = self.settings
        url = s.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(s.api_key_env, "") if s.api_key_env else ""
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": s.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": prompt},
            ],
            "temperature": s.temperature,
        }
        try:
            resp = requests.post(url, json=payload, headers=headers,
                                 timeout=s.timeout_s)
        except requests.RequestException as e:
            raise LLMTransportError(f"POST {url} failed: {e}") from e
        if resp.status_code in _RETRY_STATUS:
            raise LLMTransportError(f"HTTP {resp.status_code} from {url}")
        if not 200 <= resp.status_code < 300:
            raise LLMResponseError(
                f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise LLMResponseError(f"unexpected response shape: {e}") from e


# stub transport ------------------------------------------------------------

_CLAIM_MARK = "one claim per line"
_ENTAIL_MARK = "ANSWER WITH EXACTLY ONE WORD"


def _stub_response(base_url, prompt):
    mode = base_url[len("stub:"):]
    if mode.startswith("echo="):
        return mode[len("echo="):]
    if mode == "fail":
        raise LLMTransportError("stub transport failure")
    if mode == "empty":
        return ""
    if mode not in ("", "contradict"):
        raise LLMResponseError(f"unknown stub mode {mode!r}")

    if _ENTAIL_MARK in prompt:
        if mode == "contradict":
            return "contradicted"
        return _stub_entailment(prompt)
    if _CLAIM_MARK in prompt:
        return _stub_claims(prompt)
    if "METADATA (for subject" in prompt:
        from .reportgen import render_stub_findings
        return render_stub_findings(prompt)
    raise LLMResponseError("stub cannot interpret this prompt")


def _stub_claims(prompt):
    m = re.search(r"FINDINGS:\n(.*?)\n\nCLAIMS:", prompt, re.S)
    if not m:
        raise LLMResponseError("stub: claim prompt missing FINDINGS block")
    text = m.group(1)
    sentences = [s.strip() for s in re.split(r"(?<=[.!?])\s+", text.strip())]
    return "\n".join(s for s in sentences if s)


def _normalize_claim(s):
    return " ".join(re.findall(r"[a-z0-9.]+", s.lower()))


def _stub_entailment(prompt):
    m = re.search(r"CLAIM: (.*?)\n\nREFERENCE CLAIMS:\n(.*?)\n\nANSWER",
                  prompt, re.S)
    if not m:
        raise LLMResponseError("stub: malformed entailment prompt")
    claim = _normalize_claim(m.group(1))
    refs = {_normalize_claim(line) for line in m.group(2).splitlines() if line.strip()}
    return "supported" if claim in refs else "absent"
