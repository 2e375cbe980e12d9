"""Chat-completion plumbing for handing searched thoughts to an LLM.

One client fronts every request: it builds the prompts from the frozen
templates, talks to a generic chat-completions JSON endpoint (or replays a
recorded transcript), counts invocations by purpose, and parses the replies
back into trajectories and critiques.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Optional

import requests

from . import templates, thoughts
from .errors import ContractError, ProtocolError, ReplayMismatchError, TransportError
from .revision import Critique

logger = logging.getLogger(__name__)

PURPOSES = ("solve", "critique")

_WRONG_STEP = re.compile(r"\[Steps?\s+(\d+)\]\s+is\s+wrong", re.IGNORECASE)
_ALL_WRONG = re.compile(r"all\s+(?:the\s+)?steps\s+are\s+wrong", re.IGNORECASE)
_AFFIRMATIVE = re.compile(r"\b(correct|valid|no errors?|error[- ]free)\b", re.IGNORECASE)
_NEGATIVE = re.compile(r"\b(incorrect|not\s+correct|invalid|wrong)\b", re.IGNORECASE)

RETRYABLE_STATUS = (429, 500, 502, 503, 504)


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    model: str = ""
    temperature: float = 0.0
    top_p: float = 0.0
    max_tokens: int = 2048
    timeout: float = 60.0

    def __post_init__(self):
        # the whole protocol is run greedily; see the run settings
        if self.temperature != 0.0 or self.top_p != 0.0:
            raise ContractError("temperature and top_p are fixed at 0.0")
        if self.max_tokens < 1 or self.timeout <= 0:
            raise ContractError("max_tokens and timeout must be positive")


@dataclass
class LlmConfig:
    base_url: str = ""
    path: str = "/v1/chat/completions"
    model: str = ""
    api_key_env: str = "XOT_API_KEY"
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    max_tokens: int = 2048
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0


@dataclass
class TranscriptRecord:
    index: int
    purpose: str
    timestamp: float
    request: dict
    response: str
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None


def load_transcript(path: str) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


class LlmClient:
    """Counts and records every call; can replay a past run without a network.

    transcript_path appends one JSON line per successful call. replay_from
    serves recorded responses in order, verifying each request matches what
    was recorded.
    """

    def __init__(self, config: LlmConfig, transcript_path: Optional[str] = None,
                 replay_from: Optional[str] = None):
        self.config = config
        self.counters = {p: 0 for p in PURPOSES}
        self._transcript_path = transcript_path
        self._replay = load_transcript(replay_from) if replay_from else None
        self._replay_index = 0
        self._next_index = 0

    @property
    def replaying(self) -> bool:
        return self._replay is not None

    def invocations(self, purpose: Optional[str] = None) -> int:
        if purpose is None:
            return sum(self.counters.values())
        return self.counters[purpose]

    def complete(self, request: ChatRequest, purpose: str = "solve") -> str:
        if purpose not in PURPOSES:
            raise ContractError(f"unknown purpose {purpose!r}")
        if self._replay is not None:
            text, usage = self._replay_next(request, purpose)
        else:
            text, usage = self._round_trip(request)
        self.counters[purpose] += 1
        self._record(request, purpose, text, usage)
        return text

    def _replay_next(self, request: ChatRequest, purpose: str):
        if self._replay_index >= len(self._replay):
            raise ReplayMismatchError(
                f"transcript exhausted after {self._replay_index} calls")
        record = self._replay[self._replay_index]
        recorded = record["request"]
        for key, sent in (("system", request.system), ("user", request.user),
                          ("purpose", purpose)):
            kept = recorded.get(key) if key != "purpose" else record.get("purpose")
            if kept != sent:
                raise ReplayMismatchError(
                    f"call {self._replay_index}: {key} differs from the recording")
        self._replay_index += 1
        return record["response"], {
            "prompt_tokens": record.get("prompt_tokens"),
            "completion_tokens": record.get("completion_tokens"),
        }

    def _round_trip(self, request: ChatRequest):
        if not self.config.base_url:
            raise ContractError("no LLM endpoint configured")
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise ContractError(
                f"API key environment variable {self.config.api_key_env} is not set")
        url = self.config.base_url.rstrip("/") + self.config.path
        headers = {"Content-Type": "application/json"}
        if self.config.auth_header:
            scheme = f"{self.config.auth_scheme} " if self.config.auth_scheme else ""
            headers[self.config.auth_header] = scheme + key
        body = {
            "model": request.model or self.config.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        last_error = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff_base * 2 ** (attempt - 1))
            try:
                resp = requests.post(url, json=body, headers=headers,
                                     timeout=request.timeout)
            except requests.RequestException as exc:
                last_error = f"transport failure: {exc}"
                logger.warning("attempt %d failed: %s", attempt + 1, exc)
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = f"HTTP {resp.status_code}"
                logger.warning("attempt %d got status %d", attempt + 1, resp.status_code)
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                data = resp.json()
            except ValueError as exc:
                raise ProtocolError(f"response body is not JSON: {exc}") from exc
            try:
                text = data["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise ProtocolError(f"malformed chat completion: {exc}") from exc
            usage = data.get("usage") or {}
            return text, {
                "prompt_tokens": usage.get("prompt_tokens"),
                "completion_tokens": usage.get("completion_tokens"),
            }
        raise TransportError(
            f"gave up after {self.config.max_retries + 1} attempts ({last_error})")

    def _record(self, request: ChatRequest, purpose: str, text: str, usage: dict):
        if self._transcript_path is None:
            return
        record = {
            "index": self._next_index,
            "purpose": purpose,
            "timestamp": time.time(),
            "request": {
                "model": request.model or self.config.model,
                "system": request.system,
                "user": request.user,
                "temperature": request.temperature,
                "top_p": request.top_p,
                "max_tokens": request.max_tokens,
            },
            "response": text,
            "prompt_tokens": usage.get("prompt_tokens"),
            "completion_tokens": usage.get("completion_tokens"),
        }
        self._next_index += 1
        with open(self._transcript_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record) + "\n")


def build_solve_prompt(task, thought_text: str, model: str = "",
                       max_tokens: int = 2048, timeout: float = 60.0) -> ChatRequest:
    """System = the task's instruction block; user = the rendered thought,
    which already carries the problem statement."""
    return ChatRequest(system=templates.INSTRUCTIONS[task.name], user=thought_text,
                       model=model, max_tokens=max_tokens, timeout=timeout)


def build_critique_prompt(task, revision_text: str, model: str = "",
                          max_tokens: int = 2048, timeout: float = 60.0) -> ChatRequest:
    """Same instruction block, user text rendered by thoughts.render_revision."""
    return ChatRequest(system=templates.INSTRUCTIONS[task.name], user=revision_text,
                       model=model, max_tokens=max_tokens, timeout=timeout)


def parse_critique(text: str) -> Critique:
    """Map a critic's prose onto a verdict.

    The first "[Step k] is wrong" (or "[Steps k]") names the wrong step;
    "all steps are wrong" condemns everything; wording that affirms
    correctness without negating it counts as valid; anything else is
    unparseable.
    """
    match = _WRONG_STEP.search(text)
    if match:
        return Critique("wrong_step", wrong_step=int(match.group(1)),
                        rationale=text.strip())
    if _ALL_WRONG.search(text):
        return Critique("all_wrong", rationale=text.strip())
    if _AFFIRMATIVE.search(text) and not _NEGATIVE.search(text):
        return Critique("valid", rationale=text.strip())
    return Critique("unparseable", rationale=text.strip())


def parse_answer(task, text: str):
    """Pull the final answer out of an LLM reply.

    Returns the expression text for Game of 24 and a move-label list for the
    puzzles, reading from the last answer marker; raises AnswerParseError
    when the marker is missing.
    """
    payload = thoughts._answer_payload(task, text)
    if task.name == "game24":
        return payload
    return [tok for tok in re.split(r"[,\s]+", payload) if tok]


class LlmCritic:
    """CriticContract implementation that asks an LLM to find the wrong step."""

    def __init__(self, client: LlmClient, task, model: str = ""):
        self.client = client
        self.task = task
        self.model = model

    def review(self, problem, trajectory) -> Critique:
        text = thoughts.render_revision(self.task, trajectory)
        request = build_critique_prompt(self.task, text, model=self.model)
        reply = self.client.complete(request, purpose="critique")
        return parse_critique(reply)
