"""Chat-completion backends: an OpenAI-compatible HTTP client and a scripted mock.

Every position update in the swarm goes through ``ChatBackend.complete``; the
mock makes runs reproducible and network-free, the HTTP client talks to any
server exposing the chat-completions JSON schema.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import requests

ROLES = ("system", "user", "assistant")

ENV_API_BASE = "LMPSO_API_BASE"
ENV_API_KEY = "LMPSO_API_KEY"
ENV_MODEL = "LMPSO_MODEL"


class BackendUnavailable(Exception):
    """The backend could not produce a reply within the retry budget."""


class MalformedResponse(Exception):
    """The server answered but the payload is not a chat completion."""


class ScriptExhausted(Exception):
    """A finite mock script ran out of replies."""


class UnknownKind(Exception):
    """No default sampling parameters exist for the requested problem kind."""


class InvalidMetaPrompt(Exception):
    """A prompt violated the required system/user/assistant/user structure."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class MetaPrompt:
    """Ordered chat transcript sent to the model to obtain the next position.

    The canonical shape is four turns: a system description of the task, a
    user turn stating how the current position was produced (the inertia
    term), an assistant turn carrying the current position, and a user turn
    with the directive for generating the next position.
    """

    messages: tuple[ChatMessage, ...]

    def __init__(self, messages: Sequence[ChatMessage]):
        object.__setattr__(self, "messages", tuple(messages))

    def text(self) -> str:
        """All message contents joined; used by keyed mock scripts."""
        return "\n".join(m.content for m in self.messages)

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()[:16]


def validate_meta_prompt(prompt: MetaPrompt) -> None:
    """Check the structural invariant; raises InvalidMetaPrompt on violation.

    Required: exactly one system message, in the leading slot, and at least
    one assistant turn that is immediately surrounded by user turns (inertia
    before, next-position directive after).
    """
    msgs = prompt.messages
    if not msgs or msgs[0].role != "system":
        raise InvalidMetaPrompt("prompt must start with a system message")
    if sum(1 for m in msgs if m.role == "system") != 1:
        raise InvalidMetaPrompt("prompt must contain exactly one system message")
    ok = any(
        msgs[i].role == "assistant"
        and i >= 1
        and msgs[i - 1].role == "user"
        and i + 1 < len(msgs)
        and msgs[i + 1].role == "user"
        for i in range(len(msgs))
    )
    if not ok:
        raise InvalidMetaPrompt(
            "prompt must contain a user/assistant/user span carrying the "
            "inertia turn, the current position and the next-position directive"
        )


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = 0.9
    max_new_tokens: int = 200
    model_name: str = ""

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


# Per-problem defaults: (max_new_tokens). Temperature is 0.9 across the board.
_KIND_TOKENS = {
    "tsp10": 50,
    "tsp20": 100,
    "tsp30": 150,
    "heuristic": 1000,
    "symreg": 200,
}


def default_params(problem_kind: str, model_name: Optional[str] = None) -> SamplingParams:
    """Sampling defaults per problem kind (temperature 0.9, kind-specific token cap)."""
    if problem_kind not in _KIND_TOKENS:
        raise UnknownKind(f"unknown problem kind {problem_kind!r}; expected one of {sorted(_KIND_TOKENS)}")
    if model_name is None:
        model_name = os.environ.get(ENV_MODEL, "")
    return SamplingParams(temperature=0.9, max_new_tokens=_KIND_TOKENS[problem_kind], model_name=model_name)


class ChatBackend:
    """Abstract chat backend; implementations must be safe for concurrent calls."""

    def complete(self, prompt: MetaPrompt, params: Optional[SamplingParams] = None) -> str:
        raise NotImplementedError


class HttpBackend(ChatBackend):
    """Client for any OpenAI-compatible chat-completions endpoint.

    Retries network errors, timeouts and 5xx responses with exponential
    backoff, then raises BackendUnavailable. Message content is sent verbatim.
    """

    def __init__(
        self,
        api_base: Optional[str] = None,
        api_key: Optional[str] = None,
        default_params: Optional[SamplingParams] = None,
        timeout_s: float = 120.0,
        retries: int = 2,
        backoff_s: float = 1.0,
    ):
        api_base = api_base or os.environ.get(ENV_API_BASE)
        if not api_base:
            raise ValueError(f"no API base URL; pass api_base or set {ENV_API_BASE}")
        self.endpoint = api_base.rstrip("/") + "/chat/completions"
        self.api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")
        self.default_params = default_params
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s

    def complete(self, prompt: MetaPrompt, params: Optional[SamplingParams] = None) -> str:
        params = params or self.default_params or SamplingParams()
        return complete_http(self.endpoint, self.api_key, prompt, params,
                             timeout_s=self.timeout_s, retries=self.retries,
                             backoff_s=self.backoff_s)


def complete_http(
    endpoint: str,
    api_key: str,
    prompt: MetaPrompt,
    params: SamplingParams,
    timeout_s: float = 120.0,
    retries: int = 2,
    backoff_s: float = 1.0,
) -> str:
    """POST one chat completion and return the first choice's content verbatim."""
    body = {
        "model": params.model_name,
        "messages": [{"role": m.role, "content": m.content} for m in prompt.messages],
        "temperature": params.temperature,
        "max_tokens": params.max_new_tokens,
    }
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    last_err: Optional[str] = None
    for attempt in range(retries + 1):
        try:
            resp = requests.post(endpoint, json=body, headers=headers, timeout=timeout_s)
        except requests.RequestException as exc:
            last_err = f"request failed: {exc}"
        else:
            if resp.status_code >= 500:
                last_err = f"server returned {resp.status_code}"
            elif resp.status_code >= 400:
                raise BackendUnavailable(f"server rejected request: {resp.status_code} {resp.text[:200]}")
            else:
                try:
                    payload = resp.json()
                    content = payload["choices"][0]["message"]["content"]
                except (ValueError, LookupError, TypeError) as exc:
                    raise MalformedResponse(f"no choices[0].message.content in response: {exc}") from exc
                if not isinstance(content, str):
                    raise MalformedResponse("message content is not a string")
                return content
        if attempt < retries:
            time.sleep(backoff_s * (2 ** attempt))
    raise BackendUnavailable(f"{endpoint}: {last_err} after {retries + 1} attempts")


@dataclass
class ScriptRule:
    """One keyed mock rule: replies used when the prompt text contains `contains`."""

    contains: str
    replies: list[str]
    cycle: bool = False
    _pos: int = field(default=0, repr=False)


class MockBackend(ChatBackend):
    """Deterministic scripted stand-in for the language model.

    Replies come either from a positional script (consumed in call order,
    optionally cyclic) or from keyed rules matched by substring against the
    prompt text. Keyed rules take precedence and make concurrent runs
    deterministic; the positional script is guarded by a lock so sequential
    runs always see the same order.
    """

    def __init__(self, replies: Optional[Sequence[str]] = None, cycle: bool = False,
                 rules: Optional[Sequence[ScriptRule]] = None):
        self._replies = list(replies or [])
        self._cycle = cycle
        self._rules = list(rules or [])
        self._pos = 0
        self._lock = threading.Lock()
        self.calls: list[str] = []  # prompt texts, in completion order

    @property
    def num_calls(self) -> int:
        return len(self.calls)

    def complete(self, prompt: MetaPrompt, params: Optional[SamplingParams] = None) -> str:
        text = prompt.text()
        with self._lock:
            self.calls.append(text)
            for rule in self._rules:
                if rule.contains in text:
                    if rule._pos >= len(rule.replies):
                        if rule.cycle:
                            rule._pos = 0
                        else:
                            raise ScriptExhausted(f"rule {rule.contains!r} exhausted after {len(rule.replies)} replies")
                    reply = rule.replies[rule._pos]
                    rule._pos += 1
                    return reply
            if not self._replies:
                raise ScriptExhausted("mock backend has no script")
            if self._pos >= len(self._replies):
                if self._cycle:
                    self._pos = 0
                else:
                    raise ScriptExhausted(f"script exhausted after {len(self._replies)} replies")
            reply = self._replies[self._pos]
            self._pos += 1
            return reply


def complete_mock(script: Sequence[str], prompt: MetaPrompt,
                  params: Optional[SamplingParams] = None, cycle: bool = False) -> str:
    """One-shot scripted completion; convenience over a throwaway MockBackend."""
    return MockBackend(script, cycle=cycle).complete(prompt, params)
