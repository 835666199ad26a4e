"""Chat-style language-model clients.

Every client exposes ``complete(messages, temperature) -> str`` and a
``backend_tag``.  The scripted and replay backends run offline; the wire
backend speaks the OpenAI-compatible ``/chat/completions`` protocol.
"""

from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .errors import BackendError, BadInput

ROLES = ("system", "user", "assistant")
REFLECTION_MARKER = "## Reflection request"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        if not self.content:
            raise ValueError("message content must be non-empty")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


class LlmClient(Protocol):
    backend_tag: str

    def complete(self, messages: Sequence[ChatMessage], temperature: float = 0.0) -> str: ...


class CallbackClient:
    """Wraps a plain function of the message list."""

    def __init__(self, fn: Callable[[Sequence[ChatMessage]], str], tag: str = "callback"):
        self._fn = fn
        self.backend_tag = tag
        self.calls = 0

    def complete(self, messages, temperature=0.0):
        self.calls += 1
        return self._fn(messages)


class ReplayClient:
    """Returns pre-recorded responses in order; raises BackendError once exhausted."""

    backend_tag = "replay"

    def __init__(self, responses: Sequence[str]):
        self._responses = list(responses)
        self._pos = 0
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path) -> "ReplayClient":
        """Each line is either a JSON string or an object with a ``content`` field."""
        out = []
        for k, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                item = json.loads(line)
            except ValueError as exc:
                raise BadInput(f"{path}:{k}: {exc}") from None
            out.append(item["content"] if isinstance(item, dict) else str(item))
        return cls(out)

    @property
    def remaining(self) -> int:
        return len(self._responses) - self._pos

    def complete(self, messages, temperature=0.0):
        with self._lock:
            if self._pos >= len(self._responses):
                raise BackendError("replay responses exhausted")
            out = self._responses[self._pos]
            self._pos += 1
            return out


# --------------------------------------------------------------------------
# Scripted rule backend

_EGO = re.compile(r"^Ego vehicle .*?speed (-?[\d.]+) m/s", re.M)
_NEIGHBOR = re.compile(r"^Vehicle (\d+) .*?relative position \(([-+][\d.]+), ([-+][\d.]+)\) m, speed ([\d.]+) m/s", re.M)
_NAV = re.compile(r"^Navigation: (.*)$", re.M)
_CHOSEN = re.compile(r"^Chosen action: (\S+)", re.M)
_CORRECT = re.compile(r"^Correct action: (\S+)", re.M)


def scene_features(text: str, lane_width: float = 3.5) -> dict:
    """Gap features recoverable from rendered scene text."""
    feats = {"ego_speed": None, "front_headway": None, "rear_headway": None, "instruction": ""}
    m = _EGO.search(text)
    speed = float(m.group(1)) if m else None
    feats["ego_speed"] = speed
    nav = _NAV.findall(text)
    feats["instruction"] = nav[-1] if nav else ""
    front, rear = [], []
    for vid, rx, ry, vs in _NEIGHBOR.findall(text):
        rx, ry = float(rx), float(ry)
        if abs(ry) < lane_width / 2:
            (front if rx > 0 else rear).append(abs(rx))
    if speed and speed > 0.1:
        if front:
            feats["front_headway"] = min(front) / speed
        if rear:
            feats["rear_headway"] = min(rear) / speed
    return feats


class ScriptedClient:
    """Deterministic rule table over the final user message.

    Rules are tried in order; the first whose ``when`` clause matches supplies
    the response.  Supported conditions:

    ``reflection`` (bool), ``regex`` / ``not_regex`` (searched in the message),
    ``instruction_regex`` (searched in the navigation line, case-insensitive),
    ``max_front_headway`` / ``min_front_headway`` (seconds, center distance over
    ego speed to the nearest same-lane vehicle ahead).

    Responses may use ``{wrong}`` and ``{truth}``, filled from the
    ``Chosen action:`` / ``Correct action:`` lines of reflection prompts.
    """

    backend_tag = "scripted"

    def __init__(self, rules: Sequence[Mapping], lane_width: float = 3.5):
        self.rules = [dict(r) for r in rules]
        self.lane_width = lane_width
        self.calls = 0
        for r in self.rules:
            if "respond" not in r:
                raise BadInput(f"rule {r.get('name', '?')!r} has no 'respond'")

    @classmethod
    def from_file(cls, path=None) -> "ScriptedClient":
        if path is None:
            text = resources.files("drfagent").joinpath("data/scripted_rules.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except ValueError as exc:
            raise BadInput(f"rule file is not JSON: {exc}") from None
        return cls(doc["rules"], float(doc.get("lane_width", 3.5)))

    def _matches(self, when: Mapping, text: str, feats: dict, reflection: bool) -> bool:
        if "reflection" in when and bool(when["reflection"]) != reflection:
            return False
        if "regex" in when and not re.search(when["regex"], text):
            return False
        if "not_regex" in when and re.search(when["not_regex"], text):
            return False
        if "instruction_regex" in when and not re.search(when["instruction_regex"], feats["instruction"], re.I):
            return False
        hw = feats["front_headway"]
        if "max_front_headway" in when and (hw is None or hw > when["max_front_headway"]):
            return False
        if "min_front_headway" in when and hw is not None and hw < when["min_front_headway"]:
            return False
        return True

    def complete(self, messages, temperature=0.0):
        self.calls += 1
        users = [m for m in messages if m.role == "user"]
        text = users[-1].content if users else ""
        reflection = REFLECTION_MARKER in text
        feats = scene_features(text, self.lane_width)
        for rule in self.rules:
            if self._matches(rule.get("when", {}), text, feats, reflection):
                wrong = _CHOSEN.search(text)
                truth = _CORRECT.search(text)
                return rule["respond"].format(
                    wrong=wrong.group(1) if wrong else "unknown",
                    truth=truth.group(1) if truth else "idle",
                )
        raise BackendError("no scripted rule matched")


# --------------------------------------------------------------------------
# Wire backend


class WireClient:
    """``POST {base_url}/chat/completions`` (OpenAI-compatible)."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.backend_tag = f"wire:{model}"
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def complete(self, messages, temperature=0.0):
        headers = {}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": temperature,
        }
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions", json=payload, headers=headers)
            resp.raise_for_status()
            content = resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"chat completion failed: {exc}") from exc
        if not isinstance(content, str):
            raise BackendError("chat completion returned non-text content")
        return content
