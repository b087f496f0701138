"""
LLM Client Module for LCDA.
Chat-completion client for any compatible endpoint, plus a replay backend
that serves recorded responses so searches can be reproduced offline.
"""

import hashlib
import json
import os
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import requests

from config import (
    LLM_API_KEY_ENV,
    LLM_BACKOFF_SECONDS,
    LLM_ENDPOINT,
    LLM_MAX_RETRIES,
    LLM_MAX_TOKENS,
    LLM_MODEL,
    LLM_TEMPERATURE,
    LLM_TIMEOUT_SECONDS,
    TRANSCRIPT_SCHEMA,
    TRANSCRIPT_SCHEMA_VERSION,
)
from errors import (
    AuthenticationError,
    LlmError,
    MalformedReplyError,
    ReplayDivergenceError,
    RetriesExhaustedError,
    TranscriptError,
)
from history_store import JsonlWriter, dump_line, header_record, read_jsonl
from logger import get_logger

logger = get_logger(__name__)

ROLES = ("system", "user", "assistant")
RETRYABLE_STATUS = {408, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class LlmRequest:
    """One chat-completion call: a system message first, a user message last."""
    model_id: str
    messages: Tuple[Tuple[str, str], ...]
    temperature: float = LLM_TEMPERATURE
    max_tokens: int = LLM_MAX_TOKENS

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple((role, content) for role, content in self.messages))
        if not self.messages or self.messages[0][0] != "system":
            raise ValueError("first message must have role 'system'")
        if self.messages[-1][0] != "user":
            raise ValueError("last message must have role 'user'")
        unknown = [role for role, _ in self.messages if role not in ROLES]
        if unknown:
            raise ValueError(f"unknown roles: {unknown}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")

    def payload(self) -> Dict:
        return {
            "model": self.model_id,
            "messages": [{"role": role, "content": content} for role, content in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


def request_digest(req: LlmRequest) -> str:
    """sha256 of the canonical JSON request body."""
    canonical = json.dumps(req.payload(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TranscriptEntry:
    digest: str
    response: str
    timestamp: str

    def to_dict(self) -> Dict:
        return {"digest": self.digest, "response": self.response, "timestamp": self.timestamp}

    @classmethod
    def from_dict(cls, data: Dict) -> "TranscriptEntry":
        try:
            return cls(str(data["digest"]), str(data["response"]), str(data.get("timestamp", "")))
        except KeyError as e:
            raise TranscriptError(f"Transcript entry missing field {e}")


@dataclass
class Transcript:
    """Ordered request digests and responses; digests are unique."""
    entries: List[TranscriptEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if entry.digest in seen:
                raise TranscriptError(f"Duplicate request digest {entry.digest[:12]}")
            seen.add(entry.digest)
        self._digests = seen

    def append(self, entry: TranscriptEntry):
        if entry.digest in self._digests:
            raise TranscriptError(f"Duplicate request digest {entry.digest[:12]}")
        self._digests.add(entry.digest)
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, Transcript) and self.entries == other.entries


def record(transcript: Transcript, path: Path):
    """Write the whole transcript: header line, then one entry per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline="\n") as f:
        f.write(dump_line(header_record(TRANSCRIPT_SCHEMA, TRANSCRIPT_SCHEMA_VERSION)) + "\n")
        for entry in transcript:
            f.write(dump_line(entry.to_dict()) + "\n")
    logger.info(f"Recorded {len(transcript)} transcript entries to {path}")


def load_transcript(path: Path) -> Transcript:
    """
    Load a transcript written by record() or TranscriptWriter.

    Raises:
        TranscriptError: on malformed lines, a wrong header or duplicate digests
    """
    records, _ = read_jsonl(path, TRANSCRIPT_SCHEMA, TRANSCRIPT_SCHEMA_VERSION, TranscriptError)
    return Transcript([TranscriptEntry.from_dict(r) for r in records])


class TranscriptWriter(JsonlWriter):
    """Persists each completion as it happens so an interrupted run keeps its calls."""

    def __init__(self, path: Path, resume: bool = False):
        super().__init__(path, TRANSCRIPT_SCHEMA, TRANSCRIPT_SCHEMA_VERSION, resume, TranscriptError)

    def write_entry(self, entry: TranscriptEntry):
        self.append(entry.to_dict())


class ChatCompletionClient:
    """
    Live client: one POST to <endpoint>/chat/completions per completion.

    The credential is read from the environment only and is never written
    to transcripts or histories.
    """

    def __init__(self, endpoint: str = LLM_ENDPOINT, model_id: str = LLM_MODEL,
                 max_retries: int = LLM_MAX_RETRIES, backoff: float = LLM_BACKOFF_SECONDS,
                 timeout: float = LLM_TIMEOUT_SECONDS, api_key_env: str = LLM_API_KEY_ENV,
                 session: Optional[requests.Session] = None,
                 transcript: Optional[Transcript] = None,
                 writer: Optional[TranscriptWriter] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint.rstrip("/")
        self.model_id = model_id
        self.max_retries = max_retries
        self.backoff = backoff
        self.timeout = timeout
        self._api_key = os.getenv(api_key_env)
        self.session = session or requests.Session()
        self.transcript = transcript if transcript is not None else Transcript()
        self.writer = writer
        self._sleep = sleep
        # Entries found on disk when resuming; a repeated request is answered from here
        self._recorded: Dict[str, TranscriptEntry] = {}
        if writer is not None and writer.existing:
            for entry in (TranscriptEntry.from_dict(r) for r in writer.existing):
                self.transcript.append(entry)
                self._recorded[entry.digest] = entry
        if not self._api_key:
            logger.warning(f"{api_key_env} is not set; sending requests without a credential")

    @property
    def url(self) -> str:
        return f"{self.endpoint}/chat/completions"

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        return headers

    def complete(self, req: LlmRequest) -> str:
        """
        Send one completion request.

        Returns:
            The assistant message text

        Raises:
            AuthenticationError: on HTTP 401/403
            RetriesExhaustedError: when transport errors persist past max_retries
            MalformedReplyError: when the body is not a chat completion
            LlmError: on any other non-success status
        """
        digest = request_digest(req)
        recorded = self._recorded.pop(digest, None)
        if recorded is not None:
            logger.info(f"Reusing recorded reply {digest[:12]} from the interrupted run")
            return recorded.response

        last_error = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                delay = self.backoff * 2 ** (attempt - 1)
                logger.warning(f"Retrying completion in {delay:.1f}s (attempt {attempt + 1}): {last_error}")
                self._sleep(delay)
            try:
                response = self.session.post(self.url, json=req.payload(), headers=self._headers(),
                                             timeout=self.timeout)
            except requests.RequestException as e:
                last_error = f"{type(e).__name__}: {e}"
                continue

            logger.debug(f"Completion HTTP {response.status_code}")
            if response.status_code in (401, 403):
                raise AuthenticationError(f"Endpoint rejected the credential (HTTP {response.status_code})")
            if response.status_code in RETRYABLE_STATUS:
                last_error = f"HTTP {response.status_code}"
                continue
            if response.status_code != 200:
                raise LlmError(f"Completion failed with HTTP {response.status_code}")

            text = self._extract_text(response)
            entry = TranscriptEntry(digest, text, datetime.now().isoformat())
            self.transcript.append(entry)
            if self.writer is not None:
                self.writer.write_entry(entry)
            return text

        raise RetriesExhaustedError(f"Completion failed after {self.max_retries + 1} attempts: {last_error}")

    @staticmethod
    def _extract_text(response) -> str:
        try:
            body = response.json()
        except ValueError:
            raise MalformedReplyError("Reply body is not JSON")
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedReplyError("Reply has no choices[0].message.content")
        if not isinstance(text, str):
            raise MalformedReplyError(f"Reply content is {type(text).__name__}, not text")
        return text


class ReplayClient:
    """Serves recorded responses in order; any request mismatch is a divergence."""

    def __init__(self, transcript: Transcript):
        self.transcript = transcript
        self.position = 0

    @classmethod
    def from_file(cls, path: Path) -> "ReplayClient":
        return cls(load_transcript(path))

    @property
    def exhausted(self) -> bool:
        return self.position >= len(self.transcript)

    def complete(self, req: LlmRequest) -> str:
        digest = request_digest(req)
        if self.exhausted:
            raise ReplayDivergenceError(self.position, None, digest)
        entry = self.transcript.entries[self.position]
        if entry.digest != digest:
            raise ReplayDivergenceError(self.position, entry.digest, digest)
        self.position += 1
        return entry.response


def build_request(messages: Sequence[Tuple[str, str]], model_id: str = LLM_MODEL,
                  temperature: float = LLM_TEMPERATURE, max_tokens: int = LLM_MAX_TOKENS) -> LlmRequest:
    return LlmRequest(model_id, tuple(messages), temperature, max_tokens)
