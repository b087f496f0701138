"""
Exception hierarchy for LCDA.
Every failure raised on purpose derives from LcdaError so the CLI can map
it to an exit code.
"""

from typing import Optional


class LcdaError(Exception):
    """Base class for all LCDA errors."""


class ConfigError(LcdaError):
    """The run configuration is missing, malformed or inconsistent."""


class DesignSpaceError(LcdaError, ValueError):
    """A design space, backbone or rollout is structurally ill-formed."""


class EnumerationCapError(LcdaError):
    """The design space is too large to enumerate."""

    def __init__(self, size: int, cap: int):
        super().__init__(f"Design space has {size} rollouts, exceeding the enumeration cap of {cap}")
        self.size = size
        self.cap = cap


class ParseError(LcdaError):
    """
    An LLM response could not be turned into a valid rollout.

    kind is one of: no_list, malformed, validation.
    """

    def __init__(self, kind: str, message: str, fragment: str = "", violations=()):
        super().__init__(f"{kind}: {message}" + (f" (at {fragment!r})" if fragment else ""))
        self.kind = kind
        self.fragment = fragment
        self.violations = tuple(violations)


class MappingError(LcdaError):
    """A layer cannot be mapped onto crossbar arrays."""


class LatencyError(LcdaError, ValueError):
    """Latency must be strictly positive to convert into throughput."""


class TrainingDivergedError(LcdaError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"Training diverged at epoch {epoch}, batch {batch} (loss={loss})")
        self.epoch = epoch
        self.batch = batch
        self.loss = loss


class DatasetError(LcdaError):
    """A dataset is empty or its file layout is invalid."""


class LlmError(LcdaError):
    """Base class for chat-completion failures."""


class AuthenticationError(LlmError):
    """The endpoint rejected the credential."""


class RetriesExhaustedError(LlmError):
    """Transport kept failing after every configured retry."""


class MalformedReplyError(LlmError):
    """The endpoint answered but the body is not a chat completion."""


class TranscriptError(LlmError):
    """A transcript file is malformed or has the wrong version."""


class ReplayDivergenceError(LlmError):
    """A replayed request does not match the recorded one."""

    def __init__(self, call_index: int, expected: Optional[str], actual: str, episode: Optional[int] = None):
        self.call_index = call_index
        self.expected = expected
        self.actual = actual
        self.episode = episode
        super().__init__(self._describe())

    def _describe(self) -> str:
        where = f"episode {self.episode}, " if self.episode is not None else ""
        if self.expected is None:
            return f"Replay diverged at {where}call {self.call_index}: transcript exhausted"
        return (f"Replay diverged at {where}call {self.call_index}: "
                f"expected digest {self.expected[:12]}, got {self.actual[:12]}")

    def at_episode(self, episode: int) -> "ReplayDivergenceError":
        self.episode = episode
        self.args = (self._describe(),)
        return self


class OptimizerError(LcdaError):
    """An optimizer could not produce a valid rollout."""


class HistoryError(LcdaError):
    """A history file is malformed or has the wrong version."""
