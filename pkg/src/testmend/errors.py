"""Exception hierarchy shared by every testmend module."""

from __future__ import annotations


class TestmendError(Exception):
    """Base class for all library errors."""


class PreconditionError(TestmendError):
    pass


class InvalidTask(TestmendError):
    def __init__(self, violations):
        super().__init__("invalid task: " + "; ".join(violations))
        self.violations = list(violations)


# llm gateway
class MissingPlaceholder(TestmendError):
    def __init__(self, template_id: str, name: str):
        super().__init__(f"template {template_id!r} is missing binding {name!r}")
        self.template_id = template_id
        self.name = name


class UnknownTemplate(TestmendError):
    pass


class TransportExhausted(TestmendError):
    pass


class ProviderRejected(TestmendError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"provider rejected request with status {status}: {body[:200]}")
        self.status = status


class ReplayMiss(TestmendError):
    pass


class TranscriptError(TestmendError):
    def __init__(self, path, lineno: int, reason: str):
        super().__init__(f"{path}:{lineno}: {reason}")
        self.lineno = lineno


# build adapter
class MethodNotFound(TestmendError):
    pass


class UnbalancedReplacement(TestmendError):
    pass


class ToolchainMissing(TestmendError):
    pass


# report parsing
class ReportError(TestmendError):
    pass


class FocalNotFound(ReportError):
    pass


class MalformedDiff(TestmendError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


# agents
class NoExtractableCode(TestmendError):
    pass


class SpanMismatch(TestmendError):
    pass


class DimensionMismatch(TestmendError):
    pass


class EmbedderError(TestmendError):
    pass


class SessionAborted(TestmendError):
    """Raised when a session hits an unrecoverable error; keeps the partial trace."""

    def __init__(self, cause: BaseException, trace):
        super().__init__(f"session aborted: {cause}")
        self.cause = cause
        self.trace = tuple(trace)


class ConfigError(TestmendError):
    def __init__(self, path, key: str, reason: str):
        super().__init__(f"{path}: {key}: {reason}")
        self.path = path
        self.key = key
