"""Exception hierarchy shared by every module."""


class CausalPromptError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CausalPromptError, ValueError):
    """Input failed a contract check. The CLI maps these to exit code 2."""


# graph interchange
class MalformedDocument(ValidationError):
    pass


class UnknownEdgeType(ValidationError):
    pass


class StrengthOutOfRange(ValidationError):
    pass


class DanglingEndpoint(ValidationError):
    pass


class CyclicGraph(ValidationError):
    pass


# metrics
class EmptyClaimSet(ValidationError):
    pass


class EmptyList(ValidationError):
    pass


class ZeroTokens(ValidationError):
    pass


class DegenerateVariance(ValidationError):
    pass


# prompts
class MissingField(ValidationError):
    pass


# backends
class BackendError(CausalPromptError):
    pass


class BackendTimeout(BackendError):
    pass


class RateLimited(BackendError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ProtocolError(BackendError):
    pass


class ScriptMiss(BackendError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else ""


class RetrievalFailed(BackendError):
    pass


# harness
class MalformedRecord(ValidationError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class UnpairedRecords(ValidationError):
    pass


class ScoreOutOfRange(ValidationError):
    pass


# scm lab
class DomainTooLarge(ValidationError):
    pass


class EmptyShiftFamily(ValidationError):
    pass


class NotRecoverable(ValidationError):
    pass


class AssumptionViolated(ValidationError):
    pass


class SupportMismatch(ValidationError):
    pass


class ZeroLength(ValidationError):
    pass
