"""Exception hierarchy shared by all resiot modules."""


class ResiotError(Exception):
    """Base class for every error raised by this package."""


class MalformedEncoding(ResiotError, ValueError):
    """Bytes could not be decoded into the expected structure."""


class InvalidElement(ResiotError, ValueError):
    """A group element is invalid for the requested use (e.g. identity)."""


class AuthenticationFailed(ResiotError):
    """Authenticated decryption or a credential check failed."""


class DuplicateMember(ResiotError):
    pass


class UnverifiableSignature(ResiotError):
    pass


class PolicyError(ResiotError, ValueError):
    """Invalid access policy. ``position`` is set for parse errors."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class UnknownAttribute(ResiotError, KeyError):
    def __str__(self):
        return f"attribute not in universe: {self.args[0]!r}"


class PolicyUnsatisfied(ResiotError):
    pass


class MalformedCiphertext(ResiotError):
    pass


class ProtocolAbort(ResiotError):
    """A protocol session stopped before completing.

    ``step`` is the protocol step number at which the failure was detected.
    """

    def __init__(self, step, reason):
        super().__init__(f"step {step}: {reason}")
        self.step = step
        self.reason = reason


class StepOrderError(ProtocolAbort):
    pass


class ScenarioError(ResiotError, ValueError):
    """Scenario validation failure; ``path`` locates the offending entry."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class MissingPrimitive(ResiotError, KeyError):
    def __str__(self):
        return f"no timing for primitive {self.args[0]!r}"
