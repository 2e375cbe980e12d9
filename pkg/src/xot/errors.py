"""Exception types shared across the package."""


class XotError(Exception):
    """Base class for all package errors."""


class ContractError(XotError):
    """A documented precondition or invariant was violated by the caller."""


class InvariantViolation(ContractError):
    """A state value does not satisfy its type invariants."""


class IllegalMoveError(XotError):
    """An action was applied in a state where it is not legal."""

    def __init__(self, action, message=None):
        self.action = action
        super().__init__(message or f"illegal action: {action!r}")


class UnsolvableStateError(XotError):
    """A state is outside the reachable space of its task."""


class GenerationExhaustedError(XotError):
    """The instance generator could not produce enough distinct instances."""


class StateParseError(XotError):
    """A state text could not be parsed; carries the offending position."""

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


class AnswerParseError(XotError):
    """An answer text (move list or expression) could not be parsed."""


class TrajectoryValidationError(XotError):
    """A parsed trajectory replays into an illegal or inconsistent step."""

    def __init__(self, step_index, message):
        self.step_index = step_index
        super().__init__(f"step {step_index}: {message}")


class CheckpointError(XotError):
    """A checkpoint file is unreadable or corrupt."""


class UnsupportedVersionError(CheckpointError):
    """A checkpoint declares a format version this code does not know."""


class TaskMismatchError(CheckpointError):
    """A checkpoint was produced for a different task than requested."""


class DivergenceError(XotError):
    """Training produced a non-finite loss; parameters were left untouched."""


class TransportError(XotError):
    """All HTTP retries to the LLM endpoint were exhausted."""


class ProtocolError(XotError):
    """The LLM endpoint returned a body that is not valid chat JSON."""


class ReplayMismatchError(XotError):
    """A replayed request does not match the recorded transcript."""
