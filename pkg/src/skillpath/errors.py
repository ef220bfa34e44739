"""Exception hierarchy shared by the whole toolchain.

Every error the pipeline can surface to an operator derives from
``SkillPathError`` so the CLI can map failures onto exit codes uniformly.
"""


class SkillPathError(Exception):
    """Base class for all toolchain errors."""


class InvalidAngleError(SkillPathError):
    """An angle input is non-finite."""


class InvalidRotationError(SkillPathError):
    """A matrix claimed to be a rotation is too far from orthonormal."""


class FrameResolutionError(SkillPathError):
    """The requested frames are not connected in the frame graph."""


class CalibrationError(SkillPathError):
    """A calibration document is malformed or inconsistent."""


class TraceParseError(SkillPathError):
    """A demonstration trace file violates the trace format."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PathParseError(SkillPathError):
    """A nominal-path document is malformed."""


class DegenerateInputError(SkillPathError):
    """An input is too small or empty for the requested operation."""


class ContractError(SkillPathError):
    """A cross-module precondition was violated (wrong frame, length mismatch)."""


class UnsupportedModelError(SkillPathError):
    """The arm model is outside the class the analytic solver covers."""


class EmitError(SkillPathError):
    """A program cannot be expressed in the requested output dialect."""


class ConfigError(SkillPathError):
    """A project or scenario configuration is invalid."""


class StageError(SkillPathError):
    """Wraps a failure with the pipeline stage it happened in."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
