"""
Exceptions that callers need to tell apart.

Everything else is raised as a builtin (ValueError, FileNotFoundError, ...)
with a precise message.
"""


class DivergenceError(RuntimeError):
    """A training or attack loss became non-finite."""

    def __init__(self, where: str = ""):
        suffix = f" in {where}" if where else ""
        super().__init__(f"divergence detected{suffix}")


class ProvenanceViolation(RuntimeError):
    """A pipeline read data it is not allowed to see (e.g. target labels in SFDA)."""


class IDXFormatError(ValueError):
    """Malformed IDX file; carries the byte offset of the offending field."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class CheckpointIntegrityError(ValueError):
    """Checkpoint archive is truncated, corrupt, or fails its checksum."""


class ArchMismatchError(ValueError):
    """Checkpoint architecture differs from the one the caller expected."""


class RunNotFoundError(KeyError):
    """No record with the requested run_id in the registry."""

    def __str__(self) -> str:
        return f"unknown run_id: {self.args[0]}"


class ConfigError(ValueError):
    """An experiment config file is unreadable or structurally wrong."""
