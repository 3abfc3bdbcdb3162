"""Exception types shared across the package."""


class SkillGraphError(Exception):
    """Base class for all package errors."""


class ContractViolation(SkillGraphError, ValueError):
    """An argument or state violated a documented precondition."""


class NotFoundError(SkillGraphError, KeyError):
    """A node, skill, or object id does not exist."""


class EmptyCandidatesError(SkillGraphError, ValueError):
    """A sampling operation received no candidates."""


class OracleError(SkillGraphError):
    """Base class for oracle failures."""


class OracleTransportError(OracleError):
    """Transient transport failure (timeout, connection reset); retriable."""


class OracleProtocolError(OracleError):
    """The oracle response violated the wire contract; not retriable."""


class SnapshotError(SkillGraphError):
    """A snapshot could not be written or read."""


class SnapshotVersionError(SnapshotError):
    """Snapshot format_version is newer than this build supports."""


class CorruptSnapshotError(SnapshotError):
    """A loaded snapshot violated a store invariant; message names it."""
