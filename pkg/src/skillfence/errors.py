"""Exception types shared across the package."""

from __future__ import annotations


class SkillfenceError(Exception):
    """Base class for all package errors."""


class MissingMetadata(SkillfenceError):
    """Bundle has no usable metadata (no name in frontmatter or sidecar)."""


class MalformedFrontmatter(SkillfenceError):
    """SKILL.md frontmatter header cannot be parsed."""


class PathEscape(SkillfenceError):
    """A referenced script resolves outside the bundle root."""


class IoFailure(SkillfenceError):
    """Filesystem read/write failure while loading or writing a bundle."""


class OracleFailure(SkillfenceError):
    """A semantic-oracle call failed."""


class OracleUnavailable(OracleFailure):
    """Remote oracle endpoint unreachable or transcript entry missing."""


class UnknownNode(SkillfenceError):
    """Node id not present in the graph."""


class UnsupportedResource(SkillfenceError):
    """Task requires a resource class outside the fixture taxonomy."""


class AblationSpanConflict(SkillfenceError):
    """Ablation span overlaps another pending edit."""


class SpanConflict(SkillfenceError):
    """Guard insertion or projection edits overlap."""


class RefactorFailure(SkillfenceError):
    """Script extraction would break a data dependency."""


class ConflictError(SkillfenceError):
    """A descriptor tuple is labeled both unnecessary and necessary."""


class EmptyStratum(SkillfenceError):
    """Stratified sample has n=0 in a stratum with N>0."""


class SandboxViolation(SkillfenceError):
    """Attempted filesystem or network escape from the sandbox."""


class DriverFailure(SkillfenceError):
    """Built-in driver could not complete a run."""
