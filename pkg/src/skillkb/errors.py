"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SkillKBError(Exception):
    """Base class for every error raised by skillkb."""


# gateway
class TransportError(SkillKBError):
    pass


class MalformedResponse(SkillKBError):
    pass


class DimensionMismatch(SkillKBError):
    pass


# skill model
class DuplicateName(SkillKBError):
    pass


class UnknownTarget(SkillKBError):
    pass


class NameCollision(SkillKBError):
    pass


# vectors / index
class ZeroVector(SkillKBError):
    pass


class EmptyIndex(SkillKBError):
    pass


# extraction
class ParseError(SkillKBError):
    pass


class SchemaError(ParseError):
    """An update element is well-formed JSON but misses option-specific fields."""


class EmptyPlan(ParseError):
    pass


class PreconditionError(SkillKBError):
    pass


# environment
class EnvironmentError_(SkillKBError):
    """Tool backend failure inside an environment (name avoids the builtin)."""


class UnknownTool(SkillKBError):
    pass


class UnknownTask(SkillKBError):
    pass


# store
class FormatError(SkillKBError):
    pass


class VersionError(SkillKBError):
    pass


class ValidationError(SkillKBError):
    pass


class DuplicateTool(FormatError):
    pass
