"""Domain exceptions shared across the engine."""


class NamemoError(Exception):
    """Base class for all engine errors."""


# geometry / planning

class SeatingAreaEmpty(NamemoError):
    """The seating offset leaves no seating area in the room."""


class CoverageInfeasible(NamemoError):
    """The required angular extent exceeds the mount's pan/tilt range."""


# capture

class PoseOutOfRange(NamemoError):
    """Requested pan/tilt pose is outside the mount's limits."""


class CaptureTimeout(NamemoError):
    """Hardware source failed to deliver a frame in time."""


class SeatingOverflow(NamemoError):
    """More students requested than the seat grid can hold."""


# stitching

class EmptyPlan(NamemoError):
    """Panorama composition needs at least one tile."""


class OutOfCanvas(NamemoError):
    """Angles or boxes fall entirely outside the panorama canvas."""


# vision backend

class BackendUnavailable(NamemoError):
    """The external detect/embed adapter cannot be reached."""


class MalformedAdapterReply(NamemoError):
    """The adapter replied with something that is not a valid detection list."""


class DegenerateLandmarks(NamemoError):
    """Landmarks are collinear; no similarity transform is defined."""


# gallery

class DuplicateId(NamemoError):
    """A student with this id is already enrolled."""


class InvalidEmbedding(NamemoError):
    """Embedding is not unit-norm or has the wrong dimension."""


class UnknownId(NamemoError):
    """No enrolled student with this id (or the student opted out)."""


class CorruptFile(NamemoError):
    """Gallery file failed its checksum or is structurally broken."""


class VersionUnsupported(NamemoError):
    """Gallery file was written by an unknown format version."""


# session

class CycleAborted(NamemoError):
    """Too many tile captures failed; the cycle was abandoned."""
