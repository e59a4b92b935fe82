"""Exception hierarchy shared across the simulator."""


class SdcpsError(Exception):
    """Base class for all domain errors."""


# --- event engine ---

class PastEvent(SdcpsError):
    pass


class Drained(SdcpsError):
    pass


class InvalidPriority(SdcpsError):
    pass


class InvalidTtl(SdcpsError):
    pass


# --- topology ---

class InvalidCount(SdcpsError):
    pass


class UnknownNode(SdcpsError):
    pass


class TooManyPartitions(SdcpsError):
    pass


class NoSuchEdge(SdcpsError):
    pass


class DuplicateEdge(SdcpsError):
    pass


class NoCenters(SdcpsError):
    pass


# --- plants / control ---

class DimensionMismatch(SdcpsError):
    pass


class NotObservable(SdcpsError):
    pass


class MissingNeighborEstimate(SdcpsError):
    pass


class UncoveredPlant(SdcpsError):
    pass


# --- control plane ---

class Unreachable(SdcpsError):
    pass


class DuplicateDevice(SdcpsError):
    pass


class UnknownDevice(SdcpsError):
    pass


class ImageMismatch(SdcpsError):
    pass


class NotFound(SdcpsError):
    pass


class Saturated(SdcpsError):
    pass


class DeadController(SdcpsError):
    pass


# --- middleware ---

class Expired(SdcpsError):
    pass


class Unsynchronized(SdcpsError):
    pass


class StaleTrack(SdcpsError):
    pass


class DuplicateController(SdcpsError):
    pass


class UnknownEndpoint(SdcpsError):
    pass


class NoSibling(SdcpsError):
    pass


# --- security ---

class InvalidSpec(SdcpsError):
    pass


class NoKey(SdcpsError):
    pass


class AlreadyPrevented(SdcpsError):
    pass


# --- scenarios / cli ---

class ConfigInvalid(SdcpsError):
    pass


class EstablishFailure(SdcpsError):
    pass


class EmptyReport(SdcpsError):
    pass
