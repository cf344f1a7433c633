"""Exception hierarchy shared by every module of the toolkit."""


class TelemetryError(Exception):
    """Base class for all toolkit errors."""


# configuration documents
class ConfigError(TelemetryError):
    pass


class MissingField(ConfigError):
    pass


class MalformedDocument(ConfigError):
    pass


class InvalidValue(ConfigError):
    pass


# DCI codec
class CodecError(TelemetryError):
    pass


class FieldOverflow(CodecError):
    pass


class BadLength(CodecError):
    pass


class EmptyInput(CodecError):
    pass


class NotRntiScrambled(CodecError):
    pass


class RivOutOfRange(CodecError):
    pass


class SlivOutOfRange(CodecError):
    pass


class NoValidDecode(CodecError):
    pass


class ReservedMcs(CodecError):
    pass


class TimeIndexOutOfRange(CodecError):
    pass


# TBS
class TbsError(TelemetryError):
    pass


class NegativePerPrbRe(TbsError):
    pass


class BadPattern(TbsError):
    pass


class NonPositiveNInfo(TbsError):
    pass


# UE tracking / capacity
class DuplicateRnti(TelemetryError):
    pass


class UnknownRnti(TelemetryError, KeyError):
    pass


class HarqIdOutOfRange(TelemetryError):
    pass


class NonMonotonicTti(TelemetryError):
    pass


# simulation / evaluation
class InvalidConfig(TelemetryError):
    pass


class MismatchedRuns(TelemetryError):
    pass


class InvalidScenario(TelemetryError):
    pass


class UnnormalizedInput(TelemetryError, ValueError):
    pass


class EmptySeries(TelemetryError, ValueError):
    pass


# wire protocols
class SubscriberGone(TelemetryError):
    pass


class InvalidCoordinates(TelemetryError, ValueError):
    pass


class RtspError(TelemetryError):
    status = 400


class UnsupportedMethod(RtspError):
    status = 501


class OutOfOrderMethod(RtspError):
    status = 455


class MalformedMessage(RtspError):
    status = 400
