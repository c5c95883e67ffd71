class SpeedBenchError(Exception):
    """Base class for all errors raised by speedbench."""


class DegenerateRoute(SpeedBenchError, ValueError):
    pass


class OverlappingSegments(SpeedBenchError, ValueError):
    pass


class ParseError(SpeedBenchError, ValueError):
    pass


class SchemaError(SpeedBenchError, ValueError):
    pass


class ValidationError(SpeedBenchError, ValueError):
    pass


class InvalidCount(SpeedBenchError, ValueError):
    pass


class InvalidCommand(SpeedBenchError, ValueError):
    pass


class SimEnded(SpeedBenchError, RuntimeError):
    pass


class EpisodeAborted(SpeedBenchError, RuntimeError):
    """A policy raised mid-episode. ``result`` holds everything logged so far."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class TraceTooShort(SpeedBenchError, ValueError):
    pass


class EmptyLog(SpeedBenchError, ValueError):
    pass


class MissingLog(SpeedBenchError, FileNotFoundError):
    def __init__(self, route_ids):
        self.route_ids = list(route_ids)
        super().__init__("missing logs for: " + ", ".join(self.route_ids))


class ConfigMismatch(SpeedBenchError, ValueError):
    pass
