"""
⚠️ Digital Twin Errors
======================

Exceptions shared by every twin module. Each carries the process exit code
the CLI returns when it escapes to the top level.

    0 success, 2 usage/parse, 3 numeric, 4 environment
"""

from typing import Optional


class TwinError(Exception):
    """Base class for all twin failures"""
    exit_code = 1


class InputError(TwinError):
    """Malformed input file, flag or value"""
    exit_code = 2


class NumericError(TwinError):
    """A numerical procedure failed (non-convergence, singular system, ...)"""
    exit_code = 3

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def __getattr__(self, name):
        # residual, last_iterate, cost, sample_index ... live in details
        details = self.__dict__.get("details", {})
        if name in details:
            return details[name]
        raise AttributeError(name)


class TransportError(TwinError):
    """Transport could not be opened or failed mid-mission"""
    exit_code = 4


class FrameError(TransportError):
    """A wire frame could not be decoded"""

    def __init__(self, message: str, frame: Optional[str] = None):
        super().__init__(message)
        self.frame = frame
