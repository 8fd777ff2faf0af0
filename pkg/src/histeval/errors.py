"""Shared exception hierarchy.

Validation problems raise :class:`HistEvalError` subclasses (CLI exit code 1);
endpoint/network problems raise :class:`EndpointError` subclasses (exit code 2).
"""


class HistEvalError(Exception):
    """Base class for all engine errors."""


class ManifestError(HistEvalError):
    pass


class CorpusError(HistEvalError):
    pass


class SidecarError(CorpusError):
    pass


class StyleError(HistEvalError):
    pass


class AnachronismError(HistEvalError):
    pass


class DemographicsError(HistEvalError):
    pass


class ReportError(HistEvalError):
    pass


class EndpointError(Exception):
    """Endpoint/network failure; distinct from validation errors."""


class ReplayMissError(EndpointError):
    """Replay-mode cache lookup failed; message names the missing key."""
