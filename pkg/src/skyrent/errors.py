"""Exception types raised across the pipeline.

Anything deriving from :class:`DataError` maps to exit code 2 in the CLI.
"""


class SkyRentError(Exception):
    pass


class UsageError(SkyRentError):
    pass


class DataError(SkyRentError):
    pass


class ZeroAreaPolygon(DataError):
    pass


class SamplingStalled(DataError):
    pass


class EmptyNetwork(DataError):
    pass


class ProviderUnreachable(DataError):
    pass


class MalformedImage(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class InsufficientData(DataError):
    pass


class TooFewPoints(DataError):
    pass


class NoListingInRange(DataError):
    pass


class DegenerateVariance(DataError):
    pass


class BadPalette(DataError):
    pass
