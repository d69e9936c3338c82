"""Exception hierarchy shared across the pipeline.

Exit-code mapping used by the CLI:
  ConfigError      -> 2 (usage / bad configuration)
  DataQualityError -> 3 (input data fails a quality gate)
  NumericError     -> 4 (non-finite values, divergence)
"""


class BanditrxError(Exception):
    """Base class for pipeline errors."""


class ConfigError(BanditrxError):
    """Bad configuration, missing file, or invalid arguments."""

    exit_code = 2


class DataQualityError(BanditrxError):
    """Input data violates a documented quality requirement."""

    exit_code = 3


class NumericError(BanditrxError):
    """Numerical failure: non-finite values, divergence, degenerate stats."""

    exit_code = 4
