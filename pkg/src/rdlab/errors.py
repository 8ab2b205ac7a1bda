"""Exception types and size budgets shared across the package."""

import os


class ConfigError(ValueError):
    """Invalid distribution, channel, distortion matrix or run parameters."""


class SizeError(RuntimeError):
    """A codebook or enumeration would exceed its budget."""


class RateRegionWarning(UserWarning):
    """Rates fall outside the region where the construction is guaranteed to work."""


# Defaults; RDLAB_BUDGET overrides all enumeration budgets at once.
ENUMERATION_BUDGET = 2**22
BINNING_BUDGET = 2**20
CLASS_BUDGET = 2**22
CODEBOOK_SYMBOL_BUDGET = 2**26


def budget(default: int) -> int:
    raw = os.environ.get("RDLAB_BUDGET")
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"RDLAB_BUDGET must be an integer, got {raw!r}") from exc
    if value < 1:
        raise ConfigError("RDLAB_BUDGET must be positive")
    return value
