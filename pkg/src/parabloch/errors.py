"""Error taxonomy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, RegimeError -> 3,
InvariantError -> 4. Anything else is an unexpected failure (exit 1).
"""


class ConfigError(ValueError):
    """Bad or inconsistent configuration (unknown key, invariant violation)."""


class RegimeError(RuntimeError):
    """Physics-regime failure: parameters outside the method's validity window
    (fold overlap, no bound doublets, calibration window empty, ...)."""


class InvariantError(RuntimeError):
    """A declared numerical invariant failed during validation."""


def exit_code_for(exc: BaseException) -> int:
    """Process exit code for an exception escaping a CLI command."""
    if isinstance(exc, ConfigError):
        return 2
    if isinstance(exc, RegimeError):
        return 3
    if isinstance(exc, InvariantError):
        return 4
    return 1
