"""Shared exception types."""


class DimensionError(ValueError):
    """Tensor shapes do not conform for the requested operation."""


class DomainError(ValueError):
    """Input is outside the mathematical domain of the operation."""


class ContractError(RuntimeError):
    """A caller or callee violated an API contract."""


class ParseError(ValueError):
    """A data file does not match its schema."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""
