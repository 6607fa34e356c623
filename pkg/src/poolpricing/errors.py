"""Exception hierarchy shared by all modules."""


class PoolPricingError(Exception):
    pass


class DomainError(PoolPricingError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractError(PoolPricingError, ValueError):
    """Inputs violate a structural precondition (length mismatch, missing ride...)."""


class DataError(PoolPricingError):
    """Malformed or inconsistent input data (request CSV, matrix files)."""


class ConfigError(PoolPricingError):
    """Invalid scenario configuration."""
