"""Personalised ride-pooling discounts under probabilistic traveller acceptance."""

from poolpricing.errors import ConfigError, ContractError, DataError, DomainError

__version__ = "0.1.0"

__all__ = ["ConfigError", "ContractError", "DataError", "DomainError", "__version__"]
