"""Núcleo do igsense: configurações do processo e hierarquia de exceções."""

from .config import settings
from .exceptions import ConfigurationError, IgSenseError, NumericalError

__all__ = ["settings", "IgSenseError", "ConfigurationError", "NumericalError"]
