"""Sub-languages of Hojabr and the passes that move programs between them."""

from .catalog import CATALOG, SlangSpec, Validation, get, validate
from .joins import STRATEGIES, lift, lower_join, natural_form
from .tensors import FORMATS, convert_database, lower_tensor

__all__ = [
    "CATALOG",
    "FORMATS",
    "STRATEGIES",
    "SlangSpec",
    "Validation",
    "convert_database",
    "get",
    "lift",
    "lower_join",
    "lower_tensor",
    "natural_form",
    "validate",
]
