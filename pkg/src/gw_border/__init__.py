"""gw_border: distance to the border in size-conditioned Galton-Watson trees."""

from gw_border.errors import GWBorderError
from gw_border.family import OffspringFamily, apex, builtin_family, resolve_family, solve_g
from gw_border.border import convergence_table, exact_conditional_prob, iterate_scheme, limit_constant

__version__ = "0.1.0"

__all__ = [
    "GWBorderError",
    "OffspringFamily",
    "apex",
    "builtin_family",
    "convergence_table",
    "exact_conditional_prob",
    "iterate_scheme",
    "limit_constant",
    "resolve_family",
    "solve_g",
]
