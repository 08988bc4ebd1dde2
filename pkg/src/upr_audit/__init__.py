"""Score every variable of a C program by how closely it relates to user privileges."""

from upr_audit.keys import GLOBAL, VariableKey

__version__ = "0.1.0"

__all__ = ["GLOBAL", "VariableKey", "__version__"]
