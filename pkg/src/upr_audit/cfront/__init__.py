"""C frontend: parsing, lowering to simple statements, variables, anonymization."""

from upr_audit.cfront.anonymize import RenameMap, anonymize, anonymize_many
from upr_audit.cfront.lower import (
    ENTRY, EXIT, KINDS, Cfg, LoweredFunction, LoweringError, Statement,
    extract_variables, lower_to_statements, normalize_statement,
)
from upr_audit.cfront.parse import CSyntaxError, FileScope, FunctionAst, ParsedUnit, parse_unit
from upr_audit.cfront.source import SourceUnit

__all__ = [
    "CSyntaxError", "Cfg", "ENTRY", "EXIT", "FileScope", "FunctionAst", "KINDS",
    "LoweredFunction", "LoweringError", "ParsedUnit", "RenameMap", "SourceUnit", "Statement",
    "anonymize", "anonymize_many", "extract_variables", "lower_to_statements",
    "normalize_statement", "parse_unit",
]
