"""Translators between external query languages and Hojabr."""

from .einsum import EinsumExpr, einsum_oracle, einsum_to_hojabr, hojabr_to_einsum, parse_einsum, print_einsum
from .sql import SqlQuery, hojabr_to_sql, parse_sql, print_sql, sql_oracle, sql_to_hojabr

__all__ = [
    "EinsumExpr",
    "SqlQuery",
    "einsum_oracle",
    "einsum_to_hojabr",
    "hojabr_to_einsum",
    "hojabr_to_sql",
    "parse_einsum",
    "parse_sql",
    "print_einsum",
    "print_sql",
    "sql_oracle",
    "sql_to_hojabr",
]
