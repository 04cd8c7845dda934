"""Exception types shared across the toolkit."""


class DataError(Exception):
    """Raised when input files or data structures violate a documented contract.

    Covers malformed file formats, row-count mismatches, missing or duplicate
    identifiers, non-finite values, and analysis preconditions that depend on
    the data (e.g. too few impostor scores to resolve an FMR target). The CLI
    maps this class to exit code 2.
    """
