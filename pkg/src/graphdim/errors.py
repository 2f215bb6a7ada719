"""Exception hierarchy shared by the library and the CLI."""


class GraphDimError(Exception):
    """Base class for all errors raised by graphdim."""


class InvalidInputError(GraphDimError, ValueError):
    """Input array or parameter violates a documented precondition."""


class DegenerateNeighborhoodError(GraphDimError):
    """A neighborhood has zero spread, so no chart can be built."""


class EstimationFailedError(GraphDimError):
    """No neighborhood produced a usable local estimate."""


class InvalidSpecError(InvalidInputError):
    """Unsupported manifold kind / dimension / parameter combination."""


class DataParseError(GraphDimError):
    """A point-cloud file could not be parsed.

    ``row`` and ``column`` are 1-based and refer to the physical file line
    and the comma-separated field; either may be ``None``.
    """

    def __init__(self, message, path=None, row=None, column=None):
        self.path = path
        self.row = row
        self.column = column
        where = []
        if path is not None:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
