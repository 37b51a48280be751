"""Exception hierarchy shared by all tracelink modules."""


class TraceLinkError(Exception):
    """Base class for every error raised by tracelink."""


# embedding store
class MalformedHeader(TraceLinkError, ValueError):
    pass


class DimensionMismatch(TraceLinkError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CountMismatch(TraceLinkError, ValueError):
    pass


# corpus
class EmptyDataset(TraceLinkError):
    pass


class SelfLink(TraceLinkError, ValueError):
    def __init__(self, ticket_id: str, row: int | None = None):
        where = f" (row {row})" if row is not None else ""
        super().__init__(f"self-link on ticket {ticket_id!r}{where}")
        self.ticket_id = ticket_id
        self.row = row


# vectors and metrics
class ModelMismatch(TraceLinkError, ValueError):
    pass


class LengthMismatch(TraceLinkError, ValueError):
    pass


class ShapeMismatch(TraceLinkError, ValueError):
    pass


class IdOrderMismatch(TraceLinkError, ValueError):
    pass


class IndexOutOfRange(TraceLinkError, IndexError):
    pass


class MissingId(TraceLinkError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


# neural
class StaleCache(TraceLinkError, ValueError):
    pass


class NoNegativesAvailable(TraceLinkError):
    pass


class MalformedModelFile(TraceLinkError, ValueError):
    pass


class MalformedFile(TraceLinkError, ValueError):
    """A binary or text artifact file that does not follow its format."""


# evaluation / cli
class UnknownTag(TraceLinkError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class UnknownMetricTag(UnknownTag):
    pass


class EmptyQuery(TraceLinkError, ValueError):
    pass
