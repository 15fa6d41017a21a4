"""Exception hierarchy.

Data/format problems derive from :class:`DataError`; the CLI maps these to
exit code 2, everything else raised from here to exit code 3.
"""


class CocnnError(Exception):
    """Base class for all package errors."""


class DataError(CocnnError, ValueError):
    """Input data or file contents are invalid."""


class MalformedRecord(DataError):
    def __init__(self, line_number, reason):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class ShapeMismatch(DataError):
    pass


class ShapeTooSmall(DataError):
    pass


class EmptyBatch(DataError):
    pass


class EmptyDataset(DataError):
    pass


class EmptyPartition(EmptyDataset):
    pass


class EmptyMatrix(DataError):
    pass


class EmptyInput(DataError):
    pass


class ZeroNodes(CocnnError, ValueError):
    pass


class InvalidSpec(CocnnError, ValueError):
    pass


class InvalidClass(CocnnError, ValueError):
    pass


class RpcError(CocnnError):
    pass


class NotFound(RpcError):
    pass


class TransportError(RpcError):
    pass


class MalformedResponse(RpcError, DataError):
    pass
