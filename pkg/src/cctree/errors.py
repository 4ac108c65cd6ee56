class CCTError(Exception):
    pass


class EmptyInput(CCTError, ValueError):
    pass


class DegenerateTrajectory(CCTError, ValueError):
    pass


class DimensionMismatch(CCTError, ValueError):
    pass


class EmptySet(CCTError, ValueError):
    pass


class EmptyIndex(CCTError, ValueError):
    pass


class DuplicateId(CCTError, KeyError):
    pass


class KTooLarge(CCTError, ValueError):
    pass


class OracleCapExceeded(CCTError, RuntimeError):
    pass


class ConfigInvalid(CCTError, ValueError):
    pass


class TieExhaustion(CCTError, RuntimeError):
    pass


class IndexFormatError(CCTError, ValueError):
    pass


class ConsistencyError(CCTError, RuntimeError):
    """Raised when an internal invariant of a query or build is violated."""
