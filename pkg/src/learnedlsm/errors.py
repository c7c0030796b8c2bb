"""Exception hierarchy shared by every layer of the store."""


class StoreError(Exception):
    pass


class InvalidInputError(StoreError, ValueError):
    """Caller passed malformed arguments (unsorted input, wrong key width, ...)."""


class CorruptionError(StoreError):
    """On-disk bytes failed a magic, length or checksum check."""


class InvalidPointerError(StoreError):
    """A value pointer refers past the end of its value log."""


class UnsupportedError(StoreError):
    pass
