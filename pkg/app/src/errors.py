"""Exceptions raised by channels, the log codec, replay and the harness."""


class ChannelError(Exception):
    """Base class for channel operation failures."""


class SendError(ChannelError):
    """The receiving end of the channel has been closed."""


class Disconnected(ChannelError):
    """Every sender has been closed and the channel is empty."""


class ChannelEmpty(ChannelError):
    """``try_receive`` found no message."""


class RecvTimeout(ChannelError):
    """``timeout_receive`` elapsed without a message."""


class SelectError(ChannelError):
    """Every receiver in a select set is disconnected."""



class LogFormatError(Exception):
    """Base class for record log parse errors."""


class BadMagic(LogFormatError):
    pass


class UnsupportedVersion(LogFormatError):
    pass


class TruncatedRecord(LogFormatError):
    pass


class DuplicateEntry(LogFormatError):
    pass


class InvalidRecord(LogFormatError):
    """Unknown enumeration tag or trailing bytes after the last record."""


class LogIOError(Exception):
    """Reading or writing a record log failed.

    Attributes:
        path: Filesystem path of the log.
        cause: The underlying ``OSError``.
    """

    def __init__(self, path: str, cause: OSError) -> None:
        super().__init__(f"Record log I/O failed for {path}: {cause}")
        self.path = path
        self.cause = cause



class DesyncError(Exception):
    """Replay diverged from the log under the ``error`` desync policy."""



class HarnessError(Exception):
    """The harness could not launch the target command."""


class UsageError(ValueError):
    """Invalid combination of harness options."""
