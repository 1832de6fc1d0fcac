"""Compact binary record log format.

All integers are little-endian.

    header:  magic b"LWRR", version u32 (=1), record count u32
    record:  thread (path), event_id u64, event_type u8, flavor u8,
             data_type (u16 length + UTF-8), status tag u8 + fields,
             channels (u16 count, then per DCI: creator path, seq u64)
    path:    u16 length then u32 per element; NONE is length 0xFFFF
    status:  Success -> sender path; SelectedIndex -> index u32, sender path

Records are written sorted by (thread path, event id), so a given log always
serializes to the same bytes.
"""

import io
import os
import struct

from typing import BinaryIO

from .errors import (
    BadMagic, InvalidRecord, LogIOError,
    TruncatedRecord, UnsupportedVersion,
)
from .events import (
    EMPTY, RECV_ERROR, SEND_OK, TIMEOUT,
    ChannelFlavor, EventStatus, EventType, LogEntry,
    RecordLog, SelectedIndex, Success,
)
from .ids import NONE, DetChannelId, DetThreadId
from .logger import logger


MAGIC = b"LWRR"
VERSION = 1
NONE_PATH_LEN = 0xFFFF
# Largest data type name (UTF-8 bytes) or channel count of one record
MAX_FIELD_LEN = 0xFFFF

_HEADER = struct.Struct("<4sII")
_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")

_UNIT_STATUSES: dict[int, EventStatus] = {
    SEND_OK.tag: SEND_OK,
    EMPTY.tag: EMPTY,
    TIMEOUT.tag: TIMEOUT,
    RECV_ERROR.tag: RECV_ERROR,
}



# ==================== ENCODING ====================

def _encode_path(out: bytearray, dti: DetThreadId) -> None:
    if dti.path is None:
        out += _U16.pack(NONE_PATH_LEN)
        return
    if len(dti.path) >= NONE_PATH_LEN:
        raise InvalidRecord(f"Thread path of depth {len(dti.path)} cannot be encoded")
    out += _U16.pack(len(dti.path))
    for index in dti.path:
        out += _U32.pack(index)


def _encode_status(out: bytearray, status: EventStatus) -> None:
    out += _U8.pack(status.tag)
    if isinstance(status, Success):
        _encode_path(out, status.sender)
    elif isinstance(status, SelectedIndex):
        out += _U32.pack(status.index)
        _encode_path(out, status.sender)


def _encode_entry(out: bytearray, entry: LogEntry) -> None:
    _encode_path(out, entry.thread)
    out += _U64.pack(entry.event_id)
    out += _U8.pack(entry.event_type)
    out += _U8.pack(entry.flavor)

    data_type = entry.data_type.encode("utf-8")
    if len(data_type) > MAX_FIELD_LEN:
        raise InvalidRecord(f"Data type name of {len(data_type)} bytes exceeds {MAX_FIELD_LEN}")
    out += _U16.pack(len(data_type))
    out += data_type

    _encode_status(out, entry.status)

    if len(entry.channels) > MAX_FIELD_LEN:
        raise InvalidRecord(f"Select over {len(entry.channels)} channels exceeds {MAX_FIELD_LEN}")
    out += _U16.pack(len(entry.channels))
    for channel in entry.channels:
        _encode_path(out, channel.creator)
        out += _U64.pack(channel.seq)


def encode_log(log: RecordLog) -> bytes:
    """Return the binary encoding of ``log``."""
    out = bytearray(_HEADER.pack(MAGIC, VERSION, len(log)))
    for entry in log.sorted_entries():
        _encode_entry(out, entry)
    return bytes(out)


def serialize_log(log: RecordLog, destination: str | BinaryIO) -> int:
    """Write ``log`` to a path or binary stream.

    Args:
        log: The log to write.
        destination: File path or writable binary stream.

    Returns:
        Number of bytes written.

    Raises:
        LogIOError: if the file cannot be written.
    """
    data = encode_log(log)

    if not isinstance(destination, (str, os.PathLike)):
        destination.write(data)
        return len(data)

    try:
        with open(destination, "wb") as f:
            f.write(data)
    except OSError as e:
        raise LogIOError(str(destination), e) from e

    logger.debug(f"Wrote {len(log)} log entries ({len(data)} bytes) to {destination}")
    return len(data)



# ==================== DECODING ====================

class _Reader:
    """Cursor over a bytes buffer raising ``TruncatedRecord`` on short reads."""

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0


    def take(self, fmt: struct.Struct) -> int:
        if self.offset + fmt.size > len(self.data):
            raise TruncatedRecord(f"Log truncated at byte {self.offset}")
        (value,) = fmt.unpack_from(self.data, self.offset)
        self.offset += fmt.size
        return value


    def take_bytes(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise TruncatedRecord(f"Log truncated at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk


    @property
    def exhausted(self) -> bool:
        return self.offset >= len(self.data)


def _decode_path(reader: _Reader) -> DetThreadId:
    length = reader.take(_U16)
    if length == NONE_PATH_LEN:
        return NONE
    path = tuple(reader.take(_U32) for _ in range(length))
    try:
        return DetThreadId(path)
    except ValueError as e:
        raise InvalidRecord(str(e)) from e


def _decode_status(reader: _Reader) -> EventStatus:
    tag = reader.take(_U8)
    if tag in _UNIT_STATUSES:
        return _UNIT_STATUSES[tag]
    if tag == Success.tag:
        return Success(_decode_path(reader))
    if tag == SelectedIndex.tag:
        index = reader.take(_U32)
        return SelectedIndex(index, _decode_path(reader))
    raise InvalidRecord(f"Unknown status tag {tag}")


def _decode_enum(enum_cls: type, value: int, what: str):
    try:
        return enum_cls(value)
    except ValueError as e:
        raise InvalidRecord(f"Unknown {what} {value}") from e


def _decode_entry(reader: _Reader) -> LogEntry:
    thread = _decode_path(reader)
    event_id = reader.take(_U64)
    event_type = _decode_enum(EventType, reader.take(_U8), "event type")
    flavor = _decode_enum(ChannelFlavor, reader.take(_U8), "channel flavor")

    raw = reader.take_bytes(reader.take(_U16))
    try:
        data_type = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise InvalidRecord(f"data_type is not UTF-8: {raw!r}") from e

    status = _decode_status(reader)

    count = reader.take(_U16)
    channels = []
    for _ in range(count):
        creator = _decode_path(reader)
        channels.append(DetChannelId(creator, reader.take(_U64)))

    return LogEntry(thread, event_id, event_type, flavor, data_type, status, tuple(channels))


def decode_log(data: bytes) -> RecordLog:
    """Parse a binary log.

    Raises:
        BadMagic: if the file does not start with ``LWRR``.
        UnsupportedVersion: if the format version is not 1.
        TruncatedRecord: if the data ends inside the header or a record.
        DuplicateEntry: if two records share (thread, event id).
        InvalidRecord: on unknown tags or trailing bytes.
    """
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"Not a record log (magic {data[:4]!r})")

    reader = _Reader(data)
    reader.take_bytes(4)
    version = reader.take(_U32)
    if version != VERSION:
        raise UnsupportedVersion(f"Unsupported log version {version}")
    count = reader.take(_U32)

    log = RecordLog()
    for _ in range(count):
        log.add(_decode_entry(reader))

    if not reader.exhausted:
        raise InvalidRecord(f"{len(data) - reader.offset} trailing bytes after {count} records")

    return log


def deserialize_log(source: str | bytes | BinaryIO) -> RecordLog:
    """Read a log from a path, a bytes object or a binary stream.

    Raises:
        FileNotFoundError: if the path does not exist.
        LogIOError: if the file cannot be read.
        LogFormatError: subclasses as documented in :func:`decode_log`.
    """
    if isinstance(source, (bytes, bytearray)):
        return decode_log(bytes(source))

    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return decode_log(source.read())

    if not os.path.exists(source):
        raise FileNotFoundError(f"Record log not found: {source}")
    try:
        with open(source, "rb") as f:
            data = f.read()
    except OSError as e:
        raise LogIOError(str(source), e) from e

    return decode_log(data)
