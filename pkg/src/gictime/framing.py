"""Length-prefixed broadcast records carried through the simulated channel.

Layout (big-endian)::

    u32  body length (bytes after this field)
    u8   version            (1)
    u8   kind               (1 message, 2 commitment, 3 key)
    u8   label length L
    L    instance label, UTF-8
    u32  key index
    u32  sequence number
    ...  payload (rest of body)

Not compatible with any GNSS interface control document.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

VERSION = 1
_HEAD = struct.Struct(">BBB")
_INDICES = struct.Struct(">II")


class FrameError(ValueError):
    pass


class FrameKind(enum.IntEnum):
    MESSAGE = 1
    COMMITMENT = 2
    KEY = 3


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    label: str
    key_index: int
    seq: int
    payload: bytes

    def to_bytes(self) -> bytes:
        label = self.label.encode()
        if len(label) > 255:
            raise FrameError("label longer than 255 bytes")
        body = (
            _HEAD.pack(VERSION, int(self.kind), len(label))
            + label
            + _INDICES.pack(self.key_index, self.seq)
            + self.payload
        )
        return struct.pack(">I", len(body)) + body

    @classmethod
    def from_bytes(cls, data: bytes) -> Frame:
        frame, rest = read_frame(data)
        if rest:
            raise FrameError(f"{len(rest)} trailing bytes")
        return frame


def read_frame(data: bytes) -> tuple[Frame, bytes]:
    """Decode one frame from the front of ``data``; return it and the remainder."""
    if len(data) < 4:
        raise FrameError("truncated length prefix")
    (length,) = struct.unpack_from(">I", data)
    body = data[4 : 4 + length]
    if len(body) != length:
        raise FrameError("truncated body")
    if length < _HEAD.size:
        raise FrameError("body too short")
    version, kind, label_len = _HEAD.unpack_from(body)
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    try:
        kind = FrameKind(kind)
    except ValueError:
        raise FrameError(f"unknown frame kind {kind}") from None
    offset = _HEAD.size
    if length < offset + label_len + _INDICES.size:
        raise FrameError("body too short")
    label = body[offset : offset + label_len].decode()
    offset += label_len
    key_index, seq = _INDICES.unpack_from(body, offset)
    payload = body[offset + _INDICES.size :]
    return Frame(kind, label, key_index, seq, payload), data[4 + length :]


def read_stream(data: bytes) -> list[Frame]:
    frames = []
    while data:
        frame, data = read_frame(data)
        frames.append(frame)
    return frames
