"""Binary frame codec.

A frame is a 4-byte big-endian body length followed by the body::

    session  u64 | step u32 | summand u16 | round u16 | sender u8 | receiver u8 | count u16
    count x (value u64 | scale u8)

Party bytes: 0 is the distributor, 255 the collector, 1..254 servers.
Round 0 carries share distribution, rounds 1..f-2 the circular
re-sharing of a three-party product, round f-1 the result. Rounds with
the high bit set carry zero-sharing randomness of round ``r & 0x7fff``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

HEADER = struct.Struct(">QIHHBBH")
ENTRY = struct.Struct(">QB")
LENGTH = struct.Struct(">I")
MAX_BODY = 1 << 24

DISTRIBUTOR = 0
COLLECTOR = 255
ZERO_FLAG = 0x8000


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    session: int
    step: int
    summand: int
    round: int
    sender: int
    receiver: int
    payload: tuple[tuple[int, int], ...] = ()

    @property
    def key(self) -> tuple[int, ...]:
        return (self.session, self.step, self.summand, self.round, self.sender, self.receiver)

    @property
    def kind(self) -> str:
        if self.sender == DISTRIBUTOR:
            return "share" if self.receiver != COLLECTOR else "constant"
        if self.receiver == COLLECTOR:
            return "result"
        if self.round & ZERO_FLAG:
            return "zero"
        return "reshare"


def role_of(party: int) -> str:
    if party == DISTRIBUTOR:
        return "distributor"
    if party == COLLECTOR:
        return "collector"
    return "server"


def encode_body(msg: Message) -> bytes:
    parts = [HEADER.pack(msg.session, msg.step, msg.summand, msg.round, msg.sender, msg.receiver, len(msg.payload))]
    parts.extend(ENTRY.pack(v, s) for v, s in msg.payload)
    return b"".join(parts)


def decode_body(body: bytes) -> Message:
    if len(body) < HEADER.size:
        raise FrameError(f"body of {len(body)} bytes is shorter than the header")
    session, step, summand, rnd, sender, receiver, count = HEADER.unpack_from(body)
    if len(body) != HEADER.size + count * ENTRY.size:
        raise FrameError(f"payload count {count} does not match body length {len(body)}")
    payload = tuple(ENTRY.unpack_from(body, HEADER.size + i * ENTRY.size) for i in range(count))
    return Message(session, step, summand, rnd, sender, receiver, payload)


def frame(body: bytes) -> bytes:
    if len(body) > MAX_BODY:
        raise FrameError(f"body of {len(body)} bytes exceeds limit")
    return LENGTH.pack(len(body)) + body


def frame_size(msg: Message) -> int:
    return LENGTH.size + HEADER.size + ENTRY.size * len(msg.payload)


def read_frame(read_exactly) -> bytes:
    """Read one frame using ``read_exactly(n) -> bytes``; returns the body."""
    (n,) = LENGTH.unpack(read_exactly(LENGTH.size))
    if n > MAX_BODY:
        raise FrameError(f"announced body of {n} bytes exceeds limit")
    return read_exactly(n)
