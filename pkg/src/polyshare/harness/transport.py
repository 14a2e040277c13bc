"""Reliable, ordered, private channels between parties.

Two transports share one interface: ``send(msg)`` enqueues a message on
the directed channel ``(sender, receiver)`` and ``receive(receiver)``
drains every channel ending at ``receiver`` in ascending sender order,
FIFO within each channel.

The framed-stream transport runs each directed channel over a local
stream socket pair and seals every frame body with AES-GCM under a
per-channel key.
"""

from __future__ import annotations

import hashlib
import os
import socket
from collections import defaultdict, deque

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from polyshare.harness.wire import Message, decode_body, encode_body, frame, read_frame

NONCE = 12


class ChannelError(RuntimeError):
    """Delivery failed: closed channel or a frame that does not authenticate."""


class InMemoryTransport:
    name = "in-memory"

    def __init__(self):
        self._queues: dict[tuple[int, int], deque[Message]] = defaultdict(deque)
        self.closed = False

    def send(self, msg: Message) -> None:
        if self.closed:
            raise ChannelError("transport closed")
        self._queues[(msg.sender, msg.receiver)].append(msg)

    def receive(self, receiver: int) -> list[Message]:
        if self.closed:
            raise ChannelError("transport closed")
        out = []
        for key in sorted(k for k in self._queues if k[1] == receiver):
            q = self._queues[key]
            while q:
                out.append(q.popleft())
        return out

    def close(self) -> None:
        self.closed = True


class _Channel:
    def __init__(self, key: bytes):
        self.tx, self.rx = socket.socketpair()
        self.rx.settimeout(1.0)
        self.aead = AESGCM(key)
        self.counter = 0
        self.inbox: deque[Message] = deque()

    def read_exactly(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.rx.recv(n - len(buf))
            except socket.timeout as exc:
                raise ChannelError("truncated frame") from exc
            if not chunk:
                raise ChannelError("channel closed mid-frame")
            buf.extend(chunk)
        return bytes(buf)

    def close(self) -> None:
        self.tx.close()
        self.rx.close()


class FramedStreamTransport:
    """Length-prefixed AEAD frames over stream sockets.

    ``tamper`` may be set to a callable ``bytes -> bytes`` applied to the
    raw frame before it is written; used to check that corrupted frames are
    rejected.
    """

    name = "framed-stream"

    def __init__(self, master_key: bytes | None = None):
        self.master_key = master_key if master_key is not None else os.urandom(32)
        self._channels: dict[tuple[int, int], _Channel] = {}
        self.tamper = None
        self.closed = False

    def _channel(self, sender: int, receiver: int) -> _Channel:
        ch = self._channels.get((sender, receiver))
        if ch is None:
            key = hashlib.sha256(self.master_key + bytes([sender, receiver])).digest()
            ch = self._channels[(sender, receiver)] = _Channel(key)
        return ch

    def send(self, msg: Message) -> None:
        if self.closed:
            raise ChannelError("transport closed")
        ch = self._channel(msg.sender, msg.receiver)
        # counter nonces never repeat under one channel key
        nonce = ch.counter.to_bytes(NONCE, "big")
        ch.counter += 1
        sealed = nonce + ch.aead.encrypt(nonce, encode_body(msg), bytes([msg.sender, msg.receiver]))
        raw = frame(sealed)
        if self.tamper is not None:
            raw = self.tamper(raw)
        ch.tx.sendall(raw)
        # single-threaded scheduling: pull the frame off the socket right away
        body = read_frame(ch.read_exactly)
        try:
            plain = ch.aead.decrypt(body[:NONCE], body[NONCE:], bytes([msg.sender, msg.receiver]))
        except InvalidTag as exc:
            raise ChannelError(f"frame from {msg.sender} to {msg.receiver} failed authentication") from exc
        ch.inbox.append(decode_body(plain))

    def receive(self, receiver: int) -> list[Message]:
        if self.closed:
            raise ChannelError("transport closed")
        out = []
        for key in sorted(k for k in self._channels if k[1] == receiver):
            inbox = self._channels[key].inbox
            while inbox:
                out.append(inbox.popleft())
        return out

    def close(self) -> None:
        for ch in self._channels.values():
            ch.close()
        self.closed = True


def make_transport(name: str, master_key: bytes | None = None):
    if name == InMemoryTransport.name:
        return InMemoryTransport()
    if name == FramedStreamTransport.name:
        return FramedStreamTransport(master_key)
    raise ValueError(f"unknown transport {name!r}")
