"""In-process message bus with exact payload bit accounting.

Every message is encoded to bytes on send and decoded on receive, so the
recipient never shares objects with the sender.  Counted bits cover payload
content only (words, group elements, ciphertexts, scalars); tags, lengths
and pseudonyms are framing and are not charged.
"""

from __future__ import annotations

import struct
from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Union

from .. import crypto
from ..errors import FormatError
from ..exchange import Message, decode_message, encode_message, message_bits
from ..params import LayerLayout, ParamWords, deserialize, serialize

SERVER = "server"


@dataclass(frozen=True)
class ModelBroadcast:
    round_index: int
    model: ParamWords


@dataclass(frozen=True)
class PlainUpdate:
    """Unencrypted local update, used only by the plaintext baselines."""

    sender: str
    update: ParamWords


@dataclass(frozen=True)
class Feedback:
    round_index: int
    delta: float


BusMessage = Union[Message, ModelBroadcast, PlainUpdate, Feedback]

_TAG_MODEL, _TAG_PLAIN, _TAG_FEEDBACK, _TAG_EXCHANGE = 11, 12, 13, 14


@dataclass
class Counter:
    sent_bits: int = 0
    received_bits: int = 0
    sent_messages: int = 0
    received_messages: int = 0

    def to_dict(self) -> dict:
        return {
            "sent_bits": self.sent_bits,
            "received_bits": self.received_bits,
            "sent_messages": self.sent_messages,
            "received_messages": self.received_messages,
        }


class MessageBus:
    def __init__(self, layout: LayerLayout, group: crypto.DhGroup) -> None:
        self.layout = layout
        self.group = group
        self._inbox: dict[str, deque] = defaultdict(deque)
        self.counters: dict[str, Counter] = defaultdict(Counter)

    # -- encoding -----------------------------------------------------------

    def encode(self, msg: BusMessage) -> tuple[bytes, int]:
        if isinstance(msg, ModelBroadcast):
            data = bytes([_TAG_MODEL]) + struct.pack(">I", msg.round_index) + serialize(msg.model)
            return data, 32 * len(msg.model)
        if isinstance(msg, PlainUpdate):
            raw = msg.sender.encode()
            data = bytes([_TAG_PLAIN]) + struct.pack(">H", len(raw)) + raw + serialize(msg.update)
            return data, 32 * len(msg.update)
        if isinstance(msg, Feedback):
            return bytes([_TAG_FEEDBACK]) + struct.pack(">If", msg.round_index, msg.delta), 32
        return bytes([_TAG_EXCHANGE]) + encode_message(msg, self.group), message_bits(msg, self.group)

    def decode(self, data: bytes) -> BusMessage:
        tag, body = data[0], data[1:]
        if tag == _TAG_MODEL:
            (rnd,) = struct.unpack(">I", body[:4])
            return ModelBroadcast(rnd, deserialize(body[4:], self.layout))
        if tag == _TAG_PLAIN:
            (n,) = struct.unpack(">H", body[:2])
            return PlainUpdate(body[2 : 2 + n].decode(), deserialize(body[2 + n :], self.layout))
        if tag == _TAG_FEEDBACK:
            rnd, delta = struct.unpack(">If", body)
            return Feedback(rnd, delta)
        if tag == _TAG_EXCHANGE:
            return decode_message(body, self.layout, self.group)
        raise FormatError(f"unknown bus tag {tag}")

    # -- delivery -----------------------------------------------------------

    def send(self, sender: str, recipient: str, msg: BusMessage) -> int:
        data, bits = self.encode(msg)
        self.counters[sender].sent_bits += bits
        self.counters[sender].sent_messages += 1
        self._inbox[recipient].append((sender, data, bits))
        return bits

    def receive(self, recipient: str) -> tuple[str, BusMessage]:
        sender, data, bits = self._inbox[recipient].popleft()
        self.counters[recipient].received_bits += bits
        self.counters[recipient].received_messages += 1
        return sender, self.decode(data)

    def deliver(self, sender: str, recipient: str, msg: BusMessage) -> BusMessage:
        """Send then immediately receive; returns the recipient's copy."""
        self.send(sender, recipient, msg)
        return self.receive(recipient)[1]

    def pending(self, recipient: str) -> int:
        return len(self._inbox[recipient])

    def snapshot(self) -> dict[str, dict]:
        return {node: c.to_dict() for node, c in sorted(self.counters.items())}

    def reset(self) -> dict[str, dict]:
        snap = self.snapshot()
        self.counters.clear()
        return snap
