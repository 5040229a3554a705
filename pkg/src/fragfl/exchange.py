"""Two-party fragment exchange (Initiator / Acceptor) and server decryption.

Message flow for one session::

    Initiator k                         Acceptor j
    hello(g^a, Enc(s_rk))      ---->
                               <----    payload(g^b, Enc(s_rj),
                                                W_j^r_j^rho_j, (W_j.~m)^rho_j)
    return(W_k^r_k^rho_k,      ---->
           (W_k.~m)^rho_k)
    submit (W_k)'_mix, Enc(s_rj)        submit (W_j)'_mix, Enc(s_rk)

Each decrypted mix holds the partner's parameters where the shared mask is 1
and the sender's own parameters where it is 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np
from cryptography.hazmat.primitives.asymmetric import rsa

from . import crypto
from .errors import DecryptionError, FormatError, ProtocolError
from .params import BitMask, LayerLayout, ParamWords, deserialize, mask_select, serialize, xor_words

# ---------------------------------------------------------------------------
# Messages
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitiatorHello:
    session_id: str
    sender: str
    dh_pub: int
    enc_seed_r: bytes


@dataclass(frozen=True)
class AcceptorPayload:
    session_id: str
    sender: str
    dh_pub: int
    enc_seed_r: bytes
    c_full: ParamWords
    c_frag: ParamWords


@dataclass(frozen=True)
class ReturnPayload:
    session_id: str
    sender: str
    c_full: ParamWords
    c_frag: ParamWords


@dataclass(frozen=True)
class MixedSubmission:
    sender: str
    enc_mixed: ParamWords
    enc_partner_seed: bytes
    session_id: str = ""


Message = Union[InitiatorHello, AcceptorPayload, ReturnPayload, MixedSubmission]


@dataclass
class Transcript:
    """Everything one party saw or generated during a session.

    Kept by the simulator so privacy properties can be checked mechanically.
    """

    role: str
    session_id: str
    own_update: ParamWords
    secrets: dict[str, Any] = field(default_factory=dict)
    mask: BitMask | None = None
    sent: list[Message] = field(default_factory=list)
    received: list[Message] = field(default_factory=list)
    submission: MixedSubmission | None = None


def _encrypt_update(w: ParamWords, r: ParamWords, rho: ParamWords, mask: BitMask) -> tuple[ParamWords, ParamWords]:
    c_full = xor_words(xor_words(w, r), rho)
    c_frag = xor_words(mask_select(w, mask.complement()), rho)
    return c_full, c_frag


def _mix(own: ParamWords, mask: BitMask, c_full: ParamWords, c_frag: ParamWords) -> ParamWords:
    # own ^ (own . m) ^ c_full ^ c_frag, evaluated left to right as written
    out = xor_words(own, mask_select(own, mask))
    out = xor_words(out, c_full)
    return xor_words(out, c_frag)


class _Session:
    def __init__(
        self,
        role: str,
        session_id: str,
        pseudonym: str,
        update: ParamWords,
        server_public_key: rsa.RSAPublicKey,
        group: crypto.DhGroup,
        rng: crypto.RandomSource | None,
        exchange_update: ParamWords | None,
    ) -> None:
        self.session_id = session_id
        self.pseudonym = pseudonym
        self.update = update
        # What the partner receives; differs from ``update`` only for attackers.
        self.exchange_update = update if exchange_update is None else exchange_update
        if self.exchange_update.layout != update.layout:
            raise ProtocolError("exchange and own updates must share a layout")
        self.server_public_key = server_public_key
        self.group = group
        self.rng = rng or crypto.SystemRandom()
        self.state = "new"
        self.transcript = Transcript(role, session_id, update)

    def _fresh_secrets(self) -> None:
        self._a = crypto.dh_private(self.group, self.rng)
        self._s_r = crypto.new_seed(self.rng)
        self._s_rho = crypto.new_seed(self.rng)
        self.transcript.secrets.update(exponent=self._a, s_r=self._s_r, s_rho=self._s_rho)

    def _expect(self, state: str, msg: Message) -> None:
        if self.state != state:
            current, self.state = self.state, "aborted"
            raise ProtocolError(f"{type(msg).__name__} received in state {current!r}")
        if getattr(msg, "session_id", None) != self.session_id:
            self.state = "aborted"
            raise ProtocolError("message belongs to another session")

    def _pads(self) -> tuple[ParamWords, ParamWords]:
        layout = self.update.layout
        return crypto.gen_otp(self._s_r, layout), crypto.gen_otp(self._s_rho, layout)

    def _mask(self, peer_pub: int) -> BitMask:
        shared = crypto.dh_shared(self.group, peer_pub, self._a)
        mask = crypto.derive_mask(shared, len(self.update), self.group)
        self.transcript.mask = mask
        return mask


class InitiatorSession(_Session):
    def __init__(
        self,
        session_id: str,
        pseudonym: str,
        update: ParamWords,
        server_public_key: rsa.RSAPublicKey,
        group: crypto.DhGroup,
        rng: crypto.RandomSource | None = None,
        exchange_update: ParamWords | None = None,
    ) -> None:
        super().__init__("initiator", session_id, pseudonym, update, server_public_key, group, rng, exchange_update)

    def hello(self) -> InitiatorHello:
        if self.state != "new":
            raise ProtocolError("hello already sent for this session")
        self._fresh_secrets()
        msg = InitiatorHello(
            self.session_id,
            self.pseudonym,
            crypto.dh_public(self.group, self._a),
            crypto.pk_encrypt_seed(self._s_r, self.server_public_key),
        )
        self.transcript.sent.append(msg)
        self.state = "hello_sent"
        return msg

    def finalize(self, payload: AcceptorPayload) -> tuple[MixedSubmission, ReturnPayload]:
        """Build k's encrypted mix and the pair of ciphertexts returned to j."""
        self._expect("hello_sent", payload)
        self.transcript.received.append(payload)
        try:
            mask = self._mask(payload.dh_pub)
        except ProtocolError:
            self.state = "aborted"
            raise
        if payload.c_full.layout != self.update.layout or payload.c_frag.layout != self.update.layout:
            self.state = "aborted"
            raise ProtocolError("payload layout does not match the local update")
        r, rho = self._pads()
        enc_mixed = _mix(self.update, mask, payload.c_full, payload.c_frag)
        c_full, c_frag = _encrypt_update(self.exchange_update, r, rho, mask)
        ret = ReturnPayload(self.session_id, self.pseudonym, c_full, c_frag)
        sub = MixedSubmission(self.pseudonym, enc_mixed, payload.enc_seed_r, self.session_id)
        self.transcript.sent.append(ret)
        self.transcript.submission = sub
        self.state = "done"
        return sub, ret


class AcceptorSession(_Session):
    def __init__(
        self,
        session_id: str,
        pseudonym: str,
        update: ParamWords,
        server_public_key: rsa.RSAPublicKey,
        group: crypto.DhGroup,
        rng: crypto.RandomSource | None = None,
        exchange_update: ParamWords | None = None,
    ) -> None:
        super().__init__("acceptor", session_id, pseudonym, update, server_public_key, group, rng, exchange_update)

    def respond(self, hello: InitiatorHello) -> AcceptorPayload:
        self._expect("new", hello)
        self.transcript.received.append(hello)
        self._fresh_secrets()
        try:
            mask = self._mask(hello.dh_pub)
        except ProtocolError:
            self.state = "aborted"
            raise
        self._partner_seed_ct = hello.enc_seed_r
        r, rho = self._pads()
        c_full, c_frag = _encrypt_update(self.exchange_update, r, rho, mask)
        msg = AcceptorPayload(
            self.session_id,
            self.pseudonym,
            crypto.dh_public(self.group, self._a),
            crypto.pk_encrypt_seed(self._s_r, self.server_public_key),
            c_full,
            c_frag,
        )
        self.transcript.sent.append(msg)
        self.state = "payload_sent"
        return msg

    def finalize(self, ret: ReturnPayload) -> MixedSubmission:
        self._expect("payload_sent", ret)
        self.transcript.received.append(ret)
        if ret.c_full.layout != self.update.layout or ret.c_frag.layout != self.update.layout:
            self.state = "aborted"
            raise ProtocolError("return payload layout does not match the local update")
        mask = self.transcript.mask
        enc_mixed = _mix(self.update, mask, ret.c_full, ret.c_frag)
        sub = MixedSubmission(self.pseudonym, enc_mixed, self._partner_seed_ct, self.session_id)
        self.transcript.submission = sub
        self.state = "done"
        return sub


def self_submission(
    pseudonym: str,
    update: ParamWords,
    server_public_key: rsa.RSAPublicKey,
    rng: crypto.RandomSource | None = None,
    session_id: str = "",
) -> MixedSubmission:
    """Submission of an unmixed update under a fresh pad (no partner)."""
    seed = crypto.new_seed(rng)
    enc = xor_words(update, crypto.gen_otp(seed, update.layout))
    return MixedSubmission(pseudonym, enc, crypto.pk_encrypt_seed(seed, server_public_key), session_id)


def server_decrypt(sub: MixedSubmission, keys: crypto.ServerKeyPair) -> ParamWords:
    seed = crypto.pk_decrypt_seed(sub.enc_partner_seed, keys)
    return xor_words(sub.enc_mixed, crypto.gen_otp(seed, sub.enc_mixed.layout))


def run_exchange(
    initiator: InitiatorSession, acceptor: AcceptorSession
) -> tuple[MixedSubmission, MixedSubmission]:
    """Drive both sessions in-process; returns (k's submission, j's submission)."""
    payload = acceptor.respond(initiator.hello())
    sub_k, ret = initiator.finalize(payload)
    return sub_k, acceptor.finalize(ret)


# ---------------------------------------------------------------------------
# Leakage analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeakageReport:
    recoverable_positions: np.ndarray
    partner_positions_cleared: bool


def initiator_view_leakage(transcript: Transcript) -> LeakageReport:
    """Positions where the Initiator can recover bits of the Acceptor's pad.

    XOR-ing the two Acceptor ciphertexts cancels rho_j and leaves
    ``(W_j . m) ^ r_j``, i.e. bare ``r_j`` wherever m is 0.  Those positions
    must carry no W_j content in k's own mix: stripping k's own fragment and
    the recovered pad there has to leave zero words.
    """
    if transcript.role != "initiator" or transcript.mask is None or transcript.submission is None:
        raise ProtocolError("leakage analysis needs a completed initiator transcript")
    payload = next(m for m in transcript.received if isinstance(m, AcceptorPayload))
    mask = transcript.mask
    combined = xor_words(payload.c_full, payload.c_frag)
    positions = np.flatnonzero(~mask.bits)
    recovered_pad = combined.words[positions]
    own_fragment = mask_select(transcript.own_update, mask.complement()).words[positions]
    residue = transcript.submission.enc_mixed.words[positions] ^ own_fragment ^ recovered_pad
    return LeakageReport(positions, bool(np.all(residue == 0)))


# ---------------------------------------------------------------------------
# Wire format
# ---------------------------------------------------------------------------

_KIND = {InitiatorHello: 1, AcceptorPayload: 2, ReturnPayload: 3, MixedSubmission: 4}
_KIND_INV = {v: k for k, v in _KIND.items()}


def _pack_str(s: str) -> bytes:
    raw = s.encode()
    return struct.pack(">H", len(raw)) + raw


def _pack_ct(ct: bytes) -> bytes:
    return struct.pack(">H", len(ct)) + ct


def _pack_words(w: ParamWords) -> bytes:
    return struct.pack(">I", len(w)) + serialize(w)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("truncated message")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode()

    def ct(self) -> bytes:
        return self.take(self.u16())

    def words(self, layout: LayerLayout) -> ParamWords:
        n = self.u32()
        return deserialize(self.take(4 * n), layout)


def encode_message(msg: Message, group: crypto.DhGroup) -> bytes:
    """Tagged binary encoding: big-endian fixed-width integers, LE words."""
    out = bytearray([_KIND[type(msg)]])
    out += _pack_str(msg.session_id) + _pack_str(msg.sender)
    if isinstance(msg, InitiatorHello):
        out += crypto.encode_int(msg.dh_pub, group.byte_length) + _pack_ct(msg.enc_seed_r)
    elif isinstance(msg, AcceptorPayload):
        out += crypto.encode_int(msg.dh_pub, group.byte_length) + _pack_ct(msg.enc_seed_r)
        out += _pack_words(msg.c_full) + _pack_words(msg.c_frag)
    elif isinstance(msg, ReturnPayload):
        out += _pack_words(msg.c_full) + _pack_words(msg.c_frag)
    else:
        out += _pack_words(msg.enc_mixed) + _pack_ct(msg.enc_partner_seed)
    return bytes(out)


def decode_message(data: bytes, layout: LayerLayout, group: crypto.DhGroup) -> Message:
    rd = _Reader(data)
    try:
        cls = _KIND_INV[rd.take(1)[0]]
    except KeyError:
        raise FormatError("unknown message kind") from None
    session_id, sender = rd.string(), rd.string()
    if cls is InitiatorHello:
        msg: Message = InitiatorHello(session_id, sender, int.from_bytes(rd.take(group.byte_length), "big"), rd.ct())
    elif cls is AcceptorPayload:
        dh_pub = int.from_bytes(rd.take(group.byte_length), "big")
        ct = rd.ct()
        msg = AcceptorPayload(session_id, sender, dh_pub, ct, rd.words(layout), rd.words(layout))
    elif cls is ReturnPayload:
        msg = ReturnPayload(session_id, sender, rd.words(layout), rd.words(layout))
    else:
        words = rd.words(layout)
        msg = MixedSubmission(sender, words, rd.ct(), session_id)
    if rd.pos != len(data):
        raise FormatError("trailing bytes after message")
    return msg


def message_bits(msg: Message, group: crypto.DhGroup) -> int:
    """Payload bits of a message: framing, tags and pseudonyms are not counted."""
    if isinstance(msg, InitiatorHello):
        return group.bit_length + 8 * len(msg.enc_seed_r)
    if isinstance(msg, AcceptorPayload):
        return group.bit_length + 8 * len(msg.enc_seed_r) + 32 * (len(msg.c_full) + len(msg.c_frag))
    if isinstance(msg, ReturnPayload):
        return 32 * (len(msg.c_full) + len(msg.c_frag))
    return 32 * len(msg.enc_mixed) + 8 * len(msg.enc_partner_seed)
