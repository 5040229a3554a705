import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fragfl import crypto
from fragfl.errors import DecryptionError, ProtocolError
from fragfl.exchange import (
    AcceptorSession,
    InitiatorSession,
    MixedSubmission,
    decode_message,
    encode_message,
    initiator_view_leakage,
    run_exchange,
    self_submission,
    server_decrypt,
)
from fragfl.params import BitMask, ParamWords

W_K = ParamWords.from_floats([1.0, 2.0, 3.0, 4.0])
W_J = ParamWords.from_floats([-10.0, -20.0, -30.0, -40.0])


def sessions(keys, group, wk, wj, tag, sid="s"):
    init = InitiatorSession(sid, "k", wk, keys.public_key, group, crypto.DeterministicRandom(f"k/{tag}"))
    acc = AcceptorSession(sid, "j", wj, keys.public_key, group, crypto.DeterministicRandom(f"j/{tag}"))
    return init, acc


def exchange_with_mask(keys, group, target):
    """Search DRBG tags until the DH-derived mask equals ``target``."""
    for tag in range(2000):
        init, acc = sessions(keys, group, W_K, W_J, tag)
        sub_k, sub_j = run_exchange(init, acc)
        if init.transcript.mask == BitMask(target):
            return init, acc, sub_k, sub_j
    raise AssertionError("no tag produced the requested mask")


@pytest.mark.parametrize(
    "target, mix_k, mix_j",
    [
        ([1, 0, 1, 0], [-10.0, 2.0, -30.0, 4.0], [1.0, -20.0, 3.0, -40.0]),
        ([0, 0, 0, 0], [1.0, 2.0, 3.0, 4.0], [-10.0, -20.0, -30.0, -40.0]),
        ([1, 1, 1, 1], [-10.0, -20.0, -30.0, -40.0], [1.0, 2.0, 3.0, 4.0]),
    ],
)
def test_toy_mix_oracle(keys, modp, target, mix_k, mix_j):
    init, acc, sub_k, sub_j = exchange_with_mask(keys, modp, target)
    assert acc.transcript.mask == init.transcript.mask
    assert server_decrypt(sub_k, keys).floats().tolist() == mix_k
    assert server_decrypt(sub_j, keys).floats().tolist() == mix_j


def test_acceptor_pad_visible_at_m0(keys, modp):
    init, acc, _, _ = exchange_with_mask(keys, modp, [1, 0, 1, 0])
    payload = init.transcript.received[0]
    r_j = crypto.gen_otp(acc.transcript.secrets["s_r"], W_J.layout)
    combined = payload.c_full.words ^ payload.c_frag.words
    assert np.array_equal(combined[[1, 3]], r_j.words[[1, 3]])
    assert not np.array_equal(combined[[0, 2]], r_j.words[[0, 2]])


def test_leakage_toy(keys, modp):
    init, *_ = exchange_with_mask(keys, modp, [1, 0, 1, 0])
    rep = initiator_view_leakage(init.transcript)
    assert rep.recoverable_positions.tolist() == [1, 3]
    assert rep.partner_positions_cleared
    init, *_ = exchange_with_mask(keys, modp, [1, 1, 1, 1])
    assert initiator_view_leakage(init.transcript).recoverable_positions.size == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**9), st.integers(1, 40))
def test_partition_property(keys, modp, tag, n):
    rng = np.random.default_rng(tag)
    wk = ParamWords.from_floats(rng.normal(size=n))
    wj = ParamWords.from_floats(rng.normal(size=n))
    init, acc = sessions(keys, modp, wk, wj, tag)
    sub_k, sub_j = run_exchange(init, acc)
    m = init.transcript.mask.bits
    mk, mj = server_decrypt(sub_k, keys).words, server_decrypt(sub_j, keys).words
    assert np.array_equal(mk, np.where(m, wj.words, wk.words))
    assert np.array_equal(mj, np.where(m, wk.words, wj.words))


def test_fresh_secrets_per_session(keys, modp):
    a = InitiatorSession("a", "k", W_K, keys.public_key, modp)
    b = InitiatorSession("b", "k", W_K, keys.public_key, modp)
    a.hello(), b.hello()
    sa, sb = a.transcript.secrets, b.transcript.secrets
    assert sa["exponent"] != sb["exponent"]
    assert sa["s_r"] != sb["s_r"] and sa["s_rho"] != sb["s_rho"]


def test_wrong_seed_garbles(keys, modp):
    init, acc = sessions(keys, modp, ParamWords.from_floats(np.ones(500)), ParamWords.from_floats(np.ones(500)), 1)
    sub_k, _ = run_exchange(init, acc)
    wrong = crypto.gen_otp(b"\x00" * 32, sub_k.enc_mixed.layout)
    garbled = sub_k.enc_mixed.words ^ wrong.words
    truth = server_decrypt(sub_k, keys).words
    frac = np.unpackbits((garbled ^ truth).view(np.uint8)).mean()
    assert frac >= 0.45


def test_tampered_seed_rejected(keys, modp):
    init, acc = sessions(keys, modp, W_K, W_J, 2)
    sub_k, _ = run_exchange(init, acc)
    ct = sub_k.enc_partner_seed
    bad = MixedSubmission(sub_k.sender, sub_k.enc_mixed, ct[:-1] + bytes([ct[-1] ^ 1]))
    with pytest.raises(DecryptionError):
        server_decrypt(bad, keys)


def test_self_submission_round_trip(keys):
    sub = self_submission("k", W_K, keys.public_key, crypto.DeterministicRandom("solo"))
    assert server_decrypt(sub, keys) == W_K
    assert sub.enc_mixed != W_K


def test_out_of_order_and_replay(keys, modp):
    init, acc = sessions(keys, modp, W_K, W_J, 3)
    hello = init.hello()
    with pytest.raises(ProtocolError):
        init.hello()
    payload = acc.respond(hello)
    with pytest.raises(ProtocolError):
        acc.respond(hello)  # replay
    assert acc.state == "aborted"

    init2, acc2 = sessions(keys, modp, W_K, W_J, 4, sid="other")
    init2.hello()
    with pytest.raises(ProtocolError):
        init2.finalize(payload)  # foreign session id


def test_invalid_dh_pub_aborts(keys, modp):
    init, acc = sessions(keys, modp, W_K, W_J, 5)
    hello = init.hello()
    forged = type(hello)(hello.session_id, hello.sender, 1, hello.enc_seed_r)
    with pytest.raises(ProtocolError):
        acc.respond(forged)
    assert acc.state == "aborted"


def test_wire_round_trip(keys, modp):
    init, acc = sessions(keys, modp, W_K, W_J, 6)
    hello = init.hello()
    payload = acc.respond(hello)
    sub, ret = init.finalize(payload)
    for msg in (hello, payload, ret, sub):
        back = decode_message(encode_message(msg, modp), W_K.layout, modp)
        assert back == msg


def test_attacker_exchange_update_reaches_partner(keys, modp):
    poisoned = ParamWords.from_floats([100.0, 200.0, 300.0, 400.0])
    for tag in range(200):
        init = InitiatorSession("a", "k", W_K, keys.public_key, modp, crypto.DeterministicRandom(f"a{tag}"), poisoned)
        acc = AcceptorSession("a", "j", W_J, keys.public_key, modp, crypto.DeterministicRandom(f"b{tag}"))
        sub_k, sub_j = run_exchange(init, acc)
        m = init.transcript.mask.bits
        if m.any() and not m.all():
            break
    mk, mj = server_decrypt(sub_k, keys).words, server_decrypt(sub_j, keys).words
    assert np.array_equal(mj, np.where(m, poisoned.words, W_J.words))
    assert np.array_equal(mk, np.where(m, W_J.words, W_K.words))
