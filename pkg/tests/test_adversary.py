import numpy as np
import pytest

from fragfl import crypto
from fragfl.adversary import AttackConfig, attacker_behavior, choose_attackers, flip_labels, poison_gaussian
from fragfl.errors import ConfigError
from fragfl.exchange import AcceptorSession, InitiatorSession, run_exchange, self_submission, server_decrypt
from fragfl.params import BitMask, ParamWords
from fragfl.training import Dataset

HONEST = ParamWords.from_floats([1.0, 2.0, 3.0, 4.0])
POISON = ParamWords.from_floats([90.0, 91.0, 92.0, 93.0])
PARTNER = ParamWords.from_floats([-1.0, -2.0, -3.0, -4.0])


def test_gaussian_identity_and_moments():
    W = ParamWords.from_floats(np.zeros(10_000))
    assert poison_gaussian(W, 0.0, 1) == W
    noise = poison_gaussian(W, 0.5, 7).floats64()
    assert abs(noise.mean()) <= 3 * 0.5 / np.sqrt(10_000)
    assert abs(noise.std() - 0.5) <= 0.02
    with pytest.raises(ConfigError):
        poison_gaussian(W, -1.0, 0)


def test_flip_labels():
    data = Dataset(np.zeros((4, 1)), [0, 1, 0, 1], 2)
    assert flip_labels(data, 1, 0).labels.tolist() == [0, 0, 0, 0]
    none = Dataset(np.zeros((2, 1)), [0, 0], 3)
    assert flip_labels(none, 2, 1).labels.tolist() == [0, 0]
    with pytest.raises(ConfigError):
        flip_labels(data, 1, 1)


def test_config_validation():
    with pytest.raises(ConfigError):
        AttackConfig(strategy=4)
    with pytest.raises(ConfigError):
        AttackConfig(kind="label_flip", src=1, tgt=1)
    with pytest.raises(ConfigError):
        AttackConfig(attacker_fraction=0.3)


def test_choose_attackers():
    ids = [f"p{i:02d}" for i in range(20)]
    picked = choose_attackers(ids, 0.2, np.random.default_rng(0))
    assert len(picked) == 4 and set(picked) <= set(ids)
    assert picked == choose_attackers(ids, 0.2, np.random.default_rng(0))


def run_plan(keys, group, strategy, attacker_first=True):
    """Exchange with a toy mask [1,0,1,0]; returns attacker and partner mixes."""
    plan = attacker_behavior(strategy, HONEST, POISON)
    for tag in range(2000):
        att = InitiatorSession("s", "a", plan.mix_update, keys.public_key, group,
                               crypto.DeterministicRandom(f"a{tag}"), plan.exchange_update)
        par = AcceptorSession("s", "p", PARTNER, keys.public_key, group, crypto.DeterministicRandom(f"p{tag}"))
        sub_a, sub_p = run_exchange(att, par)
        if att.transcript.mask == BitMask([1, 0, 1, 0]):
            break
    if plan.direct_submission is not None:
        sub_a = self_submission("a", plan.direct_submission, keys.public_key, crypto.DeterministicRandom("d"))
    return server_decrypt(sub_a, keys).floats().tolist(), server_decrypt(sub_p, keys).floats().tolist()


def test_strategy_1(keys, modp):
    mine, theirs = run_plan(keys, modp, 1)
    assert mine == [-1.0, 91.0, -3.0, 93.0]
    assert theirs == [90.0, -2.0, 92.0, -4.0]


def test_strategy_2(keys, modp):
    mine, theirs = run_plan(keys, modp, 2)
    assert mine == POISON.floats().tolist()
    assert theirs == [90.0, -2.0, 92.0, -4.0]


def test_strategy_3(keys, modp):
    mine, theirs = run_plan(keys, modp, 3)
    assert mine == [-1.0, 2.0, -3.0, 4.0]
    assert not set(mine) & set(POISON.floats().tolist())
    assert theirs == [90.0, -2.0, 92.0, -4.0]


def test_unknown_strategy():
    with pytest.raises(ConfigError):
        attacker_behavior(0, HONEST, POISON)
