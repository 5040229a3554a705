import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fragfl.baselines import AggregatorChoice, aggregate, coordinate_median, fedavg, krum_scores, multi_krum, trimmed_mean
from fragfl.errors import ConfigError, DomainError

vals = st.floats(-100, 100, allow_nan=False)


def col(xs):
    return [[x] for x in xs]


# brute-force 1-D oracles -----------------------------------------------------


def median_oracle(xs):
    s = sorted(xs)
    n = len(s)
    return s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2


def trimmed_oracle(xs, beta):
    s = sorted(xs)
    cut = math.floor(beta * len(s))
    kept = s[cut : len(s) - cut]
    return sum(kept) / len(kept)


def krum_oracle(xs, f, m):
    n = len(xs)
    scores = []
    for i, x in enumerate(xs):
        dists = sorted((x - y) ** 2 for j, y in enumerate(xs) if j != i)
        scores.append(sum(dists[: n - f - 2]))
    # lowest scores first, ties by index
    order = sorted(range(n), key=lambda i: (scores[i], i))[:m]
    return scores, sum(xs[i] for i in order) / m


def test_fedavg_examples():
    assert fedavg(col([2.0, 4.0]), [1, 1]).tolist() == [3.0]
    assert fedavg(col([2.0, 4.0]), [1, 3]).tolist() == [3.5]
    assert fedavg(col([7.0]), [5]).tolist() == [7.0]
    with pytest.raises(DomainError):
        fedavg([], [])


def test_median_and_trim_examples():
    assert coordinate_median(col([1.0, 2.0, 9.0])).tolist() == [2.0]
    assert coordinate_median(col([1.0, 3.0])).tolist() == [2.0]
    assert trimmed_mean(col([1.0, 2.0, 9.0]), 1 / 3).tolist() == [2.0]
    with pytest.raises(DomainError):
        trimmed_mean(col([1.0, 2.0]), 0.5)


def test_krum_example():
    xs = [0.0, 0.1, 0.2, 10.0]
    assert krum_scores(col(xs), 1) == pytest.approx([0.01, 0.01, 0.01, 96.04])
    assert multi_krum(col(xs), f=1, m_select=2) == pytest.approx([0.05])
    ident = [[1.5, -2.0]] * 5
    assert multi_krum(ident, f=1, m_select=2).tolist() == [1.5, -2.0]
    with pytest.raises(DomainError):
        multi_krum(col(xs), f=2, m_select=1)
    with pytest.raises(DomainError):
        multi_krum(col(xs), f=1, m_select=5)
    assert multi_krum(col(xs), f=1, m_select=1).tolist() == [0.0]  # plain Krum


@given(st.lists(vals, min_size=1, max_size=15))
def test_median_matches_oracle(xs):
    assert coordinate_median(col(xs))[0] == pytest.approx(median_oracle(xs))


@given(st.lists(vals, min_size=1, max_size=15), st.floats(0, 0.49))
def test_trimmed_matches_oracle(xs, beta):
    assert trimmed_mean(col(xs), beta)[0] == pytest.approx(trimmed_oracle(xs, beta), abs=1e-9)


@given(st.lists(vals, min_size=1, max_size=10), st.data())
def test_fedavg_matches_oracle(xs, data):
    d = data.draw(st.lists(st.floats(0.1, 50), min_size=len(xs), max_size=len(xs)))
    expect = sum(x * w for x, w in zip(xs, d)) / sum(d)
    assert fedavg(col(xs), d)[0] == pytest.approx(expect, abs=1e-9)


@given(st.lists(st.integers(-50, 50).map(float), min_size=4, max_size=9), st.data())
def test_krum_matches_oracle(xs, data):
    n = len(xs)
    f = data.draw(st.integers(0, n - 3))
    m = data.draw(st.integers(1, n))
    scores, expect = krum_oracle(xs, f, m)
    assert krum_scores(col(xs), f) == pytest.approx(scores)
    assert multi_krum(col(xs), f, m)[0] == pytest.approx(expect)


def test_krum_selection_is_optimal_subset():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(7, 3))
    scores = krum_scores(X, 2)
    best = min(itertools.combinations(range(7), 2), key=lambda c: (sum(scores[list(c)]), c))
    assert multi_krum(X, 2, 2) == pytest.approx(X[list(best)].mean(axis=0))


def test_dispatch():
    ups = col([1.0, 2.0, 3.0, 4.0, 100.0])
    d = [1] * 5
    assert aggregate(AggregatorChoice("fedavg"), ups, d).tolist() == [22.0]
    assert aggregate(AggregatorChoice("median"), ups, d).tolist() == [3.0]
    assert aggregate(AggregatorChoice("trimmed_mean", beta=0.2), ups, d).tolist() == [3.0]
    assert aggregate(AggregatorChoice("multi_krum"), ups, d)[0] < 5
    with pytest.raises(ConfigError):
        aggregate(AggregatorChoice("ffl"), ups, d)
    with pytest.raises(ConfigError):
        AggregatorChoice("nope")
