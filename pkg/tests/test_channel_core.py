import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erasure_exponents.channel_core import (LOG_ZERO, ChannelError, ChannelFamily, Codebook, Dmc,
                                            all_outputs, batch_joint_counts, binary_entropy,
                                            entropy, joint_type, load_channel, load_family,
                                            log_likelihood, message_count)


def naive_ll(ch, x, y):
    total = 0.0
    for a, b in zip(x, y):
        total += math.log(ch.probs[a, b])
    return total


@st.composite
def dmc_and_pair(draw, max_n=12):
    nx = draw(st.integers(2, 3))
    ny = draw(st.integers(2, 4))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(ny), size=nx)
    ch = Dmc(p / p.sum(axis=1, keepdims=True))
    n = draw(st.integers(0, max_n))
    x = rng.integers(0, nx, size=n)
    y = rng.integers(0, ny, size=n)
    return ch, x, y


# --- log_likelihood ---------------------------------------------------------

def test_ll_two_clean_symbols():
    assert log_likelihood(Dmc.bsc(0.1), [0, 0], [0, 0]) == pytest.approx(2 * math.log(0.9))
    assert log_likelihood(Dmc.bsc(0.1), [0, 0], [0, 0]) == pytest.approx(-0.2107, abs=1e-4)


def test_ll_empty_vectors():
    assert log_likelihood(Dmc.bsc(0.3), [], []) == 0.0


def test_ll_matches_symbol_loop():
    ch = Dmc.bsc(0.1)
    expected = math.log(0.1) + math.log(0.9) + math.log(0.9)
    assert log_likelihood(ch, [0, 1, 0], [1, 1, 0]) == pytest.approx(expected, abs=1e-14)
    assert naive_ll(ch, [0, 1, 0], [1, 1, 0]) == pytest.approx(expected, abs=1e-14)


def test_ll_zero_probability_sentinel():
    ch = Dmc(np.array([[1.0, 0.0], [0.5, 0.5]]))
    assert log_likelihood(ch, [0], [1]) == LOG_ZERO
    assert joint_type([0], [1]).log_likelihood(ch) == LOG_ZERO


@pytest.mark.parametrize("x,y", [([0, 1], [0]), ([0, 2], [0, 1]), ([0, 1], [0, -1])])
def test_ll_bad_vectors(x, y):
    with pytest.raises(ChannelError):
        log_likelihood(Dmc.bsc(0.1), x, y)


# --- joint types ------------------------------------------------------------

def test_joint_type_examples():
    jt = joint_type([0, 1], [1, 1])
    assert jt.counts.tolist() == [[0, 1], [0, 1]]
    assert joint_type([0, 0, 0], [0, 0, 0]).counts.tolist() == [[3, 0], [0, 0]]
    assert jt.n == 2
    np.testing.assert_allclose(jt.output_type(), [0, 1])
    np.testing.assert_allclose(jt.input_type(), [0.5, 0.5])


def test_joint_type_length_mismatch():
    with pytest.raises(ChannelError):
        joint_type([0, 1], [0])


@settings(max_examples=200, deadline=None)
@given(dmc_and_pair())
def test_type_likelihood_equals_symbol_likelihood(case):
    ch, x, y = case
    jt = joint_type(x, y, ch.input_size, ch.output_size)
    assert jt.n == len(x)
    assert jt.counts.sum(axis=1).tolist() == np.bincount(x, minlength=ch.input_size).tolist()
    assert jt.log_likelihood(ch) == pytest.approx(log_likelihood(ch, x, y), abs=1e-10)
    assert log_likelihood(ch, x, y) == pytest.approx(naive_ll(ch, x, y), abs=1e-10)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_joint_type_count_bound(n):
    xs = all_outputs(n, 2)
    types = {joint_type(x, y).key() for x in xs for y in xs}
    assert len(types) <= (n + 1) ** 4
    # exact count for binary alphabets: compositions of n into 4 cells
    assert len(types) == math.comb(n + 3, 3)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(2, 4), st.integers(1, 8), st.integers(0, 10**6))
def test_batch_counts_match_joint_type(n, M, N, seed):
    rng = np.random.default_rng(seed)
    words = rng.integers(0, 2, size=(M, n))
    ys = rng.integers(0, 3, size=(N, n))
    c = batch_joint_counts(words, ys, 2, 3)
    assert c.shape == (M, N, 6)
    for m, j in itertools.product(range(M), range(N)):
        assert c[m, j].tolist() == joint_type(words[m], ys[j], 2, 3).counts.ravel().tolist()


# --- channels and families --------------------------------------------------

@pytest.mark.parametrize("theta", [0.01, 0.1, 0.37, 0.5])
def test_bsc_matrix(theta):
    p = Dmc.bsc(theta).probs
    np.testing.assert_allclose(p, [[1 - theta, theta], [theta, 1 - theta]])
    np.testing.assert_allclose(p.sum(axis=0), 1.0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0)


@pytest.mark.parametrize("rows", [
    [[0.5, 0.6], [0.5, 0.5]],
    [[1.0]],
    [[1.0, 0.0]],
    [[-0.1, 1.1], [0.5, 0.5]],
    [[np.nan, 1.0], [0.5, 0.5]],
])
def test_dmc_rejects(rows):
    with pytest.raises(ChannelError):
        Dmc(np.array(rows, dtype=float))


def test_dmc_is_immutable():
    ch = Dmc.bsc(0.2)
    with pytest.raises(ValueError):
        ch.probs[0, 0] = 0.0


def test_channel_json_roundtrip(tmp_path):
    ch = Dmc(np.array([[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]]))
    d = ch.to_dict()
    assert d["input_alphabet"] == 2 and d["output_alphabet"] == 3
    path = tmp_path / "ch.json"
    path.write_text(json.dumps(d))
    np.testing.assert_array_equal(load_channel(path).probs, ch.probs)


def test_channel_spec_mismatch():
    with pytest.raises(ChannelError):
        Dmc.from_dict({"input_alphabet": 3, "output_alphabet": 2, "rows": [[0.5, 0.5], [0.5, 0.5]]})
    with pytest.raises(ChannelError):
        Dmc.from_dict({"rows": [[1, 0], [0, 1]]})


def test_family_roundtrip(tmp_path):
    fam = ChannelFamily.bsc([0.1, 0.2])
    path = tmp_path / "fam.json"
    path.write_text(json.dumps(fam.to_dict()))
    assert load_family(path).grid == (0.1, 0.2)
    gen = ChannelFamily.general([Dmc.bsc(0.1), Dmc(np.array([[0.6, 0.4], [0.3, 0.7]]))])
    back = ChannelFamily.from_dict(json.loads(json.dumps(gen.to_dict())))
    assert back.kind == "general" and len(back) == 2
    np.testing.assert_array_equal(back.resolve(1).probs, gen.resolve(1).probs)


def test_family_defaults_and_lookup():
    fam = ChannelFamily.bsc()
    assert len(fam) == 50
    assert fam.grid[0] == 0.01 and fam.grid[-1] == 0.5
    assert fam.index_of(0.1) == 9
    assert fam.log_prob_stack().shape == (50, 2, 2)
    with pytest.raises(KeyError):
        fam.index_of(0.105)


@pytest.mark.parametrize("grid", [[], [0.1, 0.1], [0.0], [0.6]])
def test_family_rejects(grid):
    with pytest.raises(ChannelError):
        ChannelFamily.bsc(grid)


def test_family_alphabet_mismatch():
    with pytest.raises(ChannelError):
        ChannelFamily.general([Dmc.bsc(0.1), Dmc(np.full((2, 3), 1 / 3))])


# --- codebooks and counts ---------------------------------------------------

def test_codebook_rules():
    cb = Codebook(np.array([[0, 1, 1], [1, 0, 0]]))
    assert cb.M == 2 and cb.n == 3
    assert cb.realized_rate == pytest.approx(math.log(2) / 3)
    with pytest.raises(ChannelError):
        Codebook(np.array([[0, 1]]))
    with pytest.raises(ChannelError):
        Codebook(np.array([[0, 2], [1, 1]]))


@pytest.mark.parametrize("n,rate,M", [(4, 0.1, 2), (8, 0.1, 3), (12, 0.1, 4), (16, 0.1, 5),
                                      (10, 0.0, 2), (5, math.log(3), 243)])
def test_message_count(n, rate, M):
    assert message_count(n, rate) == M


def test_all_outputs_lexicographic():
    ys = all_outputs(3, 2)
    assert ys.tolist() == [list(t) for t in itertools.product(range(2), repeat=3)]
    assert all_outputs(2, 3).shape == (9, 2)
    assert all_outputs(0, 2).shape == (1, 0)


# --- entropy ----------------------------------------------------------------

def test_entropy_examples():
    assert binary_entropy(0.5) == pytest.approx(math.log(2))
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert entropy([0.25] * 4) == pytest.approx(math.log(4))


@pytest.mark.parametrize("p", [[-0.1, 1.1], [0.3, 0.3]])
def test_entropy_rejects(p):
    with pytest.raises(ValueError):
        entropy(p)


@given(st.floats(0.0, 1.0))
def test_binary_entropy_symmetric(u):
    assert binary_entropy(u) == pytest.approx(binary_entropy(1 - u), abs=1e-12)
    assert 0.0 <= binary_entropy(u) <= math.log(2) + 1e-15
