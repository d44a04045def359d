from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rclbc.codes import (
    GENERIC,
    LOWER_TRIANGULAR,
    SYSTEMATIC,
    AlistError,
    ConfigError,
    RateError,
    RateLadder,
    RCCodeFamily,
    bch_family,
    bch_generator,
    bch_parity_check,
    check_structure,
    dumps_alist,
    load_alist,
    loads_alist,
    puncture,
    rate_ladder_from_pairs,
    save_alist,
    subcode_matrices,
)
from rclbc.gf2 import BitMatrix, RankError, StructureError, matmul_gf2, rank_gf2

from oracles import hamming_weight_min


def random_family(rng, k=7, lengths=(15, 13, 11)):
    m = lengths[0] - k
    h1 = rng.integers(0, 2, (m, k))
    h2 = np.tril(rng.integers(0, 2, (m, m)), -1) + np.eye(m, dtype=int)
    return RCCodeFamily.from_H(BitMatrix(np.hstack([h1, h2])), RateLadder(k, lengths))


# --- ladder and puncturing -------------------------------------------------

def test_ladder_k11():
    lad = rate_ladder_from_pairs([(11, 16), (11, 31), (11, 21)])
    assert lad.lengths == (31, 21, 16)
    assert lad.rate(31) < lad.rate(21) < lad.rate(16)
    assert lad.rate(31) == Fraction(11, 31)


def test_ladder_k20():
    assert rate_ladder_from_pairs([(20, 100), (20, 60)]).lengths == (100, 60)


def test_single_pair_ladder():
    assert rate_ladder_from_pairs([(4, 7)]).lengths == (7,)


@pytest.mark.parametrize("pairs", [[(11, 31), (12, 21)], [(11, 31), (11, 31)], []])
def test_bad_pairs(pairs):
    with pytest.raises(ConfigError):
        rate_ladder_from_pairs(pairs)


def test_ladder_validation():
    with pytest.raises(ConfigError):
        RateLadder(7, (11, 15))
    with pytest.raises(ConfigError):
        RateLadder(7, (15, 7))


def test_puncture_keeps_prefix():
    c = np.arange(31)
    assert np.array_equal(puncture(c, 31, 11), c)
    assert np.array_equal(puncture(c, 21, 11), np.arange(21))
    assert np.array_equal(puncture(np.arange(100), 60, 20), np.arange(60))
    with pytest.raises(RateError):
        puncture(c, 11, 11)
    with pytest.raises(RateError):
        puncture(c, 32, 11)


# --- families and subcodes -------------------------------------------------

def test_subcode_shapes_for_k11():
    fam = random_family(np.random.default_rng(0), 11, (31, 21, 16))
    assert fam.subcode(31) == fam.H
    assert fam.subcode(21).shape == (10, 21)
    assert fam.subcode(16).shape == (5, 16)


def test_subcode_checks_hold_on_random_messages():
    rng = np.random.default_rng(1)
    fam = random_family(rng, 11, (31, 21, 16))
    x = rng.integers(0, 2, (10_000, 11))
    c = fam.encode(x)
    assert np.array_equal(c[:, :11], x)
    for n_c in fam.ladder.lengths:
        hs = fam.subcode(n_c).bits.astype(np.int64)
        assert not ((puncture(c, n_c, 11) @ hs.T) % 2).any()


def test_subcode_rejects_upper_entries():
    h = BitMatrix([[1, 1, 0, 1], [0, 1, 1, 1]])  # row 0 touches column 3
    with pytest.raises(StructureError):
        subcode_matrices(h, 3, 2)


def test_structure_flags():
    assert check_structure(BitMatrix([[1, 1, 0], [1, 0, 1]]), 1) == SYSTEMATIC
    assert check_structure(BitMatrix([[1, 1, 0], [1, 1, 1]]), 1) == LOWER_TRIANGULAR
    assert check_structure(BitMatrix([[1, 1, 1], [1, 0, 1]]), 1) == GENERIC


def test_rank_deficient_family_rejected():
    with pytest.raises(RankError):
        RCCodeFamily.from_H(BitMatrix([[1, 1, 1, 0], [1, 1, 1, 0]]))


def test_multi_rate_needs_leading_message():
    # a generic H whose information set is not the leading block
    h = BitMatrix([[1, 1, 1, 0], [0, 1, 1, 0]])
    fam = RCCodeFamily.from_H(h)
    assert fam.structure == GENERIC
    with pytest.raises((ConfigError, StructureError)):
        RCCodeFamily.from_H(h, RateLadder(2, (4, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nesting_and_linearity(seed):
    rng = np.random.default_rng(seed)
    fam = random_family(rng)
    x1, x2 = rng.integers(0, 2, (2, 64, 7))
    c1, c2 = fam.encode(x1), fam.encode(x2)
    assert np.array_equal(fam.encode(x1 ^ x2), c1 ^ c2)
    lengths = fam.ladder.lengths
    for hi, lo in zip(lengths, lengths[1:]):
        assert np.array_equal(puncture(c1, lo, 7), puncture(c1, hi, 7)[:, :lo])
    for n_c in lengths:
        hs = fam.subcode(n_c).bits.astype(np.int64)
        assert not ((c1[:, :n_c] @ hs.T) % 2).any()


# --- BCH -------------------------------------------------------------------

@pytest.mark.parametrize("k", [21, 16, 11])
def test_bch_full_rank_and_dual(k):
    h = bch_parity_check(31, k)
    assert rank_gf2(h) == 31 - k
    assert matmul_gf2(bch_generator(31, k), h.T).is_zero()
    fam = bch_family(31, k)
    assert fam.structure == LOWER_TRIANGULAR
    assert matmul_gf2(fam.G, h.T).is_zero()


@pytest.mark.parametrize("k,d", [(21, 5), (16, 7), (11, 11)])
def test_bch_minimum_distance(k, d):
    # exhaustive over all 2^k messages
    assert hamming_weight_min(bch_family(31, k).G.bits) == d


def test_bch_unsupported():
    with pytest.raises(ConfigError):
        bch_parity_check(31, 26)


# --- alist -----------------------------------------------------------------

def test_alist_hand_example():
    text = dumps_alist(BitMatrix([[1, 0, 1, 0], [0, 1, 0, 1]]))
    lines = text.splitlines()
    assert lines[0] == "4 2"
    assert lines[2] == "1 1 1 1"
    assert lines[3] == "2 2"
    assert lines[4:8] == ["1", "2", "1", "2"]
    assert lines[8:] == ["1 3", "2 4"]


@settings(max_examples=100)
@given(st.integers(1, 24), st.integers(1, 48), st.data())
def test_alist_round_trip(rows, cols, data):
    m = BitMatrix(data.draw(arrays(np.uint8, (rows, cols), elements=st.integers(0, 1))))
    assert loads_alist(dumps_alist(m)) == m


def test_alist_file_round_trip(tmp_path):
    h = bch_parity_check(31, 16)
    save_alist(h, tmp_path / "h.alist")
    assert load_alist(tmp_path / "h.alist") == h


def test_alist_unpadded_lists_accepted():
    text = "3 2\n2 2\n1 2 1\n2 2\n1\n1 2\n2\n1 2\n2 3\n"
    assert loads_alist(text) == BitMatrix([[1, 1, 0], [0, 1, 1]])


@pytest.mark.parametrize("text,line", [
    ("4 2\n1 2\n1 1 1 1\n2 2\n1\n3\n1\n2\n1 3\n2 4\n", 6),  # row index > m
    ("4 2\n1 2\n1 1 1 1\n2 2\n1\n2\n1\n2\n1 3\n2 3\n", 10),  # rows disagree
    ("4 2\n1 2\n1 1 1\n", 3),                                 # short degree line
    ("4 x\n", 1),
])
def test_alist_errors_carry_line_numbers(text, line):
    with pytest.raises(AlistError) as err:
        loads_alist(text)
    assert err.value.line == line


@pytest.mark.parametrize("k", [11, 16, 21])
def test_shipped_bch_alists_match(k):
    path = Path(__file__).resolve().parents[1] / "baselines" / f"bch31_{k}.alist"
    assert load_alist(path) == bch_parity_check(31, k)
