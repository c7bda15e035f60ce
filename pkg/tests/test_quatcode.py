import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dovmodem.errors import ConstructionFailure, InvalidArgument
from dovmodem.quatcode import (
    QuaternaryCodebook,
    antipode,
    best_codebook_search,
    codebook_search,
    enumerate_words,
    format_codebook,
    gray_pack,
    lee_distance,
    min_lee_distance,
    parse_codebook,
    phase_histogram,
)


def lee_oracle(a, b):
    return sum(min(abs(x - y), 4 - abs(x - y)) for x, y in zip(a, b))


words8 = st.lists(st.integers(0, 3), min_size=8, max_size=8)


class TestLeeDistance:
    def test_identity(self):
        assert lee_distance((0, 1, 2, 3), (0, 1, 2, 3)) == 0

    def test_wraparound(self):
        assert lee_distance((0,), (3,)) == 1

    def test_three_digits(self):
        assert lee_distance((0, 2, 1), (2, 0, 3)) == 6

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            lee_distance((0, 1), (0, 1, 2))

    def test_bad_digit(self):
        with pytest.raises(InvalidArgument):
            lee_distance((0, 4), (0, 1))

    @given(words8, words8, words8)
    def test_metric_axioms(self, a, b, c):
        dab = lee_distance(a, b)
        assert dab == lee_oracle(a, b)
        assert dab == lee_distance(b, a)
        assert (dab == 0) == (a == b)
        assert lee_distance(a, c) <= dab + lee_distance(b, c)

    @given(words8, words8)
    def test_gray_popcount_isometry(self, a, b):
        pa, pb = gray_pack(np.array([a, b], dtype=np.uint8))
        assert bin(int(pa) ^ int(pb)).count("1") == lee_distance(a, b)

    @given(words8)
    def test_antipode_distance_is_maximal(self, a):
        assert lee_distance(a, antipode(a)) == 16


class TestMinDistance:
    def test_full_z4_length_one(self):
        assert min_lee_distance(enumerate_words(1)) == 1

    def test_pair(self):
        assert min_lee_distance(np.array([[0, 0], [2, 2]])) == 4

    def test_single_word_rejected(self):
        with pytest.raises(InvalidArgument):
            min_lee_distance(np.array([[0, 1]]))

    def test_matches_pairwise_oracle(self, rng):
        w = rng.integers(0, 4, size=(40, 6))
        w = np.unique(w, axis=0)
        expect = min(lee_oracle(a, b) for a, b in itertools.combinations(w.tolist(), 2))
        assert min_lee_distance(w) == expect


class TestPhaseHistogram:
    def test_pair(self):
        h = phase_histogram(np.array([[0, 0], [2, 2]]))
        assert h[:, 0].tolist() == [1, 0, 1, 0]

    def test_full_z4(self):
        assert phase_histogram(enumerate_words(1))[:, 0].tolist() == [1, 1, 1, 1]

    def test_columns_sum_to_size(self, quat64):
        assert (phase_histogram(quat64).sum(axis=0) == 64).all()

    def test_antipodal_balance(self, quat64):
        # every pair {c, c+2} contributes one count to d and one to d+2
        h = phase_histogram(quat64)
        assert (h[0] == h[2]).all() and (h[1] == h[3]).all()


class TestCodebookSearch:
    @pytest.mark.parametrize("n, M, d", [(8, 64, 6), (10, 16, 10), (7, 16, 6), (8, 32, 8),
                                         (8, 256, 4), (9, 64, 6)])
    def test_table_cells(self, n, M, d):
        cb = codebook_search(n, M, seed=0)
        assert cb.min_lee_distance == d
        assert cb.size == M and cb.n == n

    def test_reflection_pairs(self, quat64):
        w = quat64.words
        assert (w[1::2] == antipode(w[0::2])).all()
        assert quat64.is_reflection_symmetric

    def test_distinct(self, quat64):
        assert len(np.unique(quat64.words, axis=0)) == 64

    def test_certified_distance_is_exhaustive(self, quat64):
        w = quat64.words.tolist()
        assert quat64.min_lee_distance == min(
            lee_oracle(a, b) for a, b in itertools.combinations(w, 2))

    def test_deterministic(self):
        assert codebook_search(6, 32, seed=7) == codebook_search(6, 32, seed=7)

    def test_seed_changes_start(self):
        a = codebook_search(6, 32, seed=1)
        b = codebook_search(6, 32, seed=2)
        assert not np.array_equal(a.words[0], b.words[0])

    @pytest.mark.parametrize("M", [3, 0, 4 ** 3 + 2])
    def test_bad_size(self, M):
        with pytest.raises(InvalidArgument):
            codebook_search(3, M)

    def test_pool_exhaustion_reports_partial_size(self):
        pool = np.array([[0, 0], [2, 2], [1, 1], [3, 3]])
        with pytest.raises(ConstructionFailure) as info:
            codebook_search(2, 6, candidate_pool=pool)
        assert info.value.partial_size == 4

    def test_even_pool(self):
        cb = codebook_search(8, 64, seed=0, candidate_pool="even")
        assert (cb.words.sum(axis=1) % 2 == 0).all()
        assert cb.min_lee_distance >= 6

    def test_peak_pruning_callback(self):
        calls = []

        def peak(words):
            calls.append(len(words))
            return -np.arange(len(words), dtype=float)

        cb = codebook_search(6, 16, seed=0, peak_fn=peak)
        assert calls and cb.meta["peak_pruning"]

    def test_best_of_retries_not_worse(self):
        base = codebook_search(6, 64, seed=0)
        best = best_codebook_search(6, 64, seed=0, retries=3)
        assert best.min_lee_distance >= base.min_lee_distance

    def test_random_pool_above_cap(self):
        cb = codebook_search(11, 4, seed=0)
        assert cb.meta["pool"] == "full-random"
        # d(x, c) + d(x, c+2) = 2n for every x, so a second pair sits at n
        assert cb.min_lee_distance == 11


class TestCodebookFile:
    def test_round_trip(self, quat64):
        text = format_codebook(quat64)
        assert text.splitlines()[0] == "DOVQ4 v1 n=8 M=64 d=6 seed=0"
        assert parse_codebook(text) == quat64

    @pytest.mark.parametrize("body", ["0124", "01a3", "012"])
    def test_rejects_alphabet_and_length(self, body):
        with pytest.raises(InvalidArgument):
            parse_codebook(f"DOVQ4 v1 n=4 M=2 d=4 seed=0\n0000\n{body}\n")

    def test_rejects_wrong_declared_distance(self):
        with pytest.raises(InvalidArgument):
            parse_codebook("DOVQ4 v1 n=2 M=2 d=3 seed=0\n00\n22\n")

    def test_rejects_count_mismatch(self):
        with pytest.raises(InvalidArgument):
            parse_codebook("DOVQ4 v1 n=2 M=3 d=4 seed=0\n00\n22\n")

    def test_duplicate_words_rejected(self):
        with pytest.raises(InvalidArgument):
            QuaternaryCodebook.from_words(np.array([[0, 1], [0, 1]]))

    @settings(max_examples=25)
    @given(st.integers(0, 1000))
    def test_any_seed_round_trips(self, seed):
        cb = codebook_search(4, 8, seed=seed)
        assert parse_codebook(format_codebook(cb)) == cb
