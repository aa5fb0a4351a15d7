"""
Metric tests on hand-computed examples plus a brute-force edit distance oracle.
"""

import math
import random
from functools import lru_cache

import pytest

from translator.errors import ContractError
from translator.metrics import (
    HIGHER_IS_BETTER,
    METRIC_COLUMNS,
    TokenizedPair,
    bleu_n,
    cer,
    compute_metrics,
    corpus_bleu_sacre_style,
    corpus_cer,
    corpus_wer,
    edit_distance,
    lcs_length,
    matched_words,
    rouge_l,
    rouge_n,
    sacre_tokenize,
    token_accuracy,
    wer,
)


def _pair(reference, hypothesis):
    return TokenizedPair.from_text(reference, hypothesis)


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def test_bleu1_clips_repeated_words():
    assert bleu_n([_pair("the cat sat", "the the the the")], 1) == pytest.approx(25.0)


def test_bleu_brevity_penalty():
    assert bleu_n([_pair("a b c d", "a b")], 1) == pytest.approx(100.0 * math.exp(-1.0))


def test_bleu_identical_corpus_is_100():
    sentences = ["the quick brown fox jumps", "a b c d"]
    pairs = [_pair(s, s) for s in sentences]
    for n in range(1, 5):
        assert bleu_n(pairs, n) == pytest.approx(100.0)


def test_bleu_without_higher_order_matches_is_tiny_not_nan():
    score = bleu_n([_pair("a b c d", "d c b a")], 4)
    assert 0.0 < score < 1e-3


def test_bleu_empty_hypotheses_score_zero():
    assert bleu_n([_pair("a b", "")], 1) == 0.0


def test_corpus_bleu_ignores_sentence_order():
    refs = ["the cat sat on the mat", "a dog ran", "birds fly south in winter"]
    hyps = ["the cat sat on a mat", "a dog walked", "birds fly in winter"]
    pairs = [_pair(r, h) for r, h in zip(refs, hyps)]
    shuffled = pairs[:]
    random.Random(0).shuffle(shuffled)
    for n in range(1, 5):
        assert bleu_n(pairs, n) == pytest.approx(bleu_n(shuffled, n))


def test_bleu_errors():
    with pytest.raises(ContractError):
        bleu_n([], 4)
    with pytest.raises(ContractError):
        bleu_n([_pair("a", "a")], 5)


def test_sacre_tokenizer_splits_punctuation():
    assert sacre_tokenize("Hello, world!") == ["Hello", ",", "world", "!"]
    same = ("Hello, big world!", "Hello, big world!")
    assert corpus_bleu_sacre_style([same]) == pytest.approx(100.0)


# ---------------------------------------------------------------------------
# ROUGE
# ---------------------------------------------------------------------------


def test_rouge1_precision_recall_f():
    score = rouge_n(_pair("the cat sat", "the cat"), 1)
    assert (score.precision, score.recall) == pytest.approx((1.0, 2 / 3))
    assert score.fmeasure == pytest.approx(0.8)


def test_rouge2_counts_bigrams():
    score = rouge_n(_pair("the cat sat", "the cat"), 2)
    assert (score.precision, score.recall) == pytest.approx((1.0, 0.5))
    with pytest.raises(ContractError):
        rouge_n(_pair("a", "a"), 3)


def test_rouge_l_uses_longest_common_subsequence():
    score = rouge_l(_pair("a b c d", "a c b d"))
    assert (score.precision, score.recall, score.fmeasure) == pytest.approx((0.75, 0.75, 0.75))
    assert rouge_l(_pair("a b", "b a")).fmeasure == pytest.approx(0.5)
    assert lcs_length("abcbdab", "bdcaba") == 4


def test_rouge_of_empty_hypothesis_is_zero():
    score = rouge_l(_pair("a b", ""))
    assert (score.precision, score.recall, score.fmeasure) == (0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# Error rates
# ---------------------------------------------------------------------------


def test_wer_examples():
    assert wer(_pair("a b c", "a x c")) == pytest.approx(1 / 3)
    assert wer(_pair("a b c", "")) == 1.0
    assert wer(_pair("a", "b c d")) == 3.0
    with pytest.raises(ContractError):
        wer(_pair("", "a"))


def test_cer_examples():
    assert cer("abc", "abd") == pytest.approx(1 / 3)
    assert cer("ab", "abab") == 1.0
    assert cer("a b", "ab") == pytest.approx(1 / 3)


def test_corpus_rates_pool_edits():
    pairs = [_pair("a b", "a"), _pair("c d e f", "c d e f")]
    assert corpus_wer(pairs) == pytest.approx(1 / 6)
    assert corpus_cer(["ab", "cdef"], ["a", "cdef"]) == pytest.approx(1 / 6)


def _brute_force_distance(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0 or j == 0:
            return i + j
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def test_edit_distance_matches_brute_force():
    rng = random.Random(7)
    for _ in range(1000):
        a = "".join(rng.choice("abc") for _ in range(rng.randint(0, 7)))
        b = "".join(rng.choice("abc") for _ in range(rng.randint(0, 7)))
        assert edit_distance(a, b) == _brute_force_distance(a, b), (a, b)
        words_a, words_b = tuple(a.split("c")), tuple(b.split("c"))
        assert edit_distance(words_a, words_b) == _brute_force_distance(words_a, words_b)


# ---------------------------------------------------------------------------
# Full table and helpers
# ---------------------------------------------------------------------------


def test_compute_metrics_table_layout():
    report = compute_metrics(["the cat sat", "a dog ran"], ["the cat sat", "a dog ran"])
    assert len(report) == 16
    frame = report.to_frame("r1", "free")
    assert list(frame.columns) == METRIC_COLUMNS
    assert frame[["metric", "submetric"]].drop_duplicates().shape[0] == 16
    assert set(frame["mode"]) == {"free"}
    assert report[("wer", "corpus")] == 0.0
    assert report[("cer", "corpus")] == 0.0
    assert report[("rougeL", "f")] == pytest.approx(100.0)
    assert report[("bleu", "1")] == pytest.approx(100.0)


def test_every_reported_metric_has_an_orientation():
    report = compute_metrics(["the cat sat"], ["the dog sat"])
    assert {metric for metric, _ in report.values} == set(HIGHER_IS_BETTER)
    assert [m for m, higher in HIGHER_IS_BETTER.items() if not higher] == ["wer", "cer"]


def test_compute_metrics_rouge_is_macro_averaged():
    report = compute_metrics(["a b", "c d e f"], ["a b", "x"])
    assert report[("rouge1", "r")] == pytest.approx(50.0)
    assert report[("rouge1", "p")] == pytest.approx(50.0)


def test_compute_metrics_errors():
    with pytest.raises(ContractError):
        compute_metrics(["a"], [])
    with pytest.raises(ContractError):
        compute_metrics([], [])


def test_matched_words_marks_shared_tokens():
    assert matched_words("a b c", "a x c") == "**a** x **c**"


def test_token_accuracy_skips_padding():
    accuracy = token_accuracy([[4, 5, 9], [6, 2, 2]], [[4, 7, 2], [6, 2, 2]], pad_id=2)
    assert accuracy == pytest.approx(2 / 3)
    with pytest.raises(ContractError):
        token_accuracy([[2]], [[2]], pad_id=2)
