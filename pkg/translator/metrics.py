"""
Metrics
Corpus BLEU-N, sacre-style corpus BLEU, ROUGE-1/2/L, WER and CER.

BLEU and ROUGE are reported as percentages, WER and CER as rates (which
may exceed 1.0 when the hypothesis has insertions).
"""

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import ContractError

logger = logging.getLogger(__name__)

NGRAM_ORDER = 4
BLEU_EPSILON = 1e-9

# word characters as one token, every other non-space character on its own
_SACRE_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

METRIC_COLUMNS = ["model", "mode", "metric", "submetric", "value"]

# orientation used when comparing decoding regimes
HIGHER_IS_BETTER = {"bleu": True, "sacrebleu": True, "rouge1": True, "rouge2": True, "rougeL": True,
                    "wer": False, "cer": False}


def whitespace_tokenize(text: str) -> List[str]:
    return text.split()


def sacre_tokenize(text: str) -> List[str]:
    """Fixed, case-sensitive tokenization: punctuation split off as separate tokens."""
    return _SACRE_TOKEN_RE.findall(text)


@dataclass(frozen=True)
class TokenizedPair:
    reference: Tuple[str, ...]
    hypothesis: Tuple[str, ...]

    @classmethod
    def from_text(cls, reference: str, hypothesis: str,
                  tokenize: Callable[[str], List[str]] = whitespace_tokenize) -> "TokenizedPair":
        return cls(tuple(tokenize(reference)), tuple(tokenize(hypothesis)))


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    fmeasure: float

    @classmethod
    def from_counts(cls, overlap: int, hyp_total: int, ref_total: int) -> "RougeScore":
        p = overlap / hyp_total if hyp_total > 0 else 0.0
        r = overlap / ref_total if ref_total > 0 else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


def extract_ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------


def bleu_statistics(
    pairs: Sequence[TokenizedPair], n: int
) -> Tuple[List[int], List[int], int, int]:
    """Clipped matches and totals per order 1..n, plus hypothesis and reference lengths."""
    correct, total = [0] * n, [0] * n
    sys_len = ref_len = 0
    for pair in pairs:
        sys_len += len(pair.hypothesis)
        ref_len += len(pair.reference)
        for order in range(1, n + 1):
            hyp_ngrams = extract_ngrams(pair.hypothesis, order)
            ref_ngrams = extract_ngrams(pair.reference, order)
            correct[order - 1] += sum(min(c, ref_ngrams[g]) for g, c in hyp_ngrams.items())
            total[order - 1] += sum(hyp_ngrams.values())
    return correct, total, sys_len, ref_len


def bleu_n(pairs: Sequence[TokenizedPair], n: int) -> float:
    """
    Corpus BLEU over orders 1..n as a percentage.

    Zero matches or zero totals contribute an epsilon precision; the brevity
    penalty exp(1 - r/c) applies when the hypotheses are shorter overall.

    Raises:
        ContractError: empty corpus or n outside 1..4.
    """
    if not pairs:
        raise ContractError("BLEU needs a non-empty corpus")
    if not 1 <= n <= NGRAM_ORDER:
        raise ContractError(f"BLEU order must be in 1..{NGRAM_ORDER}, got {n}")
    correct, total, sys_len, ref_len = bleu_statistics(pairs, n)
    log_precision = 0.0
    for c, t in zip(correct, total):
        precision = c / t if c > 0 and t > 0 else BLEU_EPSILON
        log_precision += math.log(precision)
    if sys_len >= ref_len:
        brevity_penalty = 1.0
    else:
        brevity_penalty = math.exp(1 - ref_len / sys_len) if sys_len > 0 else 0.0
    return 100.0 * brevity_penalty * math.exp(log_precision / n)


def corpus_bleu_sacre_style(pairs: Iterable[Tuple[str, str]]) -> float:
    """
    BLEU-4 on raw (reference, hypothesis) strings with the fixed
    punctuation-splitting tokenization.
    """
    tokenized = [TokenizedPair.from_text(ref, hyp, sacre_tokenize) for ref, hyp in pairs]
    return bleu_n(tokenized, NGRAM_ORDER)


# ---------------------------------------------------------------------------
# ROUGE
# ---------------------------------------------------------------------------


def rouge_n(pair: TokenizedPair, n: int) -> RougeScore:
    if n not in (1, 2):
        raise ContractError(f"ROUGE-N supports n in {{1, 2}}, got {n}")
    hyp_ngrams = extract_ngrams(pair.hypothesis, n)
    ref_ngrams = extract_ngrams(pair.reference, n)
    overlap = sum((hyp_ngrams & ref_ngrams).values())
    return RougeScore.from_counts(overlap, sum(hyp_ngrams.values()), sum(ref_ngrams.values()))


def lcs_length(a: Sequence, b: Sequence) -> int:
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b):
            current.append(previous[j] + 1 if x == y else max(previous[j + 1], current[j]))
        previous = current
    return previous[-1]


def rouge_l(pair: TokenizedPair) -> RougeScore:
    overlap = lcs_length(pair.hypothesis, pair.reference)
    return RougeScore.from_counts(overlap, len(pair.hypothesis), len(pair.reference))


# ---------------------------------------------------------------------------
# Error rates
# ---------------------------------------------------------------------------


def edit_distance(s1: Sequence, s2: Sequence) -> int:
    """Levenshtein distance with unit costs."""
    if len(s1) > len(s2):
        s1, s2 = s2, s1
    distances = list(range(len(s1) + 1))
    for i2, c2 in enumerate(s2):
        row = [i2 + 1]
        for i1, c1 in enumerate(s1):
            if c1 == c2:
                row.append(distances[i1])
            else:
                row.append(1 + min(distances[i1], distances[i1 + 1], row[-1]))
        distances = row
    return distances[-1]


def wer(pair: TokenizedPair) -> float:
    if not pair.reference:
        raise ContractError("WER needs a non-empty reference")
    return edit_distance(pair.hypothesis, pair.reference) / len(pair.reference)


def cer(reference: str, hypothesis: str) -> float:
    """Character error rate over the raw strings, spaces included."""
    if not reference:
        raise ContractError("CER needs a non-empty reference string")
    return edit_distance(hypothesis, reference) / len(reference)


def corpus_wer(pairs: Sequence[TokenizedPair]) -> float:
    """Total word edits over total reference words."""
    ref_words = sum(len(p.reference) for p in pairs)
    if ref_words == 0:
        raise ContractError("corpus WER needs at least one reference word")
    return sum(edit_distance(p.hypothesis, p.reference) for p in pairs) / ref_words


def corpus_cer(references: Sequence[str], hypotheses: Sequence[str]) -> float:
    ref_chars = sum(len(r) for r in references)
    if ref_chars == 0:
        raise ContractError("corpus CER needs at least one reference character")
    return sum(edit_distance(h, r) for r, h in zip(references, hypotheses)) / ref_chars


# ---------------------------------------------------------------------------
# Full table
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    """The sixteen (metric, submetric) values of one decoding regime."""

    values: Dict[Tuple[str, str], float]

    def __getitem__(self, key: Tuple[str, str]) -> float:
        return self.values[key]

    def __len__(self) -> int:
        return len(self.values)

    def to_frame(self, model: str, mode: str) -> pd.DataFrame:
        rows = [(model, mode, metric, sub, value) for (metric, sub), value in self.values.items()]
        return pd.DataFrame(rows, columns=METRIC_COLUMNS)


def _mean(values: List[float]) -> float:
    return sum(values) / len(values)


def compute_metrics(references: Sequence[str], hypotheses: Sequence[str]) -> MetricsReport:
    """
    Score a corpus of hypotheses against references.

    BLEU and the error rates are corpus-level; ROUGE is per sentence and
    macro-averaged.
    """
    if len(references) != len(hypotheses):
        raise ContractError(f"{len(references)} references but {len(hypotheses)} hypotheses")
    if not references:
        raise ContractError("cannot score an empty corpus")
    pairs = [TokenizedPair.from_text(r, h) for r, h in zip(references, hypotheses)]
    values: Dict[Tuple[str, str], float] = {}
    for n in range(1, NGRAM_ORDER + 1):
        values[("bleu", str(n))] = bleu_n(pairs, n)
    scorers = (
        ("rouge1", lambda p: rouge_n(p, 1)),
        ("rouge2", lambda p: rouge_n(p, 2)),
        ("rougeL", rouge_l),
    )
    for name, scorer in scorers:
        scores = [scorer(p) for p in pairs]
        values[(name, "p")] = 100.0 * _mean([s.precision for s in scores])
        values[(name, "r")] = 100.0 * _mean([s.recall for s in scores])
        values[(name, "f")] = 100.0 * _mean([s.fmeasure for s in scores])
    values[("sacrebleu", "corpus")] = corpus_bleu_sacre_style(zip(references, hypotheses))
    values[("wer", "corpus")] = corpus_wer(pairs)
    values[("cer", "corpus")] = corpus_cer(references, hypotheses)
    return MetricsReport(values)


def matched_words(reference: str, hypothesis: str, marker: str = "**") -> str:
    """Hypothesis with every word that also occurs in the reference wrapped in ``marker``."""
    shared = set(whitespace_tokenize(reference))
    words = whitespace_tokenize(hypothesis)
    return " ".join(f"{marker}{w}{marker}" if w in shared else w for w in words)


def token_accuracy(predictions, labels, pad_id: int) -> float:
    """Share of non-pad label positions predicted exactly."""
    predictions, labels = np.asarray(predictions), np.asarray(labels)
    real = labels != pad_id
    if not real.any():
        raise ContractError("token accuracy needs at least one real label")
    return float((predictions[real] == labels[real]).mean())
