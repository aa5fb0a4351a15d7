"""
Decoding
Teacher-forced prediction and free-running generation (greedy and beam
search) over an encoder state.

BOS and PAD are never generated; hypothesis scores are sums of
full-vocabulary log-softmax values.
"""

import contextvars
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import tensor as T
from .config import DecodeConfig
from .data import BOS_ID, EOS_ID, PAD_ID, Batch
from .errors import ContractError

if TYPE_CHECKING:
    from .model import EncoderState, R1Translator

logger = logging.getLogger(__name__)

NEVER_EMITTED = (BOS_ID, PAD_ID)


@dataclass(frozen=True)
class Hypothesis:
    tokens: Tuple[int, ...]
    log_prob: float
    finished: bool = False

    @property
    def generated(self) -> int:
        return len(self.tokens) - 1

    def score(self, length_penalty: float = 0.0) -> float:
        if length_penalty == 0:
            return self.log_prob
        return self.log_prob / (max(self.generated, 1) ** length_penalty)


def _rank_key(length_penalty: float) -> Callable[[Hypothesis], tuple]:
    # finished first, then best score; ties go to the lexicographically smaller sequence
    return lambda h: (not h.finished, -h.score(length_penalty), h.tokens)


def step_log_probs(
    model: "R1Translator", state: "EncoderState", prefixes: np.ndarray
) -> np.ndarray:
    """
    Log-probabilities of the next token for each prefix.

    Returns:
        [N x V] float64 array with -inf at the ids that are never generated.
    """
    logits = model.decode_logits(state, prefixes)
    last = T.Tensor(logits.data[:, -1], dtype=logits.dtype)
    log_probs = T.log_softmax(last, axis=-1).data.astype(np.float64)
    log_probs[:, list(NEVER_EMITTED)] = -np.inf
    return log_probs


def score_sequence(model: "R1Translator", state: "EncoderState", tokens: Sequence[int]) -> float:
    """Sum of the per-step log-softmax values of ``tokens[1:]`` for a single sentence."""
    tokens = np.asarray(tokens)
    if tokens.size < 2:
        return 0.0
    with T.no_grad():
        logits = model.decode_logits(state, tokens[None, :-1])
        log_probs = T.log_softmax(logits, axis=-1).data[0].astype(np.float64)
    return float(np.sum(log_probs[np.arange(tokens.size - 1), tokens[1:]]))


# ---------------------------------------------------------------------------
# Teacher forcing
# ---------------------------------------------------------------------------


def teacher_forced_predict(model: "R1Translator", batch: Batch) -> np.ndarray:
    """
    Argmax prediction at every target position given the ground-truth prefix.

    Returns:
        [B x Ty-1] ids aligned with ``batch.targets[:, 1:]``; PAD wherever the
        label is PAD.

    Raises:
        ContractError: the batch has no targets.
    """
    if batch.targets is None:
        raise ContractError("teacher-forced prediction needs a batch with targets")
    targets = np.asarray(batch.targets)
    with T.no_grad():
        state = model.encode(batch)
        logits = model.decode_logits(state, targets[:, :-1]).data.copy()
    logits[..., list(NEVER_EMITTED)] = -np.inf
    predictions = logits.argmax(axis=-1)
    predictions[targets[:, 1:] == PAD_ID] = PAD_ID
    return predictions


def predictions_to_sequences(predictions: np.ndarray, labels: np.ndarray) -> List[List[int]]:
    """
    Per-position predictions as BOS-prefixed sequences, cut at the label
    padding or after the first EOS.
    """
    sequences = []
    for row, row_labels in zip(predictions, labels):
        seq = [BOS_ID]
        for token, label in zip(row, row_labels):
            if label == PAD_ID:
                break
            seq.append(int(token))
            if token == EOS_ID:
                break
        sequences.append(seq)
    return sequences


def teacher_forced_sequences(model: "R1Translator", batch: Batch) -> List[List[int]]:
    """Teacher-forced predictions as BOS-prefixed sequences cut after the first EOS."""
    labels = np.asarray(batch.targets)[:, 1:]
    return predictions_to_sequences(teacher_forced_predict(model, batch), labels)


# ---------------------------------------------------------------------------
# Free-running search
# ---------------------------------------------------------------------------


def greedy_search(model: "R1Translator", state: "EncoderState", max_len: int) -> Hypothesis:
    """Append the argmax token (ties -> smallest id) until EOS or ``max_len`` tokens."""
    tokens = [BOS_ID]
    log_prob = 0.0
    for _ in range(max_len):
        row = step_log_probs(model, state, np.array([tokens]))[0]
        token = int(np.argmax(row))
        tokens.append(token)
        log_prob += float(row[token])
        if token == EOS_ID:
            return Hypothesis(tuple(tokens), log_prob, True)
    return Hypothesis(tuple(tokens), log_prob, False)


def beam_search(model: "R1Translator", state: "EncoderState", cfg: DecodeConfig) -> Hypothesis:
    """
    Beam search for one sentence.

    Every live hypothesis is expanded over the vocabulary. Candidates ending
    in EOS retire to the finished pool without taking a beam slot; the best
    ``beam_width`` of the others stay live. Search stops when the best
    finished hypothesis already scores at least as high as every live one
    (no length penalty) or after ``max_len`` tokens, where the live
    hypotheses retire unfinished.

    Width 1 is greedy search. For wider beams the greedy hypothesis also
    competes for the result, so no width ranks below greedy and, on inputs
    small enough for the beam to hold every prefix, the result is the
    exhaustive optimum.

    Returns:
        Best finished hypothesis, else the best unfinished one.
    """
    if state.size != 1:
        raise ContractError(f"beam_search decodes one sentence at a time, got batch {state.size}")
    greedy = greedy_search(model, state, cfg.max_len)
    width, penalty = cfg.beam_width, cfg.length_penalty
    if width == 1:
        return greedy
    rank = _rank_key(penalty)
    live = [Hypothesis((BOS_ID,), 0.0)]
    pool: List[Hypothesis] = [greedy]

    for _ in range(cfg.max_len):
        prefixes = np.array([h.tokens for h in live])
        log_probs = step_log_probs(model, state.repeat(len(live)), prefixes)
        candidates = []
        for hyp, row in zip(live, log_probs):
            for token in np.flatnonzero(np.isfinite(row)):
                token = int(token)
                extended = Hypothesis(
                    hyp.tokens + (token,), hyp.log_prob + float(row[token]), token == EOS_ID
                )
                (pool if extended.finished else candidates).append(extended)
        candidates.sort(key=rank)
        live = candidates[:width]
        if not live:
            break
        # log-probs only decrease, so no live extension can overtake the pool
        best_finished = max((h.log_prob for h in pool if h.finished), default=-np.inf)
        if penalty == 0 and best_finished >= live[0].log_prob:
            live = []
            break
    pool.extend(live)

    return min(pool, key=rank)


def _map_rows(fn: Callable[[int], Hypothesis], rows: int, workers: int) -> List[Hypothesis]:
    def run(i: int) -> Hypothesis:
        with T.no_grad():
            return fn(i)

    if workers <= 1 or rows <= 1:
        return [run(i) for i in range(rows)]
    # pool threads start from an empty context; each task gets its own copy of the caller's
    contexts = [contextvars.copy_context() for _ in range(rows)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: contexts[i].run(run, i), range(rows)))


def greedy_decode(
    model: "R1Translator", state: "EncoderState", max_len: int, workers: int = 1
) -> List[List[int]]:
    """Greedy sequences for every sentence in ``state``."""
    hyps = _map_rows(lambda i: greedy_search(model, state.select(i), max_len), state.size, workers)
    return [list(h.tokens) for h in hyps]


def beam_search_batch(model: "R1Translator", state: "EncoderState", cfg: DecodeConfig,
                      workers: Optional[int] = None) -> List[Hypothesis]:
    """Beam search each sentence independently; sentences may run on a thread pool."""
    workers = cfg.workers if workers is None else workers
    return _map_rows(lambda i: beam_search(model, state.select(i), cfg), state.size, workers)
