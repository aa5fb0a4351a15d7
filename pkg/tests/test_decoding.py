"""
Decoding tests: teacher forcing, greedy search and beam search against an
exhaustive oracle.
"""

import itertools

import numpy as np
import pytest

from translator import tensor as T
from translator.config import DecodeConfig, DecodeMode, ModelConfig
from translator.data import BOS_ID, EOS_ID, PAD_ID, Batch
from translator.decoding import (
    _map_rows,
    Hypothesis,
    beam_search,
    beam_search_batch,
    greedy_decode,
    greedy_search,
    predictions_to_sequences,
    score_sequence,
    step_log_probs,
    teacher_forced_predict,
)
from translator.errors import ConfigError, ContractError
from translator.model import R1Translator

# V=5 leaves EOS, UNK and one word as the only tokens search can emit
TINY_CONFIG = ModelConfig(
    vocab_size=5, feature_dim=3, lstm_hidden=2, bidirectional=1, lstm_layers=1,
    model_dim=4, enc_layers=1, dec_layers=1, heads=1, ffn_dim=8, maxlen=6,
)
EMITTABLE = (EOS_ID, 3, 4)


def _tiny(seed):
    model = R1Translator(TINY_CONFIG, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1000)
    eeg = rng.normal(size=(1, 3, TINY_CONFIG.feature_dim))
    mask = np.ones((1, 3), dtype=np.int64)
    return model, model.encode(Batch(eeg, mask, 1 - mask, None))


def _finished_sequences(max_len):
    for body_len in range(max_len):
        for body in itertools.product((3, 4), repeat=body_len):
            yield (BOS_ID,) + body + (EOS_ID,)


def test_step_log_probs_mask_bos_and_pad(model64, batch64):
    state = model64.encode(batch64).select(0, 2)
    log_probs = step_log_probs(model64, state, np.array([[BOS_ID], [BOS_ID]]))
    assert log_probs.shape == (2, 10)
    assert np.all(np.isneginf(log_probs[:, [BOS_ID, PAD_ID]]))
    finite = log_probs[np.isfinite(log_probs)].reshape(2, -1)
    assert np.all(np.exp(finite).sum(axis=1) < 1.0)


def test_teacher_forced_predictions_are_padded_like_labels(model64, batch64):
    predictions = teacher_forced_predict(model64, batch64)
    labels = batch64.targets[:, 1:]
    assert predictions.shape == labels.shape
    np.testing.assert_array_equal(predictions == PAD_ID, labels == PAD_ID)
    assert not np.any(predictions == BOS_ID)


def test_teacher_forced_needs_targets(model64, batch64):
    batch64.targets = None
    with pytest.raises(ContractError):
        teacher_forced_predict(model64, batch64)


def test_predictions_to_sequences_cuts_at_eos_and_padding():
    predictions = np.array([[5, 1, 6, 7], [4, 4, 2, 2]])
    labels = np.array([[5, 6, 7, 1], [4, 1, 2, 2]])
    assert predictions_to_sequences(predictions, labels) == [[0, 5, 1], [0, 4, 4]]


def test_greedy_stops_at_eos_or_max_len(model64, batch64):
    state = model64.encode(batch64)
    for tokens in greedy_decode(model64, state, max_len=5):
        assert tokens[0] == BOS_ID
        assert 2 <= len(tokens) <= 6
        assert EOS_ID not in tokens[1:-1]
        assert len(tokens) == 6 or tokens[-1] == EOS_ID
        assert BOS_ID not in tokens[1:] and PAD_ID not in tokens


def test_greedy_score_matches_rescoring(model64, batch64):
    state = model64.encode(batch64).select(1)
    hyp = greedy_search(model64, state, max_len=8)
    assert hyp.log_prob == pytest.approx(score_sequence(model64, state, hyp.tokens), abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_width_one_beam_is_greedy(seed):
    model, state = _tiny(seed)
    greedy = greedy_search(model, state, max_len=5)
    beam = beam_search(model, state, DecodeConfig(mode=DecodeMode.GREEDY, beam_width=1, max_len=5))
    assert beam.tokens == greedy.tokens
    assert beam.log_prob == pytest.approx(greedy.log_prob, abs=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_wide_beam_finds_the_exhaustive_optimum(seed):
    model, state = _tiny(seed)
    max_len = 3
    scored = {seq: score_sequence(model, state, seq) for seq in _finished_sequences(max_len)}
    best = min(scored, key=lambda seq: (-scored[seq], seq))

    cfg = DecodeConfig(mode=DecodeMode.BEAM, beam_width=27, max_len=max_len)
    beam = beam_search(model, state, cfg)

    assert beam.finished
    assert beam.tokens == best
    assert beam.log_prob == pytest.approx(scored[best], abs=1e-9)
    assert set(beam.tokens[1:]) <= set(EMITTABLE)


def test_beam_hypotheses_are_well_formed(model64, batch64):
    state = model64.encode(batch64)
    cfg = DecodeConfig(mode=DecodeMode.BEAM, beam_width=3, max_len=6)
    for row, hyp in enumerate(beam_search_batch(model64, state, cfg)):
        assert hyp.tokens[0] == BOS_ID
        assert hyp.generated <= 6
        assert hyp.finished == (hyp.tokens[-1] == EOS_ID)
        expected = score_sequence(model64, state.select(row), hyp.tokens)
        assert hyp.log_prob == pytest.approx(expected, abs=1e-9)


def test_beam_search_is_single_sentence(model64, batch64):
    with pytest.raises(ContractError):
        beam_search(model64, model64.encode(batch64), DecodeConfig())


def test_thread_pool_matches_serial(model64, batch64):
    state = model64.encode(batch64)
    cfg = DecodeConfig(mode=DecodeMode.BEAM, beam_width=2, max_len=5)
    serial = [h.tokens for h in beam_search_batch(model64, state, cfg, workers=1)]
    pooled = [h.tokens for h in beam_search_batch(model64, state, cfg, workers=3)]
    assert serial == pooled
    serial_greedy = greedy_decode(model64, state, 5, workers=1)
    assert serial_greedy == greedy_decode(model64, state, 5, workers=3)


def test_length_penalty_normalizes_by_generated_tokens():
    hyp = Hypothesis((BOS_ID, 4, 5, EOS_ID), -6.0, True)
    assert hyp.score() == -6.0
    assert hyp.score(1.0) == pytest.approx(-2.0)
    assert Hypothesis((BOS_ID,), -1.0).score(1.0) == -1.0


def test_generate_dispatches_on_mode(model64, batch64):
    tf = model64.generate(batch64, DecodeConfig(mode=DecodeMode.TEACHER_FORCED))
    greedy = model64.generate(batch64, DecodeConfig(mode=DecodeMode.GREEDY, max_len=6))
    beam = model64.generate(batch64, DecodeConfig(mode=DecodeMode.BEAM, beam_width=2, max_len=6))
    for sequences in (tf, greedy, beam):
        assert len(sequences) == batch64.size
        assert all(seq[0] == BOS_ID for seq in sequences)
    with pytest.raises(ContractError, match="maxlen"):
        model64.generate(batch64, DecodeConfig(mode=DecodeMode.GREEDY, max_len=13))


def test_decode_config_validation():
    with pytest.raises(ConfigError, match="greedy"):
        DecodeConfig(mode=DecodeMode.BEAM, beam_width=1)
    assert DecodeConfig(mode="greedy", beam_width=1).mode is DecodeMode.GREEDY


def _beam(model, state, width, max_len=3):
    mode = DecodeMode.GREEDY if width == 1 else DecodeMode.BEAM
    return beam_search(model, state, DecodeConfig(mode=mode, beam_width=width, max_len=max_len))


def _rank(hyp):
    return (not hyp.finished, -hyp.log_prob)


@pytest.mark.parametrize("seed", range(20))
def test_narrow_beams_against_the_exhaustive_optimum(seed):
    model, state = _tiny(seed)
    optimum = max(score_sequence(model, state, seq) for seq in _finished_sequences(3))
    for width in (2, 4, 8):
        beam = _beam(model, state, width)
        assert beam.finished
        assert beam.log_prob <= optimum + 1e-9
    # at depth 2 only four prefixes are live, so width 4 already holds all of them
    for width in (4, 8):
        assert _beam(model, state, width).log_prob == pytest.approx(optimum, abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_best_score_never_drops_as_the_beam_widens(seed):
    model, state = _tiny(seed)
    ranks = [_rank(_beam(model, state, width)) for width in (1, 2, 4, 8)]
    for narrow, wide in zip(ranks, ranks[1:]):
        assert wide[0] <= narrow[0]
        if wide[0] == narrow[0]:
            assert wide[1] <= narrow[1] + 1e-9


@pytest.mark.parametrize("width", [2, 3, 5])
def test_beam_never_ranks_below_greedy(model64, batch64, width):
    state = model64.encode(batch64)
    cfg = DecodeConfig(mode=DecodeMode.BEAM, beam_width=width, max_len=6)
    for row, beam in enumerate(beam_search_batch(model64, state, cfg)):
        greedy = greedy_search(model64, state.select(row), max_len=6)
        assert beam.finished or not greedy.finished
        if greedy.finished:
            assert beam.log_prob >= greedy.log_prob - 1e-9


def test_pool_threads_see_the_callers_tensor_settings():
    def settings(_):
        return T.is_debug_enabled(), T.get_default_dtype(), T.is_grad_enabled()

    with T.debug_mode(True), T.default_dtype(np.float64):
        seen = _map_rows(settings, rows=4, workers=3)
    assert seen == [(True, np.dtype(np.float64), False)] * 4
