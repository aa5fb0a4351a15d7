"""
Model
R1Translator: (Bi)LSTM over word-level EEG features, ReLU projection into
the model dimension, then a BART-shaped encoder-decoder whose output
projection is tied to the word embedding table.

The model owns a ParameterStore and knows which parameter groups are
trainable in each fine-tuning stage.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import decoding
from . import layers as L
from . import tensor as T
from .checkpoint import Checkpoint
from .config import DecodeConfig, DecodeMode, ModelConfig, TrainingStage
from .data import Batch
from .errors import ContractError, ShapeError
from .parameters import ParameterStore
from .tensor import Tensor, get_default_dtype
from .training import cross_entropy

logger = logging.getLogger(__name__)

# Stage 1 trains the new encoder, the projection, both embedding tables and
# transformer encoder layer 0; everything else stays frozen.
STAGE1_TRAINABLE_PREFIXES = (
    "lstm.",
    "proj.",
    "bart.embed.word",
    "bart.embed.pos",
    "bart.encoder.0.",
)


def is_stage1_trainable(name: str) -> bool:
    return name.startswith(STAGE1_TRAINABLE_PREFIXES)


def parameter_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape of each parameter a model built from ``config`` registers (no allocation)."""
    shapes: Dict[str, Tuple[int, ...]] = {}
    d = config.model_dim

    def linear(prefix: str, n_in: int, n_out: int) -> None:
        shapes[f"{prefix}.weight"] = (n_out, n_in)
        shapes[f"{prefix}.bias"] = (n_out,)

    def norm(prefix: str) -> None:
        shapes[f"{prefix}.gamma"] = shapes[f"{prefix}.beta"] = (d,)

    gates = 4 * config.lstm_hidden
    for layer in range(config.lstm_layers):
        in_size = config.feature_dim if layer == 0 else config.lstm_output_dim
        for direction in L.DIRECTIONS[: 1 + config.bidirectional]:
            name = f"lstm.l{layer}.{direction}"
            shapes[f"{name}.w_ih"] = (gates, in_size)
            shapes[f"{name}.w_hh"] = (gates, config.lstm_hidden)
            shapes[f"{name}.bias"] = (gates,)
    linear("proj", config.lstm_output_dim, d)

    shapes["bart.embed.word"] = (config.vocab_size, d)
    shapes["bart.embed.pos"] = (config.maxlen, d)
    stacks = (
        ("encoder", config.enc_layers, ("self_attn",), 2),
        ("decoder", config.dec_layers, ("self_attn", "cross_attn"), 3),
    )
    for stack, depth, attentions, norms in stacks:
        for i in range(depth):
            prefix = f"bart.{stack}.{i}"
            for attention in attentions:
                for part in ("q", "k", "v", "o"):
                    linear(f"{prefix}.{attention}.{part}", d, d)
            for n in range(1, norms + 1):
                norm(f"{prefix}.ln{n}")
            linear(f"{prefix}.ffn.fc1", d, config.ffn_dim)
            linear(f"{prefix}.ffn.fc2", config.ffn_dim, d)
        norm(f"bart.{stack}.norm")
    return shapes


@dataclass
class EncoderState:
    """Transformer-encoder output for a batch plus its padding mask (1 = padded)."""

    memory: Tensor  # [B x T x d]
    pad_mask: np.ndarray  # [B x T]

    @property
    def size(self) -> int:
        return self.memory.shape[0]

    def select(self, row: int, repeats: int = 1) -> "EncoderState":
        """Detached state of one sentence, repeated ``repeats`` times along the batch axis."""
        memory = np.repeat(self.memory.data[row : row + 1], repeats, axis=0)
        pad = np.repeat(self.pad_mask[row : row + 1], repeats, axis=0)
        return EncoderState(Tensor(memory, dtype=memory.dtype), pad)

    def repeat(self, repeats: int) -> "EncoderState":
        if self.size != 1:
            raise ContractError(f"repeat needs a single-sentence state, got batch {self.size}")
        return self.select(0, repeats)


class R1Translator:
    """
    EEG-to-text encoder-decoder.

    Args:
        config: Architecture hyperparameters.
        seed: Seeds parameter initialization.
        dtype: Parameter dtype (defaults to the current default float dtype).
    """

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=None):
        self.config = config
        self.params = ParameterStore()
        dtype = np.dtype(dtype or get_default_dtype())
        rng = np.random.default_rng(seed)
        self.lstm = L.init_lstm(
            self.params, "lstm", config.feature_dim, config.lstm_hidden, config.lstm_layers,
            config.bidirectional, rng, dtype,
        )
        self.proj = L.init_linear(
            self.params, "proj", config.lstm_output_dim, config.model_dim, rng, dtype
        )
        self.bart = L.init_transformer(
            self.params, "bart", config.vocab_size, config.model_dim, config.enc_layers,
            config.dec_layers, config.heads, config.ffn_dim, config.maxlen, rng, dtype,
        )
        logger.debug(f"Initialized R1Translator with {self.params.count()} parameters ({dtype})")

    @property
    def dtype(self) -> np.dtype:
        return self.bart.embed_word.dtype

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "R1Translator":
        dtypes = {a.dtype for a in checkpoint.params.values()}
        model = cls(checkpoint.config, dtype=dtypes.pop() if len(dtypes) == 1 else None)
        checkpoint.restore(model)
        return model

    # -- stages -----------------------------------------------------------

    def set_stage_trainable(self, stage: TrainingStage) -> None:
        stage = TrainingStage(stage)
        if stage == TrainingStage.STAGE1:
            self.params.set_trainable(is_stage1_trainable)
        else:
            self.params.set_trainable(lambda name: True)
        groups = sorted({n.rsplit(".", 1)[0] for n in self.params.trainable_names()})
        logger.debug(f"{stage.value}: trainable groups {groups}")

    # -- forward ----------------------------------------------------------

    def _positions(self, length: int) -> Tensor:
        if length > self.config.maxlen:
            raise ContractError(f"sequence length {length} exceeds maxlen={self.config.maxlen}")
        return L.embedding_lookup(self.bart.embed_pos, np.arange(length))

    def encode(self, batch: Batch) -> EncoderState:
        """Stages A-C up to the transformer encoder output."""
        eeg = np.asarray(batch.eeg)
        if eeg.ndim != 3 or eeg.shape[-1] != self.config.feature_dim:
            raise ShapeError(
                f"eeg batch {eeg.shape} does not end in feature_dim={self.config.feature_dim}"
            )
        pad_mask = np.asarray(batch.inv_mask)
        if not np.array_equal(pad_mask, 1 - np.asarray(batch.attention_mask)):
            raise ContractError("batch masks are inconsistent (inv_mask != 1 - attention_mask)")
        if not np.asarray(batch.attention_mask).any(axis=1).all():
            raise ContractError("every sentence in a batch needs at least one real timestep")

        H = L.bilstm_forward(self.lstm, eeg, pad_mask)
        Z = T.relu(L.linear_forward(self.proj, H))
        x = T.add(Z, self._positions(eeg.shape[1]))
        for layer in self.bart.encoder_layers:
            x = L.encoder_layer_forward(layer, x, pad_mask, self.bart.heads)
        return EncoderState(L.apply_layer_norm(self.bart.encoder_norm, x), pad_mask)

    def decode_logits(self, state: EncoderState, decoder_input: np.ndarray) -> Tensor:
        """
        Teacher-forced decoder pass.

        Args:
            state: Encoder output.
            decoder_input: [B x Ty] ids (starting with BOS).

        Returns:
            [B x Ty x V] logits; position t depends only on ids <= t.
        """
        decoder_input = np.asarray(decoder_input)
        if decoder_input.ndim != 2 or decoder_input.shape[0] != state.size:
            raise ShapeError(
                f"decoder input {decoder_input.shape} does not match batch {state.size}"
            )
        length = decoder_input.shape[1]
        y = T.add(L.embedding_lookup(self.bart.embed_word, decoder_input), self._positions(length))
        causal = L.causal_mask(length)
        for layer in self.bart.decoder_layers:
            y = L.decoder_layer_forward(
                layer, y, state.memory, causal, state.pad_mask, self.bart.heads
            )
        y = L.apply_layer_norm(self.bart.decoder_norm, y)
        return T.matmul(y, T.transpose(self.bart.embed_word))

    def forward_loss(self, batch: Batch) -> Tuple[Tensor, Tensor]:
        """
        Pad-aware cross-entropy of the shifted targets.

        Returns:
            (loss, logits [B x Ty-1 x V]); the decoder reads Y[:, :-1] and is
            scored against Y[:, 1:].

        Raises:
            ContractError: missing targets, targets longer than maxlen + 1, or
                no real target token in the batch.
        """
        if batch.targets is None:
            raise ContractError("forward_loss needs a batch with targets")
        targets = np.asarray(batch.targets)
        if targets.ndim != 2 or targets.shape[1] < 2:
            raise ContractError(f"targets must be [B x Ty] with Ty >= 2, got {targets.shape}")
        state = self.encode(batch)
        logits = self.decode_logits(state, targets[:, :-1])
        return cross_entropy(logits, targets[:, 1:]), logits

    def generate(self, batch: Batch, decode_cfg: Optional[DecodeConfig] = None) -> List[List[int]]:
        """
        Token id sequences for every sentence in ``batch``.

        Free-running modes start from BOS and stop at EOS or after
        ``decode_cfg.max_len`` tokens. Teacher-forced mode returns BOS plus
        the per-position predictions up to the first EOS.
        """
        decode_cfg = decode_cfg or DecodeConfig()
        if decode_cfg.max_len > self.config.maxlen:
            raise ContractError(
                f"max_len={decode_cfg.max_len} exceeds model maxlen={self.config.maxlen}"
            )
        with T.no_grad():
            if decode_cfg.mode == DecodeMode.TEACHER_FORCED:
                return decoding.teacher_forced_sequences(self, batch)
            state = self.encode(batch)
            if decode_cfg.mode == DecodeMode.GREEDY:
                return decoding.greedy_decode(self, state, decode_cfg.max_len, decode_cfg.workers)
            return [h.tokens for h in decoding.beam_search_batch(self, state, decode_cfg)]
