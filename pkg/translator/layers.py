"""
Layers
Neural building blocks on top of the autodiff tensor: linear, embedding,
layer norm, (Bi)LSTM, multi-head attention and pre-norm transformer
encoder/decoder layers.

Parameters live in a ParameterStore; the dataclasses below only hold
references to them, so the layer functions stay pure functions of
(params, inputs).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from . import tensor as T
from .errors import ContractError, ShapeError, VocabIndexError
from .parameters import Parameter, ParameterStore
from .tensor import Tensor

logger = logging.getLogger(__name__)

LSTM_INIT_RANGE = 0.08
EMBEDDING_INIT_STD = 0.02
LAYER_NORM_EPS = 1e-5
DIRECTIONS = ("fwd", "bwd")


def _normal(rng: np.random.Generator, shape, std: float, dtype) -> np.ndarray:
    return rng.normal(0.0, std, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# Linear / embedding / layer norm
# ---------------------------------------------------------------------------


@dataclass
class LinearParams:
    weight: Parameter  # [out x in]
    bias: Parameter  # [out]

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]


def init_linear(
    store: ParameterStore, prefix: str, in_features: int, out_features: int, rng, dtype
) -> LinearParams:
    """Scaled-normal weights (std = 1/sqrt(fan_in)), zero bias."""
    weight = _normal(rng, (out_features, in_features), 1.0 / np.sqrt(in_features), dtype)
    return LinearParams(
        store.register(f"{prefix}.weight", weight),
        store.register(f"{prefix}.bias", np.zeros(out_features, dtype=dtype)),
    )


def linear_forward(p: LinearParams, x: Tensor) -> Tensor:
    """y = x Wᵀ + bias over the trailing axis."""
    x = T.as_tensor(x, p.weight)
    if x.shape[-1] != p.in_features:
        raise ShapeError(
            f"linear: input {x.shape} does not end in {p.in_features} (weight {p.weight.shape})"
        )
    if x.ndim == 1:
        return T.reshape(linear_forward(p, T.reshape(x, (1, -1))), (p.out_features,))
    return T.add(T.matmul(x, T.transpose(p.weight)), p.bias)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """
    Gather rows of ``table`` for integer ``ids``.

    Raises:
        VocabIndexError: naming the first offending id and V.
    """
    ids = np.asarray(ids)
    vocab = table.shape[0]
    bad = (ids < 0) | (ids >= vocab)
    if bad.any():
        raise VocabIndexError(f"token id {int(ids[bad].reshape(-1)[0])} out of range for V={vocab}")

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, ids, g)
        return (grad,)

    return T.make_op(table.data[ids], (table,), backward, "embedding")


@dataclass
class LayerNormParams:
    gamma: Parameter
    beta: Parameter


def init_layer_norm(store: ParameterStore, prefix: str, dim: int, dtype) -> LayerNormParams:
    return LayerNormParams(
        store.register(f"{prefix}.gamma", np.ones(dim, dtype=dtype)),
        store.register(f"{prefix}.beta", np.zeros(dim, dtype=dtype)),
    )


def layer_norm(x: Tensor, gamma, beta, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each vector over the last axis to zero mean / unit variance, then scale, shift."""
    gamma = T.as_tensor(gamma, x)
    beta = T.as_tensor(beta, x)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv

    def backward(g):
        dxhat = g * gamma.data
        projection = xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - projection)
        lead = tuple(range(g.ndim - 1))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    data = (xhat * gamma.data + beta.data).astype(x.dtype)
    return T.make_op(data, (x, gamma, beta), backward, "layer_norm")


def apply_layer_norm(p: LayerNormParams, x: Tensor) -> Tensor:
    return layer_norm(x, p.gamma, p.beta)


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------


@dataclass
class LstmCellParams:
    w_ih: Parameter  # [4h x in], gate order i, f, g, o
    w_hh: Parameter  # [4h x h]
    bias: Parameter  # [4h]

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]


@dataclass
class LstmParams:
    cells: List[Dict[str, LstmCellParams]]
    hidden: int
    bidirectional: int

    @property
    def num_layers(self) -> int:
        return len(self.cells)

    @property
    def output_size(self) -> int:
        """h' = h (1 + b)."""
        return self.hidden * (1 + self.bidirectional)


def init_lstm(
    store: ParameterStore,
    prefix: str,
    input_size: int,
    hidden: int,
    num_layers: int,
    bidirectional: int,
    rng,
    dtype,
) -> LstmParams:
    """Stacked (Bi)LSTM; weights uniform(-0.08, 0.08), biases zero. Layer l>0 reads h' features."""
    cells = []
    directions = DIRECTIONS[: 1 + bidirectional]

    def uniform(shape):
        return rng.uniform(-LSTM_INIT_RANGE, LSTM_INIT_RANGE, shape).astype(dtype)

    for layer in range(num_layers):
        in_size = input_size if layer == 0 else hidden * (1 + bidirectional)
        layer_cells = {}
        for direction in directions:
            name = f"{prefix}.l{layer}.{direction}"
            layer_cells[direction] = LstmCellParams(
                store.register(f"{name}.w_ih", uniform((4 * hidden, in_size))),
                store.register(f"{name}.w_hh", uniform((4 * hidden, hidden))),
                store.register(f"{name}.bias", np.zeros(4 * hidden, dtype=dtype)),
            )
        cells.append(layer_cells)
    return LstmParams(cells, hidden, bidirectional)


def _lstm_cell(x_t, h_prev, c_prev, w_ih_t, w_hh_t, bias, hidden: int) -> Tuple[Tensor, Tensor]:
    gates = T.add(T.add(T.matmul(x_t, w_ih_t), T.matmul(h_prev, w_hh_t)), bias)
    i = T.sigmoid(gates[:, 0:hidden])
    f = T.sigmoid(gates[:, hidden : 2 * hidden])
    g = T.tanh(gates[:, 2 * hidden : 3 * hidden])
    o = T.sigmoid(gates[:, 3 * hidden : 4 * hidden])
    c_t = T.add(T.mul(f, c_prev), T.mul(i, g))
    h_t = T.mul(o, T.tanh(c_t))
    return h_t, c_t


def lstm_step(p: LstmCellParams, x_t, h_prev, c_prev) -> Tuple[Tensor, Tensor]:
    """
    One LSTM time step for a batch.

    Args:
        p: Cell parameters of one (layer, direction).
        x_t: [B x in] input.
        h_prev, c_prev: [B x h] previous state.

    Returns:
        (h_t, c_t), each [B x h].
    """
    x_t, h_prev, c_prev = (T.as_tensor(v, p.w_ih) for v in (x_t, h_prev, c_prev))
    if x_t.ndim != 2 or x_t.shape[1] != p.w_ih.shape[1]:
        raise ShapeError(f"lstm_step: input {x_t.shape} does not match w_ih {p.w_ih.shape}")
    if h_prev.shape != (x_t.shape[0], p.hidden) or c_prev.shape != h_prev.shape:
        raise ShapeError(
            f"lstm_step: state shapes {h_prev.shape}/{c_prev.shape}, "
            f"expected {(x_t.shape[0], p.hidden)}"
        )
    w_ih_t, w_hh_t = T.transpose(p.w_ih), T.transpose(p.w_hh)
    return _lstm_cell(x_t, h_prev, c_prev, w_ih_t, w_hh_t, p.bias, p.hidden)


def bilstm_forward(p: LstmParams, E, pad_mask: np.ndarray) -> Tensor:
    """
    Run the stacked (Bi)LSTM over a padded batch.

    Padded steps (pad_mask == 1) carry the state through unchanged and emit
    zero output rows, so real positions do not depend on how much padding
    follows them.

    Args:
        p: LSTM parameters.
        E: [B x T x f] features.
        pad_mask: [B x T] inverted attention mask, 1 on padded steps.

    Returns:
        H: [B x T x h(1+b)].
    """
    first = p.cells[0][DIRECTIONS[0]]
    x = T.as_tensor(E, first.w_ih)
    if x.ndim != 3:
        raise ShapeError(f"bilstm: expected [B x T x f] input, got {x.shape}")
    batch, steps, features = x.shape
    if steps == 0:
        raise ContractError("bilstm: sequence length T must be at least 1")
    if features != first.w_ih.shape[1]:
        raise ShapeError(f"bilstm: feature dim {features} does not match w_ih {first.w_ih.shape}")
    pad_mask = np.asarray(pad_mask)
    if pad_mask.shape != (batch, steps):
        raise ShapeError(f"bilstm: pad mask {pad_mask.shape} does not match input {(batch, steps)}")
    keep = (1 - pad_mask).astype(x.dtype)

    for layer_cells in p.cells:
        x_steps = [x[:, t] for t in range(steps)]
        outputs = []
        for direction, cell in layer_cells.items():
            w_ih_t, w_hh_t = T.transpose(cell.w_ih), T.transpose(cell.w_hh)
            h = T.as_tensor(np.zeros((batch, p.hidden)), cell.w_ih)
            c = h
            rows: List[Optional[Tensor]] = [None] * steps
            order = range(steps) if direction == "fwd" else range(steps - 1, -1, -1)
            for t in order:
                h_new, c_new = _lstm_cell(x_steps[t], h, c, w_ih_t, w_hh_t, cell.bias, p.hidden)
                m = keep[:, t : t + 1]
                h = T.add(T.mul(h_new, m), T.mul(h, 1 - m))
                c = T.add(T.mul(c_new, m), T.mul(c, 1 - m))
                rows[t] = T.mul(h, m)
            outputs.append(T.stack(rows, axis=1))
        x = T.concat(outputs, axis=-1) if len(outputs) > 1 else outputs[0]
    return x


# ---------------------------------------------------------------------------
# Attention and transformer layers
# ---------------------------------------------------------------------------


@dataclass
class AttentionParams:
    q: LinearParams
    k: LinearParams
    v: LinearParams
    o: LinearParams


def init_attention(store: ParameterStore, prefix: str, dim: int, rng, dtype) -> AttentionParams:
    parts = ("q", "k", "v", "o")
    return AttentionParams(
        *(init_linear(store, f"{prefix}.{part}", dim, dim, rng, dtype) for part in parts)
    )


def causal_mask(length: int) -> np.ndarray:
    """[T x T] boolean mask, True where query t may see key s (s <= t)."""
    return np.tril(np.ones((length, length), dtype=bool))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    batch, steps, dim = x.shape
    return T.transpose(T.reshape(x, (batch, steps, heads, dim // heads)), (0, 2, 1, 3))


def multi_head_attention(
    p: AttentionParams,
    q,
    k,
    v,
    mask: Optional[np.ndarray],
    heads: int,
    return_weights: bool = False,
) -> Union[Tensor, Tuple[Tensor, np.ndarray]]:
    """
    Scaled dot-product attention over ``heads`` heads.

    Args:
        p: Q/K/V/output projections.
        q: [B x Tq x d] queries; k, v: [B x Tk x d].
        mask: Boolean array broadcastable to [B x Tq x Tk], True = may attend.
            Disallowed keys get a -inf score before the softmax.
        heads: Head count; must divide d.
        return_weights: Also return the [B x heads x Tq x Tk] attention weights.

    Raises:
        ContractError: if heads does not divide d, or a query row has no
            allowed key.
    """
    q, k, v = (T.as_tensor(t, p.q.weight) for t in (q, k, v))
    batch, q_len, dim = q.shape
    k_len = k.shape[1]
    if dim % heads:
        raise ContractError(f"attention: {heads} heads do not divide d={dim}")
    if k.shape != v.shape or k.shape[0] != batch or k.shape[2] != dim:
        raise ShapeError(f"attention: query {q.shape}, key {k.shape}, value {v.shape} disagree")

    head_dim = dim // heads
    Q = _split_heads(linear_forward(p.q, q), heads)
    K = _split_heads(linear_forward(p.k, k), heads)
    V = _split_heads(linear_forward(p.v, v), heads)
    scores = T.mul(T.matmul(Q, T.transpose(K, (0, 1, 3, 2))), 1.0 / np.sqrt(head_dim))

    if mask is not None:
        try:
            allowed = np.broadcast_to(np.asarray(mask, dtype=bool), (batch, q_len, k_len))
        except ValueError:
            raise ShapeError(
                f"attention: mask {np.shape(mask)} not broadcastable to {(batch, q_len, k_len)}"
            ) from None
        if not allowed.any(axis=-1).all():
            raise ContractError("attention: mask disables every key for some query row")
        scores = T.masked_fill(scores, ~allowed[:, None, :, :], -np.inf)

    weights = T.softmax(scores, axis=-1)
    context = T.matmul(weights, V)
    context = T.reshape(T.transpose(context, (0, 2, 1, 3)), (batch, q_len, dim))
    out = linear_forward(p.o, context)
    if return_weights:
        return out, weights.data
    return out


@dataclass
class FeedForwardParams:
    fc1: LinearParams
    fc2: LinearParams


def feed_forward(p: FeedForwardParams, x: Tensor) -> Tensor:
    return linear_forward(p.fc2, T.relu(linear_forward(p.fc1, x)))


@dataclass
class EncoderLayerParams:
    self_attn: AttentionParams
    ln1: LayerNormParams
    ffn: FeedForwardParams
    ln2: LayerNormParams


@dataclass
class DecoderLayerParams:
    self_attn: AttentionParams
    cross_attn: AttentionParams
    ln1: LayerNormParams
    ln2: LayerNormParams
    ln3: LayerNormParams
    ffn: FeedForwardParams


def _init_ffn(store, prefix, dim, ffn_dim, rng, dtype) -> FeedForwardParams:
    return FeedForwardParams(
        init_linear(store, f"{prefix}.fc1", dim, ffn_dim, rng, dtype),
        init_linear(store, f"{prefix}.fc2", ffn_dim, dim, rng, dtype),
    )


def init_encoder_layer(
    store, prefix: str, dim: int, ffn_dim: int, rng, dtype
) -> EncoderLayerParams:
    return EncoderLayerParams(
        self_attn=init_attention(store, f"{prefix}.self_attn", dim, rng, dtype),
        ln1=init_layer_norm(store, f"{prefix}.ln1", dim, dtype),
        ffn=_init_ffn(store, f"{prefix}.ffn", dim, ffn_dim, rng, dtype),
        ln2=init_layer_norm(store, f"{prefix}.ln2", dim, dtype),
    )


def init_decoder_layer(
    store, prefix: str, dim: int, ffn_dim: int, rng, dtype
) -> DecoderLayerParams:
    return DecoderLayerParams(
        self_attn=init_attention(store, f"{prefix}.self_attn", dim, rng, dtype),
        cross_attn=init_attention(store, f"{prefix}.cross_attn", dim, rng, dtype),
        ln1=init_layer_norm(store, f"{prefix}.ln1", dim, dtype),
        ln2=init_layer_norm(store, f"{prefix}.ln2", dim, dtype),
        ln3=init_layer_norm(store, f"{prefix}.ln3", dim, dtype),
        ffn=_init_ffn(store, f"{prefix}.ffn", dim, ffn_dim, rng, dtype),
    )


def encoder_layer_forward(
    p: EncoderLayerParams, x: Tensor, pad_mask: np.ndarray, heads: int
) -> Tensor:
    """
    Pre-norm encoder layer: x + SelfAttn(LN(x)), then x + FFN(LN(x)).

    Args:
        x: [B x T x d].
        pad_mask: [B x T], 1 on padded positions (never attended to as keys).
    """
    if x.ndim != 3 or np.shape(pad_mask) != x.shape[:2]:
        raise ShapeError(
            f"encoder layer: input {x.shape} and pad mask {np.shape(pad_mask)} disagree"
        )
    key_mask = ~np.asarray(pad_mask, dtype=bool)[:, None, :]
    h = apply_layer_norm(p.ln1, x)
    x = T.add(x, multi_head_attention(p.self_attn, h, h, h, key_mask, heads))
    return T.add(x, feed_forward(p.ffn, apply_layer_norm(p.ln2, x)))


def decoder_layer_forward(
    p: DecoderLayerParams,
    y: Tensor,
    enc_out: Tensor,
    causal: np.ndarray,
    pad_mask: np.ndarray,
    heads: int,
    target_pad_mask: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Pre-norm decoder layer: causal self-attention, cross-attention over the
    encoder output, then feed-forward; all residual.

    Args:
        y: [B x Ty x d] decoder states.
        enc_out: [B x T x d] encoder output.
        causal: [Ty x Ty] boolean causal mask.
        pad_mask: [B x T] encoder padding (1 = padded).
        target_pad_mask: optional [B x Ty] decoder-side padding (1 = padded).
    """
    if y.ndim != 3 or enc_out.ndim != 3 or y.shape[::2] != enc_out.shape[::2]:
        raise ShapeError(
            f"decoder layer: target {y.shape} and encoder output {enc_out.shape} disagree"
        )
    if np.shape(pad_mask) != enc_out.shape[:2]:
        raise ShapeError(
            f"decoder layer: pad mask {np.shape(pad_mask)} "
            f"does not match encoder {enc_out.shape[:2]}"
        )
    self_mask = np.asarray(causal, dtype=bool)[None, :, :]
    if target_pad_mask is not None:
        self_mask = self_mask & ~np.asarray(target_pad_mask, dtype=bool)[:, None, :]
        # a padded query still needs one visible key; its output is never scored
        self_mask = self_mask | np.eye(y.shape[1], dtype=bool)[None]
    cross_mask = ~np.asarray(pad_mask, dtype=bool)[:, None, :]

    h = apply_layer_norm(p.ln1, y)
    y = T.add(y, multi_head_attention(p.self_attn, h, h, h, self_mask, heads))
    h = apply_layer_norm(p.ln2, y)
    y = T.add(y, multi_head_attention(p.cross_attn, h, enc_out, enc_out, cross_mask, heads))
    return T.add(y, feed_forward(p.ffn, apply_layer_norm(p.ln3, y)))


# ---------------------------------------------------------------------------
# BART-shaped transformer
# ---------------------------------------------------------------------------


@dataclass
class TransformerParams:
    embed_word: Parameter  # [V x d], also the tied output projection
    embed_pos: Parameter  # [maxlen x d]
    encoder_layers: List[EncoderLayerParams]
    decoder_layers: List[DecoderLayerParams]
    encoder_norm: LayerNormParams
    decoder_norm: LayerNormParams
    heads: int

    @property
    def dim(self) -> int:
        return self.embed_word.shape[1]

    @property
    def maxlen(self) -> int:
        return self.embed_pos.shape[0]


def init_transformer(
    store: ParameterStore,
    prefix: str,
    vocab_size: int,
    dim: int,
    enc_layers: int,
    dec_layers: int,
    heads: int,
    ffn_dim: int,
    maxlen: int,
    rng,
    dtype,
) -> TransformerParams:
    if dim % heads:
        raise ContractError(f"transformer: {heads} heads do not divide d={dim}")
    embed_word = store.register(
        f"{prefix}.embed.word", _normal(rng, (vocab_size, dim), EMBEDDING_INIT_STD, dtype)
    )
    embed_pos = store.register(
        f"{prefix}.embed.pos", _normal(rng, (maxlen, dim), EMBEDDING_INIT_STD, dtype)
    )
    encoder = [
        init_encoder_layer(store, f"{prefix}.encoder.{i}", dim, ffn_dim, rng, dtype)
        for i in range(enc_layers)
    ]
    encoder_norm = init_layer_norm(store, f"{prefix}.encoder.norm", dim, dtype)
    decoder = [
        init_decoder_layer(store, f"{prefix}.decoder.{i}", dim, ffn_dim, rng, dtype)
        for i in range(dec_layers)
    ]
    decoder_norm = init_layer_norm(store, f"{prefix}.decoder.norm", dim, dtype)
    return TransformerParams(
        embed_word, embed_pos, encoder, decoder, encoder_norm, decoder_norm, heads
    )
