"""
Data
EEG sentence records in a ZuCo-shaped JSON-lines format, per-word
normalization, text-disjoint splits, the word vocabulary, padded batches,
and the synthetic / noise-control generators.

JSONL schema, one record per line:
    {"sentence_id": str, "text": str, "words": [{"token": str, "eeg": [f floats]}]}
"""

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .config import SynthConfig
from .errors import ContractError, ParseError, SchemaError, TruncationError
from .tensor import get_default_dtype

logger = logging.getLogger(__name__)

BOS_ID, EOS_ID, PAD_ID, UNK_ID = 0, 1, 2, 3
SPECIAL_TOKENS = ("<s>", "</s>", "<pad>", "<unk>")
DEFAULT_FEATURE_DIM = 840


@dataclass(frozen=True)
class EegWord:
    token: str
    eeg: np.ndarray  # [f]


@dataclass(frozen=True)
class EegSentenceRecord:
    """One sentence: ordered word-level feature vectors plus the target text."""

    sentence_id: str
    text: str
    words: Tuple[EegWord, ...]

    @property
    def length(self) -> int:
        return len(self.words)

    @property
    def features(self) -> np.ndarray:
        """[T x f] stacked word features."""
        return np.stack([w.eeg for w in self.words])

    def with_features(self, features: np.ndarray) -> "EegSentenceRecord":
        words = tuple(EegWord(w.token, np.asarray(v)) for w, v in zip(self.words, features))
        return EegSentenceRecord(self.sentence_id, self.text, words)


# ---------------------------------------------------------------------------
# Loading and normalization
# ---------------------------------------------------------------------------


def normalize_word(vector: np.ndarray) -> np.ndarray:
    """z-score a word vector over its own entries; a constant vector maps to zeros."""
    vector = np.asarray(vector, dtype=np.float64)
    std = vector.std()
    return (vector - vector.mean()) / (std if std > 0 else 1.0)


def normalize_records(records: Iterable[EegSentenceRecord]) -> List[EegSentenceRecord]:
    return [r.with_features(np.stack([normalize_word(w.eeg) for w in r.words])) for r in records]


def _parse_line(
    line: str, lineno: int, source: str, feature_dim: int
) -> Optional[EegSentenceRecord]:
    """Parse one JSONL line; returns None when the record has missing or non-finite features."""
    where = f"{source}:{lineno}"
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(f"{where}: invalid JSON ({e.msg})") from None
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected a JSON object")
    sentence_id, text, words = obj.get("sentence_id"), obj.get("text"), obj.get("words")
    if not isinstance(sentence_id, str) or not isinstance(text, str):
        raise ParseError(f"{where}: 'sentence_id' and 'text' must be strings")
    if not isinstance(words, list) or not words:
        raise ParseError(f"{where}: 'words' must be a non-empty list")

    parsed = []
    usable = True
    for i, word in enumerate(words):
        if not isinstance(word, dict) or not isinstance(word.get("token"), str):
            raise ParseError(f"{where}: word {i} needs a string 'token'")
        eeg = word.get("eeg")
        if eeg is None:
            usable = False
            continue
        if not isinstance(eeg, list):
            raise ParseError(f"{where}: word {i} 'eeg' must be a list")
        if len(eeg) != feature_dim:
            raise SchemaError(f"{where}: word {i} has {len(eeg)} features, expected {feature_dim}")
        try:
            vector = np.array([np.nan if v is None else v for v in eeg], dtype=np.float64)
        except (TypeError, ValueError):
            raise ParseError(f"{where}: word {i} 'eeg' holds non-numeric values") from None
        if not np.all(np.isfinite(vector)):
            usable = False
            continue
        parsed.append(EegWord(word["token"], vector))
    if not usable:
        return None
    return EegSentenceRecord(sentence_id, text, tuple(parsed))


def read_records(
    path: Union[str, Path], feature_dim: int = DEFAULT_FEATURE_DIM
) -> Tuple[List[EegSentenceRecord], int]:
    """
    Read raw records from a JSONL file.

    Returns:
        (records, excluded) where excluded counts sentences dropped for
        missing or non-finite feature values.

    Raises:
        FileNotFoundError: if the file does not exist.
        ParseError: malformed line (with line number).
        SchemaError: wrong feature dimension.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    records: List[EegSentenceRecord] = []
    excluded = 0
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            record = _parse_line(line, lineno, str(path), feature_dim)
            if record is None:
                excluded += 1
            else:
                records.append(record)
    return records, excluded


def load_dataset(
    path: Union[str, Path], feature_dim: int = DEFAULT_FEATURE_DIM
) -> List[EegSentenceRecord]:
    """Read a JSONL dataset, drop sentences with invalid features and z-score every word vector."""
    records, excluded = read_records(path, feature_dim)
    logger.info(
        f"Loaded {len(records)} sentences from {path} "
        f"({excluded} excluded for missing/invalid values)"
    )
    return normalize_records(records)


def load_datasets(
    paths: Sequence[Union[str, Path]], feature_dim: int = DEFAULT_FEATURE_DIM
) -> List[EegSentenceRecord]:
    """Concatenate several datasets; sentence ids must stay unique."""
    combined: List[EegSentenceRecord] = []
    seen: Dict[str, str] = {}
    for path in paths:
        for record in load_dataset(path, feature_dim):
            if record.sentence_id in seen:
                raise SchemaError(
                    f"duplicate sentence_id '{record.sentence_id}' in {path} "
                    f"(first seen in {seen[record.sentence_id]})"
                )
            seen[record.sentence_id] = str(path)
            combined.append(record)
    return combined


def write_records(records: Iterable[EegSentenceRecord], path: Union[str, Path]) -> Path:
    """Write records in the JSONL schema (used for synthetic datasets and tests)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            obj = {
                "sentence_id": r.sentence_id,
                "text": r.text,
                "words": [{"token": w.token, "eeg": [float(v) for v in w.eeg]} for w in r.words],
            }
            f.write(json.dumps(obj) + "\n")
    return path


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


class DatasetSplit(NamedTuple):
    train: List[EegSentenceRecord]
    dev: List[EegSentenceRecord]
    test: List[EegSentenceRecord]

    def manifest(self) -> Dict[str, List[str]]:
        return {name: [r.sentence_id for r in part] for name, part in self._asdict().items()}


def _half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_dataset(records: Sequence[EegSentenceRecord], seed: int) -> DatasetSplit:
    """
    80/10/10 split by unique sentence text.

    All records sharing a text land in the same partition, so no sentence is
    seen in training and evaluated later.

    Raises:
        ContractError: fewer than 10 distinct texts.
    """
    texts = sorted({r.text for r in records})
    if len(texts) < 10:
        raise ContractError(f"split needs at least 10 distinct sentences, got {len(texts)}")
    order = np.random.default_rng(seed).permutation(len(texts))
    n_dev = n_test = _half_up(0.1 * len(texts))
    n_train = len(texts) - n_dev - n_test
    assignment = {}
    for rank, idx in enumerate(order):
        if rank < n_train:
            assignment[texts[idx]] = "train"
        else:
            assignment[texts[idx]] = "dev" if rank < n_train + n_dev else "test"
    parts: Dict[str, List[EegSentenceRecord]] = {"train": [], "dev": [], "test": []}
    for r in records:
        parts[assignment[r.text]].append(r)
    logger.info(
        f"Split {len(texts)} sentences: train={n_train}, dev={n_dev}, test={n_test} "
        f"({len(parts['train'])}/{len(parts['dev'])}/{len(parts['test'])} records)"
    )
    return DatasetSplit(parts["train"], parts["dev"], parts["test"])


def apply_manifest(
    records: Sequence[EegSentenceRecord], manifest: Dict[str, List[str]]
) -> DatasetSplit:
    """Rebuild a split from a saved manifest of sentence ids."""
    by_id = {r.sentence_id: r for r in records}
    missing = [sid for ids in manifest.values() for sid in ids if sid not in by_id]
    if missing:
        raise SchemaError(f"split manifest names unknown sentence_id '{missing[0]}'")
    parts = ([by_id[sid] for sid in manifest.get(name, [])] for name in ("train", "dev", "test"))
    return DatasetSplit(*parts)


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


def text_tokens(text: str) -> List[str]:
    """Word-level target tokenization."""
    return text.split()


class Vocabulary:
    """
    Token <-> id bijection with reserved BOS=0, EOS=1, PAD=2, UNK=3.

    Args:
        tokens: Non-reserved tokens in id order (ids start at 4).
    """

    def __init__(self, tokens: Sequence[str]):
        self._itos: List[str] = list(SPECIAL_TOKENS)
        for token in tokens:
            if token in SPECIAL_TOKENS:
                raise ContractError(f"token '{token}' collides with a reserved symbol")
        self._itos.extend(tokens)
        self._stoi = {t: i for i, t in enumerate(self._itos)}
        if len(self._stoi) != len(self._itos):
            raise ContractError("vocabulary tokens must be unique")

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    @property
    def tokens(self) -> List[str]:
        return list(self._itos)

    def token_to_id(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def id_to_token(self, idx: int) -> str:
        return self._itos[idx]

    def encode(self, text: str) -> List[int]:
        return [self.token_to_id(t) for t in text_tokens(text)]

    def decode(self, ids: Iterable[int]) -> str:
        """Render ids as text: stop at EOS, skip BOS and PAD."""
        words = []
        for idx in ids:
            idx = int(idx)
            if idx == EOS_ID:
                break
            if idx in (BOS_ID, PAD_ID):
                continue
            words.append(self._itos[idx])
        return " ".join(words)

    def to_json(self) -> str:
        return json.dumps({"tokens": self._itos[len(SPECIAL_TOKENS):]}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        try:
            return cls(json.loads(text)["tokens"])
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise ParseError(f"invalid vocabulary file: {e}") from None

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"vocabulary not found: {path}")
        return cls.from_json(path.read_text(encoding="utf-8"))


def build_vocab(texts: Iterable[str], min_count: int = 1) -> Vocabulary:
    """
    Frequency-sorted vocabulary (ties alphabetical); tokens below ``min_count`` map to UNK.

    Raises:
        ContractError: no tokens at all.
    """
    counts = Counter(token for text in texts for token in text_tokens(text))
    if not counts:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
    logger.info(f"Vocabulary: {len(kept)} tokens kept of {len(counts)} (min_count={min_count})")
    return Vocabulary(kept)


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------


@dataclass
class Batch:
    """
    Padded batch.

    eeg: [B x T x f] with zero rows at padding; attention_mask: [B x T], 1 on
    real timesteps; inv_mask = 1 - attention_mask; targets: [B x Ty] ids wrapped
    BOS ... EOS and padded with PAD (None for unlabeled batches).
    """

    eeg: np.ndarray
    attention_mask: np.ndarray
    inv_mask: np.ndarray
    targets: Optional[np.ndarray]
    sentence_ids: List[str] = field(default_factory=list)
    texts: List[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.eeg.shape[0]

    @property
    def lengths(self) -> np.ndarray:
        return self.attention_mask.sum(axis=1).astype(np.int64)

    def unpad(self) -> List[np.ndarray]:
        """Per-sentence [T_i x f] feature arrays."""
        return [self.eeg[i, :n] for i, n in enumerate(self.lengths)]

    def select(self, rows: Sequence[int]) -> "Batch":
        rows = list(rows)
        return Batch(
            self.eeg[rows],
            self.attention_mask[rows],
            self.inv_mask[rows],
            None if self.targets is None else self.targets[rows],
            [self.sentence_ids[i] for i in rows] if self.sentence_ids else [],
            [self.texts[i] for i in rows] if self.texts else [],
        )


def build_batch(
    records: Sequence[EegSentenceRecord],
    vocab: Vocabulary,
    max_T: int,
    max_Ty: int,
    dtype=None,
) -> Batch:
    """
    Pad records into one batch.

    Args:
        records: At least one record.
        vocab: Target vocabulary.
        max_T: Longest allowed EEG sequence (words).
        max_Ty: Longest allowed target including BOS and EOS.
        dtype: Feature dtype (default: the current default float dtype).

    Raises:
        TruncationError: a sentence exceeds max_T or max_Ty.
    """
    if not records:
        raise ContractError("cannot build an empty batch")
    dtype = np.dtype(dtype or get_default_dtype())
    targets = []
    for r in records:
        if r.length > max_T:
            raise TruncationError(f"sentence '{r.sentence_id}' has {r.length} words, max_T={max_T}")
        ids = [BOS_ID] + vocab.encode(r.text) + [EOS_ID]
        if len(ids) > max_Ty:
            raise TruncationError(
                f"sentence '{r.sentence_id}' target has {len(ids)} ids, max_Ty={max_Ty}"
            )
        targets.append(ids)

    batch_size = len(records)
    steps = max(r.length for r in records)
    feature_dim = records[0].words[0].eeg.shape[0]
    eeg = np.zeros((batch_size, steps, feature_dim), dtype=dtype)
    mask = np.zeros((batch_size, steps), dtype=np.int64)
    y = np.full((batch_size, max(len(t) for t in targets)), PAD_ID, dtype=np.int64)
    for i, (r, ids) in enumerate(zip(records, targets)):
        feats = r.features
        if feats.shape[1] != feature_dim:
            raise SchemaError(
                f"sentence '{r.sentence_id}' has feature dim {feats.shape[1]}, "
                f"batch uses {feature_dim}"
            )
        eeg[i, : r.length] = feats
        mask[i, : r.length] = 1
        y[i, : len(ids)] = ids
    sentence_ids = [r.sentence_id for r in records]
    return Batch(eeg, mask, 1 - mask, y, sentence_ids, [r.text for r in records])


class BatchLoader:
    """
    Re-iterable batch source over a fixed record list.

    With ``shuffle`` every iteration draws a fresh permutation from the
    loader's own generator, so a run is reproducible from ``seed`` and the
    generator state can be checkpointed. The last partial batch is kept.
    """

    def __init__(
        self,
        records: Sequence[EegSentenceRecord],
        vocab: Vocabulary,
        batch_size: int,
        max_T: int,
        max_Ty: int,
        shuffle: bool = False,
        seed: int = 0,
        dtype=None,
    ):
        if batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {batch_size}")
        self.records = list(records)
        self.vocab = vocab
        self.batch_size = batch_size
        self.max_T = max_T
        self.max_Ty = max_Ty
        self.shuffle = shuffle
        self.rng = np.random.default_rng(seed)
        self.dtype = dtype

    def __len__(self) -> int:
        return (len(self.records) + self.batch_size - 1) // self.batch_size

    def __iter__(self) -> Iterator[Batch]:
        n = len(self.records)
        order = self.rng.permutation(n) if self.shuffle else np.arange(n)
        for start in range(0, len(order), self.batch_size):
            chunk = [self.records[i] for i in order[start : start + self.batch_size]]
            yield build_batch(chunk, self.vocab, self.max_T, self.max_Ty, self.dtype)

    def rng_state(self) -> str:
        return json.dumps(self.rng.bit_generator.state, sort_keys=True)


# ---------------------------------------------------------------------------
# Synthetic data and the noise control
# ---------------------------------------------------------------------------


def synthetic_token(i: int) -> str:
    return f"w{i}"


def synthesize_dataset(cfg: SynthConfig) -> List[EegSentenceRecord]:
    """
    Learnable-by-construction dataset.

    A secret embedding R[vocab x f] is drawn once; word t of a sentence gets
    R[token_t] + N(0, noise_std^2) and the target text is the token sequence.
    """
    rng = np.random.default_rng(cfg.seed)
    secret = rng.normal(0.0, 1.0, size=(cfg.vocab_size, cfg.feature_dim))
    records = []
    for n in range(cfg.n_sentences):
        length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        ids = rng.integers(0, cfg.vocab_size, size=length)
        features = secret[ids]
        if cfg.noise_std > 0:
            features = features + rng.normal(0.0, cfg.noise_std, size=(length, cfg.feature_dim))
        tokens = [synthetic_token(int(i)) for i in ids]
        words = tuple(EegWord(tok, features[t]) for t, tok in enumerate(tokens))
        records.append(EegSentenceRecord(f"synth-{n:05d}", " ".join(tokens), words))
    logger.info(
        f"Synthesized {len(records)} sentences (vocab={cfg.vocab_size}, "
        f"len={cfg.min_len}-{cfg.max_len}, noise_std={cfg.noise_std}, seed={cfg.seed})"
    )
    return records


def noise_control(records: Sequence[EegSentenceRecord], seed: int) -> List[EegSentenceRecord]:
    """
    Permute feature vectors across all words of all sentences, keeping texts fixed.

    Marginal feature statistics survive; the feature -> token mapping does not.
    """
    if not records:
        return []
    pool = np.concatenate([r.features for r in records], axis=0)
    shuffled = pool[np.random.default_rng(seed).permutation(len(pool))]
    out, start = [], 0
    for r in records:
        out.append(r.with_features(shuffled[start : start + r.length]))
        start += r.length
    logger.info(f"Noise control: permuted {len(pool)} word vectors across {len(records)} sentences")
    return out
