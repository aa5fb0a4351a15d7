"""
Shared fixtures: a toy-sized model configuration, a matching vocabulary and
small synthetic batches.
"""

import importlib.util
from pathlib import Path

import numpy as np
import pytest

from translator.config import ModelConfig, SynthConfig
from translator.data import Vocabulary, build_batch, synthesize_dataset, synthetic_token
from translator.model import R1Translator

ROOT = Path(__file__).resolve().parent.parent

# f=8, h=4, b=1, L=2, d=8, V=10, 2+2 layers, 2 heads, ffn=16, maxlen=12
TOY_CONFIG = ModelConfig(
    vocab_size=10, feature_dim=8, lstm_hidden=4, bidirectional=1, lstm_layers=2,
    model_dim=8, enc_layers=2, dec_layers=2, heads=2, ffn_dim=16, maxlen=12,
)
TOY_WORDS = 6  # 4 reserved ids + 6 words = V


def toy_vocab() -> Vocabulary:
    return Vocabulary([synthetic_token(i) for i in range(TOY_WORDS)])


def toy_records(n: int = 4, seed: int = 0, min_len: int = 2, max_len: int = 4):
    cfg = SynthConfig(vocab_size=TOY_WORDS, n_sentences=n, min_len=min_len, max_len=max_len,
                      noise_std=0.1, feature_dim=TOY_CONFIG.feature_dim, seed=seed)
    return synthesize_dataset(cfg)


def toy_batch(n: int = 3, seed: int = 0, dtype=np.float64):
    return build_batch(toy_records(n, seed), toy_vocab(), max_T=TOY_CONFIG.maxlen,
                       max_Ty=TOY_CONFIG.maxlen + 1, dtype=dtype)


def load_script(name: str):
    """Import a file from scripts/ as a module."""
    spec = importlib.util.spec_from_file_location(name, ROOT / "scripts" / f"{name}.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


@pytest.fixture
def toy_config() -> ModelConfig:
    return TOY_CONFIG


@pytest.fixture
def vocab() -> Vocabulary:
    return toy_vocab()


@pytest.fixture
def model64() -> R1Translator:
    return R1Translator(TOY_CONFIG, seed=0, dtype=np.float64)


@pytest.fixture
def batch64():
    return toy_batch(3, seed=0, dtype=np.float64)
