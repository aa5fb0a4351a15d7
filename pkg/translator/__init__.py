"""
R1 Translator
Desk-scale EEG-to-text translation: numpy autodiff, BiLSTM front end,
transformer encoder-decoder, two-stage fine-tuning, beam search and the
BLEU/ROUGE/WER/CER evaluation protocol.
"""

from .config import (
    DecodeConfig,
    DecodeMode,
    ModelConfig,
    RunConfig,
    SynthConfig,
    TrainingStage,
    TwoStageConfig,
)
from .errors import TranslatorError, error_code
from .model import R1Translator

__version__ = "1.0.0"

__all__ = [
    "DecodeConfig",
    "DecodeMode",
    "ModelConfig",
    "RunConfig",
    "SynthConfig",
    "TrainingStage",
    "TwoStageConfig",
    "TranslatorError",
    "error_code",
    "R1Translator",
]
