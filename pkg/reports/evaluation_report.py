"""
Evaluation Report
Full metric table of a trained model in teacher-forced and free-running mode
"""

import pandas as pd
import numpy as np
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union
import logging

from translator import decoding
from translator.config import DecodeConfig
from translator.data import EOS_ID, PAD_ID, BatchLoader, EegSentenceRecord, Vocabulary
from translator.errors import ContractError
from translator.metrics import compute_metrics
from translator.model import R1Translator

from .base_report import BaseReport

logger = logging.getLogger(__name__)

MODE_TF = "tf"
MODE_FREE = "free"
MODES = (MODE_TF, MODE_FREE)

PREDICTION_COLUMNS = [
    "sentence_id",
    "reference",
    "hypothesis",
    "correct_tokens",
    "total_tokens",
    "exact",
]
DIAGNOSTIC_COLUMNS = ["model", "mode", "token_accuracy", "exact_match"]


def _prediction_rows(batch, vocab: Vocabulary, sequences: Sequence[Sequence[int]],
                     aligned: np.ndarray, labels: np.ndarray) -> List[dict]:
    rows = []
    for i, seq in enumerate(sequences):
        real = labels[i] != PAD_ID
        correct = int((aligned[i][real] == labels[i][real]).sum())
        rows.append({
            "sentence_id": batch.sentence_ids[i],
            "reference": batch.texts[i],
            "hypothesis": vocab.decode(seq),
            "correct_tokens": correct,
            "total_tokens": int(real.sum()),
            "exact": list(seq[1:]) == [int(t) for t in labels[i][real]],
        })
    return rows


def _align(sequences: Sequence[Sequence[int]], width: int) -> np.ndarray:
    """Generated tokens (BOS dropped) laid out on the label grid; missing steps are PAD."""
    aligned = np.full((len(sequences), width), PAD_ID, dtype=np.int64)
    for i, seq in enumerate(sequences):
        tokens = list(seq[1:width + 1])
        aligned[i, :len(tokens)] = tokens
    return aligned


def decode_corpus(
    model: R1Translator,
    records: Sequence[EegSentenceRecord],
    vocab: Vocabulary,
    decode_cfg: DecodeConfig,
    batch_size: int = 32,
    modes: Sequence[str] = MODES,
) -> Dict[str, pd.DataFrame]:
    """
    Decode every record in the requested modes.

    Args:
        model: Trained model
        records: Sentences to decode (order is kept)
        vocab: Target vocabulary
        decode_cfg: Free-running decoder settings
        batch_size: Sentences per forward pass
        modes: Any of "tf" and "free"

    Returns:
        One per-sentence DataFrame (PREDICTION_COLUMNS) per mode
    """
    unknown = [m for m in modes if m not in MODES]
    if unknown:
        raise ContractError(f"unknown decoding mode(s): {', '.join(unknown)}")
    if not records:
        raise ContractError("no sentences to decode")

    loader = BatchLoader(records, vocab, batch_size, max_T=model.config.maxlen,
                         max_Ty=model.config.maxlen + 1, dtype=model.dtype)
    rows: Dict[str, List[dict]] = {mode: [] for mode in modes}
    for batch in loader:
        labels = np.asarray(batch.targets)[:, 1:]
        if MODE_TF in rows:
            predictions = decoding.teacher_forced_predict(model, batch)
            sequences = decoding.predictions_to_sequences(predictions, labels)
            rows[MODE_TF].extend(_prediction_rows(batch, vocab, sequences, predictions, labels))
        if MODE_FREE in rows:
            sequences = model.generate(batch, decode_cfg)
            aligned = _align(sequences, labels.shape[1])
            rows[MODE_FREE].extend(_prediction_rows(batch, vocab, sequences, aligned, labels))
        logger.debug(f"Decoded batch of {batch.size} sentences")

    return {mode: pd.DataFrame(r, columns=PREDICTION_COLUMNS) for mode, r in rows.items()}


class EvaluationReport(BaseReport):
    """
    Metric table for one checkpoint.

    Writes ``eval.csv`` (model, mode, metric, submetric, value; 16 rows per
    mode), ``eval_diagnostics.csv`` and ``eval.xlsx``.
    """

    def __init__(
        self,
        model: R1Translator,
        records: Sequence[EegSentenceRecord],
        vocab: Vocabulary,
        output_dir: Union[str, Path],
        model_name: str = "r1",
        modes: Sequence[str] = MODES,
        decode_cfg: Optional[DecodeConfig] = None,
        batch_size: int = 32,
    ):
        super().__init__(report_name="eval", output_dir=output_dir)
        self.model = model
        self.records = list(records)
        self.vocab = vocab
        self.model_name = model_name
        self.modes = tuple(modes)
        self.decode_cfg = decode_cfg or DecodeConfig(max_len=model.config.maxlen)
        self.batch_size = batch_size

    def extract_data(self) -> Dict[str, pd.DataFrame]:
        logger.info(f"Decoding {len(self.records)} sentences in mode(s): {', '.join(self.modes)}")
        return decode_corpus(self.model, self.records, self.vocab, self.decode_cfg,
                             self.batch_size, self.modes)

    def transform_data(self, df_raw: Dict[str, pd.DataFrame]) -> Dict[str, pd.DataFrame]:
        cleaned = {}
        for mode, df in df_raw.items():
            df = df.copy()
            df["hypothesis"] = df["hypothesis"].fillna("").astype(str)
            df["reference"] = df["reference"].astype(str)
            cleaned[mode] = df
        return cleaned

    def calculate_aggregations(self, df: Dict[str, pd.DataFrame]) -> Dict[str, pd.DataFrame]:
        metric_frames = []
        diagnostics = []
        for mode, predictions in df.items():
            report = compute_metrics(
                predictions["reference"].tolist(), predictions["hypothesis"].tolist()
            )
            metric_frames.append(report.to_frame(self.model_name, mode))
            accuracy = predictions["correct_tokens"].sum() / predictions["total_tokens"].sum()
            diagnostics.append({
                "model": self.model_name,
                "mode": mode,
                "token_accuracy": accuracy,
                "exact_match": float(predictions["exact"].mean()),
            })
            logger.info(
                f"{mode}: BLEU-4={report[('bleu', '4')]:.2f}, "
                f"WER={report[('wer', 'corpus')]:.4f}, token accuracy={accuracy:.4f}"
            )

        return {
            "metrics": pd.concat(metric_frames, ignore_index=True),
            "diagnostics": pd.DataFrame(diagnostics, columns=DIAGNOSTIC_COLUMNS),
        }

    def generate_report(self, aggregated_data: Dict[str, pd.DataFrame]) -> Path:
        metrics_path = self.output_dir / "eval.csv"
        aggregated_data["metrics"].to_csv(metrics_path, index=False)
        aggregated_data["diagnostics"].to_csv(self.output_dir / "eval_diagnostics.csv", index=False)
        self.save_workbook(aggregated_data, "eval.xlsx")
        logger.info(f"Wrote {len(aggregated_data['metrics'])} metric rows")
        return metrics_path
