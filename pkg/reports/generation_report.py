"""
Generation Report
Target / predicted-with-tf / predicted text triples for inspection
"""

import pandas as pd
from pathlib import Path
from typing import Dict, Optional, Sequence, Union
import logging

from translator.config import DecodeConfig
from translator.data import EegSentenceRecord, Vocabulary
from translator.metrics import matched_words
from translator.model import R1Translator

from .base_report import BaseReport
from .evaluation_report import MODE_FREE, MODE_TF, MODES, decode_corpus

logger = logging.getLogger(__name__)

GENERATION_COLUMNS = [
    "sentence_id",
    "target",
    "predicted_tf",
    "predicted",
    "matched_tf",
    "matched_free",
]


class GenerationReport(BaseReport):
    """Writes ``generate.csv`` and ``generate.xlsx``, one row per sentence."""

    def __init__(
        self,
        model: R1Translator,
        records: Sequence[EegSentenceRecord],
        vocab: Vocabulary,
        output_dir: Union[str, Path],
        decode_cfg: Optional[DecodeConfig] = None,
        batch_size: int = 32,
    ):
        super().__init__(report_name="generate", output_dir=output_dir)
        self.model = model
        self.records = list(records)
        self.vocab = vocab
        self.decode_cfg = decode_cfg or DecodeConfig(max_len=model.config.maxlen)
        self.batch_size = batch_size

    def extract_data(self) -> Dict[str, pd.DataFrame]:
        return decode_corpus(
            self.model, self.records, self.vocab, self.decode_cfg, self.batch_size, MODES
        )

    def transform_data(self, df_raw: Dict[str, pd.DataFrame]) -> Dict[str, pd.DataFrame]:
        columns = ["sentence_id", "reference", "hypothesis"]
        return {mode: df[columns].fillna("") for mode, df in df_raw.items()}

    def calculate_aggregations(self, df: Dict[str, pd.DataFrame]) -> Dict[str, pd.DataFrame]:
        tf = df[MODE_TF].rename(columns={"reference": "target", "hypothesis": "predicted_tf"})
        free = df[MODE_FREE][["sentence_id", "hypothesis"]]
        free = free.rename(columns={"hypothesis": "predicted"})
        triples = tf.merge(free, on="sentence_id", how="inner", validate="one_to_one")
        for column, predicted in (("matched_tf", "predicted_tf"), ("matched_free", "predicted")):
            pairs = zip(triples["target"], triples[predicted])
            triples[column] = [matched_words(t, p) for t, p in pairs]
        return {"generated": triples[GENERATION_COLUMNS]}

    def generate_report(self, aggregated_data: Dict[str, pd.DataFrame]) -> Path:
        csv_path = self.output_dir / "generate.csv"
        aggregated_data["generated"].to_csv(csv_path, index=False)
        self.save_workbook(aggregated_data, "generate.xlsx")
        logger.info(f"Wrote {len(aggregated_data['generated'])} generated sentences")
        return csv_path
