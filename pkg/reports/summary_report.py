"""
Seed Summary Report
Mean ± SEM of eval tables across seeds, with one SVG bar chart per metric
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

import numpy as np
import pandas as pd
from pathlib import Path
from typing import Dict, List, Sequence, Union
import logging

from translator.errors import SchemaError
from translator.metrics import METRIC_COLUMNS

from .base_report import BaseReport

logger = logging.getLogger(__name__)

GROUP_COLUMNS = ["model", "mode", "metric", "submetric"]
SUMMARY_COLUMNS = GROUP_COLUMNS + ["mean", "sem", "n"]

# fixed ids and no date stamp, so identical inputs give identical SVG bytes
SVG_STYLE = {"svg.hashsalt": "r1-translator", "svg.fonttype": "path"}


class SeedSummaryReport(BaseReport):
    """
    Aggregates eval CSVs of repeated runs.

    Output is a pure function of the input files: ``report.csv``,
    ``report.xlsx`` and ``charts/<metric>.svg``.
    """

    def __init__(self, eval_paths: Sequence[Union[str, Path]], output_dir: Union[str, Path]):
        super().__init__(report_name="report", output_dir=output_dir)
        self.eval_paths = [Path(p) for p in eval_paths]
        self.chart_dir = self.output_dir / "charts"

    def extract_data(self) -> Dict[str, pd.DataFrame]:
        if not self.eval_paths:
            raise FileNotFoundError("report needs at least one eval CSV")
        frames = {}
        for i, path in enumerate(self.eval_paths):
            if not path.exists():
                raise FileNotFoundError(f"eval CSV not found: {path}")
            frames[f"run{i}"] = pd.read_csv(path, dtype={"submetric": str})
            logger.info(f"Loaded {path} ({len(frames[f'run{i}'])} rows)")
        return frames

    def transform_data(self, df_raw: Dict[str, pd.DataFrame]) -> pd.DataFrame:
        parts = []
        for run, df in df_raw.items():
            if list(df.columns) != METRIC_COLUMNS:
                raise SchemaError(
                    f"{run}: expected columns {METRIC_COLUMNS}, got {list(df.columns)}"
                )
            df = df.copy()
            df["value"] = pd.to_numeric(df["value"], errors="raise")
            df["run"] = run
            parts.append(df)
        return pd.concat(parts, ignore_index=True)

    def calculate_aggregations(self, df: pd.DataFrame) -> Dict[str, pd.DataFrame]:
        grouped = df.groupby(GROUP_COLUMNS, sort=False)["value"]
        summary = grouped.agg(mean="mean", sem="sem", n="count").reset_index()
        # a single run has no spread
        summary["sem"] = summary["sem"].fillna(0.0)
        return {"summary": summary[SUMMARY_COLUMNS]}

    def generate_report(self, aggregated_data: Dict[str, pd.DataFrame]) -> Path:
        summary = aggregated_data["summary"]
        csv_path = self.output_dir / "report.csv"
        summary.to_csv(csv_path, index=False)
        self.save_workbook(aggregated_data, "report.xlsx")

        charts = self.plot_metrics(summary)
        logger.info(f"Wrote {len(charts)} charts to {self.chart_dir}")
        return csv_path

    def plot_metrics(self, summary: pd.DataFrame) -> List[Path]:
        """
        One grouped bar chart per metric: submetrics (per model) on the x axis,
        one bar per mode, SEM error bars.

        Returns:
            Paths of the written SVG files
        """
        self.chart_dir.mkdir(parents=True, exist_ok=True)
        several_models = summary["model"].nunique() > 1
        paths = []
        with plt.rc_context(SVG_STYLE):
            for metric, table in summary.groupby("metric", sort=False):
                groups = list(dict.fromkeys(zip(table["model"], table["submetric"])))
                modes = list(dict.fromkeys(table["mode"]))
                width = 0.8 / len(modes)
                x = np.arange(len(groups))

                fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(groups) + 2), 3.5))
                for k, mode in enumerate(modes):
                    rows = table[table["mode"] == mode].set_index(["model", "submetric"])
                    means = [rows["mean"].get(g, np.nan) for g in groups]
                    sems = [rows["sem"].get(g, 0.0) for g in groups]
                    ax.bar(x + (k - (len(modes) - 1) / 2) * width, means, width,
                           yerr=sems, capsize=3, label=mode)

                labels = [f"{model}\n{sub}" if several_models else sub for model, sub in groups]
                ax.set_xticks(x)
                ax.set_xticklabels(labels)
                ax.set_title(metric)
                ax.set_ylabel("mean ± SEM")
                ax.legend(title="mode")
                fig.tight_layout()

                path = self.chart_dir / f"{metric}.svg"
                fig.savefig(path, format="svg", metadata={"Date": None})
                plt.close(fig)
                paths.append(path)
        return paths
