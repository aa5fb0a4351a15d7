"""
Base Report Class
Abstract base class for all result reports with common functionality
"""

import pandas as pd
from pathlib import Path
from abc import ABC, abstractmethod
from typing import Dict, Union
import logging

from utils import ExcelManager

logger = logging.getLogger(__name__)

Frames = Union[pd.DataFrame, Dict[str, pd.DataFrame]]


class BaseReport(ABC):
    """
    Abstract base class for all reports.
    Provides common functionality and enforces consistent interface.

    ``run()`` executes extract -> transform -> (interim save) -> aggregate
    -> generate. File names carry no timestamps, so a report written twice
    from the same inputs is identical.
    """

    def __init__(self, report_name: str, output_dir: Union[str, Path]):
        """
        Initialize base report.

        Args:
            report_name: Name of the report (used in log banners and file names)
            output_dir: Output directory; interim tables go to ``<output_dir>/interim``
        """
        self.report_name = report_name
        self.output_dir = Path(output_dir)
        self.interim_dir = self.output_dir / "interim"

        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.interim_dir.mkdir(parents=True, exist_ok=True)

        self.excel_mgr = ExcelManager(output_dir=str(self.output_dir))

        logger.info(f"{self.report_name} report initialized (output: {self.output_dir})")

    @abstractmethod
    def extract_data(self) -> Frames:
        """
        Produce the raw per-item table(s): model predictions or input CSVs.

        Returns:
            A DataFrame, or a dictionary of DataFrames keyed by source name
        """

    @abstractmethod
    def transform_data(self, df_raw: Frames) -> Frames:
        """
        Clean and validate the raw data.

        Args:
            df_raw: Output of ``extract_data``

        Returns:
            Cleaned data in the same shape (DataFrame or dict of DataFrames)
        """

    @abstractmethod
    def calculate_aggregations(self, df: Frames) -> Dict[str, pd.DataFrame]:
        """
        Compute the result tables.

        Returns:
            Dictionary of DataFrames keyed by table/sheet name
        """

    @abstractmethod
    def generate_report(self, aggregated_data: Dict[str, pd.DataFrame]) -> Path:
        """
        Write the result files.

        Args:
            aggregated_data: Dictionary of DataFrames keyed by table name

        Returns:
            Path to the main output file
        """

    def save_interim_data(self, data: Frames, filename_prefix: str = None):
        """
        Save interim data as CSV and Parquet.

        Args:
            data: DataFrame or dict of DataFrames
            filename_prefix: Prefix for filenames (default: report_name)
        """
        prefix = filename_prefix or self.report_name.lower().replace(" ", "_")
        frames = data if isinstance(data, dict) else {"data": data}

        for key, df in frames.items():
            csv_path = self.interim_dir / f"{prefix}_{key}.csv"
            parquet_path = self.interim_dir / f"{prefix}_{key}.parquet"

            df.to_csv(csv_path, index=False)
            df.to_parquet(parquet_path, index=False)

            logger.info(f"Interim data saved: {csv_path}, {parquet_path}")

    def save_workbook(self, tables: Dict[str, pd.DataFrame], filename: str) -> Path:
        """Write the tables to one .xlsx workbook, one sheet per table."""
        return self.excel_mgr.save_tables(tables, self.output_dir / filename)

    def run(self) -> Path:
        """
        Execute the complete report workflow.

        Returns:
            Path to the main output file
        """
        logger.info("=" * 60)
        logger.info(f"Starting {self.report_name} report")
        logger.info("=" * 60)

        try:
            df_raw = self.extract_data()
            if isinstance(df_raw, dict):
                logger.info(f"Extracted {len(df_raw)} tables: {', '.join(df_raw)}")
            else:
                logger.info(f"Extracted {len(df_raw)} rows")

            df_clean = self.transform_data(df_raw)
            self.save_interim_data(df_clean)

            aggregated_data = self.calculate_aggregations(df_clean)
            report_path = self.generate_report(aggregated_data)

            logger.info("=" * 60)
            logger.info(f"{self.report_name} report completed successfully")
            logger.info(f"Report saved to: {report_path}")
            logger.info("=" * 60)

            return report_path

        except Exception as e:
            logger.error(f"{self.report_name} report failed: {e}")
            raise
