"""
Excel Manager
Writes result tables (metric tables, generated-text triples, seed summaries)
to .xlsx workbooks, one sheet per table
"""

import logging
import re
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Union

import numpy as np
import pandas as pd
from openpyxl import Workbook, load_workbook
from openpyxl.styles import Alignment, Font, PatternFill

logger = logging.getLogger(__name__)

# Excel limits sheet titles to 31 characters and forbids []:*?/\
MAX_SHEET_TITLE = 31
_BAD_TITLE_CHARS = re.compile(r"[\[\]:*?/\\]")

FLOAT_FORMAT = "0.0000"
MAX_COLUMN_WIDTH = 60
HEADER_FILL = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
HEADER_FONT = Font(bold=True, color="FFFFFF")


def sheet_title(name: str, taken: Optional[set] = None) -> str:
    """Legal, unique sheet title for ``name``."""
    title = _BAD_TITLE_CHARS.sub("_", str(name)).strip() or "Sheet"
    title = title[:MAX_SHEET_TITLE]
    if taken is None:
        return title
    base, n = title, 2
    while title in taken:
        suffix = f"~{n}"
        title = base[: MAX_SHEET_TITLE - len(suffix)] + suffix
        n += 1
    taken.add(title)
    return title


def _cell_value(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


class ExcelManager:
    """
    Writes result tables to workbooks under ``output_dir``.

    Headers are bold on a dark fill and frozen; float columns get a fixed
    four-decimal number format; column widths follow the content.
    """

    def __init__(self, output_dir: Union[str, Path] = "output"):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Excel Manager initialized. Output directory: {self.output_dir}")

    def save_tables(self, tables: Mapping[str, pd.DataFrame], file_path: Union[str, Path]) -> Path:
        """
        Save result tables to one workbook, each in its own sheet.

        Args:
            tables: Sheet name -> table (sheet names are made legal and unique)
            file_path: Target path; the .xlsx suffix is enforced

        Returns:
            Path to the saved workbook

        Example:
            excel_manager.save_tables({"metrics": df_metrics, "diagnostics": df_diag}, "eval.xlsx")
        """
        if not tables:
            raise ValueError("save_tables needs at least one table")

        excel_path = Path(file_path).with_suffix(".xlsx")
        excel_path.parent.mkdir(parents=True, exist_ok=True)

        wb = Workbook()
        wb.remove(wb.active)
        taken: set = set()
        for name, df in tables.items():
            ws = wb.create_sheet(title=sheet_title(name, taken))
            self._write_table(ws, df)
            logger.debug(f"Added sheet '{ws.title}' with {len(df)} rows")

        try:
            wb.save(excel_path)
        except OSError as e:
            logger.error(f"Failed to save workbook {excel_path}: {e}")
            raise
        logger.info(f"Saved {len(tables)} tables to Excel: {excel_path}")
        return excel_path

    def read_table(
        self, file_path: Union[str, Path], sheet_name: Optional[str] = None
    ) -> pd.DataFrame:
        """Read one sheet (default: the first) back into a DataFrame."""
        excel_path = Path(file_path)
        if not excel_path.exists():
            raise FileNotFoundError(f"Excel file not found: {excel_path}")
        return pd.read_excel(excel_path, sheet_name=sheet_name or 0, engine="openpyxl")

    def list_sheets(self, file_path: Union[str, Path]) -> List[str]:
        excel_path = Path(file_path)
        if not excel_path.exists():
            raise FileNotFoundError(f"Excel file not found: {excel_path}")
        wb = load_workbook(excel_path, read_only=True)
        try:
            return list(wb.sheetnames)
        finally:
            wb.close()

    @staticmethod
    def _write_table(ws, df: pd.DataFrame) -> None:
        columns = [str(c) for c in df.columns]
        ws.append(columns)
        for row in df.itertuples(index=False, name=None):
            ws.append([_cell_value(v) for v in row])

        for cell in ws[1]:
            cell.font = HEADER_FONT
            cell.fill = HEADER_FILL
            cell.alignment = Alignment(horizontal="center", vertical="center")
        ws.freeze_panes = "A2"

        widths: Dict[int, int] = {i: len(c) for i, c in enumerate(columns, 1)}
        for i, column in enumerate(df.columns, 1):
            is_float = pd.api.types.is_float_dtype(df[column])
            for (cell,) in ws.iter_rows(min_row=2, min_col=i, max_col=i):
                if is_float:
                    cell.number_format = FLOAT_FORMAT
                if cell.value is not None:
                    widths[i] = max(widths[i], len(str(cell.value)))
        for i, width in widths.items():
            letter = ws.cell(row=1, column=i).column_letter
            ws.column_dimensions[letter].width = min(width + 2, MAX_COLUMN_WIDTH)
