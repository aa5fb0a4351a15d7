"""
Reports Module
Contains the result report generators
"""

from .base_report import BaseReport
from .report_manager import (
    ReportManager,
    get_report_manager,
    register_report,
    run_report,
    list_reports,
)
from .evaluation_report import EvaluationReport, decode_corpus
from .generation_report import GenerationReport
from .summary_report import SeedSummaryReport

# Register reports under their command names
register_report("eval", EvaluationReport)
register_report("generate", GenerationReport)
register_report("report", SeedSummaryReport)

__all__ = [
    "BaseReport",
    "ReportManager",
    "get_report_manager",
    "register_report",
    "run_report",
    "list_reports",
    "EvaluationReport",
    "GenerationReport",
    "SeedSummaryReport",
    "decode_corpus",
]
