"""
Report Manager
Registry of the result reports behind the eval, generate and report commands
"""

import inspect
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Type

from translator.errors import ContractError

from .base_report import BaseReport

logger = logging.getLogger(__name__)


class ReportManager:
    """
    Maps command names (case-insensitive) to BaseReport subclasses and runs
    them with keyword arguments checked against the class constructor.
    """

    def __init__(self):
        self.reports: Dict[str, Type[BaseReport]] = {}

    def register(self, report_name: str, report_class: Type[BaseReport]):
        """
        Register a report class.

        Args:
            report_name: Command name of the report (case-insensitive)
            report_class: Report class (must inherit from BaseReport)

        Raises:
            TypeError: report_class is not a BaseReport subclass
            ValueError: the name is already taken by another class
        """
        if not (isinstance(report_class, type) and issubclass(report_class, BaseReport)):
            name = getattr(report_class, "__name__", report_class)
            raise TypeError(f"{name} does not inherit from BaseReport")
        key = report_name.lower()
        current = self.reports.get(key)
        if current is not None and current is not report_class:
            raise ValueError(f"Report '{key}' is already registered to {current.__name__}")
        self.reports[key] = report_class
        logger.debug(f"Registered report: {key} -> {report_class.__name__}")

    def list_reports(self) -> List[str]:
        return list(self.reports)

    def get_report(self, report_name: str, **kwargs: Any) -> BaseReport:
        """
        Instantiate a registered report.

        Raises:
            ValueError: unknown report name
            ContractError: keyword arguments the report does not accept
        """
        key = report_name.lower()
        if key not in self.reports:
            available = ", ".join(self.reports) or "none"
            raise ValueError(f"Report '{report_name}' not found. Available reports: {available}")

        report_class = self.reports[key]
        accepted = inspect.signature(report_class.__init__).parameters
        unexpected = sorted(set(kwargs) - set(accepted))
        if unexpected:
            raise ContractError(f"report '{key}' does not accept: {', '.join(unexpected)}")
        return report_class(**kwargs)

    def run_report(self, report_name: str, **kwargs: Any) -> Path:
        """Build and run a report; returns the path of its main output file."""
        report = self.get_report(report_name, **kwargs)
        started = time.perf_counter()
        output = report.run()
        elapsed = time.perf_counter() - started
        logger.info(f"Report '{report_name}' finished in {elapsed:.1f}s: {output}")
        return output


_report_manager = ReportManager()


def get_report_manager() -> ReportManager:
    """Global report manager instance."""
    return _report_manager


def register_report(report_name: str, report_class: Type[BaseReport]):
    _report_manager.register(report_name, report_class)


def run_report(report_name: str, **kwargs: Any) -> Path:
    """Run a report by name with the global manager."""
    return _report_manager.run_report(report_name, **kwargs)


def list_reports() -> List[str]:
    return _report_manager.list_reports()
