"""
Basic import and package tests.
Run from project root: pytest tests/ -v
"""

import pytest


def test_translator_import():
    """Translator package and key exports are importable."""
    from translator import R1Translator, ModelConfig, TranslatorError, error_code, __version__

    assert R1Translator is not None
    assert issubclass(TranslatorError, Exception)
    assert error_code(FileNotFoundError("x")) == "FILE"
    assert error_code(RuntimeError("x")) == "INTERNAL"
    assert __version__


def test_utils_import():
    """Utils package and key exports are importable."""
    from utils import (
        ExcelManager,
        RunConfigManager,
        get_config_manager,
        build_run_config,
        setup_logging,
    )
    assert ExcelManager is not None
    assert isinstance(get_config_manager(), RunConfigManager)
    assert callable(build_run_config)
    assert callable(setup_logging)


def test_reports_import():
    """Reports package and key exports are importable."""
    from reports import (
        BaseReport,
        get_report_manager,
        list_reports,
        run_report,
        EvaluationReport,
    )
    assert BaseReport is not None
    assert issubclass(EvaluationReport, BaseReport)
    assert callable(run_report)
    reports = list_reports()
    assert isinstance(reports, list)
    assert reports == get_report_manager().list_reports()
    assert "eval" in reports


def test_cli_entry_point():
    """The runner script and the console entry point share one main()."""
    import run_translator
    from translator.cli import main

    assert run_translator.main is main


def test_error_codes_are_unique():
    from translator import errors

    classes = [
        c for c in vars(errors).values()
        if isinstance(c, type) and issubclass(c, errors.TranslatorError)
    ]
    codes = [c.code for c in classes if c is not errors.TranslatorError]
    assert len(codes) == len(set(codes))


def test_count_parameters_script():
    """scripts/count_parameters.py closed form agrees with an instantiated model."""
    from tests.conftest import TOY_CONFIG, load_script
    from translator import R1Translator

    script = load_script("count_parameters")
    expected = sum(script.parameter_breakdown(TOY_CONFIG).values())
    assert expected == R1Translator(TOY_CONFIG).params.count()


@pytest.mark.parametrize(
    "module", ["translator.tensor", "translator.layers", "translator.decoding"]
)
def test_modules_have_docstrings(module):
    import importlib

    assert importlib.import_module(module).__doc__
