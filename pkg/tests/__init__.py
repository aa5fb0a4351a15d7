"""
Tests for the R1 Translator.
Run from project root: pytest tests/
"""
