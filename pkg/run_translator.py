"""
Run Translator
Unified script for the train / eval / generate / report commands

Usage:
    python run_translator.py train --synth vocab=20,n=500 --seed 7 --out runs/seed7
    python run_translator.py eval --synth vocab=20,n=500 --seed 7 \
        --checkpoint runs/seed7/checkpoint.r1ck --out runs/seed7
    python run_translator.py report runs/seed*/eval.csv --out runs/summary
"""

import sys

from translator.cli import main


if __name__ == "__main__":
    sys.exit(main())
