"""
Command Line
``train``, ``eval``, ``generate`` and ``report`` subcommands.

Options are layered: config/r1_translator_default.conf, then ``--config``,
then flags. Any failure prints one line ``error: <CODE>: <message>`` on
stderr; exit status is 0 on success, 2 for usage errors, 3 for missing files
and 1 otherwise.
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from reports import run_report
from utils import build_run_config, save_run_config, setup_logging

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .config import DTYPES, EVAL_SPLITS, FREE_STRATEGIES, RUN_MODES, RunConfig
from .data import (
    BatchLoader,
    DatasetSplit,
    EegSentenceRecord,
    Vocabulary,
    apply_manifest,
    build_vocab,
    load_datasets,
    noise_control,
    normalize_records,
    split_dataset,
    synthesize_dataset,
)
from .errors import ContractError, SchemaError, UsageError, error_code
from .model import R1Translator
from .training import TwoStageTrainer

logger = logging.getLogger(__name__)

COMMANDS = ("train", "eval", "generate", "report")
EXIT_CODES = {"USAGE": 2, "FILE": 3}

CHECKPOINT_NAME = "checkpoint.r1ck"
TRAIN_LOG_NAME = "train_log.csv"
RUN_CONFIG_NAME = "run_config.conf"
MANIFEST_NAME = "split_manifest.json"
VOCAB_NAME = "vocab.json"

# flags with their own handling; every other RunConfig field becomes --field-name
_SPECIAL_FIELDS = {"command", "data", "noise_control"}
_CHOICES = {"mode": RUN_MODES, "split": EVAL_SPLITS, "decode": FREE_STRATEGIES, "dtype": DTYPES}


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise UsageError(message)


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value run configuration file")
    parser.add_argument(
        "--data", action="append", help="JSONL dataset (repeat to combine datasets)"
    )
    parser.add_argument("--noise-control", dest="noise_control", action="store_const", const=True,
                        help="permute feature vectors across words before splitting")
    for f in dataclasses.fields(RunConfig):
        if f.name in _SPECIAL_FIELDS:
            continue
        parser.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f.name,
            type=f.type if f.type in (int, float) else str,
            choices=_CHOICES.get(f.name),
            metavar=f.name.upper() if f.name not in _CHOICES else None,
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="r1-translator",
        description="EEG-to-text translator: train, evaluate, generate, report",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for command, help_text in (
        ("train", "two-stage training; writes the best checkpoint and a CSV log"),
        ("eval", "full metric table in teacher-forced and free-running mode"),
        ("generate", "target / predicted-with-tf / predicted text triples"),
    ):
        _add_run_options(sub.add_parser(command, help=help_text))
    report = sub.add_parser("report", help="mean ± SEM of eval CSVs across seeds, with SVG charts")
    report.add_argument("inputs", nargs="+", help="eval.csv files of repeated runs")
    report.add_argument("--out", dest="out")
    report.add_argument("--config", help="key=value run configuration file")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    values = {k: v for k, v in vars(args).items() if k not in ("config", "inputs", "data")}
    if getattr(args, "data", None):
        values["data"] = ",".join(args.data)
    return values


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


def load_run_records(config: RunConfig) -> List[EegSentenceRecord]:
    """
    Records of the one configured data source (JSONL files XOR synthetic).

    Raises:
        UsageError: neither or both sources given.
    """
    if bool(config.data_paths) == bool(config.synth):
        raise UsageError("exactly one of --data or --synth is required")
    if config.data_paths:
        records = load_datasets(config.data_paths, feature_dim=config.feature_dim)
    else:
        records = normalize_records(synthesize_dataset(config.synth_config()))
    if config.noise_control:
        records = noise_control(records, seed=max(config.seed, 0))
    return records


def _checkpoint_split(
    records: Sequence[EegSentenceRecord], checkpoint_dir: Path, seed: int
) -> DatasetSplit:
    manifest_path = checkpoint_dir / MANIFEST_NAME
    if manifest_path.exists():
        return apply_manifest(records, json.loads(manifest_path.read_text(encoding="utf-8")))
    logger.warning(f"No {MANIFEST_NAME} next to the checkpoint; re-splitting with seed {seed}")
    return split_dataset(records, seed)


def _checkpoint_vocab(extra: Dict[str, str], checkpoint_dir: Path) -> Vocabulary:
    if "vocab" in extra:
        return Vocabulary.from_json(extra["vocab"])
    return Vocabulary.load(checkpoint_dir / VOCAB_NAME)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def train(config: RunConfig) -> Path:
    """Two-stage training; writes checkpoint, log, effective config, split manifest, vocabulary."""
    if config.seed < 0:
        raise UsageError("train requires --seed")
    out = Path(config.out)
    records = load_run_records(config)
    split = split_dataset(records, config.seed)
    vocab = build_vocab([r.text for r in split.train], config.min_count)

    model = R1Translator(config.model_config(len(vocab)), seed=config.seed, dtype=config.dtype)
    schedule = config.two_stage_config()
    max_T, max_Ty = model.config.maxlen, model.config.maxlen + 1
    train_batches = BatchLoader(split.train, vocab, schedule.batch_size, max_T, max_Ty,
                                shuffle=True, seed=config.seed, dtype=model.dtype)
    val_batches = BatchLoader(
        split.dev, vocab, schedule.batch_size, max_T, max_Ty, dtype=model.dtype
    )

    trainer = TwoStageTrainer(model, train_batches, val_batches, schedule)
    best = trainer.run()
    best.extra = {"model_name": config.model_name, "vocab": vocab.to_json()}

    checkpoint_path = save_checkpoint(best, out / CHECKPOINT_NAME)
    trainer.save_log(out / TRAIN_LOG_NAME)
    save_run_config(config, out / RUN_CONFIG_NAME)
    (out / MANIFEST_NAME).write_text(json.dumps(split.manifest(), indent=1), encoding="utf-8")
    vocab.save(out / VOCAB_NAME)
    return checkpoint_path


def _load_for_decoding(config: RunConfig):
    if not config.checkpoint:
        raise UsageError(f"{config.command} requires --checkpoint")
    checkpoint_path = Path(config.checkpoint)
    checkpoint = load_checkpoint(checkpoint_path)
    vocab = _checkpoint_vocab(checkpoint.extra, checkpoint_path.parent)
    if len(vocab) != checkpoint.config.vocab_size:
        raise SchemaError(
            f"vocabulary has {len(vocab)} tokens, "
            f"checkpoint expects {checkpoint.config.vocab_size}"
        )
    model = R1Translator.from_checkpoint(checkpoint)

    split = _checkpoint_split(load_run_records(config), checkpoint_path.parent, max(config.seed, 0))
    records = getattr(split, config.split)
    if not records:
        raise ContractError(f"the {config.split} split is empty")
    decode_cfg = config.decode_config(max_len=min(config.max_len, model.config.maxlen))
    return model, vocab, records, decode_cfg


def evaluate(config: RunConfig) -> Path:
    """Metric table (eval.csv) of a checkpoint on the chosen split."""
    model, vocab, records, decode_cfg = _load_for_decoding(config)
    with T.default_dtype(model.dtype):
        return run_report(
            "eval", model=model, records=records, vocab=vocab, output_dir=config.out,
            model_name=config.model_name, modes=config.modes, decode_cfg=decode_cfg,
            batch_size=config.batch_size,
        )


def generate(config: RunConfig) -> Path:
    """Text triples (generate.csv) of a checkpoint on the chosen split."""
    model, vocab, records, decode_cfg = _load_for_decoding(config)
    with T.default_dtype(model.dtype):
        return run_report(
            "generate", model=model, records=records, vocab=vocab, output_dir=config.out,
            decode_cfg=decode_cfg, batch_size=config.batch_size,
        )


def summarize(config: RunConfig, inputs: Sequence[str]) -> Path:
    """Mean ± SEM across eval CSVs (report.csv plus SVG charts)."""
    return run_report("report", eval_paths=list(inputs), output_dir=config.out)


def run(config: RunConfig, inputs: Sequence[str] = ()) -> int:
    """
    Execute one command.

    Returns:
        0 on success; errors propagate to ``main``.
    """
    if config.command not in COMMANDS:
        raise UsageError(
            f"unknown command '{config.command}' (expected one of {', '.join(COMMANDS)})"
        )
    if config.command == "train":
        with T.default_dtype(config.dtype):
            path = train(config)
    elif config.command == "eval":
        path = evaluate(config)
    elif config.command == "generate":
        path = generate(config)
    else:
        path = summarize(config, inputs)
    logger.info(f"{config.command} finished: {path}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging()
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError(f"a command is required: {', '.join(COMMANDS)}")
        config = build_run_config(args.config, _overrides(args))
        return run(config, getattr(args, "inputs", ()))
    except Exception as e:
        code = error_code(e)
        message = " ".join(str(e).split()) or type(e).__name__
        print(f"error: {code}: {message}", file=sys.stderr)
        if code == "INTERNAL":
            logger.debug("Unexpected failure", exc_info=True)
        return EXIT_CODES.get(code, 1)


if __name__ == "__main__":
    sys.exit(main())
