"""
Closed-form parameter count of an R1 Translator configuration.
Counts are derived from the layer formulas only (no model is built), so they
serve as golden values for the model's own parameter store.

Usage:
    python scripts/count_parameters.py            # toy configuration
    python scripts/count_parameters.py --full     # full-size configuration
"""
import argparse
import sys
from pathlib import Path
from typing import Dict

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from translator.config import ModelConfig  # noqa: E402

TOY_CONFIG = ModelConfig(
    vocab_size=10, feature_dim=8, lstm_hidden=4, bidirectional=1, lstm_layers=2,
    model_dim=8, enc_layers=2, dec_layers=2, heads=2, ffn_dim=16, maxlen=12,
)


def parameter_breakdown(cfg: ModelConfig) -> Dict[str, int]:
    h, d, directions = cfg.lstm_hidden, cfg.model_dim, 1 + cfg.bidirectional
    lstm = 0
    for layer in range(cfg.lstm_layers):
        fan_in = cfg.feature_dim if layer == 0 else h * directions
        lstm += directions * (4 * h * fan_in + 4 * h * h + 4 * h)

    attention = 4 * (d * d + d)
    feed_forward = d * cfg.ffn_dim + cfg.ffn_dim + cfg.ffn_dim * d + d
    layer_norm = 2 * d
    return {
        "lstm": lstm,
        "proj": h * directions * d + d,
        "embed_word": cfg.vocab_size * d,
        "embed_pos": cfg.maxlen * d,
        "encoder_layers": cfg.enc_layers * (attention + 2 * layer_norm + feed_forward),
        "decoder_layers": cfg.dec_layers * (2 * attention + 3 * layer_norm + feed_forward),
        "final_norms": 2 * layer_norm,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--full", action="store_true", help="full-size configuration")
    parser.add_argument("--vocab-size", type=int, default=10)
    args = parser.parse_args()

    cfg = ModelConfig.full_scale(args.vocab_size) if args.full else TOY_CONFIG
    breakdown = parameter_breakdown(cfg)
    width = max(len(k) for k in breakdown)
    for name, count in breakdown.items():
        print(f"{name:<{width}}  {count:>12,}")
    print(f"{'total':<{width}}  {sum(breakdown.values()):>12,}")


if __name__ == "__main__":
    main()
