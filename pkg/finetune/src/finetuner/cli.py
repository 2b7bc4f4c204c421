"""CLI: finetune --config <file> [--set key=value ...]"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from finetuner.config import ConfigurationError, load_config
from finetuner.data import DatasetError
from finetuner.manifest import export_serving_manifest
from finetuner.train import train_adapter


def _parse_overrides(pairs) -> dict:
    overrides = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigurationError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        try:
            overrides[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key.strip()] = value.strip()
    return overrides


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="finetune", description=__doc__)
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    parser.add_argument("--export-manifest", action="store_true", help="write serving_manifest.json after training")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, _parse_overrides(args.set))
        result = train_adapter(config)
        print(f"adapter written to {result.output_dir} after {result.steps} steps")
        print(f"trainable fraction: {result.trainable_fraction:.4f}")
        print(f"final loss: {result.losses[-1]:.4f}")
        if args.export_manifest:
            manifest = export_serving_manifest(result.output_dir)
            print(f"serving model_id: {manifest['model_id']}")
        return 0
    except (ConfigurationError, DatasetError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
