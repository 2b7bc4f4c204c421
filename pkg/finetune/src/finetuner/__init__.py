"""Adapter fine-tuning: NF4-quantized frozen base + trainable low-rank adapters."""

__version__ = "0.1.0"

from finetuner.config import FineTuneConfig
from finetuner.train import train_adapter
from finetuner.manifest import export_serving_manifest

__all__ = ["FineTuneConfig", "train_adapter", "export_serving_manifest", "__version__"]
