"""Fine-tuning configuration with per-family defaults.

The two model families ship different published defaults:

    decoder_only (Llama/Mistral style):  lr 2e-4, batch 4, 1 epoch,
        weight decay 0.001, lora_alpha 16, lora_dropout 0.1, r 64
    encoder_decoder (T5 style):          lr 5e-5, batch 8, 1 epoch,
        no weight decay,  lora_alpha 32, lora_dropout 0.01, r 4

Both default to 4-bit NormalFloat (nf4) quantization of the frozen base.
Every override against the family defaults is recorded in the emitted
config snapshot.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

FAMILIES = ("decoder_only", "encoder_decoder")

FAMILY_DEFAULTS: dict[str, dict] = {
    "decoder_only": {
        "learning_rate": 2e-4,
        "batch_size": 4,
        "epochs": 1,
        "weight_decay": 0.001,
        "lora_alpha": 16,
        "lora_dropout": 0.1,
        "lora_r": 64,
    },
    "encoder_decoder": {
        "learning_rate": 5e-5,
        "batch_size": 8,
        "epochs": 1,
        "weight_decay": None,
        "lora_alpha": 32,
        "lora_dropout": 0.01,
        "lora_r": 4,
    },
}

# Attention projection module names adapters attach to, per family.
TARGET_MODULES = {
    "decoder_only": ("q_proj", "k_proj", "v_proj", "o_proj"),
    "encoder_decoder": ("q", "k", "v", "o"),
}


class ConfigurationError(ValueError):
    pass


@dataclass
class FineTuneConfig:
    base_model_id: str
    model_family: str
    prompt_dataset_path: str
    output_dir: str
    learning_rate: float
    batch_size: int
    epochs: int
    weight_decay: float | None
    lora_alpha: int
    lora_dropout: float
    lora_r: int
    quantization: str = "nf4"
    max_sequence_length: int = 512
    max_steps: int | None = None
    seed: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model_family not in FAMILIES:
            raise ConfigurationError(f"model_family must be one of {FAMILIES}, got {self.model_family!r}")
        if self.lora_r < 1:
            raise ConfigurationError("lora_r must be >= 1")
        if not 0 <= self.lora_dropout < 1:
            raise ConfigurationError("lora_dropout must be in [0, 1)")
        if self.quantization not in ("nf4", "none"):
            raise ConfigurationError(f"quantization must be 'nf4' or 'none', got {self.quantization!r}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigurationError("batch_size and epochs must be >= 1")

    @classmethod
    def for_family(
        cls,
        model_family: str,
        base_model_id: str,
        prompt_dataset_path: str,
        output_dir: str,
        **overrides,
    ) -> "FineTuneConfig":
        """Family defaults with any explicit overrides recorded."""
        if model_family not in FAMILY_DEFAULTS:
            raise ConfigurationError(f"unknown model family {model_family!r}")
        values = dict(FAMILY_DEFAULTS[model_family])
        recorded = {}
        for key, value in overrides.items():
            if key in values and values[key] != value:
                recorded[key] = {"default": values[key], "override": value}
            values[key] = value
        extra = {k: v for k, v in values.items() if k not in FAMILY_DEFAULTS[model_family]}
        tuned = {k: values[k] for k in FAMILY_DEFAULTS[model_family]}
        return cls(
            base_model_id=base_model_id,
            model_family=model_family,
            prompt_dataset_path=prompt_dataset_path,
            output_dir=output_dir,
            overrides=recorded,
            **tuned,
            **extra,
        )

    @property
    def target_modules(self) -> tuple[str, ...]:
        return TARGET_MODULES[self.model_family]

    def snapshot(self) -> dict:
        snap = asdict(self)
        snap["target_modules"] = list(self.target_modules)
        return snap

    def save_snapshot(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.snapshot(), indent=2) + "\n", encoding="utf-8")


_REQUIRED_KEYS = ("base_model_id", "model_family", "prompt_dataset_path", "output_dir")


def load_config(path: str | Path, overrides: Mapping[str, object] | None = None) -> FineTuneConfig:
    """Load a JSON config file; CLI overrides win over file values."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")
    raw.update(overrides or {})
    missing = [key for key in _REQUIRED_KEYS if key not in raw]
    if missing:
        raise ConfigurationError(f"{path}: missing required keys {missing}")
    kwargs = {k: v for k, v in raw.items() if k not in _REQUIRED_KEYS}
    return FineTuneConfig.for_family(
        raw["model_family"],
        raw["base_model_id"],
        raw["prompt_dataset_path"],
        raw["output_dir"],
        **kwargs,
    )
