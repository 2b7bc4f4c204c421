"""Supervised fine-tuning loop over (prompt -> completion) pairs.

The base model is loaded, optionally NF4-quantized, and frozen; low-rank
adapters on the attention projections are the only trainable parameters.
Loss is computed on completion tokens only (prompt positions are masked
with -100).  Artifacts written to the output directory: adapter_state.pt,
config_snapshot.json, loss_log.csv, training_summary.json.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from finetuner.config import FineTuneConfig
from finetuner.data import PromptExample, load_prompt_dataset
from finetuner.lora import adapter_state_dict, attach_adapters, base_weight_hash, trainable_fraction

logger = logging.getLogger(__name__)

ADAPTER_FILENAME = "adapter_state.pt"
SNAPSHOT_FILENAME = "config_snapshot.json"
LOSS_LOG_FILENAME = "loss_log.csv"
SUMMARY_FILENAME = "training_summary.json"


@dataclass
class TrainResult:
    output_dir: Path
    steps: int
    losses: list[float]
    wrapped_modules: list[str]
    trainable_fraction: float
    base_hash_before: str
    base_hash_after: str


def load_base(config: FineTuneConfig):
    from transformers import AutoModelForCausalLM, AutoModelForSeq2SeqLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(config.base_model_id)
    if tokenizer.pad_token is None:
        tokenizer.pad_token = tokenizer.eos_token
    if config.model_family == "decoder_only":
        model = AutoModelForCausalLM.from_pretrained(config.base_model_id)
    else:
        model = AutoModelForSeq2SeqLM.from_pretrained(config.base_model_id)
    model.train()
    return tokenizer, model


def _encode_decoder_only(tokenizer, example: PromptExample, max_length: int):
    prompt_ids = tokenizer.encode(example.prompt, add_special_tokens=False)
    completion_ids = tokenizer.encode(example.completion, add_special_tokens=False)
    completion_ids = completion_ids + [tokenizer.eos_token_id]
    room = max_length - len(completion_ids)
    if room < 1:
        raise ValueError(
            f"example {example.instance_id!r}: completion alone exceeds max_sequence_length"
        )
    prompt_ids = prompt_ids[-room:]
    input_ids = prompt_ids + completion_ids
    labels = [-100] * len(prompt_ids) + completion_ids
    return input_ids, labels


def _encode_encoder_decoder(tokenizer, example: PromptExample, max_length: int):
    input_ids = tokenizer.encode(example.prompt, add_special_tokens=False)[:max_length]
    labels = tokenizer.encode(example.completion, add_special_tokens=False)[: max_length - 1]
    labels = labels + [tokenizer.eos_token_id]
    return input_ids, labels


def _pad_batch(rows: list[tuple[list[int], list[int]]], pad_id: int, family: str):
    if family == "decoder_only":
        width = max(len(ids) for ids, _ in rows)
        input_ids, attention, labels = [], [], []
        for ids, labs in rows:
            pad = width - len(ids)
            input_ids.append(ids + [pad_id] * pad)
            attention.append([1] * len(ids) + [0] * pad)
            labels.append(labs + [-100] * pad)
        return (
            torch.tensor(input_ids),
            torch.tensor(attention),
            torch.tensor(labels),
        )
    in_width = max(len(ids) for ids, _ in rows)
    lab_width = max(len(labs) for _, labs in rows)
    input_ids, attention, labels = [], [], []
    for ids, labs in rows:
        pad = in_width - len(ids)
        input_ids.append(ids + [pad_id] * pad)
        attention.append([1] * len(ids) + [0] * pad)
        labels.append(labs + [-100] * (lab_width - len(labs)))
    return torch.tensor(input_ids), torch.tensor(attention), torch.tensor(labels)


def _batches(encoded, batch_size: int, seed: int, epochs: int, max_steps: int | None):
    """Yield per-step index batches; max_steps cycles epochs as needed."""
    step = 0
    epoch = 0
    while True:
        order = list(range(len(encoded)))
        random.Random(seed + epoch).shuffle(order)
        for start in range(0, len(order), batch_size):
            yield [encoded[i] for i in order[start : start + batch_size]]
            step += 1
            if max_steps is not None and step >= max_steps:
                return
        epoch += 1
        if max_steps is None and epoch >= epochs:
            return


def train_adapter(config: FineTuneConfig) -> TrainResult:
    """Run SFT and write the adapter artifact directory."""
    examples = load_prompt_dataset(config.prompt_dataset_path)
    torch.manual_seed(config.seed)
    tokenizer, model = load_base(config)

    wrapped = attach_adapters(
        model,
        config.target_modules,
        r=config.lora_r,
        alpha=config.lora_alpha,
        dropout=config.lora_dropout,
        quantize=config.quantization == "nf4",
    )
    fraction = trainable_fraction(model)
    hash_before = base_weight_hash(model)
    logger.info(
        "adapters on %d modules; trainable fraction %.4f", len(wrapped), fraction
    )

    encode = _encode_decoder_only if config.model_family == "decoder_only" else _encode_encoder_decoder
    encoded = [encode(tokenizer, example, config.max_sequence_length) for example in examples]

    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(
        trainable, lr=config.learning_rate, weight_decay=config.weight_decay or 0.0
    )

    losses: list[float] = []
    try:
        for step, batch in enumerate(
            _batches(encoded, config.batch_size, config.seed, config.epochs, config.max_steps),
            start=1,
        ):
            input_ids, attention, labels = _pad_batch(batch, tokenizer.pad_token_id, config.model_family)
            optimizer.zero_grad()
            output = model(input_ids=input_ids, attention_mask=attention, labels=labels)
            loss = output.loss
            value = float(loss.detach())
            if not math.isfinite(value):
                raise RuntimeError(f"non-finite loss at step {step}")
            loss.backward()
            optimizer.step()
            losses.append(value)
    except torch.cuda.OutOfMemoryError as exc:
        peak = torch.cuda.max_memory_allocated() if torch.cuda.is_available() else 0
        raise RuntimeError(f"out of memory after {len(losses)} steps (peak {peak} bytes)") from exc

    hash_after = base_weight_hash(model)

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(adapter_state_dict(model), out_dir / ADAPTER_FILENAME)
    config.save_snapshot(out_dir / SNAPSHOT_FILENAME)
    with open(out_dir / LOSS_LOG_FILENAME, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "loss"])
        for step, value in enumerate(losses, start=1):
            writer.writerow([step, f"{value:.6f}"])
    summary = {
        "steps": len(losses),
        "wrapped_modules": wrapped,
        "trainable_fraction": fraction,
        "base_weight_hash_before": hash_before,
        "base_weight_hash_after": hash_after,
        "examples": len(examples),
    }
    (out_dir / SUMMARY_FILENAME).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")

    return TrainResult(
        output_dir=out_dir,
        steps=len(losses),
        losses=losses,
        wrapped_modules=wrapped,
        trainable_fraction=fraction,
        base_hash_before=hash_before,
        base_hash_after=hash_after,
    )


def smoothed(losses: list[float], window: int = 10) -> list[float]:
    """Trailing-window means; the loss-slope check compares first vs last."""
    if window < 1 or len(losses) < window:
        raise ValueError("not enough loss samples for the smoothing window")
    return [
        sum(losses[i : i + window]) / window for i in range(0, len(losses) - window + 1)
    ]
