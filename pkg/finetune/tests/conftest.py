"""Offline tiny-model fixtures: word-level tokenizer, 2-layer T5 and Llama bases."""

from __future__ import annotations

import json
import random

import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import (
    LlamaConfig,
    LlamaForCausalLM,
    PreTrainedTokenizerFast,
    T5Config,
    T5ForConditionalGeneration,
)

LABELS = ("born_in", "capital_of", "founded", "no_relation")

_SUBJECTS = ("ada", "boris", "clara", "dmitri", "elena", "farid")
_PLACES = ("ankara", "bogota", "cairo", "dublin", "espoo", "fresno")


def _vocabulary() -> dict[str, int]:
    words = ["[PAD]", "[EOS]", "[UNK]"]
    words += list(_SUBJECTS) + list(_PLACES) + list(LABELS)
    words += ["relation", "between", "and", "in", "sentence", ":", ".", "what", "is", "the", "of"]
    words += [f"w{i}" for i in range(40)]
    return {word: index for index, word in enumerate(words)}


def build_tokenizer(out_dir) -> PreTrainedTokenizerFast:
    tokenizer = Tokenizer(models.WordLevel(_vocabulary(), unk_token="[UNK]"))
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer, pad_token="[PAD]", eos_token="[EOS]", unk_token="[UNK]"
    )
    fast.save_pretrained(out_dir)
    return fast


@pytest.fixture(scope="session")
def tiny_t5_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny-t5")
    fast = build_tokenizer(out)
    torch.manual_seed(1234)
    config = T5Config(
        vocab_size=len(fast),
        d_model=64,
        d_ff=512,
        num_layers=2,
        num_heads=4,
        d_kv=16,
        pad_token_id=fast.pad_token_id,
        eos_token_id=fast.eos_token_id,
        decoder_start_token_id=fast.pad_token_id,
    )
    T5ForConditionalGeneration(config).save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def tiny_llama_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny-llama")
    fast = build_tokenizer(out)
    torch.manual_seed(1234)
    config = LlamaConfig(
        vocab_size=len(fast),
        hidden_size=64,
        intermediate_size=256,
        num_hidden_layers=2,
        num_attention_heads=4,
        num_key_value_heads=4,
        max_position_embeddings=256,
        pad_token_id=fast.pad_token_id,
        eos_token_id=fast.eos_token_id,
        bos_token_id=None,
    )
    LlamaForCausalLM(config).save_pretrained(out)
    return str(out)


def make_prompt_rows(count: int, seed: int = 5) -> list[dict]:
    """Learnable fixture: the gold label is a deterministic function of the subject."""
    rng = random.Random(seed)
    rows = []
    for i in range(count):
        subject = rng.choice(_SUBJECTS)
        place = rng.choice(_PLACES)
        label = LABELS[_SUBJECTS.index(subject) % len(LABELS)]
        prompt = f"sentence : {subject} in {place} . what is the relation between {subject} and {place} :"
        rows.append({"instance_id": f"p{i:04d}", "prompt": prompt, "completion": label})
    return rows


@pytest.fixture(scope="session")
def prompt_dataset_64(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "prompts.jsonl"
    with open(path, "w", encoding="utf-8") as handle:
        for row in make_prompt_rows(64):
            handle.write(json.dumps(row) + "\n")
    return str(path)
