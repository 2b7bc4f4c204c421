"""Prompt dataset loading: JSONL rows of instance_id / prompt / completion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

REQUIRED_FIELDS = ("instance_id", "prompt", "completion")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class PromptExample:
    instance_id: str
    prompt: str
    completion: str


def load_prompt_dataset(path: str | Path) -> list[PromptExample]:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"prompt dataset {path} does not exist")
    examples = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}: row {lineno}: malformed JSON: {exc.msg}") from exc
            missing = [key for key in REQUIRED_FIELDS if key not in row]
            if missing:
                raise DatasetError(f"{path}: row {lineno}: missing fields {missing}")
            examples.append(
                PromptExample(
                    instance_id=str(row["instance_id"]),
                    prompt=str(row["prompt"]),
                    completion=str(row["completion"]),
                )
            )
    if not examples:
        raise DatasetError(f"{path}: no examples found")
    return examples
