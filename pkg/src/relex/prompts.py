"""Prompt templates and rendering for simple and retrieval-augmented queries.

Templates are plain UTF-8 text with ``{placeholder}`` syntax.  A template
file may optionally contain a line holding only ``---``: the part above it
is the per-example demonstration block, the part below is the query body.
Augmented prompts are the rendered example block(s), each followed by a
blank line, then the query body rendered for the target instance; stripping
the example blocks therefore yields exactly the simple prompt.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from relex.data import RelationInstance, RelationSchema
from relex.errors import TemplateError, ValidationError

SIMPLE_PLACEHOLDERS = frozenset(
    {"sentence", "head_entity", "tail_entity", "head_type", "tail_type", "relation_list"}
)
EXAMPLE_PLACEHOLDERS = frozenset(
    {"example_sentence", "example_head", "example_tail", "example_relation"}
)
ALL_PLACEHOLDERS = SIMPLE_PLACEHOLDERS | EXAMPLE_PLACEHOLDERS

BLOCK_SEPARATOR = "\n\n"

DEFAULT_SIMPLE_BODY = (
    "Given the sentence: {sentence}, what is the relation type between head entity: "
    "{head_entity} and tail entity: {tail_entity} among the following relations? "
    "{relation_list}. Answer with exactly one relation label."
)

# Variant carrying entity type strings, for the TACRED family.
TYPED_SIMPLE_BODY = (
    "Given the sentence: {sentence}, what is the relation type between head entity: "
    "{head_entity} (type {head_type}) and tail entity: {tail_entity} (type {tail_type}) "
    "among the following relations? {relation_list}. Answer with exactly one relation label."
)

DEFAULT_EXAMPLE_BLOCK = (
    "Here is an example. Given the sentence: {example_sentence}, the relation type "
    "between head entity: {example_head} and tail entity: {example_tail} is "
    "{example_relation}."
)


def _placeholders(text: str) -> set[str]:
    names = set()
    for _, name, spec, conversion in string.Formatter().parse(text):
        if name is None:
            continue
        if name == "" or name.isdigit():
            raise TemplateError("positional placeholders are not supported")
        if spec or conversion:
            raise TemplateError(f"placeholder {name!r} must not carry a format spec")
        names.add(name)
    return names


def _render(text: str, values: dict[str, str]) -> str:
    parts = []
    for literal, name, _, _ in string.Formatter().parse(text):
        parts.append(literal)
        if name is None:
            continue
        if name not in values:
            raise TemplateError(f"no value available for placeholder {name!r}")
        parts.append(values[name])
    return "".join(parts)


@dataclass(frozen=True)
class PromptTemplate:
    """A named template; ``example_block`` is present for augmented rendering."""

    name: str
    body: str
    required_placeholders: frozenset[str] = frozenset()
    example_block: str | None = None

    def __post_init__(self):
        available = _placeholders(self.body)
        if self.example_block is not None:
            available |= _placeholders(self.example_block)
        missing = self.required_placeholders - available
        if missing:
            raise TemplateError(f"template {self.name!r}: required placeholders {sorted(missing)} absent from body")

    def supports_examples(self) -> bool:
        return self.example_block is not None or bool(_placeholders(self.body) & EXAMPLE_PLACEHOLDERS)


@dataclass(frozen=True)
class PromptRecord:
    instance_id: str
    prompt_text: str
    expected_completion: str
    mode: str
    template_name: str


def default_simple_template() -> PromptTemplate:
    return PromptTemplate(
        name="default-simple",
        body=DEFAULT_SIMPLE_BODY,
        required_placeholders=frozenset({"sentence", "head_entity", "tail_entity", "relation_list"}),
    )


def default_typed_template() -> PromptTemplate:
    return PromptTemplate(
        name="default-typed",
        body=TYPED_SIMPLE_BODY,
        required_placeholders=frozenset(
            {"sentence", "head_entity", "tail_entity", "head_type", "tail_type", "relation_list"}
        ),
    )


def default_augmented_template() -> PromptTemplate:
    return PromptTemplate(
        name="default-augmented",
        body=DEFAULT_SIMPLE_BODY,
        required_placeholders=frozenset({"sentence", "head_entity", "tail_entity", "relation_list"})
        | EXAMPLE_PLACEHOLDERS,
        example_block=DEFAULT_EXAMPLE_BLOCK,
    )


_BUILTINS = {
    "default-simple": default_simple_template,
    "default-typed": default_typed_template,
    "default-augmented": default_augmented_template,
}


def builtin_template(name: str) -> PromptTemplate:
    if name not in _BUILTINS:
        raise TemplateError(f"unknown builtin template {name!r}; have {sorted(_BUILTINS)}")
    return _BUILTINS[name]()


def load_template(path: str | Path) -> PromptTemplate:
    """Load a template file; ``builtin:<name>`` resolves a shipped default."""
    text_path = str(path)
    if text_path.startswith("builtin:"):
        return builtin_template(text_path.split(":", 1)[1])
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    example_block = None
    body = text
    marker = "\n---\n"
    if text.startswith("---\n"):
        raise TemplateError(f"{path}: empty example block before ---")
    if marker in text:
        example_block, body = text.split(marker, 1)
    body = body.strip("\n")
    if example_block is not None:
        example_block = example_block.strip("\n")
    if not body:
        raise TemplateError(f"{path}: template body is empty")
    return PromptTemplate(
        name=path.stem,
        body=body,
        required_placeholders=frozenset(),
        example_block=example_block,
    )


def _simple_values(instance: RelationInstance, schema: RelationSchema) -> dict[str, str]:
    if not schema.labels:
        raise TemplateError("schema has an empty relation list")
    if instance.gold_label not in schema.label_set:
        raise ValidationError(
            f"instance {instance.id!r}: gold label {instance.gold_label!r} not in "
            f"{schema.dataset_name} schema"
        )
    values = {
        "sentence": instance.sentence,
        "head_entity": instance.head_text,
        "tail_entity": instance.tail_text,
        "relation_list": ", ".join(schema.labels),
    }
    if instance.head_type is not None:
        values["head_type"] = instance.head_type
    if instance.tail_type is not None:
        values["tail_type"] = instance.tail_type
    return values


def _check_contains_sentence(prompt_text: str, instance: RelationInstance, template: PromptTemplate) -> None:
    if not prompt_text or instance.sentence not in prompt_text:
        raise TemplateError(
            f"template {template.name!r} does not embed the target sentence; "
            "a {sentence} placeholder is required"
        )


def render_simple_query(
    instance: RelationInstance,
    schema: RelationSchema,
    template: PromptTemplate | None = None,
) -> PromptRecord:
    """Render the plain single-instance query prompt."""
    template = template or default_simple_template()
    prompt_text = _render(template.body, _simple_values(instance, schema))
    _check_contains_sentence(prompt_text, instance, template)
    return PromptRecord(
        instance_id=instance.id,
        prompt_text=prompt_text,
        expected_completion=instance.gold_label,
        mode="simple",
        template_name=template.name,
    )


def _example_values(example: RelationInstance, example_label: str) -> dict[str, str]:
    return {
        "example_sentence": example.sentence,
        "example_head": example.head_text,
        "example_tail": example.tail_text,
        "example_relation": example_label,
    }


def _check_example(instance: RelationInstance, example: RelationInstance, example_label: str) -> None:
    if example.id == instance.id:
        raise ValidationError(f"example {example.id!r} is the target instance itself")
    if example.split != "train":
        raise ValidationError(
            f"example {example.id!r} comes from split {example.split!r}; only training "
            "examples may be embedded"
        )
    if example_label != example.gold_label:
        raise ValidationError(
            f"example {example.id!r}: supplied label {example_label!r} differs from its "
            f"gold label {example.gold_label!r}"
        )


def render_augmented(
    instance: RelationInstance,
    examples: Sequence[tuple[RelationInstance, str]],
    schema: RelationSchema,
    template: PromptTemplate | None = None,
) -> PromptRecord:
    """Render an augmented prompt embedding one demonstration per example."""
    template = template or default_augmented_template()
    if not examples:
        raise ValidationError("augmented rendering requires at least one example")
    for example, label in examples:
        _check_example(instance, example, label)

    values = _simple_values(instance, schema)
    if template.example_block is not None:
        blocks = [_render(template.example_block, _example_values(ex, label)) for ex, label in examples]
        prompt_text = BLOCK_SEPARATOR.join(blocks + [_render(template.body, values)])
    else:
        # Single-body augmented template: example placeholders live in the body.
        if not template.supports_examples():
            raise TemplateError(f"template {template.name!r} has no example placeholders")
        if len(examples) != 1:
            raise TemplateError(
                f"template {template.name!r} embeds examples in its body and supports only k=1"
            )
        example, label = examples[0]
        prompt_text = _render(template.body, {**values, **_example_values(example, label)})
    _check_contains_sentence(prompt_text, instance, template)
    return PromptRecord(
        instance_id=instance.id,
        prompt_text=prompt_text,
        expected_completion=instance.gold_label,
        mode="augmented",
        template_name=template.name,
    )


def render_augmented_query(
    instance: RelationInstance,
    example: RelationInstance,
    example_label: str,
    schema: RelationSchema,
    template: PromptTemplate | None = None,
) -> PromptRecord:
    return render_augmented(instance, [(example, example_label)], schema, template)


def build_prompt_dataset(
    split: Iterable[RelationInstance],
    schema: RelationSchema,
    template: PromptTemplate | None = None,
) -> list[PromptRecord]:
    """One simple-mode record per instance, input order preserved."""
    template = template or default_simple_template()
    return [render_simple_query(inst, schema, template) for inst in split]


def write_prompt_records_jsonl(path: str | Path, records: Iterable[PromptRecord]) -> int:
    """Export records as JSONL rows of instance_id / prompt / completion."""
    count = 0
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            row = {
                "instance_id": record.instance_id,
                "prompt": record.prompt_text,
                "completion": record.expected_completion,
            }
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
            count += 1
    return count
